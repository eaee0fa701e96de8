//! Moving-horizon estimation with a semidefinite-relaxed window problem.
//!
//! At time `k` the window holds `z_{k-M}..z_k`. Every in-window state is
//! written as `T_s v_{k-M}` with `T_s = F_{k-M+s-1} ... F_{k-M}`, so each
//! measurement becomes linear in the lifted origin state through
//! `H_s = T_s^H H T_s`. One relaxed solve per window yields `v_{k-M|k}`; the
//! remaining estimates follow from noise-free propagation.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{StateVector, TransitionMatrix};
use crate::error::{check_dim, Error, Result};
use crate::grid::{measurement_matrices, GridModel, MeasurementDescriptor, MeasurementMatrix};
use crate::linalg::{outer, CMatrix};
use crate::sdr::{
    rank1_extract_eig, rank1_extract_randomized, solve_relaxed, SdrProblem, SolverConfig,
};

/// Bus whose angle is pinned to zero when a state is read off a lifted solution.
pub const REFERENCE_BUS: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extraction {
    Eigen,
    Randomized { count: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MheConfig {
    pub window: usize,
    pub mu: f64,
    pub lambda: f64,
    pub solver: SolverConfig,
    pub extraction: Extraction,
}

impl Default for MheConfig {
    fn default() -> Self {
        Self {
            window: 2,
            mu: 1.0,
            lambda: 0.0075,
            solver: SolverConfig::default(),
            extraction: Extraction::Eigen,
        }
    }
}

impl MheConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite())
            || !(self.lambda >= 0.0 && self.lambda.is_finite())
        {
            return Err(Error::Validation(
                "mu and lambda must be nonnegative".into(),
            ));
        }
        if let Extraction::Randomized { count: 0, .. } = self.extraction {
            return Err(Error::Validation(
                "randomized extraction needs at least one sample".into(),
            ));
        }
        self.solver.validate()
    }
}

/// The data one window sees: `z_{k-M}..z_k` and `F_{k-M}..F_{k-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub k: usize,
    pub measurements: Vec<DVector<f64>>,
    pub transitions: Vec<TransitionMatrix>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// The window ending at `k` over full measurement and transition sequences.
    pub fn ending_at(
        k: usize,
        window: usize,
        measurements: &[DVector<f64>],
        transitions: &[TransitionMatrix],
    ) -> Result<Self> {
        if k < window || k >= measurements.len() || k > transitions.len() {
            return Err(Error::Validation(format!(
                "no window of length {window} ends at k = {k}"
            )));
        }
        Ok(Self {
            k,
            measurements: measurements[k - window..=k].to_vec(),
            transitions: transitions[k - window..k].to_vec(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.measurements.len() != self.transitions.len() + 1 {
            return Err(Error::Validation(format!(
                "window has {} measurement vectors for {} transitions",
                self.measurements.len(),
                self.transitions.len()
            )));
        }
        if self.k < self.transitions.len() {
            return Err(Error::Validation("window starts before time 0".into()));
        }
        Ok(())
    }
}

/// Prior for the oldest state of the next window, as a vector and its lift.
#[derive(Clone, Debug, PartialEq)]
pub struct MheState {
    pub prior_vec: StateVector,
    pub prior_lift: CMatrix,
    /// The most recent window-origin estimate the prior was propagated from.
    pub last_smoothed: Option<StateVector>,
}

impl MheState {
    pub fn from_prior(prior: StateVector) -> Self {
        Self {
            prior_lift: outer(prior.as_vector()),
            prior_vec: prior,
            last_smoothed: None,
        }
    }
}

/// `T_0 = I`, `T_s = F_{s-1} T_{s-1}` over the given transitions.
pub fn build_t(transitions: &[TransitionMatrix], dim: usize) -> Result<Vec<CMatrix>> {
    let mut out = Vec::with_capacity(transitions.len() + 1);
    out.push(CMatrix::identity(dim, dim));
    for f in transitions {
        check_dim(dim, f.dim())?;
        check_dim(dim, f.0.ncols())?;
        let next = &f.0 * out.last().expect("nonempty");
        out.push(next);
    }
    Ok(out)
}

/// `T^H H T`.
pub fn build_lifted_h(h: &MeasurementMatrix, t: &CMatrix) -> Result<MeasurementMatrix> {
    check_dim(h.dim(), t.nrows())?;
    check_dim(t.nrows(), t.ncols())?;
    Ok(MeasurementMatrix(t.adjoint() * &h.0 * t))
}

/// Prior for the next window: `F vhat`, lifted as `F (vhat vhat^H) F^H`.
pub fn propagate_prior(smoothed: &StateVector, f: &TransitionMatrix) -> Result<MheState> {
    check_dim(f.dim(), smoothed.len())?;
    let prior_vec = StateVector(&f.0 * smoothed.as_vector());
    Ok(MheState {
        prior_lift: outer(prior_vec.as_vector()),
        prior_vec,
        last_smoothed: Some(smoothed.clone()),
    })
}

/// Estimates `v_{k-M|k} .. v_{k|k}` from one window.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateSet {
    pub k: usize,
    pub states: Vec<StateVector>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
    /// Wall-clock time of the solve and extraction.
    pub elapsed: Duration,
}

impl EstimateSet {
    pub fn origin(&self) -> &StateVector {
        &self.states[0]
    }

    pub fn filtered(&self) -> &StateVector {
        self.states.last().expect("window holds at least one state")
    }
}

/// Relaxed window problem with prior weight `mu` and every lifted term
/// weighted by `lambda`.
pub fn window_problem(
    hs: &[MeasurementMatrix],
    window: &Window,
    state: &MheState,
    cfg: &MheConfig,
) -> Result<SdrProblem> {
    window.validate()?;
    let dim = state.prior_vec.len();
    let ts = build_t(&window.transitions, dim)?;
    let mut problem = SdrProblem::new(dim).with_prior_state(state.prior_vec.clone(), cfg.mu);
    problem.prior = Some(state.prior_lift.clone());
    if cfg.lambda > 0.0 {
        for (t, z) in ts.iter().zip(&window.measurements) {
            check_dim(hs.len(), z.len())?;
            for (h, &value) in hs.iter().zip(z.iter()) {
                problem.push_term(build_lifted_h(h, t)?, value, cfg.lambda);
            }
        }
    }
    Ok(problem)
}

/// One MHE step. Returns the window estimates and the prior for the window
/// ending at `k + 1`, which needs `F_{k-M}`; pass `None` for the last step.
pub fn mhe_step(
    hs: &[MeasurementMatrix],
    window: &Window,
    state: &MheState,
    next_transition: Option<&TransitionMatrix>,
    cfg: &MheConfig,
) -> Result<(EstimateSet, MheState)> {
    cfg.validate()?;
    let started = Instant::now();
    let problem = window_problem(hs, window, state, cfg)?;
    let lifted = solve_relaxed(&problem, &cfg.solver)?;
    let extracted = match cfg.extraction {
        Extraction::Eigen => rank1_extract_eig(&lifted.v, REFERENCE_BUS)?,
        Extraction::Randomized { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ window.k as u64);
            rank1_extract_randomized(&lifted.v, &problem, count, REFERENCE_BUS, &mut rng)?
        }
    };

    let mut states = Vec::with_capacity(window.len() + 1);
    states.push(extracted.state);
    for f in &window.transitions {
        let next = StateVector(&f.0 * states.last().expect("nonempty").as_vector());
        states.push(next);
    }
    let next_state = match next_transition {
        Some(f) => propagate_prior(&states[0], f)?,
        None => MheState {
            last_smoothed: Some(states[0].clone()),
            ..state.clone()
        },
    };
    Ok((
        EstimateSet {
            k: window.k,
            states,
            cost: lifted.cost,
            iterations: lifted.iterations,
            converged: lifted.converged,
            degenerate: extracted.degenerate,
            elapsed: started.elapsed(),
        },
        next_state,
    ))
}

/// Slides the window over `k = M..=K`, starting from the prior `v̄_0`.
pub fn run_mhe(
    grid: &GridModel,
    plan: &[MeasurementDescriptor],
    measurements: &[DVector<f64>],
    transitions: &[TransitionMatrix],
    initial_prior: &StateVector,
    cfg: &MheConfig,
) -> Result<Vec<EstimateSet>> {
    cfg.validate()?;
    check_dim(grid.bus_count, initial_prior.len())?;
    if measurements.is_empty() {
        return Err(Error::Validation("no measurements".into()));
    }
    let horizon = measurements.len() - 1;
    if horizon < cfg.window {
        return Err(Error::Validation(format!(
            "horizon {horizon} is shorter than the window length {}",
            cfg.window
        )));
    }
    if transitions.len() < horizon {
        return Err(Error::Validation(format!(
            "need {horizon} transition matrices, found {}",
            transitions.len()
        )));
    }
    let hs = measurement_matrices(grid, plan)?;
    let mut state = MheState::from_prior(initial_prior.clone());
    let mut out = Vec::with_capacity(horizon - cfg.window + 1);
    for k in cfg.window..=horizon {
        let window = Window::ending_at(k, cfg.window, measurements, transitions)?;
        let next_f = if k < horizon {
            Some(&transitions[k - cfg.window])
        } else {
            None
        };
        let (estimates, next) = mhe_step(&hs, &window, &state, next_f, cfg)?;
        out.push(estimates);
        state = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CVector, ZERO};
    use num_complex::Complex64;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn t_of_empty_window_is_identity() {
        assert_eq!(build_t(&[], 3).unwrap(), vec![CMatrix::identity(3, 3)]);
    }

    #[test]
    fn t_of_diagonal_transitions() {
        let f = TransitionMatrix::diagonal(&[2.0, 3.0]);
        let ts = build_t(&[f.clone(), f], 2).unwrap();
        assert_eq!(ts[2], TransitionMatrix::diagonal(&[4.0, 9.0]).0);
    }

    #[test]
    fn t_matches_right_to_left_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fs: Vec<_> = (0..3)
            .map(|_| TransitionMatrix(random_matrix(4, &mut rng)))
            .collect();
        let ts = build_t(&fs, 4).unwrap();
        let naive = &fs[2].0 * (&fs[1].0 * &fs[0].0);
        assert!((&ts[3] - naive).norm() < 1e-12);
        assert!(build_t(&[TransitionMatrix::identity(3)], 4).is_err());
    }

    #[test]
    fn lifted_h_hand_values() {
        let mut e1 = CMatrix::zeros(2, 2);
        e1[(0, 0)] = c(1.0, 0.0);
        let h = MeasurementMatrix(e1);
        assert_eq!(build_lifted_h(&h, &CMatrix::identity(2, 2)).unwrap(), h);
        let t = TransitionMatrix::diagonal(&[2.0, 1.0]).0;
        let lifted = build_lifted_h(&h, &t).unwrap();
        let mut expected = CMatrix::zeros(2, 2);
        expected[(0, 0)] = c(4.0, 0.0);
        assert_eq!(lifted.0, expected);
        assert!(build_lifted_h(&h, &CMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn prior_propagation() {
        let v = StateVector::from_slice(&[c(0.3, -0.2), c(1.0, 0.5)]);
        let same = propagate_prior(&v, &TransitionMatrix::identity(2)).unwrap();
        assert_eq!(same.prior_vec, v);

        let e1 = StateVector::from_slice(&[c(1.0, 0.0), ZERO]);
        let s = propagate_prior(&e1, &TransitionMatrix::diagonal(&[2.0, 1.0])).unwrap();
        assert_eq!(s.prior_vec, StateVector::from_slice(&[c(2.0, 0.0), ZERO]));
        let mut expected = CMatrix::zeros(2, 2);
        expected[(0, 0)] = c(4.0, 0.0);
        assert_eq!(s.prior_lift, expected);
        assert_eq!(s.last_smoothed, Some(e1));
    }

    #[test]
    fn prior_lift_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = TransitionMatrix(random_matrix(5, &mut rng));
        let v = StateVector(CVector::from_fn(5, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        }));
        let s = propagate_prior(&v, &f).unwrap();
        let direct = &f.0 * outer(v.as_vector()) * f.0.adjoint();
        assert!((s.prior_lift - direct).norm() <= 1e-12);
    }

    #[test]
    fn window_bounds() {
        let zs = vec![DVector::zeros(1); 4];
        let fs = vec![TransitionMatrix::identity(2); 3];
        assert!(Window::ending_at(1, 2, &zs, &fs).is_err());
        assert!(Window::ending_at(4, 2, &zs, &fs).is_err());
        let w = Window::ending_at(3, 2, &zs, &fs).unwrap();
        assert_eq!(w.measurements.len(), 3);
        assert_eq!(w.len(), 2);
        let bad = Window {
            k: 3,
            measurements: vec![DVector::zeros(1); 2],
            transitions: fs.clone(),
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = MheConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.mu = -1.0;
        assert!(cfg.validate().is_err());
        let cfg = MheConfig {
            extraction: Extraction::Randomized { count: 0, seed: 0 },
            ..MheConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
