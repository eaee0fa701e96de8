//! Relaxed (rank-constraint-free) lifted least squares over the PSD cone.
//!
//! The objective is
//!
//! ```text
//! f(V) = mu ||V - Vbar||_F^2 + sum_t w_t (z_t - Tr(H_t V))^2,   V Hermitian PSD
//! ```
//!
//! which is a convex quadratic whose only constraint is the cone itself, so
//! it is minimised by accelerated projected gradient with the step fixed at
//! `1/L`. `L` is the exact largest curvature of `f`, computed from the Gram
//! matrix of the `H_t`. Momentum is reset whenever a step fails to decrease
//! the cost, which keeps the accepted cost sequence monotone.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::StateVector;
use crate::error::{check_dim, Error, Result};
use crate::grid::{
    evaluate_measurement, measurement_matrices, GridModel, MeasurementDescriptor, MeasurementMatrix,
};
use crate::linalg::{
    align_phase, hermitian_defect, hermitian_eigen, hermitian_part, inner, outer, CMatrix, CVector,
};

const HERMITIAN_TOL: f64 = 1e-10;

/// One data-fit term `weight * (z - Tr(H V))^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub h: MeasurementMatrix,
    pub z: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdrProblem {
    pub dim: usize,
    /// Lifted prior `Vbar`; absent for static estimation.
    pub prior: Option<CMatrix>,
    /// The vector the prior was lifted from, when known. Used only by the
    /// unlifted cost that ranks randomized candidates.
    pub prior_state: Option<StateVector>,
    pub prior_weight: f64,
    pub terms: Vec<Term>,
}

impl SdrProblem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            prior: None,
            prior_state: None,
            prior_weight: 0.0,
            terms: Vec::new(),
        }
    }

    pub fn with_prior(mut self, prior: CMatrix, weight: f64) -> Self {
        self.prior = Some(prior);
        self.prior_weight = weight;
        self
    }

    /// Prior given as a vector; the lifted prior is its outer product.
    pub fn with_prior_state(mut self, prior: StateVector, weight: f64) -> Self {
        self.prior = Some(outer(prior.as_vector()));
        self.prior_state = Some(prior);
        self.prior_weight = weight;
        self
    }

    pub fn push_term(&mut self, h: MeasurementMatrix, z: f64, weight: f64) {
        self.terms.push(Term { h, z, weight });
    }

    /// Static weighted least squares over one measurement snapshot, with the
    /// plan's per-measurement weights.
    pub fn static_estimation(
        grid: &GridModel,
        plan: &[MeasurementDescriptor],
        z: &DVector<f64>,
    ) -> Result<Self> {
        check_dim(plan.len(), z.len())?;
        let hs = measurement_matrices(grid, plan)?;
        let mut p = Self::new(grid.bus_count);
        for ((h, d), &value) in hs.into_iter().zip(plan).zip(z.iter()) {
            p.push_term(h, value, d.weight);
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation(
                "problem dimension must be positive".into(),
            ));
        }
        if !(self.prior_weight >= 0.0 && self.prior_weight.is_finite()) {
            return Err(Error::Validation("prior weight must be nonnegative".into()));
        }
        if self.terms.is_empty() && !(self.prior_weight > 0.0 && self.prior.is_some()) {
            return Err(Error::Validation(
                "problem needs a data term or a weighted prior".into(),
            ));
        }
        if self.prior_weight > 0.0 && self.prior.is_none() {
            return Err(Error::Validation(
                "prior weight given without a prior".into(),
            ));
        }
        if let Some(prior) = &self.prior {
            check_dim(self.dim, prior.nrows())?;
            check_dim(self.dim, prior.ncols())?;
            if hermitian_defect(prior) > HERMITIAN_TOL {
                return Err(Error::Validation("prior is not Hermitian".into()));
            }
        }
        if let Some(state) = &self.prior_state {
            check_dim(self.dim, state.len())?;
        }
        for (i, t) in self.terms.iter().enumerate() {
            check_dim(self.dim, t.h.dim())?;
            if !t.h.is_hermitian(HERMITIAN_TOL) {
                return Err(Error::Validation(format!(
                    "term {} matrix is not Hermitian",
                    i + 1
                )));
            }
            if !(t.weight > 0.0 && t.weight.is_finite()) || !t.z.is_finite() {
                return Err(Error::Validation(format!(
                    "term {} has invalid weight or value",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    fn residuals(&self, v: &CMatrix) -> Vec<f64> {
        self.terms.iter().map(|t| inner(&t.h.0, v) - t.z).collect()
    }

    /// Lifted objective `f(V)`.
    pub fn cost(&self, v: &CMatrix) -> f64 {
        let data: f64 = self
            .residuals(v)
            .iter()
            .zip(&self.terms)
            .map(|(r, t)| t.weight * r * r)
            .sum();
        match &self.prior {
            Some(prior) if self.prior_weight > 0.0 => {
                self.prior_weight * (v - prior).norm_squared() + data
            }
            _ => data,
        }
    }

    /// Gradient of `f` with respect to the real inner product on Hermitian matrices.
    pub fn gradient(&self, v: &CMatrix) -> CMatrix {
        let mut g = match &self.prior {
            Some(prior) if self.prior_weight > 0.0 => (v - prior).scale(2.0 * self.prior_weight),
            _ => CMatrix::zeros(self.dim, self.dim),
        };
        for (r, t) in self.residuals(v).into_iter().zip(&self.terms) {
            g += t.h.0.scale(2.0 * t.weight * r);
        }
        g
    }

    /// Cost of a rank-1 candidate in the original vector variables: distance
    /// to the prior (modulo a global phase) plus the weighted measurement
    /// misfit.
    pub fn unlifted_cost(&self, w: &StateVector) -> f64 {
        let v = w.as_vector();
        let data: f64 = self
            .terms
            .iter()
            .map(|t| {
                let r = t.z - crate::linalg::quadratic_form(&t.h.0, v);
                t.weight * r * r
            })
            .sum();
        let prior = if self.prior_weight > 0.0 {
            match (&self.prior_state, &self.prior) {
                (Some(pv), _) => {
                    let p = pv.as_vector();
                    let d = v.norm_squared() + p.norm_squared() - 2.0 * v.dotc(p).norm();
                    self.prior_weight * d.max(0.0)
                }
                (None, Some(pm)) => self.prior_weight * (outer(v) - pm).norm_squared(),
                (None, None) => 0.0,
            }
        } else {
            0.0
        };
        prior + data
    }

    /// Largest eigenvalue of the Hessian operator of `f`.
    pub fn curvature(&self) -> Result<f64> {
        let m = self.terms.len();
        let mut top = 0.0;
        if m > 0 {
            let sw: Vec<f64> = self.terms.iter().map(|t| t.weight.sqrt()).collect();
            let gram = DMatrix::from_fn(m, m, |i, j| {
                sw[i] * sw[j] * inner(&self.terms[i].h.0, &self.terms[j].h.0)
            });
            if gram.iter().any(|x| !x.is_finite()) {
                return Err(Error::Eigen("non-finite measurement matrix".into()));
            }
            top = gram.symmetric_eigenvalues().max();
        }
        Ok(2.0 * self.prior_weight + 2.0 * top.max(0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once the relative cost decrease stays below this for
    /// `stall_iterations` consecutive iterations.
    pub rel_tolerance: f64,
    pub stall_iterations: usize,
    /// Stop as soon as the cost itself drops to this value.
    pub abs_tolerance: f64,
    /// A stalled run only counts as converged once the gradient mapping
    /// `G = L (V - P(V - grad/L))` satisfies
    /// `||G|| <= tol (1 + ||grad||) + 10 sqrt(L f eps)`; the last term is the
    /// resolution at which cost comparisons can still rank iterates.
    pub stationarity_tolerance: f64,
    pub accelerated: bool,
    /// Record one [`TraceRow`] per iteration.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            rel_tolerance: 1e-9,
            stall_iterations: 5,
            abs_tolerance: 1e-24,
            stationarity_tolerance: 1e-7,
            accelerated: true,
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rel_tolerance.is_nan()
            || self.rel_tolerance <= 0.0
            || self.abs_tolerance.is_nan()
            || self.abs_tolerance < 0.0
            || self.stationarity_tolerance.is_nan()
            || self.stationarity_tolerance <= 0.0
        {
            return Err(Error::Validation(
                "solver tolerances must be positive".into(),
            ));
        }
        if self.max_iterations == 0 || self.stall_iterations == 0 {
            return Err(Error::Validation(
                "solver iteration counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub cost: f64,
    /// Smallest eigenvalue of the gradient step before projection.
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftedEstimate {
    pub v: CMatrix,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl LiftedEstimate {
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        use crate::csv::{fmt_float, CsvWriter};
        let mut w = CsvWriter::new(out, &["iteration", "cost", "min_eigenvalue"])?;
        for row in &self.trace {
            w.row(&[
                row.iteration.to_string(),
                fmt_float(row.cost),
                fmt_float(row.min_eigenvalue),
            ])?;
        }
        w.finish()
    }
}

fn project_with_spectrum(a: &CMatrix) -> Result<(CMatrix, f64)> {
    let (values, vectors) = hermitian_eigen(a)?;
    let min = values.last().copied().unwrap_or(0.0);
    let n = values.len();
    let mut out = CMatrix::zeros(n, n);
    for (i, &lambda) in values.iter().enumerate() {
        if lambda > 0.0 {
            let q = vectors.column(i);
            out += (q * q.adjoint()).scale(lambda);
        }
    }
    Ok((hermitian_part(&out), min))
}

/// Frobenius-nearest PSD matrix to the Hermitian part of `a`.
pub fn psd_project(a: &CMatrix) -> Result<CMatrix> {
    project_with_spectrum(a).map(|(m, _)| m)
}

pub fn solve_relaxed(p: &SdrProblem, cfg: &SolverConfig) -> Result<LiftedEstimate> {
    p.validate()?;
    cfg.validate()?;
    let lipschitz = p.curvature()?;
    let mut trace = Vec::new();

    let mut x = match &p.prior {
        Some(prior) => psd_project(prior)?,
        None => CMatrix::zeros(p.dim, p.dim),
    };
    let mut fx = p.cost(&x);
    if lipschitz <= 0.0 || fx <= cfg.abs_tolerance {
        // zero curvature means no data and no prior weight: every PSD point is optimal
        return Ok(LiftedEstimate {
            v: x,
            cost: fx,
            iterations: 0,
            converged: true,
            trace,
        });
    }
    let step = 1.0 / (lipschitz * (1.0 + 1e-12));

    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut stalled = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let (candidate, min_eigenvalue) =
            project_with_spectrum(&(&y - p.gradient(&y).scale(step)))?;
        let fc = p.cost(&candidate);
        let previous = fx;

        if cfg.accelerated {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if fc <= fx {
                let momentum = (t - 1.0) / t_next;
                y = &candidate + (&candidate - &x).scale(momentum);
                x = candidate;
                fx = fc;
                t = t_next;
            } else {
                // restart from the last accepted point
                y = x.clone();
                t = 1.0;
            }
        } else if fc <= fx {
            x = candidate;
            fx = fc;
            y = x.clone();
        }
        assert!(fx <= previous, "cost increased from {previous} to {fx}");

        if cfg.trace {
            trace.push(TraceRow {
                iteration: iterations,
                cost: fx,
                min_eigenvalue,
            });
        }
        if fx <= cfg.abs_tolerance {
            converged = true;
            break;
        }
        let decrease = (previous - fx) / previous.max(f64::MIN_POSITIVE);
        if decrease <= cfg.rel_tolerance {
            stalled += 1;
            if stalled >= cfg.stall_iterations {
                let grad = p.gradient(&x);
                let mapped = psd_project(&(&x - grad.scale(step)))?;
                let floor = 10.0 * (lipschitz * fx * f64::EPSILON).sqrt();
                if (&x - mapped).norm() / step
                    <= cfg.stationarity_tolerance * (1.0 + grad.norm()) + floor
                {
                    converged = true;
                    break;
                }
                stalled = 0;
                y = x.clone();
                t = 1.0;
            }
        } else {
            stalled = 0;
        }
    }

    Ok(LiftedEstimate {
        v: x,
        cost: fx,
        iterations,
        converged,
        trace,
    })
}

/// A state recovered from a lifted solution.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOne {
    pub state: StateVector,
    /// The lifted matrix had no positive eigenvalue.
    pub degenerate: bool,
}

fn reference_index(reference_bus: usize, dim: usize) -> Result<usize> {
    if reference_bus == 0 || reference_bus > dim {
        Err(Error::Validation(format!(
            "reference bus {reference_bus} outside 1..={dim}"
        )))
    } else {
        Ok(reference_bus - 1)
    }
}

/// `sqrt(sigma_1) q_1`, rotated so the reference bus has zero phase.
pub fn rank1_extract_eig(v: &CMatrix, reference_bus: usize) -> Result<RankOne> {
    let dim = v.nrows();
    let reference = reference_index(reference_bus, dim)?;
    let (values, vectors) = hermitian_eigen(v)?;
    let top = values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Ok(RankOne {
            state: StateVector::zeros(dim),
            degenerate: true,
        });
    }
    let w: CVector = vectors.column(0).scale(top.sqrt());
    Ok(RankOne {
        state: StateVector(align_phase(&w, reference)),
        degenerate: false,
    })
}

/// Draws `count` circularly-symmetric complex Gaussian vectors with covariance
/// `V`, and returns whichever of them (or the eigenvector candidate) has the
/// lowest unlifted cost.
pub fn rank1_extract_randomized<R: Rng + ?Sized>(
    v: &CMatrix,
    p: &SdrProblem,
    count: usize,
    reference_bus: usize,
    rng: &mut R,
) -> Result<RankOne> {
    let dim = v.nrows();
    check_dim(p.dim, dim)?;
    let reference = reference_index(reference_bus, dim)?;
    let best_eig = rank1_extract_eig(v, reference_bus)?;
    let mut best_cost = p.unlifted_cost(&best_eig.state);
    let mut best = best_eig;

    let (values, vectors) = hermitian_eigen(v)?;
    let mut root = CMatrix::zeros(dim, dim);
    for (i, &lambda) in values.iter().enumerate() {
        if lambda > 0.0 {
            let q = vectors.column(i);
            root += (q * q.adjoint()).scale(lambda.sqrt());
        }
    }
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..count {
        let g = CVector::from_fn(dim, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * half, im * half)
        });
        let candidate = StateVector(align_phase(&(&root * g), reference));
        let cost = p.unlifted_cost(&candidate);
        if cost < best_cost {
            best_cost = cost;
            best = RankOne {
                state: candidate,
                degenerate: false,
            };
        }
    }
    Ok(best)
}

/// Values of every term at the rank-1 point `w w^H`.
pub fn predicted_measurements(p: &SdrProblem, w: &StateVector) -> Result<Vec<f64>> {
    p.terms
        .iter()
        .map(|t| evaluate_measurement(&t.h, w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{LineParams, MeasurementKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        hermitian_part(&a)
    }

    fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let b = CMatrix::from_fn(n, rank, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        &b * b.adjoint()
    }

    fn min_eig(a: &CMatrix) -> f64 {
        *hermitian_eigen(a).unwrap().0.last().unwrap()
    }

    #[test]
    fn projection_fixes_psd_and_clamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_psd(4, 4, &mut rng);
        assert!((psd_project(&a).unwrap() - &a).norm() < 1e-10);
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
        let p = psd_project(&d).unwrap();
        assert!(
            (p - CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]))).norm()
                < 1e-14
        );
    }

    #[test]
    fn projection_rejects_non_finite() {
        let mut a = CMatrix::identity(2, 2);
        a[(1, 0)] = c(f64::INFINITY, 0.0);
        assert!(matches!(psd_project(&a), Err(Error::Eigen(_))));
    }

    #[test]
    fn projection_is_idempotent_and_non_expansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a = random_hermitian(5, &mut rng);
            let b = random_hermitian(5, &mut rng);
            let pa = psd_project(&a).unwrap();
            assert!((psd_project(&pa).unwrap() - &pa).norm() < 1e-10);
            assert!(min_eig(&pa) >= -1e-12);
            let pb = psd_project(&b).unwrap();
            assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-12);
        }
    }

    #[test]
    fn prior_only_problem_returns_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prior = random_psd(3, 2, &mut rng);
        let p = SdrProblem::new(3).with_prior(prior.clone(), 1.0);
        let est = solve_relaxed(&p, &SolverConfig::default()).unwrap();
        assert!((est.v - prior).norm() < 1e-10);
        assert!(est.cost < 1e-20);
        assert!(est.converged);
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let p = SdrProblem::new(2);
        assert!(matches!(
            solve_relaxed(&p, &SolverConfig::default()),
            Err(Error::Validation(_))
        ));
        let mut p = SdrProblem::new(2);
        let mut h = CMatrix::identity(2, 2);
        h[(0, 1)] = c(1.0, 0.0);
        p.push_term(MeasurementMatrix(h), 1.0, 1.0);
        assert!(matches!(
            solve_relaxed(&p, &SolverConfig::default()),
            Err(Error::Validation(_))
        ));
        let mut p = SdrProblem::new(2);
        p.push_term(MeasurementMatrix(CMatrix::identity(3, 3)), 1.0, 1.0);
        assert!(matches!(
            solve_relaxed(&p, &SolverConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        let cfg = SolverConfig {
            rel_tolerance: 0.0,
            ..SolverConfig::default()
        };
        let p = SdrProblem::new(2).with_prior(CMatrix::identity(2, 2), 1.0);
        assert!(solve_relaxed(&p, &cfg).is_err());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = SdrProblem::new(3).with_prior(random_psd(3, 1, &mut rng), 0.1);
        for _ in 0..6 {
            p.push_term(
                MeasurementMatrix(random_hermitian(3, &mut rng)),
                rng.random_range(-1.0..1.0),
                1.0,
            );
        }
        let cfg = SolverConfig {
            max_iterations: 2,
            trace: true,
            ..SolverConfig::default()
        };
        let est = solve_relaxed(&p, &cfg).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iterations, 2);
        assert_eq!(est.trace.len(), 2);
        let mut buf = Vec::new();
        est.write_trace_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn accelerated_and_plain_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = SdrProblem::new(3).with_prior(random_psd(3, 1, &mut rng), 1.0);
        for _ in 0..5 {
            p.push_term(
                MeasurementMatrix(random_hermitian(3, &mut rng)),
                rng.random_range(-2.0..2.0),
                1.0,
            );
        }
        let fast = solve_relaxed(&p, &SolverConfig::default()).unwrap();
        let plain = solve_relaxed(
            &p,
            &SolverConfig {
                accelerated: false,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert!(fast.converged && plain.converged);
        assert!((fast.cost - plain.cost).abs() <= 1e-7 * fast.cost.max(1.0));
    }

    #[test]
    fn curvature_matches_operator_norm() {
        // one term: the Hessian is 2 mu I + 2 w H (x) H, top eigenvalue 2 mu + 2 w ||H||^2
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_hermitian(3, &mut rng);
        let mut p = SdrProblem::new(3).with_prior(CMatrix::zeros(3, 3), 0.5);
        p.push_term(MeasurementMatrix(h.clone()), 0.0, 2.0);
        let expected = 2.0 * 0.5 + 2.0 * 2.0 * h.norm_squared();
        assert!((p.curvature().unwrap() - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn eig_extraction_of_exact_rank_one() {
        let v = StateVector::from_slice(&[c(1.1, 0.0), c(0.7, -0.4), c(-0.2, 0.9)]);
        let out = rank1_extract_eig(&outer(v.as_vector()), 1).unwrap();
        assert!(!out.degenerate);
        assert!((out.state.as_vector() - v.as_vector()).norm() < 1e-8);
    }

    #[test]
    fn eig_extraction_of_diagonal() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(4.0, 0.0), c(1.0, 0.0)]));
        let out = rank1_extract_eig(&d, 1).unwrap();
        assert!(
            (out.state.as_vector() - CVector::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0)])).norm()
                < 1e-12
        );
    }

    #[test]
    fn eig_extraction_of_zero_is_degenerate() {
        let out = rank1_extract_eig(&CMatrix::zeros(3, 3), 1).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.state, StateVector::zeros(3));
        assert!(rank1_extract_eig(&CMatrix::zeros(3, 3), 4).is_err());
    }

    #[test]
    fn eig_extraction_beats_random_rank_one_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let v = random_psd(4, 3, &mut rng);
            let w = rank1_extract_eig(&v, 1).unwrap().state;
            let best = (&v - outer(w.as_vector())).norm();
            for _ in 0..1000 {
                let u = CVector::from_fn(4, |_, _| {
                    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                let u = u.normalize();
                // optimal scaling of u u^H against V is max(u^H V u, 0)
                let scale = crate::linalg::quadratic_form(&v, &u).max(0.0);
                let err = (&v - outer(&u).scale(scale)).norm();
                assert!(best <= err + 1e-12);
            }
        }
    }

    fn two_bus_full() -> (GridModel, Vec<MeasurementDescriptor>) {
        let g = GridModel::with_lines(
            2,
            vec![LineParams::new(1, 2, c(1.0, -5.0)).with_shunts(c(0.0, 0.05), c(0.0, 0.05))],
        )
        .unwrap();
        let kinds = [
            MeasurementKind::ActiveInjection(1),
            MeasurementKind::ActiveInjection(2),
            MeasurementKind::ReactiveInjection(1),
            MeasurementKind::ReactiveInjection(2),
            MeasurementKind::ActiveFlow(1, 2),
            MeasurementKind::ActiveFlow(2, 1),
            MeasurementKind::ReactiveFlow(1, 2),
            MeasurementKind::ReactiveFlow(2, 1),
            MeasurementKind::SquaredVoltageMagnitude(1),
            MeasurementKind::SquaredVoltageMagnitude(2),
        ];
        (
            g,
            kinds.into_iter().map(MeasurementDescriptor::new).collect(),
        )
    }

    #[test]
    fn randomized_extraction_never_worse_than_eig() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (g, plan) = two_bus_full();
        let truth = StateVector::from_slice(&[c(1.0, 0.0), Complex64::from_polar(0.9, -0.1)]);
        let z = DVector::from_vec(
            predicted_measurements(
                &SdrProblem::static_estimation(&g, &plan, &DVector::zeros(plan.len())).unwrap(),
                &truth,
            )
            .unwrap(),
        );
        let p = SdrProblem::static_estimation(&g, &plan, &z).unwrap();
        for count in [1, 10] {
            let v = random_psd(2, 2, &mut rng);
            let eig = rank1_extract_eig(&v, 1).unwrap();
            let out = rank1_extract_randomized(&v, &p, count, 1, &mut rng).unwrap();
            assert!(p.unlifted_cost(&out.state) <= p.unlifted_cost(&eig.state));
        }
        // exact lift: the pool contains the truth itself
        let out =
            rank1_extract_randomized(&outer(truth.as_vector()), &p, 100, 1, &mut rng).unwrap();
        assert!(p.unlifted_cost(&out.state) <= p.unlifted_cost(&truth) + 1e-20);
    }

    #[test]
    fn unlifted_cost_matches_lifted_at_rank_one_without_prior_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = SdrProblem::new(3);
        for _ in 0..4 {
            p.push_term(
                MeasurementMatrix(random_hermitian(3, &mut rng)),
                rng.random_range(-1.0..1.0),
                0.5,
            );
        }
        let w = StateVector::from_slice(&[c(0.3, 0.1), c(1.0, -1.0), c(0.2, 0.5)]);
        assert!((p.unlifted_cost(&w) - p.cost(&outer(w.as_vector()))).abs() < 1e-12);
        // prior distance is taken modulo global phase
        let prior = StateVector::from_slice(&[c(1.0, 0.0), c(0.0, 1.0), c(0.5, 0.5)]);
        let rotated = StateVector(prior.as_vector() * Complex64::from_polar(1.0, 0.7));
        let q = SdrProblem::new(3).with_prior_state(prior, 2.0);
        assert!(q.unlifted_cost(&rotated).abs() < 1e-12);
    }
}
