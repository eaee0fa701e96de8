//! Extended Kalman filter baseline on the rectangular real state
//! `x = [Re v; Im v]`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dynamics::{NoiseModel, StateVector, TransitionMatrix};
use crate::error::{check_dim, Error, Result};
use crate::grid::{measurement_matrices, GridModel, MeasurementDescriptor, MeasurementMatrix};
use crate::linalg::{real_embedding, stack_real, unstack_real};

/// Share of the process-noise power `E[m^2] = a^2/3` that lands on each real
/// component of `m e^{j theta}`. Real and imaginary variances are
/// `E[cos^2]` and `E[sin^2]` of the angle, which average to exactly one half.
pub const PROCESS_COMPONENT_FACTOR: f64 = 0.5;

const SINGULAR_REGULARIZATION: f64 = 1e-10;

/// Real embedding of a Hermitian measurement matrix: `x^T Ht x = v^H H v`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealLiftedMatrix(pub DMatrix<f64>);

impl From<&MeasurementMatrix> for RealLiftedMatrix {
    fn from(h: &MeasurementMatrix) -> Self {
        let m = real_embedding(h.matrix());
        Self((&m + m.transpose()) * 0.5)
    }
}

/// Rows `2 (Ht_l x)^T`.
pub fn measurement_jacobian(lifted: &[RealLiftedMatrix], x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(lifted.len(), n);
    for (l, h) in lifted.iter().enumerate() {
        check_dim(h.0.nrows(), n)?;
        let g = &h.0 * x * 2.0;
        jac.row_mut(l).copy_from(&g.transpose());
    }
    Ok(jac)
}

pub trait MeasurementModel {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// The quadratic power-system measurement model.
#[derive(Clone, Debug)]
pub struct QuadraticModel {
    pub lifted: Vec<RealLiftedMatrix>,
}

impl QuadraticModel {
    pub fn new(grid: &GridModel, plan: &[MeasurementDescriptor]) -> Result<Self> {
        let lifted = measurement_matrices(grid, plan)?
            .iter()
            .map(RealLiftedMatrix::from)
            .collect();
        Ok(Self { lifted })
    }
}

impl MeasurementModel for QuadraticModel {
    fn len(&self) -> usize {
        self.lifted.len()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let values = self
            .lifted
            .iter()
            .map(|h| {
                check_dim(h.0.nrows(), x.len())?;
                Ok(x.dot(&(&h.0 * x)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(values))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        measurement_jacobian(&self.lifted, x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EkfState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl EkfState {
    pub fn new(v: &StateVector, std: f64) -> Self {
        let n = 2 * v.len();
        Self {
            mean: stack_real(v.as_vector()),
            cov: DMatrix::identity(n, n) * (std * std),
        }
    }

    pub fn state(&self) -> StateVector {
        StateVector(unstack_real(&self.mean))
    }

    pub fn is_finite(&self) -> bool {
        self.mean
            .iter()
            .chain(self.cov.iter())
            .all(|x| x.is_finite())
    }
}

/// Isotropic `Q` for the bounded process noise.
pub fn process_covariance(noise: &NoiseModel, buses: usize) -> DMatrix<f64> {
    let var = noise.process_mag_bound.powi(2) / 3.0 * PROCESS_COMPONENT_FACTOR;
    DMatrix::identity(2 * buses, 2 * buses) * var
}

/// `R = (b^2/3) I`, the variance of `Uniform(-b, b)`, floored at `min_variance`.
pub fn measurement_covariance(noise: &NoiseModel, len: usize, min_variance: f64) -> DMatrix<f64> {
    let var = (noise.meas_bound.powi(2) / 3.0).max(min_variance);
    DMatrix::identity(len, len) * var
}

#[derive(Clone, Debug, PartialEq)]
pub struct EkfRun {
    /// Filtered estimates `v_{k|k}` for `k = 0..=K`; non-finite after divergence.
    pub estimates: Vec<StateVector>,
    /// Posterior covariances, aligned with `estimates`.
    pub covariances: Vec<DMatrix<f64>>,
    /// Steps whose innovation covariance needed regularizing.
    pub regularized_steps: usize,
    pub diverged: bool,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Measurement update with the Joseph-form covariance. Returns whether the
/// innovation covariance had to be regularized.
fn update<M: MeasurementModel>(
    state: &mut EkfState,
    model: &M,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<bool> {
    let h = model.jacobian(&state.mean)?;
    let innovation = z - model.evaluate(&state.mean)?;
    let s = symmetrize(&(&h * &state.cov * h.transpose() + r));
    let (chol, regularized) = match Cholesky::new(s.clone()) {
        Some(c) => (c, false),
        None => {
            let n = s.nrows();
            let reg = s + DMatrix::identity(n, n) * SINGULAR_REGULARIZATION;
            match Cholesky::new(reg) {
                Some(c) => (c, true),
                None => return Ok(true),
            }
        }
    };
    // K = P H^T S^{-1}, via S K^T = H P
    let gain = chol.solve(&(&h * &state.cov)).transpose();
    state.mean += &gain * innovation;
    let n = state.mean.len();
    let a = DMatrix::identity(n, n) - &gain * &h;
    state.cov = symmetrize(&(&a * &state.cov * a.transpose() + &gain * r * gain.transpose()));
    Ok(regularized)
}

/// Runs the filter over `z_0..z_K`. `init` is the prior for `x_0`; step 0 is a
/// pure update, every later step predicts with `F_{k-1}` and then updates.
pub fn ekf_run<M: MeasurementModel>(
    model: &M,
    measurements: &[DVector<f64>],
    transitions: &[TransitionMatrix],
    init: &EkfState,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<EkfRun> {
    let dim = init.mean.len();
    check_dim(dim, init.cov.nrows())?;
    check_dim(dim, q.nrows())?;
    check_dim(model.len(), r.nrows())?;
    if measurements.len() > transitions.len() + 1 {
        return Err(Error::Validation(format!(
            "{} measurement vectors need {} transitions, found {}",
            measurements.len(),
            measurements.len() - 1,
            transitions.len()
        )));
    }
    if Cholesky::new(symmetrize(r)).is_none() {
        return Err(Error::Validation(
            "measurement covariance must be positive definite".into(),
        ));
    }
    for f in transitions {
        check_dim(dim, 2 * f.dim())?;
    }

    let mut state = init.clone();
    let mut estimates = Vec::with_capacity(measurements.len());
    let mut covariances = Vec::with_capacity(measurements.len());
    let mut regularized_steps = 0;
    let mut diverged = false;
    for (k, z) in measurements.iter().enumerate() {
        check_dim(model.len(), z.len())?;
        if !diverged {
            if k > 0 {
                let f = real_embedding(transitions[k - 1].matrix());
                state.mean = &f * &state.mean;
                state.cov = symmetrize(&(&f * &state.cov * f.transpose() + q));
            }
            if state.is_finite() && update(&mut state, model, z, r)? {
                regularized_steps += 1;
            }
            diverged = !state.is_finite();
        }
        if diverged {
            estimates.push(StateVector(unstack_real(&DVector::from_element(
                dim,
                f64::NAN,
            ))));
            covariances.push(DMatrix::from_element(dim, dim, f64::NAN));
        } else {
            estimates.push(state.state());
            covariances.push(state.cov.clone());
        }
    }
    Ok(EkfRun {
        estimates,
        covariances,
        regularized_steps,
        diverged,
    })
}
