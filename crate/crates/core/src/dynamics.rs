//! State evolution `v_{k+1} = F_k v_k + xi_k` with bounded noises, and
//! synthesis of noisy measurement sequences from it.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::csv::{fmt_float, CsvWriter};
use crate::error::{check_dim, Error, Result};
use crate::grid::{evaluate_measurement, measurement_matrices, GridModel, MeasurementDescriptor};
use crate::linalg::{align_phase, CMatrix, CVector, ONE};

/// Complex bus voltages, one per bus, in per unit.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub CVector);

impl StateVector {
    pub fn new(v: CVector) -> Self {
        Self(v)
    }

    pub fn from_slice(values: &[Complex64]) -> Self {
        Self(CVector::from_column_slice(values))
    }

    /// All buses at `1 + 0j`.
    pub fn flat_start(n: usize) -> Self {
        Self(CVector::from_element(n, ONE))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CVector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &CVector {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Copy rotated so that `reference_bus` (1-based) has zero phase.
    pub fn aligned(&self, reference_bus: usize) -> Self {
        Self(align_phase(&self.0, reference_bus.saturating_sub(1)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix(pub CMatrix);

impl TransitionMatrix {
    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let d = CVector::from_iterator(
            entries.len(),
            entries.iter().map(|&x| Complex64::new(x, 0.0)),
        );
        Self(CMatrix::from_diagonal(&d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }
}

/// Bounds and moments of the initial state and the noises.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub process_mag_bound: f64,
    pub process_angle_bound: f64,
    pub meas_bound: f64,
    pub init_mag_mean: f64,
    pub init_mag_std: f64,
    pub init_angle_bound: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            process_mag_bound: 0.05,
            process_angle_bound: 0.05,
            meas_bound: 0.05,
            init_mag_mean: 1.0,
            init_mag_std: 0.1,
            init_angle_bound: 0.5 * PI,
        }
    }
}

impl NoiseModel {
    /// No process or measurement noise; the initial state is still random.
    pub fn noiseless(self) -> Self {
        Self {
            process_mag_bound: 0.0,
            process_angle_bound: 0.0,
            meas_bound: 0.0,
            ..self
        }
    }

    /// Everything deterministic: flat initial state, zero noise.
    pub fn degenerate() -> Self {
        Self {
            process_mag_bound: 0.0,
            process_angle_bound: 0.0,
            meas_bound: 0.0,
            init_mag_mean: 1.0,
            init_mag_std: 0.0,
            init_angle_bound: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("process_mag_bound", self.process_mag_bound),
            ("process_angle_bound", self.process_angle_bound),
            ("meas_bound", self.meas_bound),
            ("init_mag_std", self.init_mag_std),
            ("init_angle_bound", self.init_angle_bound),
        ];
        for (name, value) in fields {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::Validation(format!(
                    "{name} must be a nonnegative finite number"
                )));
            }
        }
        if !self.init_mag_mean.is_finite() {
            return Err(Error::Validation("init_mag_mean must be finite".into()));
        }
        Ok(())
    }
}

fn symmetric(bound: f64) -> Uniform<f64> {
    Uniform::new_inclusive(-bound, bound).expect("bound validated as finite and nonnegative")
}

/// `F v + xi`.
pub fn propagate(f: &TransitionMatrix, v: &StateVector, xi: &StateVector) -> Result<StateVector> {
    check_dim(f.dim(), v.len())?;
    check_dim(f.dim(), xi.len())?;
    check_dim(f.0.ncols(), v.len())?;
    Ok(StateVector(&f.0 * &v.0 + &xi.0))
}

/// Magnitudes `~ Normal(mean, std)`, then angles `~ Uniform(-b, b)`, one bus
/// at a time in that order. Bus 1's angle is drawn and then discarded so the
/// stream layout does not depend on the reference bus.
pub fn sample_initial_state<R: Rng + ?Sized>(
    noise: &NoiseModel,
    n: usize,
    rng: &mut R,
) -> StateVector {
    let mags =
        Normal::new(noise.init_mag_mean, noise.init_mag_std).expect("std validated as nonnegative");
    let angles = symmetric(noise.init_angle_bound);
    let v = (0..n).map(|bus| {
        let m = mags.sample(rng);
        let theta = angles.sample(rng);
        let theta = if bus == 0 { 0.0 } else { theta };
        Complex64::from_polar(m, theta)
    });
    StateVector(CVector::from_iterator(n, v))
}

/// Each entry is `m e^{j theta}` with `m` and `theta` uniform on their bounds.
/// `m` is signed, so a negative draw is a phase flip.
pub fn sample_process_noise<R: Rng + ?Sized>(
    noise: &NoiseModel,
    n: usize,
    rng: &mut R,
) -> StateVector {
    let mags = symmetric(noise.process_mag_bound);
    let angles = symmetric(noise.process_angle_bound);
    let v = (0..n).map(|_| {
        let m = mags.sample(rng);
        let theta = angles.sample(rng);
        Complex64::from_polar(m, theta)
    });
    StateVector(CVector::from_iterator(n, v))
}

pub fn sample_measurement_noise<R: Rng + ?Sized>(
    noise: &NoiseModel,
    len: usize,
    rng: &mut R,
) -> DVector<f64> {
    let dist = symmetric(noise.meas_bound);
    DVector::from_iterator(len, (0..len).map(|_| dist.sample(rng)))
}

/// Ground truth plus noisy measurements over time steps `0..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub measurements: Vec<DVector<f64>>,
    pub transitions: Vec<TransitionMatrix>,
    pub plan: Vec<MeasurementDescriptor>,
}

impl Trajectory {
    /// Last time index `K`.
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn write_states_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = CsvWriter::new(out, &["k", "bus", "re", "im"])?;
        for (k, v) in self.states.iter().enumerate() {
            for (i, z) in v.0.iter().enumerate() {
                w.row(&[
                    k.to_string(),
                    (i + 1).to_string(),
                    fmt_float(z.re),
                    fmt_float(z.im),
                ])?;
            }
        }
        w.finish()
    }

    pub fn write_measurements_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = CsvWriter::new(out, &["k", "descriptor", "value"])?;
        for (k, z) in self.measurements.iter().enumerate() {
            for (l, value) in z.iter().enumerate() {
                w.row(&[k.to_string(), (l + 1).to_string(), fmt_float(*value)])?;
            }
        }
        w.finish()
    }
}

/// Samples `v_0` and then runs [`simulate_from`].
///
/// Random draws happen in a fixed order: the initial state, the process
/// noises `xi_0..xi_{K-1}`, then the measurement noises `eta_0..eta_K`.
pub fn simulate<R: Rng + ?Sized>(
    grid: &GridModel,
    plan: &[MeasurementDescriptor],
    transitions: &[TransitionMatrix],
    noise: &NoiseModel,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    noise.validate()?;
    let v0 = sample_initial_state(noise, grid.bus_count, rng);
    simulate_from(grid, plan, transitions, noise, horizon, v0, rng)
}

pub fn simulate_from<R: Rng + ?Sized>(
    grid: &GridModel,
    plan: &[MeasurementDescriptor],
    transitions: &[TransitionMatrix],
    noise: &NoiseModel,
    horizon: usize,
    v0: StateVector,
    rng: &mut R,
) -> Result<Trajectory> {
    noise.validate()?;
    if horizon == 0 {
        return Err(Error::Validation("horizon must be at least 1".into()));
    }
    if transitions.len() != horizon {
        return Err(Error::Validation(format!(
            "expected {horizon} transition matrices, found {}",
            transitions.len()
        )));
    }
    let n = grid.bus_count;
    check_dim(n, v0.len())?;
    for f in transitions {
        check_dim(n, f.dim())?;
    }
    let hs = measurement_matrices(grid, plan)?;

    let mut states = Vec::with_capacity(horizon + 1);
    states.push(v0);
    for f in transitions {
        let xi = sample_process_noise(noise, n, rng);
        let next = propagate(f, states.last().expect("nonempty"), &xi)?;
        states.push(next);
    }
    let mut measurements = Vec::with_capacity(horizon + 1);
    for v in &states {
        let eta = sample_measurement_noise(noise, plan.len(), rng);
        let clean = hs
            .iter()
            .map(|h| evaluate_measurement(h, v))
            .collect::<Result<Vec<_>>>()?;
        measurements.push(DVector::from_vec(clean) + eta);
    }
    Ok(Trajectory {
        states,
        measurements,
        transitions: transitions.to_vec(),
        plan: plan.to_vec(),
    })
}
