//! Monte Carlo driver: simulate, estimate, score.
//!
//! The error at time `k` is `||v̂_k - v_k|| / sqrt(N)` with both vectors
//! rotated so bus 1 has zero angle. Replications are combined per `k` as the
//! root of the mean squared error over the replications that did not diverge.

pub mod config;
pub mod report;

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{simulate, simulate_from, StateVector};
use crate::ekf::{ekf_run, measurement_covariance, process_covariance, EkfState, QuadraticModel};
use crate::error::{Error, Result};
use crate::grid::measurement_matrices;
use crate::mhe::{mhe_step, Extraction, MheState, Window, REFERENCE_BUS};

pub use config::{Estimator, PriorKind, Scenario, ScenarioConfig};
pub use report::{emit_reports, read_rmse_csv, read_summary_csv, SummaryRow};

/// Per-time errors of one estimate sequence against the truth, after
/// rotating both to zero angle at `reference_bus` when one is given.
pub fn rmse(
    truth: &[StateVector],
    estimates: &[StateVector],
    reference_bus: Option<usize>,
) -> Result<Vec<f64>> {
    if truth.len() != estimates.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: estimates.len(),
        });
    }
    truth
        .iter()
        .zip(estimates)
        .map(|(v, e)| {
            if v.len() != e.len() {
                return Err(Error::DimensionMismatch {
                    expected: v.len(),
                    found: e.len(),
                });
            }
            let diff = match reference_bus {
                Some(bus) => e.aligned(bus).0 - v.aligned(bus).0,
                None => &e.0 - &v.0,
            };
            Ok(diff.norm() / (v.len() as f64).sqrt())
        })
        .collect()
}

/// Root mean square over rows, column by column. Rows must share a length.
pub fn aggregate(series: &[&[f64]]) -> Vec<f64> {
    let Some(first) = series.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|k| (series.iter().map(|s| s[k] * s[k]).sum::<f64>() / series.len() as f64).sqrt())
        .collect()
}

/// One estimator on one replication. `estimates[i]` is `v̂_{M+i|M+i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorRun {
    pub estimator: Estimator,
    pub estimates: Vec<StateVector>,
    pub errors: Vec<f64>,
    pub diverged: bool,
    /// Windows whose solver hit its iteration cap.
    pub unconverged: usize,
    pub elapsed: Vec<Duration>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    /// `v_0..v_K`.
    pub truth: Vec<StateVector>,
    pub measurements: Vec<DVector<f64>>,
    pub runs: Vec<EstimatorRun>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    /// Aggregate error for `k = M..=K`.
    pub rmse: Vec<f64>,
    /// Time average of `rmse`.
    pub mean_rmse: f64,
    pub diverged: usize,
    pub divergence_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub horizon: usize,
    pub window: usize,
    pub bus_count: usize,
    pub replications: Vec<Replication>,
    pub summaries: Vec<EstimatorSummary>,
}

impl RunResult {
    pub fn summary(&self, estimator: Estimator) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == estimator)
    }

    /// Time indices `M..=K` of the scored estimates.
    pub fn times(&self) -> std::ops::RangeInclusive<usize> {
        self.window..=self.horizon
    }
}

fn initial_estimate(scenario: &Scenario, truth0: &StateVector) -> StateVector {
    match scenario.prior {
        PriorKind::Flat => StateVector::flat_start(scenario.grid.bus_count),
        PriorKind::Exact => truth0.clone(),
    }
}

fn run_mhe_estimator(
    scenario: &Scenario,
    seed: u64,
    zs: &[DVector<f64>],
    prior: StateVector,
) -> Result<(Vec<StateVector>, usize, Vec<Duration>)> {
    let hs = measurement_matrices(&scenario.grid, &scenario.plan)?;
    let mut cfg = scenario.mhe;
    if let Extraction::Randomized { count, .. } = cfg.extraction {
        cfg.extraction = Extraction::Randomized { count, seed };
    }
    let m = cfg.window;
    let k_end = scenario.horizon;
    let mut state = MheState::from_prior(prior);
    let mut estimates = Vec::with_capacity(k_end - m + 1);
    let mut elapsed = Vec::with_capacity(k_end - m + 1);
    let mut unconverged = 0;
    for k in m..=k_end {
        let window = Window::ending_at(k, m, zs, &scenario.transitions)?;
        let next_f = (k < k_end).then(|| &scenario.transitions[k - m]);
        let (set, next) = mhe_step(&hs, &window, &state, next_f, &cfg)?;
        if !set.converged {
            unconverged += 1;
        }
        elapsed.push(set.elapsed);
        estimates.push(set.filtered().clone());
        state = next;
    }
    Ok((estimates, unconverged, elapsed))
}

fn run_ekf_estimator(
    scenario: &Scenario,
    zs: &[DVector<f64>],
    init: &StateVector,
) -> Result<(Vec<StateVector>, bool, Vec<Duration>)> {
    let started = Instant::now();
    let model = QuadraticModel::new(&scenario.grid, &scenario.plan)?;
    let q = process_covariance(&scenario.noise, scenario.grid.bus_count);
    let r = measurement_covariance(
        &scenario.noise,
        scenario.plan.len(),
        scenario.ekf.min_measurement_variance,
    );
    let state = EkfState::new(init, scenario.ekf.init_std);
    let run = ekf_run(&model, zs, &scenario.transitions, &state, &q, &r)?;
    let per_step = started.elapsed() / zs.len() as u32;
    let scored = run.estimates[scenario.mhe.window..].to_vec();
    let elapsed = vec![per_step; scored.len()];
    Ok((scored, run.diverged, elapsed))
}

/// Simulates replication `index` and runs every requested estimator on it.
pub fn run_replication(scenario: &Scenario, index: usize) -> Result<Replication> {
    let seed = scenario.seed.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajectory = simulate(
        &scenario.grid,
        &scenario.plan,
        &scenario.transitions,
        &scenario.noise,
        scenario.horizon,
        &mut rng,
    )?;
    replicate_on(
        scenario,
        index,
        seed,
        trajectory.states,
        trajectory.measurements,
    )
}

/// Like [`run_replication`] but with a fixed `v_0`.
pub fn run_replication_from(
    scenario: &Scenario,
    index: usize,
    v0: StateVector,
) -> Result<Replication> {
    let seed = scenario.seed.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajectory = simulate_from(
        &scenario.grid,
        &scenario.plan,
        &scenario.transitions,
        &scenario.noise,
        scenario.horizon,
        v0,
        &mut rng,
    )?;
    replicate_on(
        scenario,
        index,
        seed,
        trajectory.states,
        trajectory.measurements,
    )
}

fn replicate_on(
    scenario: &Scenario,
    index: usize,
    seed: u64,
    truth: Vec<StateVector>,
    zs: Vec<DVector<f64>>,
) -> Result<Replication> {
    let init = initial_estimate(scenario, &truth[0]);
    let scored_truth = &truth[scenario.mhe.window..];
    let mut runs = Vec::with_capacity(scenario.estimators.len());
    for &estimator in &scenario.estimators {
        let (estimates, diverged_flag, unconverged, elapsed) = match estimator {
            Estimator::Mhe => {
                let (e, unconverged, t) = run_mhe_estimator(scenario, seed, &zs, init.clone())?;
                (e, false, unconverged, t)
            }
            Estimator::Ekf => {
                let (e, diverged, t) = run_ekf_estimator(scenario, &zs, &init)?;
                (e, diverged, 0, t)
            }
        };
        let diverged = diverged_flag || estimates.iter().any(|v| !v.is_finite());
        let errors = rmse(scored_truth, &estimates, Some(REFERENCE_BUS))?;
        runs.push(EstimatorRun {
            estimator,
            estimates,
            errors,
            diverged,
            unconverged,
            elapsed,
        });
    }
    Ok(Replication {
        index,
        seed,
        truth,
        measurements: zs,
        runs,
    })
}

/// Aggregates replications in index order.
pub fn summarize(scenario: &Scenario, replications: &[Replication]) -> Vec<EstimatorSummary> {
    scenario
        .estimators
        .iter()
        .enumerate()
        .map(|(i, &estimator)| {
            let runs: Vec<&EstimatorRun> = replications.iter().map(|r| &r.runs[i]).collect();
            let kept: Vec<&[f64]> = runs
                .iter()
                .filter(|r| !r.diverged)
                .map(|r| r.errors.as_slice())
                .collect();
            let diverged = runs.len() - kept.len();
            let rmse = if kept.is_empty() {
                vec![f64::NAN; scenario.window_count()]
            } else {
                aggregate(&kept)
            };
            let mean_rmse = rmse.iter().sum::<f64>() / rmse.len() as f64;
            EstimatorSummary {
                estimator,
                rmse,
                mean_rmse,
                diverged,
                divergence_rate: diverged as f64 / runs.len() as f64,
            }
        })
        .collect()
}

/// Runs every replication, in parallel, and aggregates in index order.
pub fn run_scenario(scenario: &Scenario) -> Result<RunResult> {
    let replications = (0..scenario.replications)
        .into_par_iter()
        .map(|r| run_replication(scenario, r))
        .collect::<Result<Vec<_>>>()?;
    let summaries = summarize(scenario, &replications);
    Ok(RunResult {
        horizon: scenario.horizon,
        window: scenario.mhe.window,
        bus_count: scenario.grid.bus_count,
        replications,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn s(values: &[(f64, f64)]) -> StateVector {
        StateVector::from_slice(
            &values
                .iter()
                .map(|&(re, im)| Complex64::new(re, im))
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn identical_series_score_zero() {
        let v = vec![s(&[(1.0, 0.0), (0.9, -0.2)]); 3];
        assert_eq!(rmse(&v, &v, Some(1)).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn three_four_five() {
        let e = rmse(&[s(&[(1.0, 0.0)])], &[s(&[(1.3, 0.4)])], None).unwrap();
        assert!((e[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn global_phase_is_not_an_error() {
        let v = s(&[(1.0, 0.0), (0.9, -0.2)]);
        let rotated = StateVector(v.0.map(|z| z * Complex64::from_polar(1.0, 0.7)));
        assert!(rmse(&[v], &[rotated], Some(1)).unwrap()[0] < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(rmse(&[s(&[(1.0, 0.0)])], &[], None).is_err());
        assert!(rmse(&[s(&[(1.0, 0.0)])], &[s(&[(1.0, 0.0), (1.0, 0.0)])], None).is_err());
    }

    #[test]
    fn aggregate_is_root_mean_square() {
        let a = [3.0, 0.0];
        let b = [4.0, 0.0];
        let agg = aggregate(&[&a, &b]);
        assert!((agg[0] - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(agg[1], 0.0);
        assert!(aggregate(&[]).is_empty());
    }
}
