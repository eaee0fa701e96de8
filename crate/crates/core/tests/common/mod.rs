#![allow(dead_code)]

use dynpsse::dynamics::StateVector;
use dynpsse::grid::{
    GridModel, LineParams, MeasurementDescriptor, MeasurementKind, MeasurementMatrix,
};
use dynpsse::linalg::{CMatrix, CVector};
use dynpsse::sdr::{predicted_measurements, SdrProblem};
use nalgebra::DVector;
use num_complex::Complex64;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Optimal values of [`tiny_instance`] for `mu = 1` and `mu = 0`, from
/// `tests/fixtures/tiny_sdp_oracle.py` (Clarabel and SCS agree).
pub const TINY_REFERENCES: [(f64, f64); 2] = [(1.0, 3.140954088692494), (0.0, 2.3663071605730828)];

pub fn mat2(a: [Complex64; 4]) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &a)
}

pub fn tiny_instance(mu: f64) -> SdrProblem {
    let h = [
        mat2([c(1.0, 0.0), c(0.5, -0.2), c(0.5, 0.2), c(-0.3, 0.0)]),
        mat2([c(0.2, 0.0), c(-0.1, 0.7), c(-0.1, -0.7), c(1.1, 0.0)]),
        mat2([c(-0.6, 0.0), c(0.0, 0.3), c(0.0, -0.3), c(0.4, 0.0)]),
    ];
    let z = [0.8, -0.4, 1.3];
    let b = mat2([c(0.9, 0.0), c(0.1, 0.2), c(-0.3, 0.4), c(0.5, 0.0)]);
    let mut p = SdrProblem::new(2).with_prior(&b * b.adjoint(), mu);
    for (h, z) in h.into_iter().zip(z) {
        p.push_term(MeasurementMatrix(h), z, 1.0);
    }
    p
}

pub fn full_plan(grid: &GridModel) -> Vec<MeasurementDescriptor> {
    let mut kinds = Vec::new();
    for n in 1..=grid.bus_count {
        kinds.push(MeasurementKind::ActiveInjection(n));
        kinds.push(MeasurementKind::ReactiveInjection(n));
    }
    for l in &grid.lines {
        for (m, n) in [(l.from_bus, l.to_bus), (l.to_bus, l.from_bus)] {
            kinds.push(MeasurementKind::ActiveFlow(m, n));
            kinds.push(MeasurementKind::ReactiveFlow(m, n));
        }
    }
    for n in 1..=grid.bus_count {
        kinds.push(MeasurementKind::SquaredVoltageMagnitude(n));
    }
    kinds.into_iter().map(MeasurementDescriptor::new).collect()
}

pub fn noiseless_static(grid: &GridModel, truth: &StateVector) -> SdrProblem {
    let plan = full_plan(grid);
    let blank = SdrProblem::static_estimation(grid, &plan, &DVector::zeros(plan.len())).unwrap();
    let z = DVector::from_vec(predicted_measurements(&blank, truth).unwrap());
    SdrProblem::static_estimation(grid, &plan, &z).unwrap()
}

pub fn two_bus() -> (GridModel, StateVector) {
    let g = GridModel::with_lines(2, vec![LineParams::new(1, 2, c(1.0, 0.0))]).unwrap();
    (
        g,
        StateVector::from_slice(&[c(1.0, 0.0), Complex64::from_polar(0.9, -0.1)]),
    )
}

pub fn three_bus() -> (GridModel, StateVector) {
    let g = GridModel::with_lines(
        3,
        vec![
            LineParams::new(1, 2, c(2.0, -6.0)).with_shunts(c(0.0, 0.03), c(0.0, 0.03)),
            LineParams::new(2, 3, c(1.5, -4.5)).with_shunts(c(0.0, 0.02), c(0.0, 0.02)),
            LineParams::new(1, 3, c(1.0, -3.0)),
        ],
    )
    .unwrap();
    let truth = StateVector::new(CVector::from_vec(vec![
        c(1.0, 0.0),
        Complex64::from_polar(0.95, -0.1),
        Complex64::from_polar(1.03, 0.05),
    ]));
    (g, truth)
}
