//! Network model, bus admittance matrix and the Hermitian measurement
//! matrices that turn every SCADA-type measurement into `v^H H v`.
//!
//! Buses are numbered from 1 in every public type and file format; the
//! conversion to 0-based matrix indices happens inside this module.

use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;

use crate::dynamics::StateVector;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{hermitian_defect, quadratic_form, CMatrix, ZERO};

const CASE6WW: &str = include_str!("../data/case6ww.toml");

/// One transmission line. `shunt_from`/`shunt_to` are the line-charging
/// admittances seen at each end.
#[derive(Clone, Debug, PartialEq)]
pub struct LineParams {
    pub from_bus: usize,
    pub to_bus: usize,
    pub series_admittance: Complex64,
    pub shunt_from: Complex64,
    pub shunt_to: Complex64,
}

impl LineParams {
    pub fn new(from_bus: usize, to_bus: usize, series_admittance: Complex64) -> Self {
        Self {
            from_bus,
            to_bus,
            series_admittance,
            shunt_from: ZERO,
            shunt_to: ZERO,
        }
    }

    pub fn with_shunts(mut self, shunt_from: Complex64, shunt_to: Complex64) -> Self {
        self.shunt_from = shunt_from;
        self.shunt_to = shunt_to;
        self
    }

    /// Shunt admittance at the `bus` end of this line.
    fn shunt_at(&self, bus: usize) -> Complex64 {
        if bus == self.from_bus {
            self.shunt_from
        } else {
            self.shunt_to
        }
    }

    fn connects(&self, m: usize, n: usize) -> bool {
        (self.from_bus == m && self.to_bus == n) || (self.from_bus == n && self.to_bus == m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridModel {
    pub bus_count: usize,
    /// Line order is significant: measurement plans refer to lines by position.
    pub lines: Vec<LineParams>,
    pub bus_shunts: Vec<Complex64>,
}

impl GridModel {
    pub fn new(
        bus_count: usize,
        lines: Vec<LineParams>,
        bus_shunts: Vec<Complex64>,
    ) -> Result<Self> {
        let grid = Self {
            bus_count,
            lines,
            bus_shunts,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// A grid with `bus_count` buses, the given lines and no bus shunts.
    pub fn with_lines(bus_count: usize, lines: Vec<LineParams>) -> Result<Self> {
        Self::new(bus_count, lines, vec![ZERO; bus_count])
    }

    pub fn validate(&self) -> Result<()> {
        if self.bus_count == 0 {
            return Err(Error::Validation("grid must have at least one bus".into()));
        }
        if self.bus_shunts.len() != self.bus_count {
            return Err(Error::Validation(format!(
                "expected {} bus shunts, found {}",
                self.bus_count,
                self.bus_shunts.len()
            )));
        }
        for (i, line) in self.lines.iter().enumerate() {
            for bus in [line.from_bus, line.to_bus] {
                self.check_bus(bus)?;
            }
            if line.from_bus == line.to_bus {
                return Err(Error::Validation(format!(
                    "line {} is a self-loop at bus {}",
                    i + 1,
                    line.from_bus
                )));
            }
            let values = [line.series_admittance, line.shunt_from, line.shunt_to];
            if values
                .iter()
                .any(|z| !z.re.is_finite() || !z.im.is_finite())
            {
                return Err(Error::Validation(format!(
                    "line {} has a non-finite admittance",
                    i + 1
                )));
            }
            if let Some(j) = self.lines[..i]
                .iter()
                .position(|l| l.connects(line.from_bus, line.to_bus))
            {
                return Err(Error::Validation(format!(
                    "lines {} and {} both connect buses {} and {}",
                    j + 1,
                    i + 1,
                    line.from_bus,
                    line.to_bus
                )));
            }
        }
        if self
            .bus_shunts
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Validation("non-finite bus shunt".into()));
        }
        Ok(())
    }

    pub fn check_bus(&self, bus: usize) -> Result<()> {
        if bus == 0 || bus > self.bus_count {
            Err(Error::Validation(format!(
                "bus {bus} outside 1..={}",
                self.bus_count
            )))
        } else {
            Ok(())
        }
    }

    /// The line joining `m` and `n` in either orientation.
    pub fn find_line(&self, m: usize, n: usize) -> Result<&LineParams> {
        self.lines
            .iter()
            .find(|l| l.connects(m, n))
            .ok_or(Error::LineNotFound { from: m, to: n })
    }

    /// The embedded Wood & Wollenberg 6-bus / 11-line case.
    pub fn case6ww() -> Self {
        Self::from_case_str(CASE6WW).expect("embedded case file is valid")
    }

    pub fn load_case(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_case_str(&text).map_err(|e| match e {
            Error::Config(message) => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Parses the TOML case format:
    ///
    /// ```toml
    /// bus_count = 2
    /// bus_shunts = [[0.0, 0.0], [0.0, 0.0]]   # optional, [re, im] per bus
    ///
    /// [[branch]]
    /// from = 1
    /// to = 2
    /// series = [1.0, -4.0]                    # series admittance [re, im]
    /// shunt_from = [0.0, 0.02]                # optional
    /// shunt_to = [0.0, 0.02]                  # optional
    /// ```
    pub fn from_case_str(text: &str) -> Result<Self> {
        let raw: CaseFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let bus_shunts = match raw.bus_shunts {
            Some(s) => s
                .into_iter()
                .map(|[re, im]| Complex64::new(re, im))
                .collect(),
            None => vec![ZERO; raw.bus_count],
        };
        let lines = raw
            .branch
            .into_iter()
            .map(|b| LineParams {
                from_bus: b.from,
                to_bus: b.to,
                series_admittance: Complex64::new(b.series[0], b.series[1]),
                shunt_from: Complex64::new(b.shunt_from[0], b.shunt_from[1]),
                shunt_to: Complex64::new(b.shunt_to[0], b.shunt_to[1]),
            })
            .collect();
        Self::new(raw.bus_count, lines, bus_shunts)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    #[allow(dead_code)]
    name: Option<String>,
    bus_count: usize,
    bus_shunts: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    branch: Vec<CaseBranch>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseBranch {
    from: usize,
    to: usize,
    series: [f64; 2],
    #[serde(default)]
    shunt_from: [f64; 2],
    #[serde(default)]
    shunt_to: [f64; 2],
}

/// The bus admittance matrix `Y`, with `i = Y v`.
#[derive(Clone, Debug, PartialEq)]
pub struct BusAdmittance(pub CMatrix);

impl BusAdmittance {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }
}

/// Assembles `Y`. The diagonal carries the bus shunt plus, for every incident
/// line, its series admittance and the line-charging shunt at that end.
pub fn build_admittance(grid: &GridModel) -> Result<BusAdmittance> {
    grid.validate()?;
    let n = grid.bus_count;
    let mut y = CMatrix::zeros(n, n);
    for (i, shunt) in grid.bus_shunts.iter().enumerate() {
        y[(i, i)] += shunt;
    }
    for line in &grid.lines {
        let (f, t) = (line.from_bus - 1, line.to_bus - 1);
        let ys = line.series_admittance;
        y[(f, f)] += ys + line.shunt_from;
        y[(t, t)] += ys + line.shunt_to;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    Ok(BusAdmittance(y))
}

/// `Y^{mn}`: the row-`m` matrix with `e_m^T Y^{mn} v = I^{mn}`, the current
/// leaving bus `m` towards `n`.
pub fn flow_matrix(grid: &GridModel, m: usize, n: usize) -> Result<CMatrix> {
    grid.check_bus(m)?;
    grid.check_bus(n)?;
    let line = grid.find_line(m, n)?;
    let ys = line.series_admittance;
    let mut out = CMatrix::zeros(grid.bus_count, grid.bus_count);
    out[(m - 1, m - 1)] = line.shunt_at(m) + ys;
    out[(m - 1, n - 1)] = -ys;
    Ok(out)
}

/// Row `n` of `Y`, all other rows zero.
fn injection_matrix(y: &BusAdmittance, n: usize) -> CMatrix {
    let dim = y.0.nrows();
    let mut out = CMatrix::zeros(dim, dim);
    out.row_mut(n - 1).copy_from(&y.0.row(n - 1));
    out
}

/// `(A + A^H) / 2`
fn active_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// `(j/2)(A - A^H)`
fn reactive_part(a: &CMatrix) -> CMatrix {
    (a - a.adjoint()) * Complex64::new(0.0, 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MeasurementKind {
    ActiveInjection(usize),
    ReactiveInjection(usize),
    /// Active power leaving bus `.0` on the line towards bus `.1`.
    ActiveFlow(usize, usize),
    ReactiveFlow(usize, usize),
    SquaredVoltageMagnitude(usize),
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::ActiveInjection(n) => write!(f, "P{n}"),
            Self::ReactiveInjection(n) => write!(f, "Q{n}"),
            Self::ActiveFlow(m, n) => write!(f, "P{m}-{n}"),
            Self::ReactiveFlow(m, n) => write!(f, "Q{m}-{n}"),
            Self::SquaredVoltageMagnitude(n) => write!(f, "V{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementDescriptor {
    pub kind: MeasurementKind,
    /// Weight in the static least-squares fit, nominally the inverse noise variance.
    pub weight: f64,
}

impl MeasurementDescriptor {
    pub fn new(kind: MeasurementKind) -> Self {
        Self { kind, weight: 1.0 }
    }

    pub fn weighted(kind: MeasurementKind, weight: f64) -> Self {
        Self { kind, weight }
    }

    pub fn validate(&self, grid: &GridModel) -> Result<()> {
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::Validation(format!(
                "measurement {} has non-positive weight",
                self.kind
            )));
        }
        match self.kind {
            MeasurementKind::ActiveInjection(n)
            | MeasurementKind::ReactiveInjection(n)
            | MeasurementKind::SquaredVoltageMagnitude(n) => grid.check_bus(n),
            MeasurementKind::ActiveFlow(m, n) | MeasurementKind::ReactiveFlow(m, n) => {
                grid.check_bus(m)?;
                grid.check_bus(n)?;
                grid.find_line(m, n).map(|_| ())
            }
        }
    }
}

/// Hermitian `H` with `h(v) = v^H H v = Tr(H v v^H)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMatrix(pub CMatrix);

impl MeasurementMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.0.is_square() && hermitian_defect(&self.0) <= tol
    }
}

pub fn measurement_matrix(
    grid: &GridModel,
    d: &MeasurementDescriptor,
) -> Result<MeasurementMatrix> {
    d.validate(grid)?;
    let h = match d.kind {
        MeasurementKind::ActiveInjection(n) => {
            active_part(&injection_matrix(&build_admittance(grid)?, n))
        }
        MeasurementKind::ReactiveInjection(n) => {
            reactive_part(&injection_matrix(&build_admittance(grid)?, n))
        }
        MeasurementKind::ActiveFlow(m, n) => active_part(&flow_matrix(grid, m, n)?),
        MeasurementKind::ReactiveFlow(m, n) => reactive_part(&flow_matrix(grid, m, n)?),
        MeasurementKind::SquaredVoltageMagnitude(n) => {
            let mut h = CMatrix::zeros(grid.bus_count, grid.bus_count);
            h[(n - 1, n - 1)] = Complex64::new(1.0, 0.0);
            h
        }
    };
    Ok(MeasurementMatrix(h))
}

/// Measurement matrices for a whole plan, in plan order.
pub fn measurement_matrices(
    grid: &GridModel,
    plan: &[MeasurementDescriptor],
) -> Result<Vec<MeasurementMatrix>> {
    plan.iter().map(|d| measurement_matrix(grid, d)).collect()
}

pub fn evaluate_measurement(h: &MeasurementMatrix, v: &StateVector) -> Result<f64> {
    check_dim(h.dim(), v.len())?;
    Ok(quadratic_form(&h.0, v.as_vector()))
}

/// Injections, line flows and squared magnitudes computed directly from
/// currents (`i = Y v`, `I^{mn} = ybar V^m + y (V^m - V^n)`) without any
/// lifted matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlow {
    /// `S^n = V^n conj(I^n)` per bus.
    pub injections: Vec<Complex64>,
    /// Per line, in grid order: (power leaving the from end, power leaving the to end).
    pub flows: Vec<(Complex64, Complex64)>,
    pub squared_magnitudes: Vec<f64>,
}

impl PowerFlow {
    /// The value a measurement of `kind` would read at this operating point.
    pub fn value(&self, grid: &GridModel, kind: MeasurementKind) -> Result<f64> {
        let flow = |m: usize, n: usize| -> Result<Complex64> {
            let idx = grid
                .lines
                .iter()
                .position(|l| l.connects(m, n))
                .ok_or(Error::LineNotFound { from: m, to: n })?;
            let (s_from, s_to) = self.flows[idx];
            Ok(if grid.lines[idx].from_bus == m {
                s_from
            } else {
                s_to
            })
        };
        let bus = |n: usize| -> Result<usize> { grid.check_bus(n).map(|_| n - 1) };
        Ok(match kind {
            MeasurementKind::ActiveInjection(n) => self.injections[bus(n)?].re,
            MeasurementKind::ReactiveInjection(n) => self.injections[bus(n)?].im,
            MeasurementKind::ActiveFlow(m, n) => flow(m, n)?.re,
            MeasurementKind::ReactiveFlow(m, n) => flow(m, n)?.im,
            MeasurementKind::SquaredVoltageMagnitude(n) => self.squared_magnitudes[bus(n)?],
        })
    }
}

pub fn power_flow_oracle(grid: &GridModel, v: &StateVector) -> Result<PowerFlow> {
    check_dim(grid.bus_count, v.len())?;
    let volts = v.as_vector();
    let y = build_admittance(grid)?;
    let currents = &y.0 * volts;
    let injections = volts
        .iter()
        .zip(currents.iter())
        .map(|(vn, i)| vn * i.conj())
        .collect();
    let flows = grid
        .lines
        .iter()
        .map(|l| {
            let (vf, vt) = (volts[l.from_bus - 1], volts[l.to_bus - 1]);
            let i_from = l.shunt_from * vf + l.series_admittance * (vf - vt);
            let i_to = l.shunt_to * vt + l.series_admittance * (vt - vf);
            (vf * i_from.conj(), vt * i_to.conj())
        })
        .collect();
    let squared_magnitudes = volts.iter().map(|z| z.norm_sqr()).collect();
    Ok(PowerFlow {
        injections,
        flows,
        squared_magnitudes,
    })
}
