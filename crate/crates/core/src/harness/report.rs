//! CSV output of a finished run.
//!
//! | file | columns |
//! |------|---------|
//! | `rmse.csv` | k, estimator, rmse |
//! | `summary.csv` | estimator, mean_rmse, divergence_rate, diverged, replications |
//! | `replications.csv` | replication, seed, estimator, diverged, unconverged_windows |
//! | `estimates.csv` | replication, k, bus, re, im, estimator (`truth` rows included) |
//! | `measurements.csv` | replication, k, descriptor, value |
//! | `trajectory_bus<i>.csv` | k, truth_re, truth_im, then re/im per estimator, replication 0, bus-1 aligned |
//! | `timing.csv` (optional) | replication, estimator, k, seconds |

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use crate::csv::{fmt_float, CsvWriter};
use crate::error::{Error, Result};
use crate::mhe::REFERENCE_BUS;

use super::RunResult;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io { path, source })
}

fn io(path: PathBuf) -> impl FnOnce(std::io::Error) -> Error {
    move |source| Error::Io { path, source }
}

/// Writes every report file into `dir`, creating it if needed. Timing is
/// the only nondeterministic output and is written only when asked for.
pub fn emit_reports(result: &RunResult, dir: &Path, timing: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(BufWriter<File>) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(name);
        f(create(dir, name)?).map_err(io(path.clone()))?;
        written.push(path);
        Ok(())
    };

    emit("rmse.csv", &|out| {
        let mut w = CsvWriter::new(out, &["k", "estimator", "rmse"])?;
        for s in &result.summaries {
            for (k, value) in result.times().zip(&s.rmse) {
                w.row(&[k.to_string(), s.estimator.to_string(), fmt_float(*value)])?;
            }
        }
        w.finish()
    })?;

    emit("summary.csv", &|out| {
        let mut w = CsvWriter::new(
            out,
            &[
                "estimator",
                "mean_rmse",
                "divergence_rate",
                "diverged",
                "replications",
            ],
        )?;
        for s in &result.summaries {
            w.row(&[
                s.estimator.to_string(),
                fmt_float(s.mean_rmse),
                fmt_float(s.divergence_rate),
                s.diverged.to_string(),
                result.replications.len().to_string(),
            ])?;
        }
        w.finish()
    })?;

    emit("replications.csv", &|out| {
        let mut w = CsvWriter::new(
            out,
            &[
                "replication",
                "seed",
                "estimator",
                "diverged",
                "unconverged_windows",
            ],
        )?;
        for r in &result.replications {
            for run in &r.runs {
                w.row(&[
                    r.index.to_string(),
                    r.seed.to_string(),
                    run.estimator.to_string(),
                    run.diverged.to_string(),
                    run.unconverged.to_string(),
                ])?;
            }
        }
        w.finish()
    })?;

    emit("estimates.csv", &|out| {
        let mut w = CsvWriter::new(out, &["replication", "k", "bus", "re", "im", "estimator"])?;
        for r in &result.replications {
            let rows = r
                .truth
                .iter()
                .enumerate()
                .map(|(k, v)| (k, v, "truth"))
                .chain(r.runs.iter().flat_map(|run| {
                    result
                        .times()
                        .zip(&run.estimates)
                        .map(move |(k, v)| (k, v, run.estimator.tag()))
                }));
            for (k, v, tag) in rows {
                for (i, z) in v.0.iter().enumerate() {
                    w.row(&[
                        r.index.to_string(),
                        k.to_string(),
                        (i + 1).to_string(),
                        fmt_float(z.re),
                        fmt_float(z.im),
                        tag.to_string(),
                    ])?;
                }
            }
        }
        w.finish()
    })?;

    emit("measurements.csv", &|out| {
        let mut w = CsvWriter::new(out, &["replication", "k", "descriptor", "value"])?;
        for r in &result.replications {
            for (k, z) in r.measurements.iter().enumerate() {
                for (l, value) in z.iter().enumerate() {
                    w.row(&[
                        r.index.to_string(),
                        k.to_string(),
                        (l + 1).to_string(),
                        fmt_float(*value),
                    ])?;
                }
            }
        }
        w.finish()
    })?;

    for bus in 1..=result.bus_count {
        emit(&format!("trajectory_bus{bus}.csv"), &|out| {
            let mut header = vec!["k".to_string(), "truth_re".into(), "truth_im".into()];
            let first = result.replications.first();
            let runs = first.map(|r| r.runs.as_slice()).unwrap_or_default();
            for run in runs {
                header.push(format!("{}_re", run.estimator));
                header.push(format!("{}_im", run.estimator));
            }
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut w = CsvWriter::new(out, &header)?;
            if let Some(r) = first {
                for (i, k) in result.times().enumerate() {
                    let truth = r.truth[k].aligned(REFERENCE_BUS).0[bus - 1];
                    let mut row = vec![k.to_string(), fmt_float(truth.re), fmt_float(truth.im)];
                    for run in runs {
                        let z = run.estimates[i].aligned(REFERENCE_BUS).0[bus - 1];
                        row.push(fmt_float(z.re));
                        row.push(fmt_float(z.im));
                    }
                    w.row(&row)?;
                }
            }
            w.finish()
        })?;
    }

    if timing {
        emit("timing.csv", &|out| {
            let mut w = CsvWriter::new(out, &["replication", "estimator", "k", "seconds"])?;
            for r in &result.replications {
                for run in &r.runs {
                    for (k, t) in result.times().zip(&run.elapsed) {
                        w.row(&[
                            r.index.to_string(),
                            run.estimator.to_string(),
                            k.to_string(),
                            fmt_float(t.as_secs_f64()),
                        ])?;
                    }
                }
            }
            w.finish()
        })?;
    }
    Ok(written)
}

/// A parsed `summary.csv` row.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub estimator: String,
    pub mean_rmse: f64,
    pub divergence_rate: f64,
    pub diverged: usize,
    pub replications: usize,
}

fn read_rows(path: &Path, expected_header: &[&str]) -> Result<Vec<Vec<String>>> {
    let file = File::open(path).map_err(io(path.to_path_buf()))?;
    let mut lines = BufReader::new(file).lines();
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let header = lines
        .next()
        .transpose()
        .map_err(io(path.to_path_buf()))?
        .unwrap_or_default();
    if header.split(',').collect::<Vec<_>>() != expected_header {
        return Err(parse_err(format!("unexpected header `{header}`")));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line.map_err(io(path.to_path_buf()))?;
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != expected_header.len() {
            return Err(parse_err(format!(
                "row `{line}` has {} fields",
                fields.len()
            )));
        }
        rows.push(fields);
    }
    Ok(rows)
}

fn parse<T: std::str::FromStr>(path: &Path, field: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        message: format!("cannot parse `{field}`"),
    })
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    read_rows(
        path,
        &[
            "estimator",
            "mean_rmse",
            "divergence_rate",
            "diverged",
            "replications",
        ],
    )?
    .into_iter()
    .map(|f| {
        Ok(SummaryRow {
            estimator: f[0].clone(),
            mean_rmse: parse(path, &f[1])?,
            divergence_rate: parse(path, &f[2])?,
            diverged: parse(path, &f[3])?,
            replications: parse(path, &f[4])?,
        })
    })
    .collect()
}

/// `(k, estimator, rmse)` rows.
pub fn read_rmse_csv(path: &Path) -> Result<Vec<(usize, String, f64)>> {
    read_rows(path, &["k", "estimator", "rmse"])?
        .into_iter()
        .map(|f| Ok((parse(path, &f[0])?, f[1].clone(), parse(path, &f[2])?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::RunResult;

    #[test]
    fn empty_run_gives_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let result = RunResult {
            horizon: 3,
            window: 1,
            bus_count: 2,
            replications: Vec::new(),
            summaries: Vec::new(),
        };
        let files = emit_reports(&result, dir.path(), false).unwrap();
        assert_eq!(files.len(), 7);
        for f in files {
            assert_eq!(
                fs::read_to_string(&f).unwrap().lines().count(),
                1,
                "{}",
                f.display()
            );
        }
        assert!(read_summary_csv(&dir.path().join("summary.csv"))
            .unwrap()
            .is_empty());
        assert!(!dir.path().join("timing.csv").exists());
    }

    #[test]
    fn rejects_foreign_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        fs::write(&path, "a,b\n").unwrap();
        assert!(matches!(read_summary_csv(&path), Err(Error::Parse { .. })));
    }
}
