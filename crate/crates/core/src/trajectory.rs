//! Per-step closed-loop log and its CSV representation.
//!
//! Record `t` holds the signals at time `t` together with the quantities that
//! link it to `t+1`: the prediction error `e(t+1)`, the estimate `θ̂(t)` and the
//! gains `K(t)` computed from it (which produce `ū(t+1)`).
//!
//! CSV column order:
//! `t, y, u, w, r, ybar, ubar, wbar, e, psi_1..psi_{2n+1},
//! thetahat_1..thetahat_{2n+1}, K_1..K_{2n+1}, dioph_residual`.
//! Floats are written with 17 significant digits so a read-back is bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: i64,
    pub y: f64,
    pub u: f64,
    pub w: f64,
    pub r: f64,
    pub ybar: f64,
    pub ubar: f64,
    pub wbar: f64,
    /// `e(t+1) = ȳ(t+1) - ψ(t)ᵀθ̂(t)`
    pub e: f64,
    pub psi: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub gains: Vec<f64>,
    pub dioph_residual: f64,
    /// `φ(t) = [y(t)..y(t-n), u(t)..u(t-n)]`
    pub phi: Vec<f64>,
}

impl StepRecord {
    /// `ȳ(t+1)`, recovered from the prediction identity.
    pub fn ybar_next(&self) -> f64 {
        self.e + crate::linalg::dot(&self.psi, &self.theta_hat)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub config_hash: String,
    pub mu: f64,
    /// Auxiliary parameters of the true plant, when known.
    pub theta_star: Option<Vec<f64>>,
    pub alpha_bar: Option<f64>,
    pub s_bar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub records: Vec<StepRecord>,
    pub meta: TrajectoryMeta,
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty file")]
    Empty,
    #[error("header mismatch: expected `{expected}`")]
    Header { expected: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column `{column}`: cannot parse `{value}`")]
    Parse {
        line: usize,
        column: String,
        value: String,
    },
    #[error("expected {expected} records, found {found}")]
    RecordCount { expected: usize, found: usize },
    #[error("initial condition has length {got}, expected {expected}")]
    InitialCondition { expected: usize, got: usize },
}

pub fn csv_header(n: usize) -> Vec<String> {
    let d = 2 * n + 1;
    let mut cols: Vec<String> = ["t", "y", "u", "w", "r", "ybar", "ubar", "wbar", "e"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((1..=d).map(|i| format!("psi_{i}")));
    cols.extend((1..=d).map(|i| format!("thetahat_{i}")));
    cols.extend((1..=d).map(|i| format!("K_{i}")));
    cols.push("dioph_residual".into());
    cols
}

fn fmt_f64(out: &mut String, x: f64) {
    // 17 significant digits round-trip every finite f64
    let _ = write!(out, "{x:.16e}");
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", csv_header(self.n).join(","))?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            let _ = write!(line, "{}", r.t);
            for v in [r.y, r.u, r.w, r.r, r.ybar, r.ubar, r.wbar, r.e]
                .into_iter()
                .chain(r.psi.iter().copied())
                .chain(r.theta_hat.iter().copied())
                .chain(r.gains.iter().copied())
                .chain(std::iter::once(r.dioph_residual))
            {
                line.push(',');
                fmt_f64(&mut line, v);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Reads a trajectory written by [`Trajectory::write_csv`].
    ///
    /// `φ` is not part of the file; it is rebuilt from the `y`/`u` columns with
    /// `phi0` supplying the samples before the first record. When
    /// `expected_records` is given the row count must match it exactly.
    pub fn read_csv<R: BufRead>(
        reader: R,
        n: usize,
        phi0: &[f64],
        expected_records: Option<usize>,
        meta: TrajectoryMeta,
    ) -> Result<Self, CsvError> {
        if phi0.len() != 2 * (n + 1) {
            return Err(CsvError::InitialCondition {
                expected: 2 * (n + 1),
                got: phi0.len(),
            });
        }
        let header = csv_header(n);
        let d = 2 * n + 1;
        let mut lines = reader.lines();
        let first = lines.next().ok_or(CsvError::Empty)??;
        if first.trim_end() != header.join(",") {
            return Err(CsvError::Header {
                expected: header.join(","),
            });
        }

        let mut y_hist: Vec<f64> = phi0[..=n].to_vec();
        let mut u_hist: Vec<f64> = phi0[n + 1..].to_vec();
        let mut records = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let lineno = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(CsvError::FieldCount {
                    line: lineno,
                    expected: header.len(),
                    found: fields.len(),
                });
            }
            let t: i64 = fields[0].trim().parse().map_err(|_| CsvError::Parse {
                line: lineno,
                column: header[0].clone(),
                value: fields[0].to_string(),
            })?;
            let mut vals = Vec::with_capacity(fields.len() - 1);
            for (col, f) in header.iter().zip(&fields).skip(1) {
                let v: f64 = f.trim().parse().map_err(|_| CsvError::Parse {
                    line: lineno,
                    column: col.clone(),
                    value: f.to_string(),
                })?;
                vals.push(v);
            }
            let psi = vals[8..8 + d].to_vec();
            let theta_hat = vals[8 + d..8 + 2 * d].to_vec();
            let gains = vals[8 + 2 * d..8 + 3 * d].to_vec();

            if !records.is_empty() {
                y_hist.rotate_right(1);
                y_hist[0] = vals[0];
                u_hist.rotate_right(1);
                u_hist[0] = vals[1];
            }
            let phi = y_hist.iter().chain(&u_hist).copied().collect();
            records.push(StepRecord {
                t,
                y: vals[0],
                u: vals[1],
                w: vals[2],
                r: vals[3],
                ybar: vals[4],
                ubar: vals[5],
                wbar: vals[6],
                e: vals[7],
                psi,
                theta_hat,
                gains,
                dioph_residual: vals[8 + 3 * d],
                phi,
            });
        }
        if let Some(expected) = expected_records {
            if records.len() != expected {
                return Err(CsvError::RecordCount {
                    expected,
                    found: records.len(),
                });
            }
        }
        Ok(Trajectory { n, records, meta })
    }
}
