//! Projection-type parameter estimation for the auxiliary plant.
//!
//! Classical update (`μ > 0`):
//!
//! ```text
//! θ̌(t+1) = θ̂(t) + ψ(t) / (μ + ‖ψ(t)‖²) · e(t+1)
//! θ̂(t+1) = Proj_S̄ θ̌(t+1)
//! ```
//!
//! The ideal variant drops `μ` and holds the estimate when `ψ(t) = 0`.

use serde::{Deserialize, Serialize};

use crate::linalg::{dist, dot, norm_sq};
use crate::plant::{BoxSet, Regressor};
use crate::trajectory::StepRecord;

/// Absolute floor on audit slacks.
pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    #[default]
    Classical,
    Ideal,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("μ must be positive and finite, got {0}")]
    InvalidMu(f64),
    #[error("initial estimate is not in the admissible set")]
    InitialOutsideSet,
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("trajectory record {index} is missing {what}")]
    MissingField { index: usize, what: &'static str },
}

/// Euclidean projection onto a closed convex set.
///
/// Implementations must return a member of the set, leave members unchanged,
/// and be non-expansive.
pub trait Projector {
    fn dim(&self) -> usize;
    fn project(&self, x: &[f64]) -> Vec<f64>;
    fn contains(&self, x: &[f64]) -> bool;
}

impl Projector for BoxSet {
    fn dim(&self) -> usize {
        BoxSet::dim(self)
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        project_box(x, self)
    }

    fn contains(&self, x: &[f64]) -> bool {
        BoxSet::contains(self, x)
    }
}

/// Componentwise clamp; the exact Euclidean projection onto an axis-aligned box.
pub fn project_box(x: &[f64], set: &BoxSet) -> Vec<f64> {
    debug_assert_eq!(x.len(), set.dim());
    x.iter()
        .zip(set.lo.iter().zip(&set.hi))
        .map(|(v, (l, h))| v.clamp(*l, *h))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    theta_hat: Vec<f64>,
    mu: f64,
    set: BoxSet,
    mode: EstimatorMode,
}

/// Result of one estimator step.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorStep {
    pub next: EstimatorState,
    /// `e(t+1)`
    pub error: f64,
    /// `θ̌(t+1)` before projection.
    pub unprojected: Vec<f64>,
}

impl EstimatorState {
    pub fn new(
        theta0: Vec<f64>,
        mu: f64,
        set: BoxSet,
        mode: EstimatorMode,
    ) -> Result<Self, EstimatorError> {
        if mode == EstimatorMode::Classical && !(mu > 0.0 && mu.is_finite()) {
            return Err(EstimatorError::InvalidMu(mu));
        }
        if theta0.len() != set.dim() {
            return Err(EstimatorError::Dimension {
                what: "initial estimate",
                expected: set.dim(),
                got: theta0.len(),
            });
        }
        if !set.contains(&theta0) {
            return Err(EstimatorError::InitialOutsideSet);
        }
        Ok(EstimatorState {
            theta_hat: theta0,
            mu,
            set,
            mode,
        })
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn set(&self) -> &BoxSet {
        &self.set
    }

    pub fn mode(&self) -> EstimatorMode {
        self.mode
    }

    pub fn predict_error(&self, psi: &Regressor, ybar_next: f64) -> f64 {
        ybar_next - dot(psi.as_slice(), &self.theta_hat)
    }

    /// Replaces the estimate (used by the singular-estimate nudge policy).
    pub(crate) fn with_theta_hat(&self, theta_hat: Vec<f64>) -> Self {
        EstimatorState {
            theta_hat,
            ..self.clone()
        }
    }

    pub fn update(&self, psi: &Regressor, ybar_next: f64) -> EstimatorStep {
        match self.mode {
            EstimatorMode::Classical => self.update_classical(psi, ybar_next),
            EstimatorMode::Ideal => self.update_ideal(psi, ybar_next),
        }
    }

    pub fn update_classical(&self, psi: &Regressor, ybar_next: f64) -> EstimatorStep {
        let e = self.predict_error(psi, ybar_next);
        let gain = e / (self.mu + psi.norm_sq());
        self.finish(psi, e, gain)
    }

    pub fn update_ideal(&self, psi: &Regressor, ybar_next: f64) -> EstimatorStep {
        let e = self.predict_error(psi, ybar_next);
        if psi.is_zero() {
            return EstimatorStep {
                next: self.clone(),
                error: e,
                unprojected: self.theta_hat.clone(),
            };
        }
        let gain = e / psi.norm_sq();
        self.finish(psi, e, gain)
    }

    fn finish(&self, psi: &Regressor, e: f64, gain: f64) -> EstimatorStep {
        let check: Vec<f64> = self
            .theta_hat
            .iter()
            .zip(psi.as_slice())
            .map(|(th, p)| th + p * gain)
            .collect();
        let projected = self.set.project(&check);
        EstimatorStep {
            next: EstimatorState {
                theta_hat: projected,
                ..self.clone()
            },
            error: e,
            unprojected: check,
        }
    }
}

/// Outcome of checking the estimator's dissipation inequalities on a log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorAudit {
    /// `‖θ̂(t) - θ*‖` per record.
    pub param_error_norms: Vec<f64>,
    /// `e(t+1)² / (μ + ‖ψ(t)‖²)` per record.
    pub error_terms: Vec<f64>,
    /// `w̄(t)² / (μ + ‖ψ(t)‖²)` per record, with `w̄(t) = ȳ(t+1) - ψ(t)ᵀθ*`.
    pub disturbance_terms: Vec<f64>,
    /// Smallest slack of the cumulative inequality over the audited pairs.
    pub min_slack: f64,
    pub pairs_checked: usize,
    pub violations: usize,
    /// Step-size bound on excited intervals (`‖ψ‖² ≥ μ`).
    pub min_step_slack: f64,
    pub step_checks: usize,
    pub step_violations: usize,
    /// Cumulative ¼/2 inequality on excited intervals.
    pub min_excited_slack: f64,
    pub excited_pairs_checked: usize,
    pub excited_violations: usize,
}

impl EstimatorAudit {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.step_violations == 0 && self.excited_violations == 0
    }

    pub fn total_violations(&self) -> usize {
        self.violations + self.step_violations + self.excited_violations
    }
}

/// Pairs `(τ, t)` with `t - τ ∈ {1, 2, 4, …}` inside `[lo, hi]`.
fn dyadic_pairs(lo: usize, hi: usize) -> impl Iterator<Item = (usize, usize)> {
    (lo..hi).flat_map(move |tau| {
        std::iter::successors(Some(1usize), |g| g.checked_mul(2))
            .take_while(move |g| tau + g <= hi)
            .map(move |g| (tau, tau + g))
    })
}

/// Audits the estimator inequalities on a logged run against the true `θ*`.
///
/// The disturbance entering the auxiliary model is taken as
/// `w̄(t) = ȳ(t+1) - ψ(t)ᵀθ*`, which equals `w(t) - w(t-1)` while the
/// set-point is constant and also absorbs set-point changes.
pub fn dissipation_audit(
    records: &[StepRecord],
    theta_star: &[f64],
    mu: f64,
) -> Result<EstimatorAudit, EstimatorError> {
    if mu.is_nan() || mu <= 0.0 {
        return Err(EstimatorError::InvalidMu(mu));
    }
    let d = theta_star.len();
    for (index, r) in records.iter().enumerate() {
        if r.psi.len() != d {
            return Err(EstimatorError::MissingField { index, what: "ψ" });
        }
        if r.theta_hat.len() != d {
            return Err(EstimatorError::MissingField { index, what: "θ̂" });
        }
    }
    let h = records.len();
    let err_sq: Vec<f64> = records
        .iter()
        .map(|r| norm_sq(&sub(&r.theta_hat, theta_star)))
        .collect();
    let psi_sq: Vec<f64> = records.iter().map(|r| norm_sq(&r.psi)).collect();
    let wbar: Vec<f64> = records
        .iter()
        .map(|r| r.ybar_next() - dot(&r.psi, theta_star))
        .collect();

    let mut audit = EstimatorAudit {
        param_error_norms: err_sq.iter().map(|v| v.sqrt()).collect(),
        error_terms: (0..h).map(|j| records[j].e.powi(2) / (mu + psi_sq[j])).collect(),
        disturbance_terms: (0..h).map(|j| wbar[j].powi(2) / (mu + psi_sq[j])).collect(),
        min_slack: f64::INFINITY,
        min_step_slack: f64::INFINITY,
        min_excited_slack: f64::INFINITY,
        ..Default::default()
    };
    if h < 2 {
        return Ok(audit);
    }

    for (tau, t) in dyadic_pairs(0, h - 1) {
        let (mut sum, mut scale) = (0.0, err_sq[tau]);
        for j in tau..t {
            let term = -0.5 * audit.error_terms[j] + 2.0 * audit.disturbance_terms[j];
            sum += term;
            scale += term.abs();
        }
        let slack = err_sq[tau] + sum - err_sq[t];
        audit.pairs_checked += 1;
        audit.min_slack = audit.min_slack.min(slack);
        if slack < -AUDIT_TOL * (1.0 + scale) {
            audit.violations += 1;
        }
    }

    // maximal runs [lo, hi) with ‖ψ(j)‖² ≥ μ; pairs may end at hi itself
    let mut j = 0;
    while j < h {
        if psi_sq[j] < mu {
            j += 1;
            continue;
        }
        let lo = j;
        while j < h && psi_sq[j] >= mu {
            j += 1;
        }
        let hi = j.min(h - 1);
        for s in lo..hi.min(j) {
            if s + 1 >= h {
                break;
            }
            let step = dist(&records[s + 1].theta_hat, &records[s].theta_hat);
            let bound = records[s].e.abs() / psi_sq[s].sqrt();
            let slack = bound - step;
            audit.step_checks += 1;
            audit.min_step_slack = audit.min_step_slack.min(slack);
            if slack < -AUDIT_TOL * (1.0 + bound) {
                audit.step_violations += 1;
            }
        }
        for (tau, t) in dyadic_pairs(lo, hi) {
            let (mut sum, mut scale) = (0.0, err_sq[tau]);
            for k in tau..t {
                let term = (-0.25 * records[k].e.powi(2) + 2.0 * wbar[k].powi(2)) / psi_sq[k];
                sum += term;
                scale += term.abs();
            }
            let slack = err_sq[tau] + sum - err_sq[t];
            audit.excited_pairs_checked += 1;
            audit.min_excited_slack = audit.min_excited_slack.min(slack);
            if slack < -AUDIT_TOL * (1.0 + scale) {
                audit.excited_violations += 1;
            }
        }
    }
    Ok(audit)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
