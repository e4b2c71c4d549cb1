use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{
    closed_loop_matrix, pole_audit, solve_diophantine, state_recursion_audit, TargetPolynomial,
};
use crate::estimator::{dissipation_audit, AUDIT_TOL};
use crate::linalg::{dot, norm, norm2};
use crate::plant::BoxSet;
use crate::trajectory::{StepRecord, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AuditError {
    #[error("trajectory has no records")]
    Empty,
    #[error("trajectory metadata lacks {0}")]
    MissingMeta(&'static str),
    #[error("λ = {lambda} must lie in (λ̲, 1) = ({floor}, 1)")]
    Lambda { lambda: f64, floor: f64 },
    #[error("{0} is not constant over the run")]
    NotConstant(&'static str),
    #[error("tail of {tail} steps is invalid for {len} records")]
    Tail { tail: usize, len: usize },
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("{0}")]
    Record(String),
}

/// Sampled `ᾱ = max ‖𝒜_θ‖₂` over `S̄` and the exact diameter `s̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// A lower bound on the true maximum.
    pub alpha_bar: f64,
    pub s_bar: f64,
    pub evaluated: usize,
    /// Samples where the Diophantine system was singular.
    pub skipped: usize,
}

/// Closed-loop matrix norm at one estimate, `None` when the Diophantine system
/// is singular there.
pub fn closed_loop_norm(theta: &[f64], astar: &TargetPolynomial) -> Option<f64> {
    let sol = solve_diophantine(theta, astar).ok()?;
    let a = closed_loop_matrix(theta, &sol.gains).ok()?;
    Some(norm2(&a))
}

/// Evaluates all vertices of `S̄` followed by `samples` uniform draws from a
/// ChaCha8 stream seeded with `seed`.
pub fn estimate_constants(
    sbar: &BoxSet,
    astar: &TargetPolynomial,
    samples: usize,
    seed: u64,
) -> Result<Constants, AuditError> {
    if samples == 0 {
        return Err(AuditError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = sbar
        .vertices()
        .chain((0..samples).map(|_| sbar.sample(&mut rng)))
        .collect();
    let norms: Vec<Option<f64>> = points.par_iter().map(|p| closed_loop_norm(p, astar)).collect();
    let skipped = norms.iter().filter(|v| v.is_none()).count();
    let alpha_bar = norms.iter().flatten().fold(0.0_f64, |m, v| m.max(*v));
    Ok(Constants {
        alpha_bar,
        s_bar: sbar.diameter(),
        evaluated: norms.len() - skipped,
        skipped,
    })
}

/// `w̄(t) = ȳ(t+1) - ψ(t)ᵀθ*`: the disturbance seen by the auxiliary model,
/// including set-point changes.
pub fn effective_disturbance(r: &StepRecord, theta_star: &[f64]) -> f64 {
    r.ybar_next() - dot(&r.psi, theta_star)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrudeBoundAudit {
    pub steps_checked: usize,
    /// Steps violating the bound although `‖𝒜_θ̂(t)‖ ≤ ᾱ`.
    pub violations: usize,
    /// Steps violating the bound where `‖𝒜_θ̂(t)‖ > ᾱ`, i.e. `ᾱ` was
    /// undersampled.
    pub undersampled: usize,
    /// Largest `‖𝒜_θ̂(t)‖` seen along the run.
    pub max_step_alpha: f64,
    /// Largest `‖ψ(t+1)‖ / ((ᾱ+s̄)‖ψ(t)‖ + |w̄(t)|)`.
    pub max_ratio: f64,
    /// Smallest constant `c` for which `‖ψ(t+1)‖ ≤ c‖ψ(t)‖ + |w̄(t)|` holds
    /// along the run.
    pub required_constant: f64,
}

impl CrudeBoundAudit {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.undersampled == 0
    }
}

/// Checks `‖ψ(t+1)‖ ≤ (ᾱ+s̄)‖ψ(t)‖ + |w̄(t)|` on consecutive records.
pub fn crude_bound_audit(
    records: &[StepRecord],
    theta_star: &[f64],
    alpha_bar: f64,
    s_bar: f64,
) -> CrudeBoundAudit {
    let mut audit = CrudeBoundAudit::default();
    for pair in records.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        let wbar = effective_disturbance(cur, theta_star).abs();
        let rhs = (alpha_bar + s_bar) * norm(&cur.psi) + wbar;
        let lhs = norm(&next.psi);
        let step_alpha = closed_loop_matrix(&cur.theta_hat, &cur.gains)
            .map(|a| norm2(&a))
            .unwrap_or(f64::INFINITY);
        audit.steps_checked += 1;
        audit.max_step_alpha = audit.max_step_alpha.max(step_alpha);
        let psi_norm = norm(&cur.psi);
        if psi_norm > 0.0 {
            audit.required_constant = audit.required_constant.max((lhs - wbar) / psi_norm);
        }
        if rhs > 0.0 {
            audit.max_ratio = audit.max_ratio.max(lhs / rhs);
        }
        if lhs > rhs + AUDIT_TOL * (1.0 + rhs) {
            if step_alpha > alpha_bar {
                audit.undersampled += 1;
            } else {
                audit.violations += 1;
            }
        }
    }
    audit
}

/// Fitted constants of the bounded-gain-with-bias estimate for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunBound {
    /// Smallest `γ` such that `‖φ(t)‖ ≤ γ·(λ^{t-t₀}‖φ₀‖ + |r| + √μ + Σλ^{t-1-j}|w(j)|)`.
    pub gamma: f64,
    /// Steps where the bracket is zero but `φ(t) ≠ 0`.
    pub violations: usize,
    /// `sup ‖ψ(t)‖` over the last quarter of the run.
    pub residual_floor: f64,
    /// `max |ȳ(t)|` over the last quarter of the run.
    pub tail_tracking: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Max of the per-run `γ`.
    pub gamma: f64,
    pub lambda: f64,
    /// Max of the per-run residual floors.
    pub residual_floor: f64,
    pub violations: usize,
    /// Max of the per-run tail tracking errors.
    pub tail_tracking: f64,
    pub runs: Vec<RunBound>,
}

/// Fits the gain `γ` of the bounded-gain-with-bias estimate for a fixed `λ ∈ (λ̲, 1)`.
///
/// `|r|` is taken as the largest set-point magnitude seen in the run and `μ`
/// from the trajectory metadata.
pub fn gain_bound_fit(
    trajs: &[&Trajectory],
    lambda: f64,
    astar: &TargetPolynomial,
) -> Result<BoundReport, AuditError> {
    let floor = astar.lambda_floor();
    if !(lambda > floor && lambda < 1.0) {
        return Err(AuditError::Lambda { lambda, floor });
    }
    let runs = trajs
        .iter()
        .map(|tr| fit_one(tr, lambda))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BoundReport {
        gamma: runs.iter().fold(0.0, |m, r| m.max(r.gamma)),
        lambda,
        residual_floor: runs.iter().fold(0.0, |m, r| m.max(r.residual_floor)),
        violations: runs.iter().map(|r| r.violations).sum(),
        tail_tracking: runs.iter().fold(0.0, |m, r| m.max(r.tail_tracking)),
        runs,
    })
}

fn fit_one(tr: &Trajectory, lambda: f64) -> Result<RunBound, AuditError> {
    let recs = &tr.records;
    let first = recs.first().ok_or(AuditError::Empty)?;
    let phi0 = norm(&first.phi);
    let r_max = recs.iter().fold(0.0_f64, |m, r| m.max(r.r.abs()));
    let bias = r_max + tr.meta.mu.sqrt();
    let (mut gamma, mut violations) = (0.0_f64, 0);
    let (mut decay, mut conv) = (1.0, 0.0);
    for (k, rec) in recs.iter().enumerate() {
        if k > 0 {
            decay *= lambda;
            conv = lambda * conv + recs[k - 1].w.abs();
        }
        let bracket = decay * phi0 + bias + conv;
        let size = norm(&rec.phi);
        if bracket > 0.0 {
            gamma = gamma.max(size / bracket);
        } else if size > 0.0 {
            violations += 1;
        }
    }
    let from = recs.len() - recs.len().div_ceil(4);
    Ok(RunBound {
        gamma,
        violations,
        residual_floor: recs[from..].iter().fold(0.0, |m, r| m.max(norm(&r.psi))),
        tail_tracking: recs[from..].iter().fold(0.0, |m, r| m.max(r.ybar.abs())),
    })
}

/// `max |ȳ(t)|` over the final `tail` records. Requires the set-point and the
/// disturbance to be constant over the whole run.
pub fn tracking_audit(tr: &Trajectory, tail: usize) -> Result<f64, AuditError> {
    let recs = &tr.records;
    if tail == 0 || tail > recs.len() {
        return Err(AuditError::Tail {
            tail,
            len: recs.len(),
        });
    }
    if recs.iter().any(|r| r.r != recs[0].r) {
        return Err(AuditError::NotConstant("set-point"));
    }
    if recs.iter().any(|r| r.w != recs[0].w) {
        return Err(AuditError::NotConstant("disturbance"));
    }
    Ok(recs[recs.len() - tail..]
        .iter()
        .fold(0.0, |m, r| m.max(r.ybar.abs())))
}

/// `sup ‖ψ(t)‖` over records with `t ≥ from_t`.
pub fn residual_floor(tr: &Trajectory, from_t: i64) -> Result<f64, AuditError> {
    let tail: Vec<&StepRecord> = tr.records.iter().filter(|r| r.t >= from_t).collect();
    if tail.is_empty() {
        return Err(AuditError::Empty);
    }
    Ok(tail.iter().fold(0.0, |m, r| m.max(norm(&r.psi))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditLine {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub lines: Vec<AuditLine>,
}

impl AuditSummary {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AuditLine> {
        self.lines.iter().find(|l| l.name == name)
    }
}

/// Tolerance on the per-step characteristic polynomial and eigenvalue-cluster
/// checks.
pub const POLE_TOL: f64 = 1e-7;
/// Tolerance on the per-step Diophantine residual.
pub const DIOPHANTINE_TOL: f64 = 1e-9;

/// Runs every trajectory-level audit. The crude bound is checked only when
/// `alpha_bar` is given.
pub fn audit_trajectory(
    tr: &Trajectory,
    sbar: &BoxSet,
    astar: &TargetPolynomial,
    alpha_bar: Option<f64>,
) -> Result<AuditSummary, AuditError> {
    let theta_star = tr
        .meta
        .theta_star
        .as_deref()
        .ok_or(AuditError::MissingMeta("θ*"))?;
    let recs = &tr.records;
    if recs.is_empty() {
        return Err(AuditError::Empty);
    }
    let mut lines = Vec::new();
    let mut push = |name: &str, passed: bool, value: f64, tolerance: f64| {
        lines.push(AuditLine {
            name: name.into(),
            passed,
            value,
            tolerance,
        })
    };

    let p1 = dissipation_audit(recs, theta_star, tr.meta.mu).map_err(|e| AuditError::Record(e.to_string()))?;
    push("dissipation", p1.passed(), p1.total_violations() as f64, 0.0);

    let rec = state_recursion_audit(recs).map_err(|e| AuditError::Record(e.to_string()))?;
    push("state_recursion", rec.passed(), rec.max_residual, rec.tolerance);

    let outside = recs.iter().filter(|r| !sbar.contains(&r.theta_hat)).count();
    push("estimate_in_set", outside == 0, outside as f64, 0.0);

    let dioph = recs.iter().fold(0.0_f64, |m, r| m.max(r.dioph_residual));
    let dioph_tol = DIOPHANTINE_TOL * (1.0 + astar.polynomial().max_abs_coeff());
    push("diophantine", dioph <= dioph_tol, dioph, dioph_tol);

    let poles: Vec<(f64, f64)> = recs
        .par_iter()
        .map(|r| {
            pole_audit(&r.theta_hat, &r.gains, astar)
                .map(|a| (a.charpoly_deviation, a.cluster_deviation))
                .unwrap_or((f64::INFINITY, f64::INFINITY))
        })
        .collect();
    let cp = poles.iter().fold(0.0_f64, |m, p| m.max(p.0));
    let cl = poles.iter().fold(0.0_f64, |m, p| m.max(p.1));
    push("charpoly", cp <= POLE_TOL, cp, POLE_TOL);
    push("pole_clusters", cl <= POLE_TOL, cl, POLE_TOL);

    let finite = recs
        .iter()
        .all(|r| r.y.is_finite() && r.u.is_finite() && r.psi.iter().all(|v| v.is_finite()));
    push("finite", finite, 0.0, 0.0);

    if let Some(alpha) = alpha_bar {
        let s_bar = sbar.diameter();
        let crude = crude_bound_audit(recs, theta_star, alpha, s_bar);
        push(
            "crude_bound",
            crude.passed(),
            (crude.violations + crude.undersampled) as f64,
            0.0,
        );
    }
    Ok(AuditSummary { lines })
}
