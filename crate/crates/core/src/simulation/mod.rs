//! Closed-loop simulation of plant, estimator and controller, plus the
//! trajectory audits.

mod audit;
mod config;
mod sweep;

pub use audit::*;
pub use config::*;
pub use sweep::*;

use crate::controller::{control_step, solve_diophantine, ControlError, ControllerSolution};
use crate::estimator::EstimatorState;
use crate::plant::{plant_step, SystemState};
use crate::trajectory::{StepRecord, Trajectory, TrajectoryMeta};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("singular Diophantine system at t = {step} for θ̂ = {theta_hat:?}")]
    SingularSylvester { step: i64, theta_hat: Vec<f64> },
    #[error("non-finite signal at t = {step}")]
    NonFinite { step: i64 },
}

/// Runs `cfg.horizon` steps from `t₀` and returns one record per step.
///
/// Record `t` holds `ψ(t)` and `θ̂(t)`, the gains `K(t)` solved from `θ̂(t)`,
/// and `e(t+1)`. The next input is `u(t+1) = u(t) + K(t)ψ(t)`.
pub fn run_closed_loop(cfg: &SimConfig) -> Result<Trajectory, SimError> {
    let prep = cfg.prepare()?;
    let (n, t0) = (cfg.n, cfg.t0);
    let signal = |spec: &SignalSpec, t: i64| {
        signal_value(spec, t, t0).expect("signal range checked by prepare")
    };

    let mut state = SystemState::from_phi0(n, t0, &cfg.phi0, signal(&cfg.reference, t0))
        .expect("dimensions checked by prepare");
    let mut est = prep.estimator.clone();
    let mut records = Vec::with_capacity(cfg.horizon);

    for k in 0..cfg.horizon as i64 {
        let t = t0 + k;
        let psi = state.regressor();
        let sol;
        (sol, est) = synthesize(&est, &prep, cfg.singular_policy, t)?;

        let w_t = signal(&cfg.disturbance, t);
        let r_next = signal(&cfg.reference, t + 1);
        let y_next = plant_step(&cfg.theta_true, &state, w_t);
        let step = est.update(&psi, y_next - r_next);
        let (_, u_next) = control_step(&sol, &psi, state.u());
        if !(y_next.is_finite() && u_next.is_finite() && step.error.is_finite()) {
            return Err(SimError::NonFinite { step: t + 1 });
        }

        records.push(StepRecord {
            t,
            y: state.y(),
            u: state.u(),
            w: w_t,
            r: state.r(),
            ybar: state.ybar(),
            ubar: state.ubar(),
            wbar: w_t - state.w_prev(),
            e: step.error,
            theta_hat: est.theta_hat().to_vec(),
            gains: sol.gains,
            dioph_residual: sol.residual,
            phi: state.phi(),
            psi: psi.into_vec(),
        });
        state.advance(y_next, u_next, r_next, w_t);
        est = step.next;
    }

    Ok(Trajectory {
        n,
        records,
        meta: TrajectoryMeta {
            config_hash: cfg.hash(),
            mu: cfg.mu,
            theta_star: Some(prep.theta_star),
            alpha_bar: None,
            s_bar: Some(prep.sbar.diameter()),
        },
    })
}

fn synthesize(
    est: &EstimatorState,
    prep: &Prepared,
    policy: SingularPolicy,
    t: i64,
) -> Result<(ControllerSolution, EstimatorState), SimError> {
    let singular = |theta: &[f64]| SimError::SingularSylvester {
        step: t,
        theta_hat: theta.to_vec(),
    };
    match solve_diophantine(est.theta_hat(), &prep.target) {
        Ok(sol) => Ok((sol, est.clone())),
        Err(ControlError::SingularSylvester { .. }) if policy == SingularPolicy::Nudge => {
            let nudged = nudge_toward_center(est.theta_hat(), &prep.sbar);
            let est = est.with_theta_hat(nudged);
            match solve_diophantine(est.theta_hat(), &prep.target) {
                Ok(sol) => Ok((sol, est)),
                Err(_) => Err(singular(est.theta_hat())),
            }
        }
        Err(ControlError::SingularSylvester { .. }) => Err(singular(est.theta_hat())),
        Err(other) => unreachable!("estimate and target were validated: {other}"),
    }
}

fn nudge_toward_center(theta: &[f64], set: &crate::plant::BoxSet) -> Vec<f64> {
    theta
        .iter()
        .zip(set.center())
        .zip(set.widths())
        .map(|((x, c), w)| {
            let step = (1e-6 * w).min((c - x).abs());
            x + step * (c - x).signum()
        })
        .collect()
}
