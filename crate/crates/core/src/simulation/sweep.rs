use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    audit_trajectory, gain_bound_fit, run_closed_loop, AuditSummary, RunBound, SignalSpec, SimConfig,
};

/// Which quantities a sweep randomizes. Plant and initial estimate are drawn
/// uniformly from `S` and `S̄`, `φ₀` uniformly from `[-phi0_range, phi0_range]`
/// and `μ` log-uniformly from `mu_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOverrides {
    pub randomize_plant: bool,
    pub randomize_theta0: bool,
    pub phi0_range: Option<f64>,
    pub mu_range: Option<(f64, f64)>,
    /// Replace the disturbance by zero.
    pub noise_free: bool,
    /// Decay rate for the gain fit; defaults to the midpoint of `(λ̲, 1)`.
    pub lambda: Option<f64>,
    /// `ᾱ` for the crude-bound audit; skipped when absent.
    pub alpha_bar: Option<f64>,
}

impl Default for SweepOverrides {
    fn default() -> Self {
        SweepOverrides {
            randomize_plant: true,
            randomize_theta0: true,
            phi0_range: Some(5.0),
            mu_range: Some((1e-6, 1.0)),
            noise_free: false,
            lambda: None,
            alpha_bar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DrawOutcome {
    Completed { audits: AuditSummary, bound: RunBound },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawReport {
    pub draw: usize,
    pub config: SimConfig,
    pub outcome: DrawOutcome,
}

impl DrawReport {
    pub fn passed(&self) -> bool {
        matches!(&self.outcome, DrawOutcome::Completed { audits, bound } if audits.passed() && bound.violations == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub draws: Vec<DrawReport>,
}

impl SweepReport {
    pub fn passed_count(&self) -> usize {
        self.draws.iter().filter(|d| d.passed()).count()
    }

    pub fn all_passed(&self) -> bool {
        self.passed_count() == self.draws.len()
    }
}

const PLANT_TRIES: usize = 1000;

/// Configuration of draw `draw`, taken from ChaCha8 stream `draw` under `seed`.
pub fn draw_config(base: &SimConfig, ov: &SweepOverrides, seed: u64, draw: usize) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw as u64);
    let mut cfg = base.clone();
    cfg.seed = seed;
    let n = cfg.n;

    if ov.randomize_plant {
        for _ in 0..PLANT_TRIES {
            let v = cfg.uncertainty_set.sample(&mut rng);
            let p = crate::plant::PlantParameters {
                a: v[..n].to_vec(),
                b: v[n..].to_vec(),
            };
            if p.check_assumptions().is_ok() {
                cfg.theta_true = p;
                break;
            }
        }
    }
    if ov.randomize_theta0 {
        if let Ok(img) = crate::plant::image_box(&cfg.uncertainty_set, n) {
            cfg.theta0 = img.set.sample(&mut rng);
        }
    }
    if let Some(range) = ov.phi0_range {
        cfg.phi0 = (0..cfg.phi0.len()).map(|_| rng.gen_range(-range..=range)).collect();
    }
    if let Some((lo, hi)) = ov.mu_range {
        cfg.mu = (rng.gen_range(lo.ln()..=hi.ln())).exp();
    }
    if ov.noise_free {
        cfg.disturbance = SignalSpec::Constant { value: 0.0 };
    }
    cfg
}

/// Runs one drawn configuration and all its audits.
pub fn run_draw(cfg: &SimConfig, ov: &SweepOverrides) -> DrawOutcome {
    let fail = |e: &dyn std::fmt::Display| DrawOutcome::Failed {
        error: e.to_string(),
    };
    let prep = match cfg.prepare() {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let tr = match run_closed_loop(cfg) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let lambda = ov
        .lambda
        .unwrap_or_else(|| 0.5 * (prep.target.lambda_floor() + 1.0));
    let audits = match audit_trajectory(&tr, &prep.sbar, &prep.target, ov.alpha_bar) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    match gain_bound_fit(&[&tr], lambda, &prep.target) {
        Ok(mut rep) => DrawOutcome::Completed {
            audits,
            bound: rep.runs.remove(0),
        },
        Err(e) => fail(&e),
    }
}

/// Independent randomized runs, executed on up to `threads` workers (all
/// available when `None`). Reports are ordered by draw index and do not
/// depend on the thread count.
pub fn monte_carlo_sweep(
    base: &SimConfig,
    draws: usize,
    ov: &SweepOverrides,
    seed: u64,
    threads: Option<usize>,
) -> SweepReport {
    let work = || {
        (0..draws)
            .into_par_iter()
            .map(|draw| {
                let config = draw_config(base, ov, seed, draw);
                let outcome = run_draw(&config, ov);
                DrawReport {
                    draw,
                    config,
                    outcome,
                }
            })
            .collect::<Vec<_>>()
    };
    let mut reports = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map(|pool| pool.install(work))
            .unwrap_or_else(|_| work()),
        None => work(),
    };
    reports.sort_by_key(|r| r.draw);
    SweepReport {
        seed,
        draws: reports,
    }
}
