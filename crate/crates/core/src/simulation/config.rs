use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{ControlError, TargetPolynomial};
use crate::estimator::{EstimatorError, EstimatorMode, EstimatorState};
use crate::plant::{aux_transform, image_box, BoxSet, PlantError, PlantParameters};
use crate::polynomial::Polynomial;

/// Exogenous signal generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Constant { value: f64 },
    /// `magnitude · (-1)^⌊(t - t₀)/period⌋`
    SignFlip { magnitude: f64, period: u64 },
    /// `values[t - t₀]`
    Custom { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SignalError {
    #[error("sign-flip period must be at least 1")]
    ZeroPeriod,
    #[error("custom signal has no sample at offset {offset} (length {len})")]
    OutOfRange { offset: i64, len: usize },
    #[error("signal contains a non-finite value")]
    NonFinite,
}

impl SignalSpec {
    pub fn validate(&self) -> Result<(), SignalError> {
        match self {
            SignalSpec::Constant { value } if !value.is_finite() => Err(SignalError::NonFinite),
            SignalSpec::SignFlip { period: 0, .. } => Err(SignalError::ZeroPeriod),
            SignalSpec::SignFlip { magnitude, .. } if !magnitude.is_finite() => {
                Err(SignalError::NonFinite)
            }
            SignalSpec::Custom { values } if values.iter().any(|v| !v.is_finite()) => {
                Err(SignalError::NonFinite)
            }
            _ => Ok(()),
        }
    }

    /// `true` when the signal takes a single value on `[t0, t0 + len)`.
    pub fn is_constant_on(&self, t0: i64, len: usize) -> bool {
        match self {
            SignalSpec::Constant { .. } => true,
            SignalSpec::SignFlip { magnitude, period } => {
                *magnitude == 0.0 || len as u64 <= *period
            }
            SignalSpec::Custom { .. } => {
                let first = signal_value(self, t0, t0);
                (0..len as i64).all(|k| signal_value(self, t0 + k, t0) == first)
            }
        }
    }
}

pub fn signal_value(spec: &SignalSpec, t: i64, t0: i64) -> Result<f64, SignalError> {
    let offset = t - t0;
    match spec {
        SignalSpec::Constant { value } => Ok(*value),
        SignalSpec::SignFlip { magnitude, period } => {
            if *period == 0 {
                return Err(SignalError::ZeroPeriod);
            }
            let k = offset.div_euclid(*period as i64);
            Ok(if k.rem_euclid(2) == 0 { *magnitude } else { -magnitude })
        }
        SignalSpec::Custom { values } => usize::try_from(offset)
            .ok()
            .and_then(|i| values.get(i).copied())
            .ok_or(SignalError::OutOfRange {
                offset,
                len: values.len(),
            }),
    }
}

/// What to do when the estimate makes the Diophantine system singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularPolicy {
    #[default]
    Abort,
    /// Move the estimate toward the box centre by `1e-6 · width` and retry once.
    Nudge,
}

fn default_t0() -> i64 {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub theta_true: PlantParameters,
    /// Uncertainty set `S` for `[a; b]`.
    pub uncertainty_set: BoxSet,
    /// `A*(z⁻¹)` coefficients, constant term first.
    pub astar: Vec<f64>,
    pub mu: f64,
    /// Initial estimate in the auxiliary coordinates.
    pub theta0: Vec<f64>,
    /// `[y(t₀)..y(t₀-n), u(t₀)..u(t₀-n)]`
    pub phi0: Vec<f64>,
    #[serde(default = "default_t0")]
    pub t0: i64,
    pub reference: SignalSpec,
    pub disturbance: SignalSpec,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub estimator: EstimatorMode,
    #[serde(default)]
    pub singular_policy: SingularPolicy,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("plant order n must be at least 1")]
    ZeroOrder,
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("true plant: {0}")]
    Plant(#[from] PlantError),
    #[error("true plant parameters lie outside the uncertainty set")]
    PlantOutsideSet,
    #[error("target polynomial: {0}")]
    Target(#[from] ControlError),
    #[error("estimator: {0}")]
    Estimator(#[from] EstimatorError),
    #[error("μ must be positive and finite, got {0}")]
    Mu(f64),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("initial condition contains a non-finite value")]
    NonFiniteInitial,
    #[error("{which} signal: {err}")]
    Signal { which: &'static str, err: SignalError },
}

/// A validated configuration with the derived objects a run needs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub target: TargetPolynomial,
    pub sbar: BoxSet,
    pub theta_star: Vec<f64>,
    pub estimator: EstimatorState,
}

impl SimConfig {
    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        let n = self.n;
        if n == 0 {
            return Err(ConfigError::ZeroOrder);
        }
        self.theta_true.validate()?;
        if self.theta_true.order() != n {
            return Err(ConfigError::Dimension {
                what: "true plant",
                expected: n,
                got: self.theta_true.order(),
            });
        }
        self.theta_true.check_assumptions()?;
        self.uncertainty_set.validate()?;
        if self.uncertainty_set.dim() != 2 * n {
            return Err(ConfigError::Dimension {
                what: "uncertainty set",
                expected: 2 * n,
                got: self.uncertainty_set.dim(),
            });
        }
        if !self.uncertainty_set.contains(&self.theta_true.to_vector()) {
            return Err(ConfigError::PlantOutsideSet);
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(ConfigError::Mu(self.mu));
        }
        if self.horizon == 0 {
            return Err(ConfigError::ZeroHorizon);
        }
        if self.phi0.len() != 2 * (n + 1) {
            return Err(ConfigError::Dimension {
                what: "initial condition",
                expected: 2 * (n + 1),
                got: self.phi0.len(),
            });
        }
        if self.phi0.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::NonFiniteInitial);
        }
        let target = TargetPolynomial::new(Polynomial::new(self.astar.clone()), n)?;
        let sbar = image_box(&self.uncertainty_set, n)?.set;
        let estimator = EstimatorState::new(self.theta0.clone(), self.mu, sbar.clone(), self.estimator)?;

        // the last record reads r(t₀+H) and w(t₀+H-1)
        for (which, spec, len) in [
            ("reference", &self.reference, self.horizon + 1),
            ("disturbance", &self.disturbance, self.horizon),
        ] {
            let wrap = |err| ConfigError::Signal { which, err };
            spec.validate().map_err(wrap)?;
            signal_value(spec, self.t0 + len as i64 - 1, self.t0).map_err(wrap)?;
        }

        Ok(Prepared {
            target,
            sbar,
            theta_star: aux_transform(&self.theta_true).to_vector(),
            estimator,
        })
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Second-order non-minimum-phase benchmark: sign-flipping set-point and
    /// disturbance, `μ = 1`.
    pub fn benchmark() -> SimConfig {
        SimConfig {
            n: 2,
            theta_true: PlantParameters {
                a: vec![-0.5, -1.5],
                b: vec![-0.75, -3.0],
            },
            uncertainty_set: BoxSet {
                lo: vec![-2.0, -3.0, -1.0, -5.0],
                hi: vec![0.0, -1.0, 0.0, -3.0],
            },
            astar: vec![1.0, -0.6],
            mu: 1.0,
            theta0: vec![0.0, -1.0, 2.0, -0.5, -4.0],
            phi0: vec![-1.0, -1.0, -1.0, 0.0, 0.0, 0.0],
            t0: 0,
            reference: SignalSpec::SignFlip {
                magnitude: 2.0,
                period: 200,
            },
            disturbance: SignalSpec::SignFlip {
                magnitude: 0.5,
                period: 250,
            },
            horizon: 1000,
            seed: 0,
            estimator: EstimatorMode::Classical,
            singular_policy: SingularPolicy::Abort,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_examples() {
        let r = SignalSpec::SignFlip {
            magnitude: 2.0,
            period: 200,
        };
        assert_eq!(signal_value(&r, 0, 0).unwrap(), 2.0);
        assert_eq!(signal_value(&r, 199, 0).unwrap(), 2.0);
        assert_eq!(signal_value(&r, 200, 0).unwrap(), -2.0);
        assert_eq!(signal_value(&r, 410, 10).unwrap(), 2.0);
        let w = SignalSpec::SignFlip {
            magnitude: 0.5,
            period: 250,
        };
        assert_eq!(signal_value(&w, 499, 0).unwrap(), -0.5);
        assert_eq!(signal_value(&w, 500, 0).unwrap(), 0.5);
        let c = SignalSpec::Constant { value: 1.25 };
        for t in [-100, 0, 7, 1 << 40] {
            assert_eq!(signal_value(&c, t, 3).unwrap(), 1.25);
        }
        let v = SignalSpec::Custom {
            values: vec![1.0, 2.0],
        };
        assert_eq!(signal_value(&v, 6, 5).unwrap(), 2.0);
        assert!(signal_value(&v, 7, 5).is_err());
        assert!(signal_value(&v, 4, 5).is_err());
    }

    #[test]
    fn benchmark_is_valid() {
        let cfg = SimConfig::benchmark();
        let p = cfg.prepare().unwrap();
        assert_eq!(p.theta_star, vec![0.5, -1.0, 1.5, -0.75, -3.0]);
        assert!((p.sbar.diameter() - 29f64.sqrt()).abs() < 1e-12);
        assert_eq!(cfg.hash(), cfg.clone().hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = SimConfig::benchmark();
        let mut c = base.clone();
        c.mu = 0.0;
        assert!(matches!(c.prepare(), Err(ConfigError::Mu(_))));
        let mut c = base.clone();
        c.horizon = 0;
        assert!(matches!(c.prepare(), Err(ConfigError::ZeroHorizon)));
        let mut c = base.clone();
        c.theta0[0] = 5.0;
        assert!(matches!(c.prepare(), Err(ConfigError::Estimator(_))));
        let mut c = base.clone();
        c.theta_true.a[0] = 1.0;
        assert!(matches!(c.prepare(), Err(ConfigError::PlantOutsideSet)));
        let mut c = base.clone();
        c.astar = vec![1.0, -1.2];
        assert!(matches!(c.prepare(), Err(ConfigError::Target(_))));
        let mut c = base.clone();
        c.reference = SignalSpec::Custom { values: vec![0.0; 1000] };
        assert!(matches!(c.prepare(), Err(ConfigError::Signal { .. })));
        c.reference = SignalSpec::Custom { values: vec![0.0; 1001] };
        assert!(c.prepare().is_ok());
        let mut c = base;
        c.phi0.pop();
        assert!(matches!(c.prepare(), Err(ConfigError::Dimension { .. })));
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let mut v = serde_json::to_value(SimConfig::benchmark()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<SimConfig>(v).is_err());
    }
}
