//! The true plant, its auxiliary (differenced) form and regressor bookkeeping.
//!
//! The plant is
//!
//! ```text
//! y(t+1) = Σ a_j y(t-j+1) + Σ b_j u(t-j+1) + w(t)
//! ```
//!
//! Multiplying through by `(1 - z⁻¹)` and subtracting the constant set-point
//! gives the auxiliary model `ȳ(t+1) = ψ(t)ᵀθ* + w̄(t)` with
//! `ȳ = y - r`, `ū(t) = u(t) - u(t-1)` and `w̄(t) = w(t) - w(t-1)`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::dot;
use crate::polynomial::{coprimeness, Polynomial};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlantError {
    #[error("plant order must be at least 1")]
    ZeroOrder,
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("box bounds invalid at coordinate {index}: lo {lo} > hi {hi}")]
    InvertedBounds { index: usize, lo: f64, hi: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("insufficient history: need {needed} samples of {what}, have {have}")]
    InsufficientHistory {
        what: &'static str,
        needed: usize,
        have: usize,
    },
    #[error("plant violates the standing assumptions: {0}")]
    Assumption(String),
}

/// `θ = [a₁..a_n, b₁..b_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParameters {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl PlantParameters {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self, PlantError> {
        let p = PlantParameters { a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn from_vector(n: usize, theta: &[f64]) -> Result<Self, PlantError> {
        if theta.len() != 2 * n {
            return Err(PlantError::Dimension {
                what: "plant parameter vector",
                expected: 2 * n,
                got: theta.len(),
            });
        }
        Self::new(theta[..n].to_vec(), theta[n..].to_vec())
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.a.is_empty() {
            return Err(PlantError::ZeroOrder);
        }
        if self.b.len() != self.a.len() {
            return Err(PlantError::Dimension {
                what: "b coefficients",
                expected: self.a.len(),
                got: self.b.len(),
            });
        }
        if self.a.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(PlantError::NonFinite("plant parameters"));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.a.len()
    }

    pub fn to_vector(&self) -> Vec<f64> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    /// `A_θ(z⁻¹) = 1 - a₁z⁻¹ - … - a_n z⁻ⁿ`
    pub fn a_poly(&self) -> Polynomial {
        Polynomial::new(
            std::iter::once(1.0)
                .chain(self.a.iter().map(|a| -a))
                .collect::<Vec<_>>(),
        )
    }

    /// `B_θ(z⁻¹) = b₁z⁻¹ + … + b_n z⁻ⁿ`
    pub fn b_poly(&self) -> Polynomial {
        Polynomial::new(std::iter::once(0.0).chain(self.b.iter().copied()).collect::<Vec<_>>())
    }

    /// Checks coprimeness of `z^n A_θ` and `z^n B_θ` and `B_θ(1) ≠ 0`.
    pub fn check_assumptions(&self) -> Result<(), PlantError> {
        self.validate()?;
        let aux = aux_transform(self);
        aux.check_assumptions()
    }
}

/// `θ* = [ā₁..ā_{n+1}, b₁..b_n]`, the auxiliary-plant parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxParameters {
    pub abar: Vec<f64>,
    pub b: Vec<f64>,
}

impl AuxParameters {
    pub fn from_vector(n: usize, theta: &[f64]) -> Result<Self, PlantError> {
        if n == 0 {
            return Err(PlantError::ZeroOrder);
        }
        if theta.len() != 2 * n + 1 {
            return Err(PlantError::Dimension {
                what: "auxiliary parameter vector",
                expected: 2 * n + 1,
                got: theta.len(),
            });
        }
        Ok(AuxParameters {
            abar: theta[..=n].to_vec(),
            b: theta[n + 1..].to_vec(),
        })
    }

    pub fn order(&self) -> usize {
        self.b.len()
    }

    pub fn to_vector(&self) -> Vec<f64> {
        self.abar.iter().chain(&self.b).copied().collect()
    }

    /// `Ā(z⁻¹) = 1 - ā₁z⁻¹ - … - ā_{n+1}z^{-(n+1)}`
    pub fn abar_poly(&self) -> Polynomial {
        abar_poly(&self.abar)
    }

    pub fn b_poly(&self) -> Polynomial {
        Polynomial::new(std::iter::once(0.0).chain(self.b.iter().copied()).collect::<Vec<_>>())
    }

    pub fn check_assumptions(&self) -> Result<(), PlantError> {
        let n = self.order();
        let c = coprimeness(&self.abar_poly(), &self.b_poly(), n)
            .map_err(|e| PlantError::Assumption(e.to_string()))?;
        if c.singular {
            return Err(PlantError::Assumption(
                "Ā and B share a root (Sylvester determinant is zero)".into(),
            ));
        }
        if self.b.iter().sum::<f64>() == 0.0 {
            return Err(PlantError::Assumption("B(1) = 0".into()));
        }
        Ok(())
    }
}

pub(crate) fn abar_poly(abar: &[f64]) -> Polynomial {
    Polynomial::new(
        std::iter::once(1.0)
            .chain(abar.iter().map(|a| -a))
            .collect::<Vec<_>>(),
    )
}

/// Axis-aligned box `{x : lo ≤ x ≤ hi}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, PlantError> {
        let b = BoxSet { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn point(x: &[f64]) -> Self {
        BoxSet {
            lo: x.to_vec(),
            hi: x.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.lo.len() != self.hi.len() {
            return Err(PlantError::Dimension {
                what: "box upper bounds",
                expected: self.lo.len(),
                got: self.hi.len(),
            });
        }
        for (i, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(PlantError::NonFinite("box bounds"));
            }
            if l > h {
                return Err(PlantError::InvertedBounds {
                    index: i,
                    lo: *l,
                    hi: *h,
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Euclidean diameter, attained between opposite corners.
    pub fn diameter(&self) -> f64 {
        crate::linalg::norm(&self.widths())
    }

    /// All `2^d` corners, lower-bound-first in binary order.
    pub fn vertices(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let d = self.dim();
        (0..1usize << d).map(move |mask| {
            (0..d)
                .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                .collect()
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| if l == h { *l } else { rng.gen_range(*l..=*h) })
            .collect()
    }
}

/// The matrix `V_n` with `V_n·[1; a; b] = [ā; b]`.
///
/// Built from the coefficient formulas `ā₁ = 1 + a₁`, `ā_j = a_j - a_{j-1}`,
/// `ā_{n+1} = -a_n`, with an identity block on the `b` coordinates.
pub fn build_vn(n: usize) -> DMatrix<f64> {
    let dim = 2 * n + 1;
    let mut v = DMatrix::zeros(dim, dim);
    // ā rows: input columns are [1, a₁..a_n]
    v[(0, 0)] = 1.0;
    for j in 1..=n {
        v[(j - 1, j)] += 1.0;
        v[(j, j)] -= 1.0;
    }
    for i in n + 1..dim {
        v[(i, i)] = 1.0;
    }
    v
}

pub fn aux_transform(theta: &PlantParameters) -> AuxParameters {
    let n = theta.order();
    let mut abar = Vec::with_capacity(n + 1);
    abar.push(1.0 + theta.a[0]);
    for j in 1..n {
        abar.push(theta.a[j] - theta.a[j - 1]);
    }
    abar.push(-theta.a[n - 1]);
    AuxParameters {
        abar,
        b: theta.b.clone(),
    }
}

/// Interval bounding box of `{V_n[1; θ] : θ ∈ S}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBox {
    pub set: BoxSet,
    /// `true` only when the box coincides with the exact image. For `n ≥ 2`
    /// and a non-degenerate `S` the exact image is a thin slice of the box
    /// (the `ā` coordinates always sum to one), so projected estimates may sit
    /// outside it.
    pub exact: bool,
}

pub fn image_box(s: &BoxSet, n: usize) -> Result<ImageBox, PlantError> {
    if n == 0 {
        return Err(PlantError::ZeroOrder);
    }
    s.validate()?;
    if s.dim() != 2 * n {
        return Err(PlantError::Dimension {
            what: "uncertainty set",
            expected: 2 * n,
            got: s.dim(),
        });
    }
    let (lo, hi) = (&s.lo, &s.hi);
    let mut out_lo = Vec::with_capacity(2 * n + 1);
    let mut out_hi = Vec::with_capacity(2 * n + 1);
    out_lo.push(1.0 + lo[0]);
    out_hi.push(1.0 + hi[0]);
    for j in 1..n {
        out_lo.push(lo[j] - hi[j - 1]);
        out_hi.push(hi[j] - lo[j - 1]);
    }
    out_lo.push(-hi[n - 1]);
    out_hi.push(-lo[n - 1]);
    out_lo.extend_from_slice(&lo[n..]);
    out_hi.extend_from_slice(&hi[n..]);
    let degenerate = s.widths()[..n].iter().all(|w| *w == 0.0);
    Ok(ImageBox {
        set: BoxSet {
            lo: out_lo,
            hi: out_hi,
        },
        exact: degenerate,
    })
}

/// `ψ(t) = [ȳ(t)..ȳ(t-n), ū(t)..ū(t-n+1)]ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor(Vec<f64>);

impl Regressor {
    pub fn new(values: Vec<f64>) -> Self {
        Regressor(values)
    }

    pub fn zeros(n: usize) -> Self {
        Regressor(vec![0.0; 2 * n + 1])
    }

    /// Unit vector `e_i` (0-based) of length `2n+1`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; 2 * n + 1];
        v[i] = 1.0;
        Regressor(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        crate::linalg::norm_sq(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

/// Builds `ψ(t)` from newest-first histories: `y[j] = y(t-j)`, `u[j] = u(t-j)`
/// and `r[j]` the set-point that was active at time `t-j`.
pub fn make_regressor(n: usize, y: &[f64], u: &[f64], r: &[f64]) -> Result<Regressor, PlantError> {
    let need = |what, have: usize| {
        if have < n + 1 {
            Err(PlantError::InsufficientHistory {
                what,
                needed: n + 1,
                have,
            })
        } else {
            Ok(())
        }
    };
    need("outputs", y.len())?;
    need("inputs", u.len())?;
    need("set-points", r.len())?;
    let mut psi = Vec::with_capacity(2 * n + 1);
    psi.extend((0..=n).map(|j| y[j] - r[j]));
    psi.extend((0..n).map(|j| u[j] - u[j + 1]));
    Ok(Regressor(psi))
}

/// `ψ(t)ᵀθ*`.
pub fn aux_predict(psi: &Regressor, theta_star: &AuxParameters) -> f64 {
    dot(psi.as_slice(), &theta_star.to_vector())
}

/// Closed-loop bookkeeping: the last `n+1` outputs, inputs and set-points.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    n: usize,
    t: i64,
    y: VecDeque<f64>,
    u: VecDeque<f64>,
    r: VecDeque<f64>,
    w_prev: f64,
}

impl SystemState {
    /// State at `t₀` from `φ₀ = [y(t₀)..y(t₀-n), u(t₀)..u(t₀-n)]`, with the
    /// set-point `r` taken as active over the whole initial window and
    /// `w(t₀-1) = 0`.
    pub fn from_phi0(n: usize, t0: i64, phi0: &[f64], r: f64) -> Result<Self, PlantError> {
        if n == 0 {
            return Err(PlantError::ZeroOrder);
        }
        if phi0.len() != 2 * (n + 1) {
            return Err(PlantError::Dimension {
                what: "initial condition",
                expected: 2 * (n + 1),
                got: phi0.len(),
            });
        }
        Ok(SystemState {
            n,
            t: t0,
            y: phi0[..=n].iter().copied().collect(),
            u: phi0[n + 1..].iter().copied().collect(),
            r: std::iter::repeat_n(r, n + 1).collect(),
            w_prev: 0.0,
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn time(&self) -> i64 {
        self.t
    }

    pub fn y(&self) -> f64 {
        self.y[0]
    }

    pub fn u(&self) -> f64 {
        self.u[0]
    }

    pub fn r(&self) -> f64 {
        self.r[0]
    }

    pub fn w_prev(&self) -> f64 {
        self.w_prev
    }

    pub fn ybar(&self) -> f64 {
        self.y[0] - self.r[0]
    }

    pub fn ubar(&self) -> f64 {
        self.u[0] - self.u[1]
    }

    /// `φ(t) = [y(t)..y(t-n), u(t)..u(t-n)]ᵀ`.
    pub fn phi(&self) -> Vec<f64> {
        self.y.iter().chain(&self.u).copied().collect()
    }

    pub fn regressor(&self) -> Regressor {
        let y: Vec<f64> = self.y.iter().copied().collect();
        let u: Vec<f64> = self.u.iter().copied().collect();
        let r: Vec<f64> = self.r.iter().copied().collect();
        make_regressor(self.n, &y, &u, &r).expect("histories have fixed length n+1")
    }

    /// Shifts the window to `t+1`. `w_t` is the disturbance that acted at `t`.
    pub fn advance(&mut self, y_next: f64, u_next: f64, r_next: f64, w_t: f64) {
        self.y.pop_back();
        self.y.push_front(y_next);
        self.u.pop_back();
        self.u.push_front(u_next);
        self.r.pop_back();
        self.r.push_front(r_next);
        self.w_prev = w_t;
        self.t += 1;
    }
}

/// `y(t+1)` from the plant recursion, using `u(t)` held in the state.
pub fn plant_step(theta: &PlantParameters, state: &SystemState, w_t: f64) -> f64 {
    let n = theta.order();
    debug_assert_eq!(n, state.n);
    let mut y_next = w_t;
    for j in 0..n {
        y_next += theta.a[j] * state.y[j] + theta.b[j] * state.u[j];
    }
    y_next
}
