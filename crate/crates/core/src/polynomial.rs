//! Polynomials in the backward-shift indeterminate `z⁻¹`.
//!
//! `coeffs[k]` is the coefficient of `z^{-k}`. A polynomial of declared degree
//! `d` is identified with the ordinary polynomial `z^d · p(z⁻¹)` in `z` when
//! roots are requested; trailing zero coefficients therefore contribute roots at
//! the origin and leading zeros lower the degree in `z`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::Lu;

/// Durand–Kerner iteration cap.
pub const ROOT_MAX_ITER: usize = 1000;
/// Convergence tolerance on root updates (relative to `max(1, |z|)`).
pub const ROOT_UPDATE_TOL: f64 = 1e-12;
/// Backward-error tolerance accepted on the residual when updates stall.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("root finder did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("zero polynomial has no well-defined roots")]
    ZeroPolynomial,
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Builds a polynomial with exactly the given coefficients (no trimming).
    /// An empty slice yields the zero polynomial.
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Self {
        let mut coeffs = coeffs.into();
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: vec![0.0] }
    }

    pub fn one() -> Self {
        Polynomial { coeffs: vec![1.0] }
    }

    /// The pure delay `z^{-k}`.
    pub fn delay(k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficient of `z^{-k}`; zero beyond the stored degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn is_monic(&self) -> bool {
        self.coeffs[0] == 1.0
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// Drops trailing zero coefficients (keeps at least one entry).
    pub fn trimmed(mut self) -> Self {
        while self.coeffs.len() > 1 && *self.coeffs.last().unwrap() == 0.0 {
            self.coeffs.pop();
        }
        self
    }

    /// Pads with zeros to the requested degree. Fails if nonzero coefficients
    /// would have to be dropped.
    pub fn with_degree(&self, degree: usize) -> Result<Self, PolyError> {
        let mut coeffs = self.coeffs.clone();
        if degree + 1 < coeffs.len() {
            if coeffs[degree + 1..].iter().any(|c| *c != 0.0) {
                return Err(PolyError::Shape(format!(
                    "polynomial of degree {} does not fit in degree {degree}",
                    self.degree()
                )));
            }
            coeffs.truncate(degree + 1);
        }
        coeffs.resize(degree + 1, 0.0);
        Ok(Polynomial { coeffs })
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Value at `z⁻¹ = 1`, i.e. the sum of coefficients.
    pub fn at_one(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        let len = self.coeffs.len().max(other.coeffs.len());
        Polynomial::new(
            (0..len)
                .map(|k| self.coeff(k) - other.coeff(k))
                .collect::<Vec<_>>(),
        )
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let len = self.coeffs.len().max(other.coeffs.len());
        Polynomial::new(
            (0..len)
                .map(|k| self.coeff(k) + other.coeff(k))
                .collect::<Vec<_>>(),
        )
    }

    /// Evaluates `z^d · p(z⁻¹)` at `z` (Horner in `z`).
    pub fn eval_lifted(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }
}

/// Product of two polynomials, trailing zeros trimmed.
pub fn poly_mul(a: &Polynomial, b: &Polynomial) -> Polynomial {
    poly_mul_full(a, b).trimmed()
}

/// Product keeping the full `deg(a)+deg(b)` shape.
pub fn poly_mul_full(a: &Polynomial, b: &Polynomial) -> Polynomial {
    let mut out = vec![0.0; a.coeffs.len() + b.coeffs.len() - 1];
    for (i, x) in a.coeffs.iter().enumerate() {
        for (j, y) in b.coeffs.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    Polynomial { coeffs: out }
}

/// All roots of `z^d · p(z⁻¹)`, with multiplicity.
///
/// Exact roots at the origin (trailing zero coefficients) are split off before
/// iterating; the remaining factor is solved with Durand–Kerner. Leading zero
/// coefficients reduce the degree in `z`, so fewer than `d` roots come back.
pub fn poly_roots(p: &Polynomial) -> Result<Vec<Complex64>, PolyError> {
    if p.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    let c = p.coeffs();
    let first = c.iter().position(|x| *x != 0.0).unwrap();
    let last = c.iter().rposition(|x| *x != 0.0).unwrap();
    let zeros_at_origin = c.len() - 1 - last;

    let mut roots = vec![Complex64::new(0.0, 0.0); zeros_at_origin];
    let core = &c[first..=last];
    if core.len() > 1 {
        roots.extend(durand_kerner(core)?);
    }
    Ok(roots)
}

/// Durand–Kerner on `c[0] z^m + … + c[m]` with `c[0] ≠ 0` and `c[m] ≠ 0`.
fn durand_kerner(c: &[f64]) -> Result<Vec<Complex64>, PolyError> {
    let m = c.len() - 1;
    let monic: Vec<f64> = c.iter().map(|x| x / c[0]).collect();
    if m == 1 {
        return Ok(vec![Complex64::new(-monic[1], 0.0)]);
    }
    let eval = |z: Complex64| {
        monic
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, a| acc * z + a)
    };
    let radius = 1.0 + monic[1..].iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    // offset angle keeps the start off the real axis and away from symmetry
    let mut z: Vec<Complex64> = (0..m)
        .map(|k| {
            Complex64::from_polar(
                radius,
                2.0 * std::f64::consts::PI * k as f64 / m as f64 + 0.4,
            )
        })
        .collect();

    let mut converged = false;
    for _ in 0..ROOT_MAX_ITER {
        let mut max_step = 0.0_f64;
        for i in 0..m {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..m {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                denom = Complex64::new(f64::EPSILON, 0.0);
            }
            let step = eval(z[i]) / denom;
            z[i] -= step;
            max_step = max_step.max(step.norm() / z[i].norm().max(1.0));
        }
        if !max_step.is_finite() {
            break;
        }
        if max_step <= ROOT_UPDATE_TOL {
            converged = true;
            break;
        }
    }

    let residual = root_residual(&monic, &z);
    // Clustered roots stall the update criterion well above machine precision;
    // accept them when the backward error is still small.
    if converged || residual <= ROOT_RESIDUAL_TOL {
        Ok(clean_conjugates(z))
    } else {
        Err(PolyError::NoConvergence {
            iterations: ROOT_MAX_ITER,
            residual,
        })
    }
}

/// Largest residual `|p(z)| / Σ|a_k||z|^{m-k}` over the roots (relative backward error).
fn root_residual(monic: &[f64], z: &[Complex64]) -> f64 {
    z.iter()
        .map(|zi| {
            let r = zi.norm();
            let val = monic
                .iter()
                .fold(Complex64::new(0.0, 0.0), |acc, a| acc * zi + a);
            let scale = monic.iter().fold(0.0, |acc, a| acc * r + a.abs());
            if scale == 0.0 {
                val.norm()
            } else {
                val.norm() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Snaps numerically real roots onto the real axis.
fn clean_conjugates(z: Vec<Complex64>) -> Vec<Complex64> {
    z.into_iter()
        .map(|r| {
            if r.im.abs() <= 1e-14 * r.norm().max(1.0) {
                Complex64::new(r.re, 0.0)
            } else {
                r
            }
        })
        .collect()
}

/// Largest root modulus of `z^lift · p(z⁻¹)`. Zero when every root is at the origin.
pub fn spectral_radius(p: &Polynomial, lift_degree: usize) -> Result<f64, PolyError> {
    if lift_degree < p.degree() && p.with_degree(lift_degree).is_err() {
        return Err(PolyError::Shape(format!(
            "lift degree {lift_degree} is below polynomial degree {}",
            p.degree()
        )));
    }
    Ok(poly_roots(p)?.iter().fold(0.0, |m, r| m.max(r.norm())))
}

/// Sylvester-type matrix of the Diophantine equation `Ā·L + B·P = A*`.
///
/// Unknowns are ordered `[l₁..l_n, p₁..p_{n+1}]`; row `k-1` collects the
/// coefficient of `z^{-k}` for `k = 1..2n+1`. Column `j` (an `l` unknown) holds
/// `Ā` shifted by `j` places, column `n+j` (a `p` unknown) holds `B` shifted by `j`.
pub fn sylvester_matrix(
    abar: &Polynomial,
    bhat: &Polynomial,
    n: usize,
) -> Result<DMatrix<f64>, PolyError> {
    if n == 0 {
        return Err(PolyError::Shape("plant order must be at least 1".into()));
    }
    let abar = abar.with_degree(n + 1)?;
    let bhat = bhat.with_degree(n)?;
    if !abar.is_monic() {
        return Err(PolyError::Shape("Ā must be monic".into()));
    }
    if bhat.coeff(0) != 0.0 {
        return Err(PolyError::Shape("B must have a zero constant term".into()));
    }
    let dim = 2 * n + 1;
    let mut m = DMatrix::zeros(dim, dim);
    for k in 1..=dim {
        for j in 1..=n {
            if k >= j {
                m[(k - 1, j - 1)] = abar.coeff(k - j);
            }
        }
        for j in 1..=n + 1 {
            if k >= j {
                m[(k - 1, n + j - 1)] = bhat.coeff(k - j);
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coprimeness {
    /// `|det|` of the Sylvester-type matrix.
    pub margin: f64,
    /// Reciprocal condition estimate from the LU pivots.
    pub rcond: f64,
    /// A pivot fell below the relative singularity threshold.
    pub singular: bool,
}

pub fn coprimeness(abar: &Polynomial, bhat: &Polynomial, n: usize) -> Result<Coprimeness, PolyError> {
    let m = sylvester_matrix(abar, bhat, n)?;
    let lu = Lu::factor(&m).map_err(|e| PolyError::Shape(e.to_string()))?;
    Ok(Coprimeness {
        margin: lu.det().abs(),
        rcond: lu.rcond_estimate(),
        singular: lu.deficient_pivot().is_some(),
    })
}

/// `|det|` of the Sylvester-type matrix; zero iff `z^{n+1}Ā(z⁻¹)` and `z^n B(z⁻¹)`
/// share a root. Returns 0 for inputs that do not have the required shape.
pub fn coprimeness_margin(abar: &Polynomial, bhat: &Polynomial, n: usize) -> f64 {
    coprimeness(abar, bhat, n).map(|c| c.margin).unwrap_or(0.0)
}
