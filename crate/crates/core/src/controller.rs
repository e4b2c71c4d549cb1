//! Pole-placement synthesis from the current estimate.
//!
//! For `θ̂ = [â̄₁..â̄_{n+1}, b̂₁..b̂_n]` the controller polynomials
//! `L = 1 + l₁z⁻¹ + … + l_n z⁻ⁿ` and `P = p₁z⁻¹ + … + p_{n+1}z^{-(n+1)}` solve
//!
//! ```text
//! Â̄(z⁻¹)·L(z⁻¹) + B̂(z⁻¹)·P(z⁻¹) = A*(z⁻¹)
//! ```
//!
//! and the control law is `ū(t) = K·ψ(t-1)` with
//! `K = [-p₁..-p_{n+1}, -l₁..-l_n]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Lu, LinalgError};
use crate::plant::{abar_poly, Regressor};
use crate::polynomial::{poly_mul_full, poly_roots, spectral_radius, sylvester_matrix, PolyError, Polynomial};
use crate::trajectory::StepRecord;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("Sylvester system is singular (|det| = {margin:e}, rcond ≈ {rcond:e}); the estimate is at or near a point where Â̄ and B̂ share a root")]
    SingularSylvester { margin: f64, rcond: f64 },
    #[error("target polynomial must be monic")]
    TargetNotMonic,
    #[error("target polynomial has degree {degree}, at most {max} allowed")]
    TargetDegree { degree: usize, max: usize },
    #[error("target polynomial has spectral radius {0} ≥ 1")]
    TargetUnstable(f64),
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("regressor is zero; Ξ is undefined")]
    ZeroRegressor,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Desired closed-loop polynomial `A*(z⁻¹)`, stored padded to degree `2n+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPolynomial {
    astar: Polynomial,
    n: usize,
}

impl TargetPolynomial {
    pub fn new(astar: Polynomial, n: usize) -> Result<Self, ControlError> {
        if n == 0 {
            return Err(ControlError::Dimension {
                what: "plant order",
                expected: 1,
                got: 0,
            });
        }
        if !astar.is_monic() {
            return Err(ControlError::TargetNotMonic);
        }
        let max = 2 * n + 1;
        let padded = astar.with_degree(max).map_err(|_| ControlError::TargetDegree {
            degree: astar.clone().trimmed().degree(),
            max,
        })?;
        let rho = spectral_radius(&padded, max)?;
        if rho.is_nan() || rho >= 1.0 {
            return Err(ControlError::TargetUnstable(rho));
        }
        Ok(TargetPolynomial { astar: padded, n })
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.astar
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// `λ̲`: largest root modulus of `z^{2n+1}A*(z⁻¹)`.
    pub fn lambda_floor(&self) -> f64 {
        spectral_radius(&self.astar, 2 * self.n + 1).expect("validated at construction")
    }

    /// Roots of `z^{2n+1}A*(z⁻¹)`.
    pub fn closed_loop_poles(&self) -> Vec<Complex64> {
        poly_roots(&self.astar).expect("monic target has roots")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSolution {
    /// Monic, degree `n`.
    pub l: Polynomial,
    /// Zero constant term, degree `n+1`.
    pub p: Polynomial,
    /// `[-p₁..-p_{n+1}, -l₁..-l_n]`
    pub gains: Vec<f64>,
    /// `‖Â̄L + B̂P - A*‖∞` from polynomial reconstruction.
    pub residual: f64,
    pub margin: f64,
    pub rcond: f64,
}

/// Polynomials `(Â̄, B̂)` built from an auxiliary-shaped estimate.
pub fn estimate_polynomials(theta_hat: &[f64], n: usize) -> (Polynomial, Polynomial) {
    let abar = abar_poly(&theta_hat[..=n]);
    let b = Polynomial::new(
        std::iter::once(0.0)
            .chain(theta_hat[n + 1..].iter().copied())
            .collect::<Vec<_>>(),
    );
    (abar, b)
}

/// Solves the Diophantine equation by LU on the Sylvester-type system with
/// unknowns ordered `[l₁..l_n, p₁..p_{n+1}]`.
pub fn solve_diophantine(
    theta_hat: &[f64],
    astar: &TargetPolynomial,
) -> Result<ControllerSolution, ControlError> {
    let n = astar.order();
    if theta_hat.len() != 2 * n + 1 {
        return Err(ControlError::Dimension {
            what: "estimate",
            expected: 2 * n + 1,
            got: theta_hat.len(),
        });
    }
    let (abar, b) = estimate_polynomials(theta_hat, n);
    let m = sylvester_matrix(&abar, &b, n)?;
    let lu = Lu::factor(&m).expect("Sylvester matrix is square");
    let margin = lu.det().abs();
    let rcond = lu.rcond_estimate();
    let rhs: Vec<f64> = (1..=2 * n + 1)
        .map(|k| astar.polynomial().coeff(k) - abar.coeff(k))
        .collect();
    let x = lu.solve(&rhs).map_err(|e| match e {
        LinalgError::Singular { .. } => ControlError::SingularSylvester { margin, rcond },
        other => unreachable!("dimensions are consistent: {other}"),
    })?;

    let l = Polynomial::new(std::iter::once(1.0).chain(x[..n].iter().copied()).collect::<Vec<_>>());
    let p = Polynomial::new(std::iter::once(0.0).chain(x[n..].iter().copied()).collect::<Vec<_>>());
    let gains: Vec<f64> = x[n..].iter().chain(&x[..n]).map(|v| -v).collect();
    let residual = diophantine_residual(&abar, &b, &l, &p, astar.polynomial());
    Ok(ControllerSolution {
        l,
        p,
        gains,
        residual,
        margin,
        rcond,
    })
}

/// `‖Ā·L + B·P - A*‖∞` via polynomial multiplication.
pub fn diophantine_residual(
    abar: &Polynomial,
    b: &Polynomial,
    l: &Polynomial,
    p: &Polynomial,
    astar: &Polynomial,
) -> f64 {
    poly_mul_full(abar, l)
        .add(&poly_mul_full(b, p))
        .sub(astar)
        .max_abs_coeff()
}

/// `ū(t) = K·ψ(t-1)` and `u(t) = u(t-1) + ū(t)`.
pub fn control_step(sol: &ControllerSolution, psi_prev: &Regressor, u_prev: f64) -> (f64, f64) {
    let ubar = dot(&sol.gains, psi_prev.as_slice());
    (ubar, u_prev + ubar)
}

/// Frozen-time closed-loop matrix: row 1 is `θ̂ᵀ`, rows `2..n+1` shift the
/// tracking errors, row `n+2` is `K`, rows `n+3..2n+1` shift the input increments.
pub fn closed_loop_matrix(theta_hat: &[f64], gains: &[f64]) -> Result<DMatrix<f64>, ControlError> {
    let d = theta_hat.len();
    if d < 3 || d.is_multiple_of(2) {
        return Err(ControlError::Dimension {
            what: "estimate (2n+1 entries)",
            expected: d.max(3) | 1,
            got: d,
        });
    }
    if gains.len() != d {
        return Err(ControlError::Dimension {
            what: "gains",
            expected: d,
            got: gains.len(),
        });
    }
    let n = (d - 1) / 2;
    let mut a = DMatrix::zeros(d, d);
    for j in 0..d {
        a[(0, j)] = theta_hat[j];
        a[(n + 1, j)] = gains[j];
    }
    for i in 1..=n {
        a[(i, i - 1)] = 1.0;
    }
    for i in n + 2..d {
        a[(i, i - 1)] = 1.0;
    }
    Ok(a)
}

/// `Ξ = e₁ · e(t+1)/‖ψ‖² · ψᵀ`, so that `Ξψ = e₁e(t+1)`.
pub fn xi_matrix(psi: &Regressor, e_next: f64) -> Result<DMatrix<f64>, ControlError> {
    let nsq = psi.norm_sq();
    if nsq == 0.0 {
        return Err(ControlError::ZeroRegressor);
    }
    let d = psi.len();
    let mut xi = DMatrix::zeros(d, d);
    for j in 0..d {
        xi[(0, j)] = e_next / nsq * psi.as_slice()[j];
    }
    Ok(xi)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecursionAudit {
    pub max_residual: f64,
    pub max_psi_norm: f64,
    /// Index of the record where the largest residual occurred.
    pub worst_step: usize,
    pub steps_checked: usize,
    pub tolerance: f64,
}

impl RecursionAudit {
    pub fn passed(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

/// Relative tolerance of the state-recursion identity.
pub const RECURSION_TOL: f64 = 1e-9;

/// Max over consecutive records of `‖ψ(t+1) - 𝒜_θ̂(t)ψ(t) - e₁e(t+1)‖∞`.
pub fn state_recursion_audit(records: &[StepRecord]) -> Result<RecursionAudit, ControlError> {
    let mut audit = RecursionAudit::default();
    for r in records {
        audit.max_psi_norm = audit.max_psi_norm.max(crate::linalg::norm(&r.psi));
    }
    for (k, pair) in records.windows(2).enumerate() {
        let (cur, next) = (&pair[0], &pair[1]);
        let a = closed_loop_matrix(&cur.theta_hat, &cur.gains)?;
        let psi = nalgebra::DVector::from_column_slice(&cur.psi);
        let mut pred = a * psi;
        pred[0] += cur.e;
        let res = pred
            .iter()
            .zip(&next.psi)
            .fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
        audit.steps_checked += 1;
        if res > audit.max_residual || !res.is_finite() {
            audit.max_residual = if res.is_finite() { res } else { f64::INFINITY };
            audit.worst_step = k;
        }
    }
    audit.tolerance = RECURSION_TOL * (1.0 + audit.max_psi_norm);
    Ok(audit)
}

/// Characteristic polynomial `det(zI - M)` by Faddeev–LeVerrier, highest power
/// first: `[1, c₁, …, c_d]`.
pub fn characteristic_polynomial(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut coeffs = vec![1.0];
    let mut mk = DMatrix::<f64>::identity(d, d);
    let mut c = 1.0;
    for k in 1..=d {
        let am = m * &mk;
        c = -am.trace() / k as f64;
        coeffs.push(c);
        mk = am + DMatrix::identity(d, d) * c;
    }
    let _ = c;
    coeffs
}

/// Frozen-time pole check of one `(θ̂, K)` pair against the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleAudit {
    /// `‖det(zI - 𝒜) - z^{2n+1}A*(z⁻¹)‖∞` over coefficients.
    pub charpoly_deviation: f64,
    /// Largest distance between a target root and the centroid of the computed
    /// eigenvalues assigned to it; `∞` when cluster sizes differ from the
    /// target multiplicities.
    pub cluster_deviation: f64,
    /// Largest pointwise distance in the best matching of computed
    /// eigenvalues to target roots.
    pub pointwise_deviation: f64,
}

/// Matches eigenvalues of `𝒜_θ̂` (computed by a Schur-based eigensolver) to
/// the roots of `z^{2n+1}A*(z⁻¹)`.
pub fn pole_audit(theta_hat: &[f64], gains: &[f64], astar: &TargetPolynomial) -> Result<PoleAudit, ControlError> {
    let a = closed_loop_matrix(theta_hat, gains)?;
    let cp = characteristic_polynomial(&a);
    let charpoly_deviation = cp
        .iter()
        .zip(astar.polynomial().coeffs())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));

    let eig: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    let target = astar.closed_loop_poles();
    let (pointwise_deviation, assignment) = best_matching(&eig, &target);

    // group target roots into clusters of (numerically) equal values
    let mut cluster_deviation = 0.0_f64;
    let mut seen = vec![false; target.len()];
    for i in 0..target.len() {
        if seen[i] {
            continue;
        }
        let members: Vec<usize> = (0..target.len())
            .filter(|&j| (target[j] - target[i]).norm() <= 1e-9)
            .collect();
        for &j in &members {
            seen[j] = true;
        }
        // eigenvalues closest (by nearest-target rule) to this cluster
        let assigned: Vec<Complex64> = eig
            .iter()
            .filter(|z| {
                let nearest = target
                    .iter()
                    .enumerate()
                    .min_by(|x, y| (*z - x.1).norm().partial_cmp(&(*z - y.1).norm()).unwrap())
                    .map(|(k, _)| k)
                    .unwrap();
                members.contains(&nearest)
            })
            .copied()
            .collect();
        if assigned.len() != members.len() {
            cluster_deviation = f64::INFINITY;
            continue;
        }
        let centroid = assigned.iter().sum::<Complex64>() / assigned.len() as f64;
        cluster_deviation = cluster_deviation.max((centroid - target[i]).norm());
    }
    let _ = assignment;
    Ok(PoleAudit {
        charpoly_deviation,
        cluster_deviation,
        pointwise_deviation,
    })
}

/// Bottleneck matching by brute force over permutations (dimension ≤ 9) or
/// greedy beyond that. Returns the largest matched distance.
fn best_matching(a: &[Complex64], b: &[Complex64]) -> (f64, Vec<usize>) {
    let d = a.len().min(b.len());
    if d <= 8 {
        let mut perm: Vec<usize> = (0..b.len()).collect();
        let mut best = (f64::INFINITY, perm.clone());
        permute(&mut perm, 0, &mut |p| {
            let cost = (0..d).fold(0.0_f64, |m, i| m.max((a[i] - b[p[i]]).norm()));
            if cost < best.0 {
                best = (cost, p.to_vec());
            }
        });
        best
    } else {
        let mut used = vec![false; b.len()];
        let mut assign = Vec::with_capacity(d);
        let mut worst = 0.0_f64;
        for z in a.iter().take(d) {
            let (k, dist) = b
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, w)| (k, (z - w).norm()))
                .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            used[k] = true;
            assign.push(k);
            worst = worst.max(dist);
        }
        (worst, assign)
    }
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{image_box, BoxSet};
    use crate::polynomial::poly_mul;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn benchmark_target() -> TargetPolynomial {
        TargetPolynomial::new(Polynomial::new([1.0, -0.6]), 2).unwrap()
    }

    const THETA0: [f64; 5] = [0.0, -1.0, 2.0, -0.5, -4.0];

    #[test]
    fn target_validation() {
        assert!(matches!(
            TargetPolynomial::new(Polynomial::new([1.0, -1.5]), 1),
            Err(ControlError::TargetUnstable(_))
        ));
        assert!(matches!(
            TargetPolynomial::new(Polynomial::new([2.0, -0.5]), 1),
            Err(ControlError::TargetNotMonic)
        ));
        assert!(matches!(
            TargetPolynomial::new(Polynomial::new([1.0, 0.0, 0.0, 0.0, 0.1]), 1),
            Err(ControlError::TargetDegree { .. })
        ));
        let t = benchmark_target();
        assert_eq!(t.polynomial().degree(), 5);
        assert!((t.lambda_floor() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn trivial_diophantine_reads_off_coefficients() {
        // θ̂ = 0 gives Â̄ = 1; with b̂₁ = 1, B̂ = z⁻¹
        let (a1, a2, a3) = (0.3, -0.2, 0.05);
        let astar = TargetPolynomial::new(Polynomial::new([1.0, a1, a2, a3]), 1).unwrap();
        let sol = solve_diophantine(&[0.0, 0.0, 1.0], &astar).unwrap();
        assert_eq!(sol.l.coeffs(), &[1.0, a1]);
        assert_eq!(sol.p.coeffs(), &[0.0, a2, a3]);
        assert_eq!(sol.gains, vec![-a2, -a3, -a1]);
        assert_eq!(sol.residual, 0.0);
    }

    #[test]
    fn planted_common_root_is_singular() {
        // Ā = (1 - 0.5z⁻¹)(1 + 0.2z⁻¹)(1 - z⁻¹) and B = z⁻¹(1 - 0.5z⁻¹)
        let abar = poly_mul(
            &poly_mul(&Polynomial::new([1.0, -0.5]), &Polynomial::new([1.0, 0.2])),
            &Polynomial::new([1.0, -1.0]),
        );
        let theta: Vec<f64> = abar.coeffs()[1..]
            .iter()
            .map(|c| -c)
            .chain([1.0, -0.5])
            .collect();
        let err = solve_diophantine(&theta, &benchmark_target()).unwrap_err();
        assert!(matches!(err, ControlError::SingularSylvester { .. }), "{err:?}");
    }

    #[test]
    fn benchmark_initial_solution_reconstructs_target() {
        let sol = solve_diophantine(&THETA0, &benchmark_target()).unwrap();
        // independent reconstruction with plain polynomial products
        let abar = Polynomial::new([1.0, 0.0, 1.0, -2.0]);
        let b = Polynomial::new([0.0, -0.5, -4.0]);
        let lhs = poly_mul(&abar, &sol.l).add(&poly_mul(&b, &sol.p));
        let dev = lhs.sub(benchmark_target().polynomial()).max_abs_coeff();
        assert!(dev < 1e-10, "deviation {dev}");
        assert!(sol.residual < 1e-10);
        assert_eq!(sol.l.degree(), 2);
        assert_eq!(sol.p.degree(), 3);
        assert_eq!(sol.p.coeff(0), 0.0);

        // M·x reproduces the right-hand side coefficients
        let m = sylvester_matrix(&abar, &b, 2).unwrap();
        let x: Vec<f64> = sol.l.coeffs()[1..].iter().chain(&sol.p.coeffs()[1..]).copied().collect();
        let mx = &m * nalgebra::DVector::from_vec(x);
        let rhs = [-0.6, -1.0, 2.0, 0.0, 0.0];
        for (a, b) in mx.iter().zip(rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn control_step_examples() {
        let sol = solve_diophantine(&THETA0, &benchmark_target()).unwrap();
        assert_eq!(control_step(&sol, &Regressor::zeros(2), 1.5), (0.0, 1.5));
        let (ubar, u) = control_step(&sol, &Regressor::unit(2, 0), 0.0);
        assert_eq!((ubar, u), (sol.gains[0], sol.gains[0]));
        let psi0 = Regressor::new(vec![-3.0, -3.0, -3.0, 0.0, 0.0]);
        let (ubar, _) = control_step(&sol, &psi0, 0.0);
        let want = -3.0 * (sol.gains[0] + sol.gains[1] + sol.gains[2]);
        assert!((ubar - want).abs() < 1e-14);
    }

    #[test]
    fn closed_loop_matrix_structure() {
        let a = closed_loop_matrix(&[0.0; 3], &[0.0; 3]).unwrap();
        let cp = characteristic_polynomial(&a);
        assert_eq!(cp, vec![1.0, 0.0, 0.0, 0.0]);
        // shift rows
        assert_eq!(a[(1, 0)], 1.0);
        assert_eq!(a[(2, 1)], 0.0);

        let sol = solve_diophantine(&THETA0, &benchmark_target()).unwrap();
        let a = closed_loop_matrix(&THETA0, &sol.gains).unwrap();
        assert_eq!(a.row(0).iter().copied().collect::<Vec<_>>(), THETA0.to_vec());
        assert_eq!(a.row(3).iter().copied().collect::<Vec<_>>(), sol.gains);
        assert_eq!(a[(1, 0)], 1.0);
        assert_eq!(a[(2, 1)], 1.0);
        assert_eq!(a[(4, 3)], 1.0);
        assert!(closed_loop_matrix(&[0.0; 4], &[0.0; 4]).is_err());
    }

    #[test]
    fn benchmark_closed_loop_poles() {
        let astar = benchmark_target();
        let sol = solve_diophantine(&THETA0, &astar).unwrap();
        let audit = pole_audit(&THETA0, &sol.gains, &astar).unwrap();
        assert!(audit.charpoly_deviation < 1e-8, "{audit:?}");
        assert!(audit.cluster_deviation < 1e-8, "{audit:?}");
        // the four-fold zero eigenvalue is a single Jordan block, so computed
        // eigenvalues scatter on the order of ε^{1/4}
        assert!(audit.pointwise_deviation < 1e-2);
    }

    #[test]
    fn random_estimates_place_the_poles() {
        let s = BoxSet::new(vec![-2.0, -3.0, -1.0, -5.0], vec![0.0, -1.0, 0.0, -3.0]).unwrap();
        let sbar = image_box(&s, 2).unwrap().set;
        let astar = benchmark_target();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let th = sbar.sample(&mut rng);
            let sol = solve_diophantine(&th, &astar).unwrap();
            assert!(sol.residual <= 1e-9);
            let audit = pole_audit(&th, &sol.gains, &astar).unwrap();
            assert!(audit.charpoly_deviation < 1e-7, "{audit:?}");
            assert!(audit.cluster_deviation < 1e-7, "{audit:?}");
        }
    }

    #[test]
    fn charpoly_of_companion_matrix() {
        // companion of z³ - 2z² + 0.5z - 0.1
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -0.5, 0.1, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let cp = characteristic_polynomial(&m);
        for (a, b) in cp.iter().zip([1.0, -2.0, 0.5, -0.1]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn xi_matrix_examples() {
        let xi = xi_matrix(&Regressor::unit(1, 0), 1.0).unwrap();
        let mut want = DMatrix::zeros(3, 3);
        want[(0, 0)] = 1.0;
        assert_eq!(xi, want);
        assert_eq!(xi_matrix(&Regressor::unit(1, 2), 0.0).unwrap(), DMatrix::zeros(3, 3));
        assert!(matches!(xi_matrix(&Regressor::zeros(1), 1.0), Err(ControlError::ZeroRegressor)));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        use rand::Rng;
        for _ in 0..100 {
            let psi = Regressor::new((0..5).map(|_| rng.gen_range(-4.0..4.0)).collect());
            let e = rng.gen_range(-2.0..2.0);
            let xi = xi_matrix(&psi, e).unwrap();
            let v = xi * nalgebra::DVector::from_column_slice(psi.as_slice());
            assert!((v[0] - e).abs() <= 1e-12);
            assert!(v.iter().skip(1).all(|x| *x == 0.0));
        }
    }

    #[test]
    fn gains_are_locally_lipschitz() {
        let s = BoxSet::new(vec![-2.0, -3.0, -1.0, -5.0], vec![0.0, -1.0, 0.0, -3.0]).unwrap();
        let sbar = image_box(&s, 2).unwrap().set;
        let astar = benchmark_target();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        use rand::Rng;
        let mut worst = 0.0_f64;
        for _ in 0..1000 {
            let a = sbar.sample(&mut rng);
            let b: Vec<f64> = crate::estimator::project_box(
                &a.iter().map(|x| x + rng.gen_range(-1e-4..1e-4)).collect::<Vec<_>>(),
                &sbar,
            );
            let d = crate::linalg::dist(&a, &b);
            if d == 0.0 {
                continue;
            }
            let ka = solve_diophantine(&a, &astar).unwrap().gains;
            let kb = solve_diophantine(&b, &astar).unwrap().gains;
            worst = worst.max(crate::linalg::dist(&ka, &kb) / d);
        }
        assert!(worst.is_finite() && worst < 1e3, "ratio {worst}");
    }
}
