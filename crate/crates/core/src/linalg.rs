//! Small dense linear algebra: LU with partial pivoting and a few vector helpers.
//!
//! The systems solved here are tiny (2n+1 unknowns for plant order n), so the
//! factorization is written out directly rather than delegated.

use nalgebra::DMatrix;

/// Relative pivot threshold below which a matrix is treated as singular.
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("right-hand side has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is singular: pivot {pivot:e} at column {column} is below {threshold:e}")]
    Singular {
        column: usize,
        pivot: f64,
        threshold: f64,
    },
}

/// LU factorization `P·A = L·U` with row partial pivoting.
///
/// `L` (unit lower) and `U` share storage in `factors`.
#[derive(Debug, Clone)]
pub struct Lu {
    factors: DMatrix<f64>,
    perm: Vec<usize>,
    parity: f64,
    norm_inf: f64,
}

impl Lu {
    pub fn factor(a: &DMatrix<f64>) -> Result<Self, LinalgError> {
        let (rows, cols) = a.shape();
        if rows != cols {
            return Err(LinalgError::NotSquare { rows, cols });
        }
        let n = rows;
        let norm_inf = norm_inf(a);
        let mut f = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut parity = 1.0;

        for k in 0..n {
            let (mut piv, mut best) = (k, f[(k, k)].abs());
            for i in k + 1..n {
                if f[(i, k)].abs() > best {
                    best = f[(i, k)].abs();
                    piv = i;
                }
            }
            if piv != k {
                f.swap_rows(piv, k);
                perm.swap(piv, k);
                parity = -parity;
            }
            let pivot = f[(k, k)];
            if pivot == 0.0 {
                // exact zero column below the diagonal; nothing to eliminate
                continue;
            }
            for i in k + 1..n {
                let m = f[(i, k)] / pivot;
                f[(i, k)] = m;
                for j in k + 1..n {
                    f[(i, j)] -= m * f[(k, j)];
                }
            }
        }
        Ok(Lu {
            factors: f,
            perm,
            parity,
            norm_inf,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn det(&self) -> f64 {
        self.factors.diagonal().iter().product::<f64>() * self.parity
    }

    /// Absolute pivot threshold used by [`Lu::solve`].
    pub fn singular_threshold(&self) -> f64 {
        SINGULAR_PIVOT_RTOL * self.norm_inf
    }

    /// First pivot that falls at or below the singularity threshold, if any.
    pub fn deficient_pivot(&self) -> Option<(usize, f64)> {
        let thr = self.singular_threshold();
        self.factors
            .diagonal()
            .iter()
            .enumerate()
            .find(|(_, p)| p.abs() <= thr)
            .map(|(i, p)| (i, *p))
    }

    /// Cheap reciprocal condition estimate: ratio of smallest to largest |pivot|.
    pub fn rcond_estimate(&self) -> f64 {
        let d = self.factors.diagonal();
        let max = d.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
        if max == 0.0 {
            return 0.0;
        }
        d.iter().fold(f64::INFINITY, |m, p| m.min(p.abs())) / max
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.dim();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        if let Some((column, pivot)) = self.deficient_pivot() {
            return Err(LinalgError::Singular {
                column,
                pivot,
                threshold: self.singular_threshold(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.factors[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.factors[(i, j)] * x[j];
            }
            x[i] /= self.factors[(i, i)];
        }
        Ok(x)
    }
}

pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Induced 2-norm (largest singular value).
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |m, s| m.max(*s))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 4.0, -6.0, 0.0, -2.0, 7.0, 2.0]);
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&[5.0, -2.0, 9.0]).unwrap();
        for (xi, want) in x.iter().zip([1.0, 1.0, 2.0]) {
            assert!((xi - want).abs() < 1e-13);
        }
        assert!((lu.det() - (-16.0)).abs() < 1e-12);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let lu = Lu::factor(&a).unwrap();
        assert_eq!(lu.solve(&[3.0, 4.0]).unwrap(), vec![4.0, 3.0]);
        assert_eq!(lu.det(), -1.0);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let lu = Lu::factor(&a).unwrap();
        assert!(matches!(lu.solve(&[1.0, 1.0]), Err(LinalgError::Singular { .. })));
        assert_eq!(lu.det(), 0.0);
        assert_eq!(lu.rcond_estimate(), 0.0);
    }

    #[test]
    fn rejects_non_square() {
        let a = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(Lu::factor(&a), Err(LinalgError::NotSquare { .. })));
    }

    #[test]
    fn norm2_of_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -5.0]);
        assert!((norm2(&a) - 5.0).abs() < 1e-12);
    }
}
