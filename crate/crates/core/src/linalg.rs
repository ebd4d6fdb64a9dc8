//! Small dense linear algebra: just enough for Gram matrix factorizations
//! and the occasional square solve.
//!
//! Everything here is written for matrices of at most a few thousand rows,
//! which is what a per-step Gram matrix reaches over an experiment. The
//! Cholesky factor supports appending one row at a time so that growing a
//! regression by one observation costs O(n^2) instead of O(n^3).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite even with diagonal jitter {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// First jitter magnitude tried when a factorization hits a non-positive pivot.
pub const JITTER_START: f64 = 1e-12;
/// Largest jitter allowed before giving up on a factorization.
pub const JITTER_MAX: f64 = 1e-6;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix,
/// stored row by row so that appending a trailing row is cheap.
#[derive(Debug, Clone, Default)]
pub struct Cholesky {
    rows: Vec<Vec<f64>>,
}

impl Cholesky {
    pub fn empty() -> Self {
        Cholesky { rows: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Factors `A + shift * I` where `A` is given as full symmetric rows.
    /// Fails on the first non-positive pivot; callers wanting jitter
    /// escalation should go through [`factor_spd`].
    pub fn factor(a: &[Vec<f64>], shift: f64) -> Result<Self, LinalgError> {
        let n = a.len();
        let mut chol = Cholesky::empty();
        for i in 0..n {
            if a[i].len() != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    got: a[i].len(),
                });
            }
            chol.append_row(&a[i][..i], a[i][i] + shift).map_err(|_| {
                LinalgError::NotPositiveDefinite { max_jitter: shift }
            })?;
        }
        Ok(chol)
    }

    /// Extends the factor of an n x n matrix to the (n+1) x (n+1) matrix
    /// obtained by bordering it with cross terms `cross` and diagonal `diag`.
    /// Fails (leaving the factor untouched) when the Schur complement of the
    /// new diagonal is not safely positive.
    pub fn append_row(&mut self, cross: &[f64], diag: f64) -> Result<(), LinalgError> {
        let n = self.dim();
        debug_assert_eq!(cross.len(), n);
        let mut row = cross.to_vec();
        self.solve_lower(&mut row);
        let pivot = diag - dot(&row, &row);
        let floor = 1e-12 * diag.abs().max(1.0);
        if !(pivot > floor) {
            return Err(LinalgError::NotPositiveDefinite { max_jitter: 0.0 });
        }
        row.push(pivot.sqrt());
        self.rows.push(row);
        Ok(())
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        for i in 0..b.len() {
            let row = &self.rows[i];
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `L Y = B` in place for `ncols` right-hand sides stored
    /// row-major (`b[i * ncols + j]` is row i of column j). Processing all
    /// columns in one sweep reuses each factor row while it is hot, which
    /// matters when the factor no longer fits in cache.
    pub fn solve_lower_multi(&self, b: &mut [f64], ncols: usize) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n * ncols);
        for i in 0..n {
            let row = &self.rows[i];
            let (head, tail) = b.split_at_mut(i * ncols);
            let acc = &mut tail[..ncols];
            for (k, &lik) in row[..i].iter().enumerate() {
                let src = &head[k * ncols..(k + 1) * ncols];
                for (a, &s) in acc.iter_mut().zip(src) {
                    *a -= lik * s;
                }
            }
            let inv = 1.0 / row[i];
            for a in acc.iter_mut() {
                *a *= inv;
            }
        }
    }

    /// Solves `L^T x = b` in place.
    pub fn solve_upper(&self, b: &mut [f64]) {
        for i in (0..b.len()).rev() {
            let mut s = b[i];
            for j in i + 1..b.len() {
                s -= self.rows[j][i] * b[j];
            }
            b[i] = s / self.rows[i][i];
        }
    }

    /// Solves `(L L^T) x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.solve_lower(b);
        self.solve_upper(b);
    }

    /// log det of the factored matrix `L L^T`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.rows.iter().enumerate().map(|(i, r)| r[i].ln()).sum::<f64>()
    }

    pub fn diag(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().enumerate().map(|(i, r)| r[i])
    }
}

/// Factors `A + shift * I`, escalating a diagonal jitter by factors of ten
/// from [`JITTER_START`] up to [`JITTER_MAX`] if the plain factorization
/// fails. Returns the factor together with the jitter that was needed.
pub fn factor_spd(a: &[Vec<f64>], shift: f64) -> Result<(Cholesky, f64), LinalgError> {
    match Cholesky::factor(a, shift) {
        Ok(c) => return Ok((c, 0.0)),
        Err(LinalgError::DimensionMismatch { expected, got }) => {
            return Err(LinalgError::DimensionMismatch { expected, got })
        }
        Err(_) => {}
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        if let Ok(c) = Cholesky::factor(a, shift + jitter) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(LinalgError::NotPositiveDefinite { max_jitter: JITTER_MAX })
}

/// Solves a general square system by Gaussian elimination with partial
/// pivoting. Returns `None` when the matrix is numerically singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = a.len();
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot_row][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * b[k];
        }
        b[col] = s / a[col][col];
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn random_spd(n: usize, rng: &mut StdRng) -> Vec<Vec<f64>> {
        let m: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| dot(&m[i], &m[j]) + if i == j { 0.5 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn factor_matches_reconstruction() {
        let mut rng = StdRng::seed_from_u64(7);
        for n in [1, 2, 5, 17] {
            let a = random_spd(n, &mut rng);
            let (chol, jitter) = factor_spd(&a, 0.0).unwrap();
            assert_eq!(jitter, 0.0);
            for i in 0..n {
                for j in 0..=i {
                    let lij: f64 = (0..=j)
                        .map(|k| chol.rows[i][k] * chol.rows[j][k])
                        .sum();
                    assert_relative_eq!(lij, a[i][j], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn incremental_append_equals_full_factorization() {
        let mut rng = StdRng::seed_from_u64(11);
        let n = 60;
        let a = random_spd(n, &mut rng);
        let mut inc = Cholesky::empty();
        for i in 0..n {
            inc.append_row(&a[i][..i], a[i][i]).unwrap();
        }
        let full = Cholesky::factor(&a, 0.0).unwrap();
        for i in 0..n {
            for j in 0..=i {
                assert_relative_eq!(inc.rows[i][j], full.rows[i][j], epsilon = 1e-9);
            }
        }
        assert_relative_eq!(inc.log_det(), full.log_det(), epsilon = 1e-9);
    }

    #[test]
    fn solve_inverts() {
        let mut rng = StdRng::seed_from_u64(3);
        let n = 24;
        let a = random_spd(n, &mut rng);
        let (chol, _) = factor_spd(&a, 0.0).unwrap();
        let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut b: Vec<f64> = (0..n).map(|i| dot(&a[i], &x_true)).collect();
        chol.solve(&mut b);
        for (xi, ti) in b.iter().zip(&x_true) {
            assert_relative_eq!(xi, ti, epsilon = 1e-8);
        }
    }

    #[test]
    fn multi_column_solve_matches_single() {
        let mut rng = StdRng::seed_from_u64(19);
        let n = 40;
        let ncols = 7;
        let a = random_spd(n, &mut rng);
        let (chol, _) = factor_spd(&a, 0.0).unwrap();
        let cols: Vec<Vec<f64>> = (0..ncols)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut packed = vec![0.0; n * ncols];
        for (j, col) in cols.iter().enumerate() {
            for i in 0..n {
                packed[i * ncols + j] = col[i];
            }
        }
        chol.solve_lower_multi(&mut packed, ncols);
        for (j, col) in cols.iter().enumerate() {
            let mut single = col.clone();
            chol.solve_lower(&mut single);
            for i in 0..n {
                assert_relative_eq!(packed[i * ncols + j], single[i], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn append_rejects_indefinite_row() {
        let mut chol = Cholesky::empty();
        chol.append_row(&[], 1.0).unwrap();
        // Bordering with a cross term larger than the diagonal breaks
        // positive definiteness.
        assert!(chol.append_row(&[2.0], 1.0).is_err());
        assert_eq!(chol.dim(), 1);
    }

    #[test]
    fn jitter_rescues_semidefinite_matrix() {
        // Rank-one matrix: plain factorization fails at the second pivot.
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let (chol, jitter) = factor_spd(&a, 0.0).unwrap();
        assert!(jitter > 0.0 && jitter <= JITTER_MAX);
        assert_eq!(chol.dim(), 2);
    }

    #[test]
    fn solve_square_matches_known_solution() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_square(a, vec![5.0, 10.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn solve_square_detects_singularity() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve_square(a, vec![1.0, 2.0]).is_none());
    }
}
