//! Independent numerical oracles for the integration tests. Nothing here
//! calls back into the crate's own linear algebra: linear systems go
//! through a fresh full-pivoting elimination and spectra through Jacobi
//! rotations, so agreement with the library is evidence, not tautology.

#![allow(dead_code)]

/// Solves `a x = b` by Gaussian elimination with full pivoting. Returns
/// `None` for (numerically) singular systems.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = a.len();
    assert!(a.iter().all(|row| row.len() == n) && b.len() == n);
    let mut col_of: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut pivot = (k, k, 0.0f64);
        for i in k..n {
            for j in k..n {
                if a[i][j].abs() > pivot.2 {
                    pivot = (i, j, a[i][j].abs());
                }
            }
        }
        if pivot.2 < 1e-13 {
            return None;
        }
        a.swap(k, pivot.0);
        b.swap(k, pivot.0);
        if pivot.1 != k {
            for row in a.iter_mut() {
                row.swap(k, pivot.1);
            }
            col_of.swap(k, pivot.1);
        }
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i][j] * y[j];
        }
        y[i] = s / a[i][i];
    }
    let mut x = vec![0.0; n];
    for k in 0..n {
        x[col_of[k]] = y[k];
    }
    Some(x)
}

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i][j] * m[i][j];
            }
        }
        if off.sqrt() < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Calls `f` once per `k`-subset of `0..n`, in lexicographic order.
pub fn for_each_combination<F: FnMut(&[usize])>(n: usize, k: usize, mut f: F) {
    fn rec<F: FnMut(&[usize])>(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut F) {
        if cur.len() == k {
            f(cur);
            return;
        }
        let need = k - cur.len();
        for i in start..=(n - need) {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut f);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A feature drawn uniformly in the cube and pulled inside the unit ball.
pub fn unit_ball_feature<R: rand::Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = dot(&raw, &raw).sqrt();
    if norm <= 1.0 {
        raw
    } else {
        raw.iter().map(|v| v / norm).collect()
    }
}
