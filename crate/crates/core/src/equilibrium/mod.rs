//! Matrix game values and coarse correlated equilibria.
//!
//! Convention throughout: the row player maximizes, the column player
//! minimizes. A stage game is described either by a single square payoff
//! matrix (zero sum) or by a pair of matrices when the two players' views of
//! the payoff differ, as happens with optimistic and pessimistic value
//! estimates.

pub mod lp;

use lp::{lp_solve, Cmp, LinearProgram, LpError, LpStatus};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error("payoff matrix must be square and non-empty ({detail})")]
    BadMatrix { detail: String },
    #[error("payoff matrices disagree in size: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("equilibrium LP unexpectedly {status:?}")]
    SolverFailed { status: LpStatus },
    #[error("row and column LP values disagree: {row} vs {col}")]
    ValueMismatch { row: f64, col: f64 },
    #[error(transparent)]
    Lp(#[from] LpError),
}

fn check_square(p: &[Vec<f64>]) -> Result<usize, EquilibriumError> {
    let n = p.len();
    if n == 0 {
        return Err(EquilibriumError::BadMatrix { detail: "empty".into() });
    }
    for row in p {
        if row.len() != n {
            return Err(EquilibriumError::BadMatrix {
                detail: format!("row of length {} in {}x{} matrix", row.len(), n, n),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EquilibriumError::BadMatrix { detail: "non-finite entry".into() });
        }
    }
    Ok(n)
}

/// A probability distribution over joint actions of the two players, stored
/// row-major: `probs[i * n + j]` is the mass on (row action i, column
/// action j).
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub n: usize,
    pub probs: Vec<f64>,
}

impl JointDistribution {
    pub fn uniform(n: usize) -> Self {
        JointDistribution { n, probs: vec![1.0 / (n * n) as f64; n * n] }
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.n + j]
    }

    /// Marginal of the row (maximizing) player.
    pub fn row_marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                m[i] += self.prob(i, j);
            }
        }
        m
    }

    /// Marginal of the column (minimizing) player.
    pub fn col_marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                m[j] += self.prob(i, j);
            }
        }
        m
    }

    pub fn expected_payoff(&self, p: &[Vec<f64>]) -> f64 {
        let mut v = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                v += self.prob(i, j) * p[i][j];
            }
        }
        v
    }

    /// Samples a joint action by inverse CDF over the row-major layout, so
    /// the draw consumes exactly one uniform variate.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return (k / self.n, k % self.n);
            }
        }
        (self.n - 1, self.n - 1)
    }
}

#[derive(Debug, Clone)]
pub struct MatrixGameSolution {
    pub value: f64,
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
}

/// Exact value and optimal mixed strategies of a zero-sum matrix game via
/// two linear programs (one per player); their optima must agree, which
/// doubles as an internal saddle-point check.
pub fn matrix_game_value(p: &[Vec<f64>]) -> Result<MatrixGameSolution, EquilibriumError> {
    let n = check_square(p)?;

    // Row player: maximize v s.t. sum_i p_i P[i][j] >= v for every column j.
    let mut row_lp = LinearProgram::new(n + 1);
    row_lp.objective[n] = 1.0;
    row_lp.bounds[n] = (f64::NEG_INFINITY, f64::INFINITY);
    for j in 0..n {
        let mut coeffs = vec![0.0; n + 1];
        for i in 0..n {
            coeffs[i] = p[i][j];
        }
        coeffs[n] = -1.0;
        row_lp.push(coeffs, Cmp::Ge, 0.0);
    }
    let mut simplex = vec![1.0; n];
    simplex.push(0.0);
    row_lp.push(simplex.clone(), Cmp::Eq, 1.0);
    let row_sol = lp_solve(&row_lp)?;
    if row_sol.status != LpStatus::Optimal {
        return Err(EquilibriumError::SolverFailed { status: row_sol.status });
    }

    // Column player: minimize u s.t. sum_j q_j P[i][j] <= u for every row i.
    let mut col_lp = LinearProgram::new(n + 1);
    col_lp.objective[n] = -1.0;
    col_lp.bounds[n] = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let mut coeffs = vec![0.0; n + 1];
        coeffs[..n].copy_from_slice(&p[i]);
        coeffs[n] = -1.0;
        col_lp.push(coeffs, Cmp::Le, 0.0);
    }
    col_lp.push(simplex, Cmp::Eq, 1.0);
    let col_sol = lp_solve(&col_lp)?;
    if col_sol.status != LpStatus::Optimal {
        return Err(EquilibriumError::SolverFailed { status: col_sol.status });
    }

    let value = row_sol.x[n];
    let col_value = col_sol.x[n];
    if (value - col_value).abs() > 1e-7 * (1.0 + value.abs()) {
        return Err(EquilibriumError::ValueMismatch { row: value, col: col_value });
    }

    Ok(MatrixGameSolution {
        value,
        row_strategy: clean_distribution(&row_sol.x[..n]),
        col_strategy: clean_distribution(&col_sol.x[..n]),
    })
}

/// Coarse correlated equilibrium of a two-payoff stage game: a joint
/// distribution sigma such that the row player cannot gain (under
/// `q_row`) by unilaterally switching to any fixed row, and the column
/// player cannot lower her payoff (under `q_col`) by switching to any fixed
/// column. Solved as a pure feasibility LP; such a distribution always
/// exists because any Nash point of the bimatrix pair satisfies both
/// constraint families.
pub fn find_cce(
    q_row: &[Vec<f64>],
    q_col: &[Vec<f64>],
) -> Result<JointDistribution, EquilibriumError> {
    find_cce_counted(q_row, q_col).map(|(sigma, _)| sigma)
}

/// Same as [`find_cce`], additionally reporting how many simplex pivots the
/// feasibility solve took.
pub fn find_cce_counted(
    q_row: &[Vec<f64>],
    q_col: &[Vec<f64>],
) -> Result<(JointDistribution, u64), EquilibriumError> {
    find_cce_with(q_row, q_col, CceObjective::Feasibility)
}

/// What the equilibrium solve optimizes over the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CceObjective {
    /// Any feasible point (the default; plain feasibility program).
    #[default]
    Feasibility,
    /// Maximize the expected spread `E_sigma[q_row - q_col]`.
    MaxSpread,
}

/// Slack granted to the deviation constraints on the retry solve. Well
/// below every downstream tolerance, and only reachable when the strict
/// program stalls numerically.
const CCE_RETRY_SLACK: f64 = 1e-9;

/// Equilibrium solve with a selectable objective over the feasible set.
///
/// The program is always feasible, but the deviation rows all have zero
/// right-hand sides, so the strict solve is maximally degenerate and can
/// stall on tables whose actions are numerically indistinguishable. When
/// that happens the solve is retried with [`CCE_RETRY_SLACK`] of room on
/// the deviation rows, which breaks the degeneracy while staying far
/// inside the tolerance any caller checks against.
pub fn find_cce_with(
    q_row: &[Vec<f64>],
    q_col: &[Vec<f64>],
    objective: CceObjective,
) -> Result<(JointDistribution, u64), EquilibriumError> {
    let n = check_square(q_row)?;
    let n2 = check_square(q_col)?;
    if n != n2 {
        return Err(EquilibriumError::SizeMismatch(n, n2));
    }

    solve_cce(q_row, q_col, objective, n, 0.0)
        .or_else(|_| solve_cce(q_row, q_col, objective, n, CCE_RETRY_SLACK))
}

fn solve_cce(
    q_row: &[Vec<f64>],
    q_col: &[Vec<f64>],
    objective: CceObjective,
    n: usize,
    slack: f64,
) -> Result<(JointDistribution, u64), EquilibriumError> {
    let idx = |i: usize, j: usize| i * n + j;
    let mut lp = LinearProgram::new(n * n);
    if objective == CceObjective::MaxSpread {
        for i in 0..n {
            for j in 0..n {
                lp.objective[idx(i, j)] = q_row[i][j] - q_col[i][j];
            }
        }
    }

    // No profitable row deviation: for every fixed row a', the payoff of
    // playing a' against the column marginal must not beat the correlated
    // payoff.
    for a_dev in 0..n {
        let mut coeffs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                coeffs[idx(i, j)] = q_row[a_dev][j] - q_row[i][j];
            }
        }
        lp.push(coeffs, Cmp::Le, slack);
    }
    // No profitable column deviation (the column player minimizes).
    for b_dev in 0..n {
        let mut coeffs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                coeffs[idx(i, j)] = q_col[i][j] - q_col[i][b_dev];
            }
        }
        lp.push(coeffs, Cmp::Le, slack);
    }
    lp.push(vec![1.0; n * n], Cmp::Eq, 1.0);

    let sol = lp_solve(&lp)?;
    let expected = match objective {
        CceObjective::Feasibility => LpStatus::Feasible,
        CceObjective::MaxSpread => LpStatus::Optimal,
    };
    if sol.status != expected {
        return Err(EquilibriumError::SolverFailed { status: sol.status });
    }
    Ok((JointDistribution { n, probs: clean_distribution(&sol.x) }, sol.pivots))
}

/// Clamps solver dust (entries in [-1e-10, 0)) to zero and renormalizes to
/// unit mass. Entries more negative than the dust threshold indicate a
/// solver bug and are a panic, not a rounding problem.
fn clean_distribution(raw: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = raw
        .iter()
        .map(|&v| {
            assert!(v >= -1e-10, "distribution entry {v} below tolerance");
            v.max(0.0)
        })
        .collect();
    let total: f64 = out.iter().sum();
    assert!((total - 1.0).abs() <= 1e-9, "distribution mass {total} far from 1");
    for v in out.iter_mut() {
        *v /= total;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn known_two_by_two_value() {
        let p = vec![vec![3.0, 0.0], vec![1.0, 2.0]];
        let sol = matrix_game_value(&p).unwrap();
        assert_relative_eq!(sol.value, 1.5, epsilon = 1e-9);
        assert_relative_eq!(sol.row_strategy[0], 0.25, epsilon = 1e-9);
        assert_relative_eq!(sol.row_strategy[1], 0.75, epsilon = 1e-9);
        // Saddle conditions.
        for j in 0..2 {
            let payoff: f64 = (0..2).map(|i| sol.row_strategy[i] * p[i][j]).sum();
            assert!(payoff >= sol.value - 1e-9);
        }
        for i in 0..2 {
            let payoff: f64 = (0..2).map(|j| sol.col_strategy[j] * p[i][j]).sum();
            assert!(payoff <= sol.value + 1e-9);
        }
    }

    #[test]
    fn pure_saddle_point() {
        // Entry (1, 0) is a saddle: row min max = col max min = 2.
        let p = vec![vec![1.0, 0.0], vec![2.0, 3.0]];
        let sol = matrix_game_value(&p).unwrap();
        assert_relative_eq!(sol.value, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn one_by_one_game() {
        let sol = matrix_game_value(&[vec![-0.7]]).unwrap();
        assert_relative_eq!(sol.value, -0.7, epsilon = 1e-12);
        assert_relative_eq!(sol.row_strategy[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_ragged_matrix() {
        let p = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matrix_game_value(&p).is_err());
    }

    #[test]
    fn cce_forces_dominant_row() {
        // Row 0 strictly dominates row 1 under the row payoff, so any CCE
        // puts all mass on row 0.
        let q = vec![vec![2.0, 2.0], vec![0.0, 0.0]];
        let sigma = find_cce(&q, &q).unwrap();
        let rows = sigma.row_marginals();
        assert_relative_eq!(rows[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(rows[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn cce_satisfies_deviation_constraints() {
        let q_row = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let q_col = vec![vec![0.5, -0.5], vec![-1.5, 1.0]];
        let sigma = find_cce(&q_row, &q_col).unwrap();
        let base_row = sigma.expected_payoff(&q_row);
        let cols = sigma.col_marginals();
        for a_dev in 0..2 {
            let dev: f64 = (0..2).map(|j| cols[j] * q_row[a_dev][j]).sum();
            assert!(dev <= base_row + 1e-8);
        }
        let base_col = sigma.expected_payoff(&q_col);
        let rows = sigma.row_marginals();
        for b_dev in 0..2 {
            let dev: f64 = (0..2).map(|i| rows[i] * q_col[i][b_dev]).sum();
            assert!(dev >= base_col - 1e-8);
        }
    }

    #[test]
    fn cce_survives_numerically_indistinguishable_actions() {
        // A table captured from a long learner run: the two row actions
        // differ by 9e-8 in the second column, which makes the strict
        // feasibility program degenerate enough to stall a naive pivot
        // order. Bit-exact payoffs so the instance stays what it was.
        let q_row = vec![
            vec![f64::from_bits(4612283064407795729), f64::from_bits(4607878463814932007)],
            vec![f64::from_bits(4612459294705656344), f64::from_bits(4607878463417057277)],
        ];
        let q_col = vec![
            vec![f64::from_bits(13836311861258270256), f64::from_bits(13837309855095848960)],
            vec![f64::from_bits(13836530923904335016), f64::from_bits(13837309855095848960)],
        ];
        let sigma = find_cce(&q_row, &q_col).unwrap();
        let base_row = sigma.expected_payoff(&q_row);
        let cols = sigma.col_marginals();
        for a_dev in 0..2 {
            let dev: f64 = (0..2).map(|j| cols[j] * q_row[a_dev][j]).sum();
            assert!(dev <= base_row + 1e-8);
        }
        let base_col = sigma.expected_payoff(&q_col);
        let rows = sigma.row_marginals();
        for b_dev in 0..2 {
            let dev: f64 = (0..2).map(|i| rows[i] * q_col[i][b_dev]).sum();
            assert!(dev >= base_col - 1e-8);
        }
    }

    #[test]
    fn joint_distribution_marginals_sum_to_one() {
        let sigma = JointDistribution::uniform(3);
        assert_relative_eq!(sigma.row_marginals().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(sigma.col_marginals().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spread_objective_picks_extreme_feasible_point() {
        // Row 0 dominates, so every equilibrium lives on row 0; the spread
        // objective must then concentrate on the (0, 0) cell where
        // q_row - q_col = 3.
        let q_row = vec![vec![3.0, 1.0], vec![0.0, 0.0]];
        let q_col = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let (sigma, _) = find_cce_with(&q_row, &q_col, CceObjective::MaxSpread).unwrap();
        assert_relative_eq!(sigma.prob(0, 0), 1.0, epsilon = 1e-9);
        let spread = sigma.expected_payoff(&q_row) - sigma.expected_payoff(&q_col);
        assert_relative_eq!(spread, 3.0, epsilon = 1e-9);
    }
}
