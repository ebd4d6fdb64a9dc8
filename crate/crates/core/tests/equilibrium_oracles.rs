//! The simplex solver checked against brute-force vertex enumeration, and
//! the game-theoretic layers checked against closed forms and deviation
//! fuzzing.

mod support;

use kmg::equilibrium::lp::{lp_solve, Cmp, LinearProgram, LpStatus};
use kmg::equilibrium::{find_cce, matrix_game_value};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use support::{dot, for_each_combination, gauss_solve};

/// Maximum of the objective over all feasible vertices of an LP whose
/// variables all carry finite box bounds. Every nonempty bounded polyhedron
/// attains its optimum at a vertex, and a vertex lies on some set of
/// `n` independent active hyperplanes, so exhaustive enumeration of those
/// subsets is a complete (if slow) solver.
fn best_vertex(lp: &LinearProgram) -> Option<f64> {
    let n = lp.n_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut checks: Vec<(Vec<f64>, Cmp, f64)> = Vec::new();
    for c in &lp.constraints {
        planes.push((c.coeffs.clone(), c.rhs));
        checks.push((c.coeffs.clone(), c.cmp, c.rhs));
    }
    for i in 0..n {
        let (lo, hi) = lp.bounds[i];
        assert!(lo.is_finite() && hi.is_finite(), "oracle needs box bounds");
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        planes.push((e.clone(), lo));
        planes.push((e.clone(), hi));
        checks.push((e.clone(), Cmp::Ge, lo));
        checks.push((e, Cmp::Le, hi));
    }

    let mut best: Option<f64> = None;
    for_each_combination(planes.len(), n, |subset| {
        let a: Vec<Vec<f64>> = subset.iter().map(|&k| planes[k].0.clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&k| planes[k].1).collect();
        let Some(x) = gauss_solve(a, b) else { return };
        for (coeffs, cmp, rhs) in &checks {
            let lhs = dot(coeffs, &x);
            let ok = match cmp {
                Cmp::Le => lhs <= rhs + 1e-7,
                Cmp::Ge => lhs >= rhs - 1e-7,
                Cmp::Eq => (lhs - rhs).abs() <= 1e-7,
            };
            if !ok {
                return;
            }
        }
        let obj = dot(&lp.objective, &x);
        best = Some(best.map_or(obj, |cur: f64| cur.max(obj)));
    });
    best
}

#[test]
fn simplex_agrees_with_vertex_enumeration() {
    let mut rng = ChaCha20Rng::seed_from_u64(0x6571_0001);
    let mut feasible = 0;
    let mut infeasible = 0;
    for _ in 0..150 {
        let n = rng.gen_range(2..=4);
        let m = rng.gen_range(0..=5);
        let mut lp = LinearProgram::new(n);
        for v in lp.objective.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        let mut center = vec![0.0; n];
        for i in 0..n {
            let lo = rng.gen_range(-2.0..0.0);
            let hi = lo + rng.gen_range(0.5..4.0);
            lp.bounds[i] = (lo, hi);
            center[i] = rng.gen_range(lo..hi);
        }
        for _ in 0..m {
            let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let at_center = dot(&coeffs, &center);
            let roll: f64 = rng.gen();
            if roll < 0.15 {
                lp.push(coeffs, Cmp::Eq, at_center);
            } else if roll < 0.85 {
                // Satisfied at the center with slack, so most instances stay
                // feasible even with several rows.
                lp.push(coeffs, Cmp::Le, at_center + rng.gen_range(0.1..1.5));
            } else {
                lp.push(coeffs, Cmp::Le, at_center - rng.gen_range(0.5..2.0));
            }
        }

        let sol = lp_solve(&lp).unwrap();
        let oracle = best_vertex(&lp);
        match sol.status {
            LpStatus::Optimal => {
                let opt = oracle.expect("simplex found a point the oracle missed");
                assert!(
                    (sol.objective - opt).abs() <= 1e-6,
                    "objective {} vs vertex enumeration {opt}",
                    sol.objective
                );
                feasible += 1;
            }
            LpStatus::Infeasible => {
                assert!(oracle.is_none(), "oracle found a vertex in an 'infeasible' program");
                infeasible += 1;
            }
            other => panic!("unexpected status {other:?} with box bounds"),
        }
    }
    // The generator is tuned to produce a real mix; if either side vanishes
    // the test has stopped exercising one of the two status paths.
    assert!(feasible >= 30, "only {feasible} feasible instances");
    assert!(infeasible >= 10, "only {infeasible} infeasible instances");
}

#[test]
fn matrix_game_closed_forms() {
    let sol = matrix_game_value(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
    assert!(sol.value.abs() <= 1e-9, "matching pennies value {}", sol.value);
    assert!((sol.row_strategy[0] - 0.5).abs() <= 1e-9);

    // Row 0 dominates; the column player then picks the cheaper column.
    let sol = matrix_game_value(&[vec![2.0, 3.0], vec![0.0, 1.0]]).unwrap();
    assert!((sol.value - 2.0).abs() <= 1e-9);

    let sol = matrix_game_value(&[vec![7.5]]).unwrap();
    assert!((sol.value - 7.5).abs() <= 1e-12);
    assert!((sol.row_strategy[0] - 1.0).abs() <= 1e-12);
}

#[test]
fn matrix_game_saddle_fuzz() {
    let mut rng = ChaCha20Rng::seed_from_u64(0x6571_0002);
    for _ in 0..150 {
        let n = rng.gen_range(1..=8);
        let p: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let sol = matrix_game_value(&p).unwrap();

        // The row strategy guarantees at least the value against every
        // column, the column strategy caps the payoff against every row.
        for j in 0..n {
            let got: f64 = (0..n).map(|i| sol.row_strategy[i] * p[i][j]).sum();
            assert!(got >= sol.value - 1e-8, "column {j} beats the row guarantee");
        }
        for i in 0..n {
            let got: f64 = (0..n).map(|j| p[i][j] * sol.col_strategy[j]).sum();
            assert!(got <= sol.value + 1e-8, "row {i} beats the column guarantee");
        }

        // Swapping the players' roles negates the value.
        let neg_t: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| -p[j][i]).collect()).collect();
        let swapped = matrix_game_value(&neg_t).unwrap();
        assert!(
            (sol.value + swapped.value).abs() <= 1e-8,
            "antisymmetry broken: {} vs {}",
            sol.value,
            swapped.value
        );
    }
}

#[test]
fn cce_handles_degenerate_payoffs() {
    // One action: the only distribution is the point mass.
    let sigma = find_cce(&[vec![2.0]], &[vec![-1.0]]).unwrap();
    assert!((sigma.probs[0] - 1.0).abs() <= 1e-12);

    // Constant payoffs: every distribution is a CCE; whatever comes back
    // must still be a distribution satisfying the (vacuous) constraints.
    let q = vec![vec![0.7; 3]; 3];
    let sigma = find_cce(&q, &q).unwrap();
    let mass: f64 = sigma.probs.iter().sum();
    assert!((mass - 1.0).abs() <= 1e-9);
    assert!(sigma.probs.iter().all(|&v| v >= 0.0));

    // Identical optimistic and pessimistic views reduce to a correlated
    // equilibrium of the single zero-sum game; deviation gains must be
    // nonpositive on both sides.
    let mut rng = ChaCha20Rng::seed_from_u64(0x6571_0003);
    for _ in 0..40 {
        let n = rng.gen_range(2..=5);
        let q: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let sigma = find_cce(&q, &q).unwrap();
        let base = sigma.expected_payoff(&q);
        let col_marg = sigma.col_marginals();
        let row_marg = sigma.row_marginals();
        for a in 0..n {
            let dev: f64 = (0..n).map(|j| q[a][j] * col_marg[j]).sum();
            assert!(dev <= base + 1e-8);
        }
        for b in 0..n {
            let dev: f64 = (0..n).map(|i| q[i][b] * row_marg[i]).sum();
            assert!(dev >= base - 1e-8);
        }
    }
}

#[test]
fn cce_invariant_under_power_of_two_scaling() {
    // Positive scaling of both payoff matrices leaves the feasible set
    // unchanged; with power-of-two factors the solver arithmetic is exact,
    // so the pivot path and the returned distribution match bit for bit.
    let mut rng = ChaCha20Rng::seed_from_u64(0x6571_0004);
    for _ in 0..30 {
        let n = rng.gen_range(2..=6);
        let q_row: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let q_col: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let base = find_cce(&q_row, &q_col).unwrap();
        for c in [0.25, 4.0] {
            let sr: Vec<Vec<f64>> =
                q_row.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
            let sc: Vec<Vec<f64>> =
                q_col.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
            let scaled = find_cce(&sr, &sc).unwrap();
            for (a, b) in base.probs.iter().zip(&scaled.probs) {
                assert!((a - b).abs() <= 1e-12, "scaling by {c} moved the distribution");
            }
        }
    }
}
