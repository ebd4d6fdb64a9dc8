//! Self-contained oracle checks behind the `oracle-check` command: each
//! probe rebuilds a quantity through an independent route (primal instead
//! of dual regression, Monte Carlo instead of dynamic programming, direct
//! constraint evaluation instead of the solver's own claim) and compares.
//!
//! Every check draws its own deterministic generator, so two invocations
//! with the same seed examine exactly the same instances.

use super::derive_seed;
use crate::equilibrium::{find_cce, matrix_game_value};
use crate::game::{
    generate_random_game, policy_pair_value, duality_gap, nash_value, GameConfig,
    KernelMixtureGame, MarkovPolicy,
};
use crate::kernels::GramState;
use crate::linalg::solve_square;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn from(name: &'static str, result: Result<String, String>) -> Self {
        match result {
            Ok(detail) => CheckReport { name, passed: true, detail },
            Err(detail) => CheckReport { name, passed: false, detail },
        }
    }
}

/// Runs the full battery. `rounds` scales how many random instances each
/// probe examines.
pub fn run_all(seed: u64, rounds: usize) -> Vec<CheckReport> {
    let rounds = rounds.max(1);
    let rng = |k: u64| ChaCha20Rng::seed_from_u64(derive_seed(seed, 1000 + k));
    vec![
        CheckReport::from("ridge-duality", ridge_duality(rng(0), rounds)),
        CheckReport::from("elliptical-potential", elliptical_potential(rng(1), rounds)),
        CheckReport::from("cce-constraints", cce_constraints(rng(2), rounds)),
        CheckReport::from("matrix-game-saddle", matrix_game_saddle(rng(3), rounds)),
        CheckReport::from("weak-duality", weak_duality(rng(4), rounds)),
        CheckReport::from("monte-carlo-return", monte_carlo_return(rng(5))),
    ]
}

fn random_feature<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    // Uniform in the cube, scaled inside the unit ball.
    let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1.0 {
        raw
    } else {
        raw.iter().map(|v| v / norm).collect()
    }
}

/// Dual-form predictions against a primal ridge solve on the weighted
/// design matrix.
fn ridge_duality(mut rng: ChaCha20Rng, rounds: usize) -> Result<String, String> {
    let mut worst = 0.0f64;
    for round in 0..rounds {
        let d = rng.gen_range(2..=6);
        let n = rng.gen_range(1..=25);
        let lambda = [0.5, 1.0, 2.0][round % 3];
        let mut gram = GramState::new(lambda, d).map_err(|e| e.to_string())?;
        let mut feats = Vec::new();
        let mut targets = Vec::new();
        let mut norms = Vec::new();
        for _ in 0..n {
            let f = random_feature(&mut rng, d);
            let y = rng.gen_range(-1.0..1.0);
            let r = rng.gen_range(0.5..2.0);
            gram.append(&f, y, r).map_err(|e| e.to_string())?;
            feats.push(f);
            targets.push(y);
            norms.push(r);
        }

        // Lambda = lambda I + sum phi phi^T / r^2, rhs = sum phi y / r^2.
        let mut cov = vec![vec![0.0; d]; d];
        let mut rhs = vec![0.0; d];
        for i in 0..d {
            cov[i][i] = lambda;
        }
        for ((f, &y), &r) in feats.iter().zip(&targets).zip(&norms) {
            let w = 1.0 / (r * r);
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += w * f[i] * f[j];
                }
                rhs[i] += w * f[i] * y;
            }
        }
        let theta = solve_square(cov.clone(), rhs).ok_or("primal system singular")?;

        for _ in 0..5 {
            let q = random_feature(&mut rng, d);
            let mean_primal: f64 = q.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let sol = solve_square(cov.clone(), q.clone()).ok_or("primal system singular")?;
            let width_sq_primal: f64 = q.iter().zip(&sol).map(|(a, b)| a * b).sum();
            let dm = (gram.mean(&q) - mean_primal).abs();
            let w = gram.width(&q);
            let dw = (w * w - width_sq_primal).abs();
            worst = worst.max(dm).max(dw);
        }
    }
    if worst <= 1e-8 {
        Ok(format!("max deviation {worst:.3e} over {rounds} instances"))
    } else {
        Err(format!("dual and primal predictions disagree by {worst:.3e}"))
    }
}

/// Sum of clipped squared widths against twice the final log determinant.
fn elliptical_potential(mut rng: ChaCha20Rng, rounds: usize) -> Result<String, String> {
    let mut worst_ratio = 0.0f64;
    for _ in 0..rounds {
        let d = rng.gen_range(2..=5);
        let n = rng.gen_range(5..=60);
        let lambda = rng.gen_range(0.3..3.0);
        let mut gram = GramState::new(lambda, d).map_err(|e| e.to_string())?;
        let mut acc = 0.0;
        for _ in 0..n {
            let f = random_feature(&mut rng, d);
            let r = rng.gen_range(0.5..2.0);
            let w = gram.width(&f) / r;
            acc += (w * w).min(1.0);
            gram.append(&f, rng.gen_range(-1.0..1.0), r).map_err(|e| e.to_string())?;
        }
        // information_gain is half the log det, so the classical bound
        // `sum <= 2 log det(I + K/lambda)` reads `sum <= 4 * gain`.
        let bound = 4.0 * gram.information_gain();
        if acc > bound + 1e-9 {
            return Err(format!("potential sum {acc} exceeds bound {bound}"));
        }
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(acc / bound);
        }
    }
    Ok(format!("tightest ratio {worst_ratio:.3} of the bound over {rounds} streams"))
}

/// Feasibility of the equilibrium solver's output, checked directly against
/// the deviation inequalities it claims to satisfy.
fn cce_constraints(mut rng: ChaCha20Rng, rounds: usize) -> Result<String, String> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..rounds {
        let n = rng.gen_range(2..=6);
        let table =
            |rng: &mut ChaCha20Rng| -> Vec<Vec<f64>> {
                (0..n).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect()
            };
        let q_up = table(&mut rng);
        let q_lo = table(&mut rng);
        let joint = find_cce(&q_up, &q_lo).map_err(|e| e.to_string())?;

        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = joint.prob(i, j);
                if p < 0.0 {
                    return Err(format!("negative probability {p}"));
                }
                mass += p;
            }
        }
        if (mass - 1.0).abs() > 1e-9 {
            return Err(format!("joint mass {mass} far from 1"));
        }
        for dev in 0..n {
            let mut row_gain = 0.0;
            let mut col_gain = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let p = joint.prob(i, j);
                    row_gain += p * (q_up[dev][j] - q_up[i][j]);
                    col_gain += p * (q_lo[i][j] - q_lo[i][dev]);
                }
            }
            worst = worst.max(row_gain).max(col_gain);
            if row_gain > 1e-8 || col_gain > 1e-8 {
                return Err(format!(
                    "profitable deviation to index {dev}: row gain {row_gain}, col gain {col_gain}"
                ));
            }
        }
    }
    Ok(format!("max deviation gain {worst:.3e} over {rounds} games"))
}

/// Matrix game solutions must be saddle points: the reported strategies
/// guarantee the value against every pure reply.
fn matrix_game_saddle(mut rng: ChaCha20Rng, rounds: usize) -> Result<String, String> {
    let mut worst = 0.0f64;
    for _ in 0..rounds {
        let n = rng.gen_range(1..=6);
        let p: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let sol = matrix_game_value(&p).map_err(|e| e.to_string())?;
        for j in 0..n {
            let payoff: f64 = (0..n).map(|i| sol.row_strategy[i] * p[i][j]).sum();
            worst = worst.max(sol.value - payoff);
        }
        for i in 0..n {
            let payoff: f64 = (0..n).map(|j| sol.col_strategy[j] * p[i][j]).sum();
            worst = worst.max(payoff - sol.value);
        }
    }
    if worst <= 1e-8 {
        Ok(format!("max guarantee slack {worst:.3e} over {rounds} matrices"))
    } else {
        Err(format!("strategy fails its value guarantee by {worst:.3e}"))
    }
}

fn random_policy<R: Rng>(rng: &mut R, game: &KernelMixtureGame) -> MarkovPolicy {
    let mut policy = MarkovPolicy::uniform(game.horizon, game.n_states, game.n_actions);
    for h in 0..game.horizon {
        for x in 0..game.n_states {
            let raw: Vec<f64> = (0..game.n_actions).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let dist: Vec<f64> = raw.iter().map(|v| v / total).collect();
            policy.set_dist(h, x, &dist);
        }
    }
    policy
}

/// Any policy pair must bracket the exact game value:
/// `V^{pi,*} <= V* <= V^{*,nu}`, and its duality gap is nonnegative.
fn weak_duality(mut rng: ChaCha20Rng, rounds: usize) -> Result<String, String> {
    let mut worst = 0.0f64;
    for _ in 0..rounds.max(5) {
        let mut config = GameConfig::new(rng.gen_range(2..=3), 2, rng.gen_range(2..=3), rng.gen_range(3..=5));
        config.iota = if rng.gen_bool(0.3) { 0.05 } else { 0.0 };
        let game = generate_random_game(&config, &mut rng).map_err(|e| e.to_string())?;
        let nash = nash_value(&game).map_err(|e| e.to_string())?;
        let star = nash.values[0][game.initial_state];
        for _ in 0..3 {
            let row = random_policy(&mut rng, &game);
            let col = random_policy(&mut rng, &game);
            let report = duality_gap(&game, &row, &col).map_err(|e| e.to_string())?;
            let violations = [
                report.row_vs_best - star,
                star - report.best_vs_col,
                -report.gap(),
            ];
            for v in violations {
                worst = worst.max(v);
            }
        }
        let eq_gap = duality_gap(&game, &nash.row_policy, &nash.col_policy)
            .map_err(|e| e.to_string())?
            .gap();
        if eq_gap.abs() > 1e-7 {
            return Err(format!("equilibrium pair shows gap {eq_gap}"));
        }
    }
    if worst <= 1e-8 {
        Ok(format!("max bracketing violation {worst:.3e}"))
    } else {
        Err(format!("value bracketing violated by {worst:.3e}"))
    }
}

fn sample_index<R: Rng>(rng: &mut R, dist: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// Monte Carlo return of a fixed policy pair against the dynamic
/// programming value, within four standard errors.
fn monte_carlo_return(mut rng: ChaCha20Rng) -> Result<String, String> {
    let config = GameConfig::new(3, 2, 3, 4);
    let game = generate_random_game(&config, &mut rng).map_err(|e| e.to_string())?;
    let row = random_policy(&mut rng, &game);
    let col = random_policy(&mut rng, &game);
    let dp = policy_pair_value(&game, &row, &col).map_err(|e| e.to_string())?[0]
        [game.initial_state];

    let episodes = 20_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..episodes {
        let mut x = game.initial_state;
        let mut ret = 0.0;
        for h in 0..game.horizon {
            let a = sample_index(&mut rng, row.dist(h, x));
            let b = sample_index(&mut rng, col.dist(h, x));
            ret += game.reward(h, x, a, b);
            x = game.sample_next_state(h, x, a, b, &mut rng);
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let se = (var / n).sqrt();
    let diff = (mean - dp).abs();
    if diff <= 4.0 * se + 1e-9 {
        Ok(format!("simulated {mean:.5} vs exact {dp:.5} ({:.2} standard errors)", diff / se.max(1e-300)))
    } else {
        Err(format!("simulated {mean:.5} vs exact {dp:.5} exceeds 4 standard errors ({se:.2e})"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes_on_default_seed() {
        let reports = run_all(0, 8);
        assert_eq!(reports.len(), 6);
        for r in &reports {
            assert!(r.passed, "{} failed: {}", r.name, r.detail);
            assert!(!r.detail.is_empty());
        }
    }

    #[test]
    fn battery_is_deterministic() {
        let a = run_all(3, 4);
        let b = run_all(3, 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.detail, y.detail);
        }
    }
}
