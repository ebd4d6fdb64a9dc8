//! Finite two-player zero-sum Markov games whose transition kernels are
//! linear mixtures of known base kernels.
//!
//! A game has `n_states` states, a shared action set of size `n_actions`
//! for both players, horizon `horizon`, and known per-step rewards. The
//! step-`h` transition is `P_h(s' | z) = <phi(s' | z), theta_h>` where
//! `z = (x, a, b)` is a state/action/action triple, the feature map `phi`
//! is known to learners, and `theta_h` is the unknown mixing vector. An
//! optional misspecification term blends each transition with an off-model
//! distribution at total-variation distance at most `iota`.
//!
//! Planning oracles here are exact: best responses and Nash values by
//! backward induction, stage games solved through the LP machinery in
//! [`crate::equilibrium`].

use crate::equilibrium::{matrix_game_value, EquilibriumError};
use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("invalid game config: {0}")]
    BadConfig(String),
    #[error("invalid game data: {0}")]
    BadData(String),
    #[error("game file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// Which player a best response is computed for. `Max` is the row player
/// (maximizes return), `Min` the column player.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Max,
    Min,
}

#[derive(Debug, Clone)]
pub struct GameConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub feature_dim: usize,
    /// Dirichlet concentration used when sampling base transition kernels.
    pub dirichlet_concentration: f64,
    /// Misspecification mixing weight; 0 keeps the game exactly in model.
    pub iota: f64,
    pub initial_state: usize,
}

impl GameConfig {
    pub fn new(n_states: usize, n_actions: usize, horizon: usize, feature_dim: usize) -> Self {
        GameConfig {
            n_states,
            n_actions,
            horizon,
            feature_dim,
            dirichlet_concentration: 1.0,
            iota: 0.0,
            initial_state: 0,
        }
    }

    fn validate(&self) -> Result<(), GameError> {
        let bad = |msg: String| Err(GameError::BadConfig(msg));
        if self.n_states == 0 || self.n_actions == 0 || self.horizon == 0 || self.feature_dim == 0 {
            return bad("all dimensions must be at least 1".into());
        }
        if self.initial_state >= self.n_states {
            return bad(format!(
                "initial state {} out of range for {} states",
                self.initial_state, self.n_states
            ));
        }
        if !(self.dirichlet_concentration > 0.0) {
            return bad("dirichlet concentration must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.iota) {
            return bad(format!("iota {} outside [0, 1]", self.iota));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Misspec {
    iota: f64,
    /// Off-model next-state distribution per (h, z), flattened as
    /// `[(h * n_z + z) * n_states + s']`.
    off_model: Vec<f64>,
}

/// A kernel mixture Markov game. Rewards are indexed `[h][x][a][b]`,
/// features `[z][s'][i]` with `z = (x * A + a) * A + b`, mixing vectors
/// `[h][i]`, all flattened row-major.
#[derive(Debug, Clone)]
pub struct KernelMixtureGame {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub feature_dim: usize,
    pub initial_state: usize,
    /// Known bound on the Euclidean norm of every mixing vector.
    pub b_norm: f64,
    rewards: Vec<f64>,
    features: Vec<f64>,
    theta: Vec<f64>,
    misspec: Option<Misspec>,
}

impl KernelMixtureGame {
    /// Number of state/action/action triples.
    pub fn n_z(&self) -> usize {
        self.n_states * self.n_actions * self.n_actions
    }

    pub fn z_index(&self, x: usize, a: usize, b: usize) -> usize {
        debug_assert!(x < self.n_states && a < self.n_actions && b < self.n_actions);
        (x * self.n_actions + a) * self.n_actions + b
    }

    pub fn reward(&self, h: usize, x: usize, a: usize, b: usize) -> f64 {
        self.rewards[h * self.n_z() + self.z_index(x, a, b)]
    }

    /// Feature vector `phi(s' | z)`.
    pub fn feature(&self, z: usize, s_next: usize) -> &[f64] {
        let d = self.feature_dim;
        let base = (z * self.n_states + s_next) * d;
        &self.features[base..base + d]
    }

    pub fn theta(&self, h: usize) -> &[f64] {
        &self.theta[h * self.feature_dim..(h + 1) * self.feature_dim]
    }

    pub fn iota(&self) -> f64 {
        self.misspec.as_ref().map_or(0.0, |m| m.iota)
    }

    /// In-model transition `<phi(. | z), theta_h>` before any
    /// misspecification mixing.
    pub fn model_transition(&self, h: usize, z: usize) -> Vec<f64> {
        let theta = self.theta(h);
        (0..self.n_states)
            .map(|s| crate::linalg::dot(self.feature(z, s), theta))
            .collect()
    }

    /// The distribution the environment actually draws next states from:
    /// the linear mixture, blended with the off-model term when present.
    /// The result is checked to be a probability vector within 1e-9.
    pub fn transition_distribution(&self, h: usize, x: usize, a: usize, b: usize) -> Vec<f64> {
        let z = self.z_index(x, a, b);
        let mut p = self.model_transition(h, z);
        if let Some(m) = &self.misspec {
            let base = (h * self.n_z() + z) * self.n_states;
            for (s, v) in p.iter_mut().enumerate() {
                *v = (1.0 - m.iota) * *v + m.iota * m.off_model[base + s];
            }
        }
        let total: f64 = p.iter().sum();
        assert!(
            (total - 1.0).abs() <= 1e-9 && p.iter().all(|&v| v >= -1e-9),
            "transition at (h={h}, z={z}) is not a distribution (mass {total})"
        );
        p
    }

    pub fn sample_next_state<R: Rng>(
        &self,
        h: usize,
        x: usize,
        a: usize,
        b: usize,
        rng: &mut R,
    ) -> usize {
        let p = self.transition_distribution(h, x, a, b);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (s, &pv) in p.iter().enumerate() {
            acc += pv;
            if u < acc {
                return s;
            }
        }
        self.n_states - 1
    }

    /// Builds a game from explicit tables. Shapes are validated and every
    /// realized transition must be a probability vector within 1e-6; reward
    /// magnitudes are not restricted, so hand-built diagnostic games may use
    /// payoffs outside the generated range.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        feature_dim: usize,
        initial_state: usize,
        b_norm: f64,
        rewards: Vec<f64>,
        features: Vec<f64>,
        theta: Vec<f64>,
        misspec: Option<(f64, Vec<f64>)>,
    ) -> Result<Self, GameError> {
        let n_z = n_states * n_actions * n_actions;
        let bad = |msg: String| GameError::BadData(msg);
        if n_states == 0 || n_actions == 0 || horizon == 0 || feature_dim == 0 {
            return Err(bad("all dimensions must be at least 1".into()));
        }
        if initial_state >= n_states {
            return Err(bad("initial state out of range".into()));
        }
        if rewards.len() != horizon * n_z {
            return Err(bad(format!("expected {} rewards, got {}", horizon * n_z, rewards.len())));
        }
        if features.len() != n_z * n_states * feature_dim {
            return Err(bad("feature table has wrong size".into()));
        }
        if theta.len() != horizon * feature_dim {
            return Err(bad("theta table has wrong size".into()));
        }
        if rewards.iter().chain(&features).chain(&theta).any(|v| !v.is_finite()) {
            return Err(bad("non-finite entry in game tables".into()));
        }
        let misspec = match misspec {
            None => None,
            Some((iota, off_model)) => {
                if !(0.0..=1.0).contains(&iota) {
                    return Err(bad(format!("iota {iota} outside [0, 1]")));
                }
                if off_model.len() != horizon * n_z * n_states {
                    return Err(bad("off-model table has wrong size".into()));
                }
                Some(Misspec { iota, off_model })
            }
        };
        let game = KernelMixtureGame {
            n_states,
            n_actions,
            horizon,
            feature_dim,
            initial_state,
            b_norm,
            rewards,
            features,
            theta,
            misspec,
        };
        for h in 0..horizon {
            for z in 0..n_z {
                let mut p = game.model_transition(h, z);
                if let Some(m) = &game.misspec {
                    let base = (h * n_z + z) * n_states;
                    for (s, v) in p.iter_mut().enumerate() {
                        *v = (1.0 - m.iota) * *v + m.iota * m.off_model[base + s];
                    }
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-6 || p.iter().any(|&v| v < -1e-6) {
                    return Err(bad(format!(
                        "transition at (h={h}, z={z}) is not a distribution (mass {total})"
                    )));
                }
            }
        }
        Ok(game)
    }
}

/// Samples a Dirichlet vector; concentration is shared across cells.
fn dirichlet<R: Rng>(alpha: f64, k: usize, rng: &mut R) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    Dirichlet::new_with_size(alpha, k)
        .expect("dirichlet parameters validated by config")
        .sample(rng)
}

/// Generates a random game: base kernels are Dirichlet rows, the feature
/// map stacks them scaled by `1/sqrt(d)`, and each step's mixing vector is
/// `sqrt(d)` times a point on the probability simplex, so `b_norm =
/// sqrt(d)` bounds every `theta_h`. Rewards are uniform on [-1, 1]. Draw
/// order (rewards, base kernels, mixing vectors, off-model rows) is fixed;
/// given the same generator state the same game comes back.
pub fn generate_random_game<R: Rng>(
    config: &GameConfig,
    rng: &mut R,
) -> Result<KernelMixtureGame, GameError> {
    config.validate()?;
    let (s_n, a_n, h_n, d) = (
        config.n_states,
        config.n_actions,
        config.horizon,
        config.feature_dim,
    );
    let n_z = s_n * a_n * a_n;
    let sqrt_d = (d as f64).sqrt();

    let rewards: Vec<f64> = (0..h_n * n_z).map(|_| rng.gen_range(-1.0..1.0)).collect();

    // Base kernels P_i(. | z), one Dirichlet row per (i, z).
    let mut base = vec![0.0; d * n_z * s_n];
    for i in 0..d {
        for z in 0..n_z {
            let row = dirichlet(config.dirichlet_concentration, s_n, rng);
            base[(i * n_z + z) * s_n..(i * n_z + z + 1) * s_n].copy_from_slice(&row);
        }
    }
    let mut features = vec![0.0; n_z * s_n * d];
    for z in 0..n_z {
        for s in 0..s_n {
            for i in 0..d {
                features[(z * s_n + s) * d + i] = base[(i * n_z + z) * s_n + s] / sqrt_d;
            }
        }
    }

    let mut theta = vec![0.0; h_n * d];
    for h in 0..h_n {
        let w = dirichlet(1.0, d, rng);
        for i in 0..d {
            theta[h * d + i] = sqrt_d * w[i];
        }
    }

    let misspec = if config.iota > 0.0 {
        let mut off = vec![0.0; h_n * n_z * s_n];
        for h in 0..h_n {
            for z in 0..n_z {
                let q = dirichlet(1.0, s_n, rng);
                off[(h * n_z + z) * s_n..(h * n_z + z + 1) * s_n].copy_from_slice(&q);
            }
        }
        Some((config.iota, off))
    } else {
        None
    };

    KernelMixtureGame::from_parts(
        s_n,
        a_n,
        h_n,
        d,
        config.initial_state,
        sqrt_d,
        rewards,
        features,
        theta,
        misspec,
    )
}

/// A Markov (per-step, per-state mixed) policy for one player.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPolicy {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    probs: Vec<f64>,
}

impl MarkovPolicy {
    pub fn uniform(horizon: usize, n_states: usize, n_actions: usize) -> Self {
        MarkovPolicy {
            horizon,
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; horizon * n_states * n_actions],
        }
    }

    /// Deterministic policy from an action choice per (h, x).
    pub fn deterministic(horizon: usize, n_states: usize, n_actions: usize, choice: &[Vec<usize>]) -> Self {
        let mut p = MarkovPolicy {
            horizon,
            n_states,
            n_actions,
            probs: vec![0.0; horizon * n_states * n_actions],
        };
        for h in 0..horizon {
            for x in 0..n_states {
                let a = choice[h][x];
                p.probs[(h * n_states + x) * n_actions + a] = 1.0;
            }
        }
        p
    }

    pub fn dist(&self, h: usize, x: usize) -> &[f64] {
        let base = (h * self.n_states + x) * self.n_actions;
        &self.probs[base..base + self.n_actions]
    }

    pub fn set_dist(&mut self, h: usize, x: usize, dist: &[f64]) {
        assert_eq!(dist.len(), self.n_actions);
        let base = (h * self.n_states + x) * self.n_actions;
        self.probs[base..base + self.n_actions].copy_from_slice(dist);
    }

    /// Every per-(h, x) row must be a probability vector within 1e-9.
    pub fn validate(&self) -> Result<(), GameError> {
        for h in 0..self.horizon {
            for x in 0..self.n_states {
                let row = self.dist(h, x);
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > 1e-9 || row.iter().any(|&v| v < -1e-10) {
                    return Err(GameError::BadData(format!(
                        "policy row at (h={h}, x={x}) sums to {total}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One executed episode.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrajStep {
    pub state: usize,
    pub row_action: usize,
    pub col_action: usize,
    pub reward: f64,
    pub next_state: usize,
}

impl Trajectory {
    /// Checks the chain structure: `horizon` steps, consecutive states
    /// linked, indices in range.
    pub fn validate(&self, game: &KernelMixtureGame) -> Result<(), GameError> {
        if self.steps.len() != game.horizon {
            return Err(GameError::BadData(format!(
                "trajectory has {} steps, expected {}",
                self.steps.len(),
                game.horizon
            )));
        }
        for (h, step) in self.steps.iter().enumerate() {
            if step.state >= game.n_states
                || step.next_state >= game.n_states
                || step.row_action >= game.n_actions
                || step.col_action >= game.n_actions
            {
                return Err(GameError::BadData(format!("index out of range at step {h}")));
            }
            if h + 1 < self.steps.len() && self.steps[h + 1].state != step.next_state {
                return Err(GameError::BadData(format!(
                    "broken chain between steps {h} and {}",
                    h + 1
                )));
            }
        }
        Ok(())
    }
}

/// Result of a best-response computation: exact values `V_h(x)` for the
/// responding player against the fixed opponent, plus the deterministic
/// responding policy (lowest action index on ties).
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub values: Vec<Vec<f64>>,
    pub policy: MarkovPolicy,
}

/// Backward induction against a fixed opponent policy. When `responder` is
/// `Side::Max` the opponent policy is the column player's and the returned
/// values are `V^{*, nu}`; symmetrically for `Side::Min`.
pub fn best_response_value(
    game: &KernelMixtureGame,
    opponent: &MarkovPolicy,
    responder: Side,
) -> Result<BestResponse, GameError> {
    opponent.validate()?;
    let (s_n, a_n, h_n) = (game.n_states, game.n_actions, game.horizon);
    if opponent.horizon != h_n || opponent.n_states != s_n || opponent.n_actions != a_n {
        return Err(GameError::BadData("opponent policy shape mismatch".into()));
    }
    let mut values = vec![vec![0.0; s_n]; h_n];
    let mut choice = vec![vec![0usize; s_n]; h_n];
    let mut v_next = vec![0.0; s_n];
    for h in (0..h_n).rev() {
        for x in 0..s_n {
            let q = stage_q(game, h, x, &v_next);
            let opp = opponent.dist(h, x);
            let mut best_a = 0;
            let mut best_v = match responder {
                Side::Max => f64::NEG_INFINITY,
                Side::Min => f64::INFINITY,
            };
            for own in 0..a_n {
                let mut payoff = 0.0;
                for (other, &w) in opp.iter().enumerate() {
                    let (a, b) = match responder {
                        Side::Max => (own, other),
                        Side::Min => (other, own),
                    };
                    payoff += w * q[a * a_n + b];
                }
                let improves = match responder {
                    Side::Max => payoff > best_v + 1e-12,
                    Side::Min => payoff < best_v - 1e-12,
                };
                if improves {
                    best_v = payoff;
                    best_a = own;
                }
            }
            values[h][x] = best_v;
            choice[h][x] = best_a;
        }
        v_next.copy_from_slice(&values[h]);
    }
    Ok(BestResponse {
        values,
        policy: MarkovPolicy::deterministic(h_n, s_n, a_n, &choice),
    })
}

/// Stage payoff table `q[a * A + b] = r_h(x,a,b) + E[V_next]` under the
/// game's realized transitions.
fn stage_q(game: &KernelMixtureGame, h: usize, x: usize, v_next: &[f64]) -> Vec<f64> {
    let a_n = game.n_actions;
    let mut q = vec![0.0; a_n * a_n];
    for a in 0..a_n {
        for b in 0..a_n {
            let p = game.transition_distribution(h, x, a, b);
            let cont: f64 = p.iter().zip(v_next).map(|(pv, vv)| pv * vv).sum();
            q[a * a_n + b] = game.reward(h, x, a, b) + cont;
        }
    }
    q
}

/// Exact minimax (Nash) values and a pair of stage-equilibrium policies.
#[derive(Debug, Clone)]
pub struct NashSolution {
    pub values: Vec<Vec<f64>>,
    pub row_policy: MarkovPolicy,
    pub col_policy: MarkovPolicy,
}

/// Backward induction solving each stage matrix game exactly. The stage
/// strategies assemble into Markov policies that attain the game value
/// against each other.
pub fn nash_value(game: &KernelMixtureGame) -> Result<NashSolution, GameError> {
    let (s_n, a_n, h_n) = (game.n_states, game.n_actions, game.horizon);
    let mut values = vec![vec![0.0; s_n]; h_n];
    let mut row_policy = MarkovPolicy::uniform(h_n, s_n, a_n);
    let mut col_policy = MarkovPolicy::uniform(h_n, s_n, a_n);
    let mut v_next = vec![0.0; s_n];
    for h in (0..h_n).rev() {
        for x in 0..s_n {
            let q = stage_q(game, h, x, &v_next);
            let rows: Vec<Vec<f64>> = (0..a_n)
                .map(|a| q[a * a_n..(a + 1) * a_n].to_vec())
                .collect();
            let sol = matrix_game_value(&rows)?;
            values[h][x] = sol.value;
            row_policy.set_dist(h, x, &sol.row_strategy);
            col_policy.set_dist(h, x, &sol.col_strategy);
        }
        v_next.copy_from_slice(&values[h]);
    }
    Ok(NashSolution { values, row_policy, col_policy })
}

/// Value of a fixed policy pair, `V^{pi, nu}_h(x)`, by plain backward
/// induction.
pub fn policy_pair_value(
    game: &KernelMixtureGame,
    row: &MarkovPolicy,
    col: &MarkovPolicy,
) -> Result<Vec<Vec<f64>>, GameError> {
    row.validate()?;
    col.validate()?;
    let (s_n, a_n, h_n) = (game.n_states, game.n_actions, game.horizon);
    let mut values = vec![vec![0.0; s_n]; h_n];
    let mut v_next = vec![0.0; s_n];
    for h in (0..h_n).rev() {
        for x in 0..s_n {
            let q = stage_q(game, h, x, &v_next);
            let (pr, pc) = (row.dist(h, x), col.dist(h, x));
            let mut v = 0.0;
            for a in 0..a_n {
                for b in 0..a_n {
                    v += pr[a] * pc[b] * q[a * a_n + b];
                }
            }
            values[h][x] = v;
        }
        v_next.copy_from_slice(&values[h]);
    }
    Ok(values)
}

/// Exploitability report for a policy pair at the initial state.
#[derive(Debug, Clone, Copy)]
pub struct GapReport {
    /// `V^{*, nu}(x_1)`: best the row player could do against `col`.
    pub best_vs_col: f64,
    /// `V^{pi, *}(x_1)`: what `row` guarantees against a best-responding
    /// column player.
    pub row_vs_best: f64,
}

impl GapReport {
    pub fn gap(&self) -> f64 {
        self.best_vs_col - self.row_vs_best
    }
}

/// Duality gap of a policy pair: both one-sided best responses, evaluated
/// at the initial state. Nonnegative up to rounding for any pair.
pub fn duality_gap(
    game: &KernelMixtureGame,
    row: &MarkovPolicy,
    col: &MarkovPolicy,
) -> Result<GapReport, GameError> {
    let x1 = game.initial_state;
    let best_row = best_response_value(game, col, Side::Max)?;
    let best_col = best_response_value(game, row, Side::Min)?;
    Ok(GapReport {
        best_vs_col: best_row.values[0][x1],
        row_vs_best: best_col.values[0][x1],
    })
}

// ---------------------------------------------------------------------------
// Serialization: versioned plain-text tables.

/// Serializes a game in the `kmg-v1` text format: a header line, scalar
/// fields, then each table flattened in its documented index order. Floats
/// use the shortest round-trip decimal form, so write/read/write is
/// byte-stable.
pub fn write_game(game: &KernelMixtureGame) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    out.push_str("kmg-v1\n");
    writeln!(out, "n_states {}", game.n_states).unwrap();
    writeln!(out, "n_actions {}", game.n_actions).unwrap();
    writeln!(out, "horizon {}", game.horizon).unwrap();
    writeln!(out, "feature_dim {}", game.feature_dim).unwrap();
    writeln!(out, "initial_state {}", game.initial_state).unwrap();
    writeln!(out, "b_norm {}", game.b_norm).unwrap();
    write_floats(&mut out, "rewards", &game.rewards);
    write_floats(&mut out, "features", &game.features);
    write_floats(&mut out, "theta", &game.theta);
    if let Some(m) = &game.misspec {
        writeln!(out, "misspec_iota {}", m.iota).unwrap();
        write_floats(&mut out, "misspec_offmodel", &m.off_model);
    }
    out.push_str("end\n");
    out
}

fn write_floats(out: &mut String, label: &str, values: &[f64]) {
    out.push_str(label);
    for v in values {
        out.push(' ');
        out.push_str(&format!("{v}"));
    }
    out.push('\n');
}

/// Parses the `kmg-v1` format produced by [`write_game`].
pub fn read_game(text: &str) -> Result<KernelMixtureGame, GameError> {
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, msg: &str| GameError::Parse { line: line + 1, msg: msg.into() };

    let (first_no, first) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty file"))?;
    if first.trim() != "kmg-v1" {
        return Err(parse_err(first_no, "expected header 'kmg-v1'"));
    }

    let mut scalars = std::collections::HashMap::new();
    let mut tables: std::collections::HashMap<String, Vec<f64>> = std::collections::HashMap::new();
    for (no, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "end" {
            break;
        }
        let mut tokens = line.split_whitespace();
        let label = tokens.next().unwrap().to_string();
        match label.as_str() {
            "n_states" | "n_actions" | "horizon" | "feature_dim" | "initial_state" => {
                let v: usize = tokens
                    .next()
                    .ok_or_else(|| parse_err(no, "missing value"))?
                    .parse()
                    .map_err(|_| parse_err(no, "bad integer"))?;
                scalars.insert(label, v as f64);
            }
            "b_norm" | "misspec_iota" => {
                let v: f64 = tokens
                    .next()
                    .ok_or_else(|| parse_err(no, "missing value"))?
                    .parse()
                    .map_err(|_| parse_err(no, "bad float"))?;
                scalars.insert(label, v);
            }
            "rewards" | "features" | "theta" | "misspec_offmodel" => {
                let vals: Result<Vec<f64>, _> = tokens.map(str::parse::<f64>).collect();
                tables.insert(label, vals.map_err(|_| parse_err(no, "bad float in table"))?);
            }
            other => return Err(parse_err(no, &format!("unknown field '{other}'"))),
        }
    }

    let get = |name: &str| -> Result<f64, GameError> {
        scalars
            .get(name)
            .copied()
            .ok_or_else(|| GameError::Parse { line: 0, msg: format!("missing field '{name}'") })
    };
    let take = |tables: &mut std::collections::HashMap<String, Vec<f64>>, name: &str| {
        tables
            .remove(name)
            .ok_or_else(|| GameError::Parse { line: 0, msg: format!("missing table '{name}'") })
    };

    let mut tables = tables;
    let misspec = match scalars.get("misspec_iota") {
        Some(&iota) => Some((iota, take(&mut tables, "misspec_offmodel")?)),
        None => None,
    };
    KernelMixtureGame::from_parts(
        get("n_states")? as usize,
        get("n_actions")? as usize,
        get("horizon")? as usize,
        get("feature_dim")? as usize,
        get("initial_state")? as usize,
        get("b_norm")?,
        take(&mut tables, "rewards")?,
        take(&mut tables, "features")?,
        take(&mut tables, "theta")?,
        misspec,
    )
}

/// Hand-built single-state game whose step payoffs are the given matrix,
/// repeated each step. Useful for exercising the oracles against values
/// computable by hand.
pub fn single_state_game(payoff: &[Vec<f64>], horizon: usize) -> KernelMixtureGame {
    let a_n = payoff.len();
    let n_z = a_n * a_n;
    let mut rewards = Vec::with_capacity(horizon * n_z);
    for _ in 0..horizon {
        for a in 0..a_n {
            for b in 0..a_n {
                rewards.push(payoff[a][b]);
            }
        }
    }
    KernelMixtureGame::from_parts(
        1,
        a_n,
        horizon,
        1,
        0,
        1.0,
        rewards,
        vec![1.0; n_z],
        vec![1.0; horizon],
        None,
    )
    .expect("single-state game tables are consistent")
}
