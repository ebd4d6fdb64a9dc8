//! The online learning loop: optimistic and pessimistic value planning via
//! per-state coarse correlated equilibria, episode execution, and dual-form
//! regression updates.
//!
//! Each episode proceeds in three phases. Planning sweeps backward over the
//! horizon, forming upper and lower action-value tables from the per-step
//! regressions (`mean +/- beta * width`, truncated to `[-H, H]`), and picks
//! one joint stage distribution per state from the pair of tables. Execution
//! samples the joint distributions along a single trajectory. The update
//! appends one observation per step to each regression: the feature of the
//! next-step value function at the visited triple, with that value at the
//! realized next state as target. The variance-weighted flavor additionally
//! maintains second-moment regressions and normalizes first-moment rows by
//! an estimated conditional standard deviation.
//!
//! Exact exploitability of the extracted policy pair is measured with the
//! backward-induction oracles each episode, which is what the regret
//! records report.

use crate::equilibrium::{find_cce_counted, EquilibriumError, JointDistribution};
use crate::game::{
    duality_gap, KernelMixtureGame, MarkovPolicy, Trajectory, TrajStep,
};
use crate::kernels::{
    beta_bernstein, beta_hoeffding, beta_misspecified, value_feature, variance_estimate,
    BernsteinBetas, BonusParams, FeatureVector, GramState, KernelError,
};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid learner config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Hoeffding,
    Bernstein,
    Misspecified,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Hoeffding => "hoeffding",
            Variant::Bernstein => "bernstein",
            Variant::Misspecified => "misspecified",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "hoeffding" => Some(Variant::Hoeffding),
            "bernstein" => Some(Variant::Bernstein),
            "misspecified" => Some(Variant::Misspecified),
            _ => None,
        }
    }
}

/// How the information gain plugged into the radius schedules is obtained:
/// adaptively from the current Gram matrices, or frozen to a constant
/// (e.g. taken from a pilot run).
#[derive(Debug, Clone, Copy)]
pub enum GammaMode {
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub variant: Variant,
    pub episodes: usize,
    pub delta: f64,
    pub beta_scale: f64,
    pub gamma_mode: GammaMode,
    /// Model bias magnitude assumed by the misspecification-aware radius.
    pub iota: f64,
    /// Exact exploitability is evaluated at episodes where
    /// `t % eval_every == 0`, plus the first and last episode.
    pub eval_every: usize,
    /// Numerator of the weighted-regression regularizer default; when
    /// absent, `max(1, d ln(1 + T))` stands in for the effective dimension.
    pub d_eff: Option<f64>,
}

impl LearnerConfig {
    pub fn new(variant: Variant, episodes: usize) -> Self {
        LearnerConfig {
            variant,
            episodes,
            delta: 0.05,
            beta_scale: 1.0,
            gamma_mode: GammaMode::Adaptive,
            iota: 0.0,
            eval_every: 1,
            d_eff: None,
        }
    }

    fn validate(&self) -> Result<(), LearnerError> {
        if self.eval_every == 0 {
            return Err(LearnerError::BadConfig("eval_every must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(LearnerError::BadConfig(format!("delta {} outside (0, 1)", self.delta)));
        }
        if !(self.beta_scale > 0.0) {
            return Err(LearnerError::BadConfig("beta_scale must be positive".into()));
        }
        if self.iota < 0.0 {
            return Err(LearnerError::BadConfig("iota must be nonnegative".into()));
        }
        if let GammaMode::Fixed(g) = self.gamma_mode {
            if !(g >= 0.0) {
                return Err(LearnerError::BadConfig("fixed gamma must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Which envelope a regression stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Upper,
    Lower,
}

impl Bound {
    pub fn name(&self) -> &'static str {
        match self {
            Bound::Upper => "upper",
            Bound::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    First,
    Second,
}

impl Moment {
    pub fn name(&self) -> &'static str {
        match self {
            Moment::First => "first",
            Moment::Second => "second",
        }
    }
}

struct Stream {
    gram: GramState,
    /// Running sum of `min(1, w^2)` over appended observations, with `w`
    /// the pre-append width of the (normalized) appended feature. Bounded
    /// by twice the final log det by the elliptical potential argument.
    sum_min_width_sq: f64,
}

impl Stream {
    fn new(lambda: f64, dim: usize) -> Result<Self, KernelError> {
        Ok(Stream { gram: GramState::new(lambda, dim)?, sum_min_width_sq: 0.0 })
    }
}

struct Moments {
    first: Stream,
    second: Option<Stream>,
}

/// All mutable learner state across episodes.
pub struct LearnerState {
    pub cfg: LearnerConfig,
    pub params: BonusParams,
    upper: Vec<Moments>,
    lower: Vec<Moments>,
}

impl LearnerState {
    pub fn new(game: &KernelMixtureGame, cfg: LearnerConfig) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let h = game.horizon;
        let d = game.feature_dim;
        let t = (cfg.episodes as f64).max(1.0);
        let b = game.b_norm;
        let (lambda, lambda1, lambda2) = match cfg.variant {
            Variant::Hoeffding | Variant::Misspecified => {
                let l = 1.0 + 1.0 / t;
                (l, l, l)
            }
            Variant::Bernstein => {
                if !(b > 0.0) {
                    return Err(LearnerError::BadConfig(
                        "variance-weighted learner needs a positive mixing norm bound".into(),
                    ));
                }
                let d_eff = cfg
                    .d_eff
                    .unwrap_or_else(|| (d as f64 * (1.0 + t).ln()).max(1.0));
                let hh = (h * h) as f64;
                (1.0 / (b * b), d_eff / (b * b * hh), hh / (b * b))
            }
        };
        let params = BonusParams {
            horizon: h,
            delta: cfg.delta,
            lambda,
            b_norm: b,
            beta_scale: cfg.beta_scale,
            iota: cfg.iota,
            alpha: h as f64, // info gain floored at 1 until data arrives
            lambda1,
            lambda2,
        };
        params.validate()?;
        let second_lambda = lambda2;
        let make = |first_lambda: f64, with_second: bool| -> Result<Vec<Moments>, KernelError> {
            (0..h)
                .map(|_| {
                    Ok(Moments {
                        first: Stream::new(first_lambda, d)?,
                        second: if with_second {
                            Some(Stream::new(second_lambda, d)?)
                        } else {
                            None
                        },
                    })
                })
                .collect()
        };
        let (first_lambda, with_second) = match cfg.variant {
            Variant::Bernstein => (lambda1, true),
            _ => (lambda, false),
        };
        Ok(LearnerState {
            cfg,
            params,
            upper: make(first_lambda, with_second)?,
            lower: make(first_lambda, with_second)?,
        })
    }

    fn moments(&self, bound: Bound) -> &[Moments] {
        match bound {
            Bound::Upper => &self.upper,
            Bound::Lower => &self.lower,
        }
    }

    fn streams(&self) -> impl Iterator<Item = (Bound, usize, Moment, &Stream)> + '_ {
        [Bound::Upper, Bound::Lower].into_iter().flat_map(move |bound| {
            self.moments(bound).iter().enumerate().flat_map(move |(h, m)| {
                std::iter::once((bound, h, Moment::First, &m.first)).chain(
                    m.second
                        .as_ref()
                        .map(|s| (bound, h, Moment::Second, s))
                        .into_iter(),
                )
            })
        })
    }

    /// Total width clamp events across every stream.
    pub fn clip_count(&self) -> u64 {
        self.streams().map(|(_, _, _, s)| s.gram.clip_count()).sum()
    }

    fn gain_summary(&self) -> GainSummary {
        let mut first_max = 0.0f64;
        let mut second_max = 0.0f64;
        let mut sum = 0.0;
        let mut count = 0usize;
        for (_, _, moment, s) in self.streams() {
            let g = s.gram.information_gain();
            sum += g;
            count += 1;
            match moment {
                Moment::First => first_max = first_max.max(g),
                Moment::Second => second_max = second_max.max(g),
            }
        }
        GainSummary { first_max, second_max, mean: sum / count.max(1) as f64 }
    }
}

struct GainSummary {
    first_max: f64,
    second_max: f64,
    mean: f64,
}

/// One episode's planning output: per-step value envelopes, the per-state
/// joint stage distributions, and everything the update phase needs to
/// reuse (query features and their widths).
pub struct EpisodePlan {
    pub episode: usize,
    pub beta: f64,
    pub betas: Option<BernsteinBetas>,
    pub alpha: f64,
    pub info_gain_mean: f64,
    pub steps: Vec<PlanStep>,
    pub lp_pivots: u64,
}

pub struct PlanStep {
    pub v_upper: Vec<f64>,
    pub v_lower: Vec<f64>,
    pub sigma: Vec<JointDistribution>,
    queries_upper: Vec<FeatureVector>,
    queries_lower: Vec<FeatureVector>,
    widths_upper: Vec<f64>,
    widths_lower: Vec<f64>,
}

/// Backward planning sweep for episode `t` (1-based). Mutates only the
/// Bernstein normalizer floor `alpha`, which is refreshed from the current
/// information gain.
pub fn plan_episode(
    state: &mut LearnerState,
    game: &KernelMixtureGame,
    episode: usize,
) -> Result<EpisodePlan, LearnerError> {
    let h_n = game.horizon;
    let s_n = game.n_states;
    let a_n = game.n_actions;
    let n_z = game.n_z();
    let gains = state.gain_summary();
    let (gamma1, gamma2) = match state.cfg.gamma_mode {
        GammaMode::Adaptive => (gains.first_max, gains.second_max),
        GammaMode::Fixed(g) => (g, g),
    };

    let (beta, betas) = match state.cfg.variant {
        Variant::Hoeffding => (beta_hoeffding(&state.params, gamma1), None),
        Variant::Misspecified => (beta_misspecified(&state.params, gamma1, episode), None),
        Variant::Bernstein => {
            // alpha = H / sqrt(gamma), info gain floored at one; stale
            // values of alpha remain baked into normalizers appended at
            // earlier episodes.
            state.params.alpha = h_n as f64 / gamma1.max(gamma2).max(1.0).sqrt();
            let b = beta_bernstein(&state.params, gamma1, gamma2, episode);
            (b.fine, Some(b))
        }
    };

    let h_cap = h_n as f64;
    let mut steps: Vec<PlanStep> = Vec::with_capacity(h_n);
    let mut v_upper_next = vec![0.0; s_n];
    let mut v_lower_next = vec![0.0; s_n];
    let mut lp_pivots = 0u64;
    for h in (0..h_n).rev() {
        let mut queries_upper = Vec::with_capacity(n_z);
        let mut queries_lower = Vec::with_capacity(n_z);
        for x in 0..s_n {
            for a in 0..a_n {
                for b in 0..a_n {
                    queries_upper.push(value_feature(game, x, a, b, &v_upper_next));
                    queries_lower.push(value_feature(game, x, a, b, &v_lower_next));
                }
            }
        }
        let up = state.upper[h].first.gram.query_batch(&queries_upper);
        let lo = state.lower[h].first.gram.query_batch(&queries_lower);

        let mut v_upper = vec![0.0; s_n];
        let mut v_lower = vec![0.0; s_n];
        let mut sigma = Vec::with_capacity(s_n);
        for x in 0..s_n {
            let mut q_up = vec![vec![0.0; a_n]; a_n];
            let mut q_lo = vec![vec![0.0; a_n]; a_n];
            for a in 0..a_n {
                for b in 0..a_n {
                    let z = game.z_index(x, a, b);
                    let r = game.reward(h, x, a, b);
                    q_up[a][b] = (r + up[z].0 + beta * up[z].1).clamp(-h_cap, h_cap);
                    q_lo[a][b] = (r + lo[z].0 - beta * lo[z].1).clamp(-h_cap, h_cap);
                }
            }
            let (joint, pivots) = find_cce_counted(&q_up, &q_lo)?;
            lp_pivots += pivots;
            let mut vu = 0.0;
            let mut vl = 0.0;
            for a in 0..a_n {
                for b in 0..a_n {
                    let p = joint.prob(a, b);
                    vu += p * q_up[a][b];
                    vl += p * q_lo[a][b];
                }
            }
            v_upper[x] = vu;
            v_lower[x] = vl;
            sigma.push(joint);
        }
        v_upper_next.copy_from_slice(&v_upper);
        v_lower_next.copy_from_slice(&v_lower);
        steps.push(PlanStep {
            v_upper,
            v_lower,
            sigma,
            queries_upper,
            queries_lower,
            widths_upper: up.iter().map(|&(_, w)| w).collect(),
            widths_lower: lo.iter().map(|&(_, w)| w).collect(),
        });
    }
    steps.reverse();
    Ok(EpisodePlan {
        episode,
        beta,
        betas,
        alpha: state.params.alpha,
        info_gain_mean: gains.mean,
        steps,
        lp_pivots,
    })
}

/// Rolls out one trajectory, sampling each step's joint action from the
/// planned stage distribution at the visited state.
pub fn execute_episode<R: Rng>(
    game: &KernelMixtureGame,
    plan: &EpisodePlan,
    rng: &mut R,
) -> Trajectory {
    let mut x = game.initial_state;
    let mut steps = Vec::with_capacity(game.horizon);
    for (h, plan_step) in plan.steps.iter().enumerate() {
        let (a, b) = plan_step.sigma[x].sample(rng);
        let reward = game.reward(h, x, a, b);
        let next = game.sample_next_state(h, x, a, b, rng);
        steps.push(TrajStep { state: x, row_action: a, col_action: b, reward, next_state: next });
        x = next;
    }
    Trajectory { steps }
}

/// Per-step squared normalizers recorded by a variance-weighted update.
#[derive(Debug, Clone, Copy)]
pub struct AppendDiag {
    pub step: usize,
    pub r_sq_upper: f64,
    pub r_sq_lower: f64,
}

/// Appends this episode's observations to every stream. For each step `h`
/// the target is the planned next-step value at the realized next state;
/// the feature is the corresponding value-weighted feature at the visited
/// triple, already computed during planning.
pub fn update_models(
    state: &mut LearnerState,
    game: &KernelMixtureGame,
    plan: &EpisodePlan,
    traj: &Trajectory,
) -> Result<Vec<AppendDiag>, LearnerError> {
    let h_n = game.horizon;
    let zero = vec![0.0; game.n_states];
    let mut diags = Vec::new();
    for (h, step) in traj.steps.iter().enumerate() {
        let z = game.z_index(step.state, step.row_action, step.col_action);
        let (v_up_next, v_lo_next) = if h + 1 < h_n {
            (&plan.steps[h + 1].v_upper, &plan.steps[h + 1].v_lower)
        } else {
            (&zero, &zero)
        };
        let plan_step = &plan.steps[h];

        match state.cfg.variant {
            Variant::Hoeffding | Variant::Misspecified => {
                append_plain(
                    &mut state.upper[h].first,
                    &plan_step.queries_upper[z],
                    plan_step.widths_upper[z],
                    v_up_next[step.next_state],
                )?;
                append_plain(
                    &mut state.lower[h].first,
                    &plan_step.queries_lower[z],
                    plan_step.widths_lower[z],
                    v_lo_next[step.next_state],
                )?;
            }
            Variant::Bernstein => {
                let betas = plan.betas.as_ref().expect("bernstein plan carries betas");
                let r_sq_upper = append_weighted(
                    &mut state.upper[h],
                    game,
                    step,
                    &plan_step.queries_upper[z],
                    plan_step.widths_upper[z],
                    v_up_next,
                    betas,
                    state.params.horizon,
                    plan.alpha,
                )?;
                let r_sq_lower = append_weighted(
                    &mut state.lower[h],
                    game,
                    step,
                    &plan_step.queries_lower[z],
                    plan_step.widths_lower[z],
                    v_lo_next,
                    betas,
                    state.params.horizon,
                    plan.alpha,
                )?;
                diags.push(AppendDiag { step: h, r_sq_upper, r_sq_lower });
            }
        }
    }
    Ok(diags)
}

fn append_plain(
    stream: &mut Stream,
    feature: &[f64],
    planned_width: f64,
    target: f64,
) -> Result<(), KernelError> {
    stream.sum_min_width_sq += (planned_width * planned_width).min(1.0);
    stream.gram.append(feature, target, 1.0)
}

/// Variance-weighted append: estimates the conditional standard deviation
/// of the next-step value at the visited triple from the current first and
/// second moment regressions, uses it as the new row's normalizer, and
/// feeds the squared value to the second-moment regression.
#[allow(clippy::too_many_arguments)]
fn append_weighted(
    moments: &mut Moments,
    game: &KernelMixtureGame,
    step: &TrajStep,
    phi_v: &FeatureVector,
    planned_width: f64,
    v_next: &[f64],
    betas: &BernsteinBetas,
    horizon: usize,
    alpha: f64,
) -> Result<f64, KernelError> {
    let v_next_sq: Vec<f64> = v_next.iter().map(|v| v * v).collect();
    let phi_v_sq = value_feature(game, step.state, step.row_action, step.col_action, &v_next_sq);
    let second = moments.second.as_mut().expect("bernstein streams carry second moments");
    let est = variance_estimate(
        &moments.first.gram,
        &second.gram,
        phi_v,
        &phi_v_sq,
        betas,
        horizon,
        alpha,
    );
    let r = est.r_sq.sqrt();
    let y = v_next[step.next_state];

    let normalized_width = planned_width / r;
    moments.first.sum_min_width_sq += (normalized_width * normalized_width).min(1.0);
    moments.first.gram.append(phi_v, y, r)?;

    second.sum_min_width_sq += (est.width_second * est.width_second).min(1.0);
    second.gram.append(&phi_v_sq, y * y, 1.0)?;
    Ok(est.r_sq)
}

/// Extracts the per-player Markov policies (marginals of the planned joint
/// distributions): row marginals for the maximizing player, column
/// marginals for the minimizing one.
pub fn extract_policies(
    game: &KernelMixtureGame,
    plan: &EpisodePlan,
) -> (MarkovPolicy, MarkovPolicy) {
    let mut row = MarkovPolicy::uniform(game.horizon, game.n_states, game.n_actions);
    let mut col = MarkovPolicy::uniform(game.horizon, game.n_states, game.n_actions);
    for (h, step) in plan.steps.iter().enumerate() {
        for (x, joint) in step.sigma.iter().enumerate() {
            row.set_dist(h, x, &joint.row_marginals());
            col.set_dist(h, x, &joint.col_marginals());
        }
    }
    (row, col)
}

// ---------------------------------------------------------------------------
// Episode records.

/// Per-episode record row (only episodes where exact evaluation ran).
#[derive(Debug, Clone, Copy)]
pub struct EpisodeRow {
    pub episode: usize,
    pub duality_gap: f64,
    pub cum_regret: f64,
    pub v_upper_1: f64,
    pub v_lower_1: f64,
    pub beta: f64,
    pub info_gain_mean: f64,
    pub clip_count: u64,
    /// `V^{*, nu_t}(x_1)`: exact best response value against the extracted
    /// column policy.
    pub best_vs_col: f64,
    /// `V^{pi_t, *}(x_1)`.
    pub row_vs_best: f64,
    pub lp_pivots: u64,
}

/// Final summary of one regression stream.
#[derive(Debug, Clone, Copy)]
pub struct StreamStat {
    pub bound: Bound,
    pub step: usize,
    pub moment: Moment,
    pub lambda: f64,
    pub entries: usize,
    pub info_gain: f64,
    pub sum_min_width_sq: f64,
}

/// One variance-weighted normalizer check point: the squared normalizer
/// used at (episode, step) against the exact conditional variance of the
/// planned next-step value under the true transition.
#[derive(Debug, Clone, Copy)]
pub struct VarianceSample {
    pub episode: usize,
    pub step: usize,
    pub bound: Bound,
    pub r_sq: f64,
    pub true_var: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct T0 {
    pub episode: usize,
    /// `V_upper - V_lower` at the initial state for that episode.
    pub envelope_gap: f64,
}

/// Everything a single run produces.
pub struct RegretRecord {
    pub variant: Variant,
    pub seed: u64,
    pub episodes: usize,
    pub rows: Vec<EpisodeRow>,
    pub streams: Vec<StreamStat>,
    pub variance_samples: Vec<VarianceSample>,
    pub t0: Option<T0>,
}

impl RegretRecord {
    /// Checks the internal consistency every record must satisfy:
    /// cumulative regret is the prefix sum of the per-row gaps, and gaps
    /// are nonnegative up to rounding.
    pub fn validate(&self) -> Result<(), LearnerError> {
        let mut cum = 0.0;
        let mut last_episode = 0;
        for row in &self.rows {
            if row.episode <= last_episode {
                return Err(LearnerError::BadConfig("record episodes not increasing".into()));
            }
            last_episode = row.episode;
            if row.duality_gap < -1e-9 {
                return Err(LearnerError::BadConfig(format!(
                    "negative duality gap {} at episode {}",
                    row.duality_gap, row.episode
                )));
            }
            cum += row.duality_gap;
            if (cum - row.cum_regret).abs() > 1e-6 * (1.0 + cum.abs()) {
                return Err(LearnerError::BadConfig(format!(
                    "cumulative regret mismatch at episode {}",
                    row.episode
                )));
            }
        }
        Ok(())
    }
}

/// Picks the episode minimizing the planned value envelope `V_upper(x_1) -
/// V_lower(x_1)`; ties resolve to the earliest episode.
pub fn select_t0(envelope_gaps: &[(usize, f64)]) -> Option<T0> {
    let mut best: Option<T0> = None;
    for &(episode, gap) in envelope_gaps {
        let better = match best {
            None => true,
            Some(b) => gap < b.envelope_gap,
        };
        if better {
            best = Some(T0 { episode, envelope_gap: gap });
        }
    }
    best
}

/// Runs one seed end to end and returns its record. Fully deterministic:
/// all randomness comes from the given seed through a counter-based
/// generator.
pub fn run(
    game: &KernelMixtureGame,
    cfg: &LearnerConfig,
    seed: u64,
) -> Result<RegretRecord, LearnerError> {
    let mut state = LearnerState::new(game, cfg.clone())?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x1 = game.initial_state;
    let episodes = cfg.episodes;

    let mut rows = Vec::new();
    let mut variance_samples = Vec::new();
    let mut envelope_gaps = Vec::with_capacity(episodes);
    let mut cum_regret = 0.0;

    for t in 1..=episodes {
        let plan = plan_episode(&mut state, game, t)?;
        let v_upper_1 = plan.steps[0].v_upper[x1];
        let v_lower_1 = plan.steps[0].v_lower[x1];
        envelope_gaps.push((t, v_upper_1 - v_lower_1));

        let evaluate = t % cfg.eval_every == 0 || t == 1 || t == episodes;
        if evaluate {
            let (row_policy, col_policy) = extract_policies(game, &plan);
            let report = duality_gap(game, &row_policy, &col_policy)?;
            cum_regret += report.gap();
            rows.push(EpisodeRow {
                episode: t,
                duality_gap: report.gap(),
                cum_regret,
                v_upper_1,
                v_lower_1,
                beta: plan.beta,
                info_gain_mean: plan.info_gain_mean,
                clip_count: state.clip_count(),
                best_vs_col: report.best_vs_col,
                row_vs_best: report.row_vs_best,
                lp_pivots: plan.lp_pivots,
            });
        }

        let traj = execute_episode(game, &plan, &mut rng);
        debug_assert!(traj.validate(game).is_ok());
        let diags = update_models(&mut state, game, &plan, &traj)?;

        // The normalizer audit needs the exact conditional variance of the
        // planned next-step values under the true dynamics.
        for diag in diags {
            let step = traj.steps[diag.step];
            let p = game.transition_distribution(
                diag.step,
                step.state,
                step.row_action,
                step.col_action,
            );
            let zero = vec![0.0; game.n_states];
            let (vu, vl) = if diag.step + 1 < game.horizon {
                (&plan.steps[diag.step + 1].v_upper, &plan.steps[diag.step + 1].v_lower)
            } else {
                (&zero, &zero)
            };
            for (bound, values, r_sq) in [
                (Bound::Upper, vu, diag.r_sq_upper),
                (Bound::Lower, vl, diag.r_sq_lower),
            ] {
                let mean: f64 = p.iter().zip(values).map(|(pi, vi)| pi * vi).sum();
                let second: f64 = p.iter().zip(values).map(|(pi, vi)| pi * vi * vi).sum();
                variance_samples.push(VarianceSample {
                    episode: t,
                    step: diag.step,
                    bound,
                    r_sq,
                    true_var: second - mean * mean,
                });
            }
        }
    }

    let streams = state
        .streams()
        .map(|(bound, step, moment, s)| StreamStat {
            bound,
            step,
            moment,
            lambda: s.gram.lambda(),
            entries: s.gram.len(),
            info_gain: s.gram.information_gain(),
            sum_min_width_sq: s.sum_min_width_sq,
        })
        .collect();

    let record = RegretRecord {
        variant: cfg.variant,
        seed,
        episodes,
        rows,
        streams,
        variance_samples,
        t0: select_t0(&envelope_gaps),
    };
    record.validate()?;
    Ok(record)
}
