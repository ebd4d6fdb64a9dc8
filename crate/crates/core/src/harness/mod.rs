//! Experiment harness: TOML configuration, deterministic seed schedules,
//! parallel multi-seed execution, and plain-text record serialization.
//!
//! A config file describes one experiment: the game (a file path or
//! generation parameters), the run settings, and the output directory.
//! Running it produces, per seed, a regret record CSV plus diagnostic
//! side files, and a summary aggregating checkpoints across seeds. All
//! floats are written in Rust's shortest round-trip decimal form, so a
//! rerun of the same config is byte-identical file for file.

pub mod checks;

use crate::game::{
    generate_random_game, read_game, write_game, GameConfig, GameError, KernelMixtureGame,
};
use crate::learner::{
    self, EpisodeRow, GammaMode, LearnerConfig, LearnerError, RegretRecord, StreamStat, Variant,
    VarianceSample,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Deserialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CONFIG_SCHEMA: &str = "kmg-exp-v1";

pub const RECORD_HEADER: &str =
    "episode,duality_gap,cum_regret,vbar1,vlow1,beta_t,info_gain_mean,clip_count";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    BadConfig(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("input parse error: {0}")]
    Parse(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

// ---------------------------------------------------------------------------
// Configuration schema.

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(default)]
    pub game: GameSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Game source: a `kmg-v1` file when `path` is set, otherwise generation
/// parameters (seeded from the master seed, stream 0).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSpec {
    pub path: Option<PathBuf>,
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub feature_dim: usize,
    pub dirichlet_concentration: f64,
    pub iota: f64,
    pub initial_state: usize,
}

impl Default for GameSpec {
    fn default() -> Self {
        GameSpec {
            path: None,
            n_states: 3,
            n_actions: 2,
            horizon: 3,
            feature_dim: 6,
            dirichlet_concentration: 1.0,
            iota: 0.0,
            initial_state: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub variant: String,
    pub episodes: usize,
    pub delta: f64,
    pub beta_scale: f64,
    /// `"adaptive"` or a fixed nonnegative number.
    pub gamma: GammaSpec,
    pub master_seed: u64,
    pub n_seeds: usize,
    pub eval_every: usize,
    /// Bias budget handed to the misspecification-aware radius; defaults
    /// to the game's own mixing weight.
    pub iota: Option<f64>,
    pub d_eff: Option<f64>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            variant: "hoeffding".into(),
            episodes: 100,
            delta: 0.05,
            beta_scale: 1.0,
            gamma: GammaSpec::default(),
            master_seed: 0,
            n_seeds: 1,
            eval_every: 1,
            iota: None,
            d_eff: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Named(String),
    Fixed(f64),
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec::Named("adaptive".into())
    }
}

impl GammaSpec {
    fn to_mode(&self) -> Result<GammaMode, HarnessError> {
        match self {
            GammaSpec::Named(s) if s == "adaptive" => Ok(GammaMode::Adaptive),
            GammaSpec::Named(s) => {
                Err(HarnessError::BadConfig(format!("unknown gamma mode {s:?}")))
            }
            GammaSpec::Fixed(v) if *v >= 0.0 => Ok(GammaMode::Fixed(*v)),
            GammaSpec::Fixed(v) => {
                Err(HarnessError::BadConfig(format!("fixed gamma {v} is negative")))
            }
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let cfg: ExperimentConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema != CONFIG_SCHEMA {
            return Err(HarnessError::BadConfig(format!(
                "unsupported schema {:?} (expected {:?})",
                self.schema, CONFIG_SCHEMA
            )));
        }
        if self.run.n_seeds == 0 {
            return Err(HarnessError::BadConfig("n_seeds must be at least 1".into()));
        }
        if Variant::parse(&self.run.variant).is_none() {
            return Err(HarnessError::BadConfig(format!(
                "unknown variant {:?} (expected hoeffding, bernstein, or misspecified)",
                self.run.variant
            )));
        }
        self.run.gamma.to_mode()?;
        Ok(())
    }

    /// The game this experiment runs on: loaded from disk when a path is
    /// configured, otherwise generated from seed stream 0 of the master
    /// seed.
    pub fn resolve_game(&self) -> Result<KernelMixtureGame, HarnessError> {
        if let Some(path) = &self.game.path {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            return Ok(read_game(&text)?);
        }
        let g = &self.game;
        let mut config = GameConfig::new(g.n_states, g.n_actions, g.horizon, g.feature_dim);
        config.dirichlet_concentration = g.dirichlet_concentration;
        config.iota = g.iota;
        config.initial_state = g.initial_state;
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(self.run.master_seed, 0));
        Ok(generate_random_game(&config, &mut rng)?)
    }

    pub fn learner_config(&self, game: &KernelMixtureGame) -> Result<LearnerConfig, HarnessError> {
        let variant = Variant::parse(&self.run.variant)
            .ok_or_else(|| HarnessError::BadConfig(format!("unknown variant {:?}", self.run.variant)))?;
        let iota = self.run.iota.unwrap_or_else(|| game.iota());
        Ok(LearnerConfig {
            variant,
            episodes: self.run.episodes,
            delta: self.run.delta,
            beta_scale: self.run.beta_scale,
            gamma_mode: self.run.gamma.to_mode()?,
            iota,
            eval_every: self.run.eval_every,
            d_eff: self.run.d_eff,
        })
    }
}

// ---------------------------------------------------------------------------
// Seed schedule.

/// Stream `index` of a master seed: a splitmix64 finalizer over
/// golden-ratio strides. Stream 0 seeds game generation; stream `1 + i`
/// seeds run `i`. Distinct (master, index) pairs give independent-looking
/// seeds while staying reproducible.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Record serialization.

pub fn record_csv(rows: &[EpisodeRow]) -> String {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.episode,
            r.duality_gap,
            r.cum_regret,
            r.v_upper_1,
            r.v_lower_1,
            r.beta,
            r.info_gain_mean,
            r.clip_count
        )
        .unwrap();
    }
    out
}

/// Exact one-sided best response values and LP effort per evaluated
/// episode; everything the optimism audit needs beyond the main record.
pub fn diag_csv(rows: &[EpisodeRow]) -> String {
    let mut out = String::from("episode,best_vs_col,row_vs_best,lp_pivots\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.episode, r.best_vs_col, r.row_vs_best, r.lp_pivots)
            .unwrap();
    }
    out
}

pub fn streams_csv(streams: &[StreamStat]) -> String {
    let mut out = String::from("bound,step,moment,lambda,entries,info_gain,sum_min_width_sq\n");
    for s in streams {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.bound.name(),
            s.step,
            s.moment.name(),
            s.lambda,
            s.entries,
            s.info_gain,
            s.sum_min_width_sq
        )
        .unwrap();
    }
    out
}

pub fn variance_csv(samples: &[VarianceSample]) -> String {
    let mut out = String::from("episode,step,bound,r_sq,true_var\n");
    for v in samples {
        writeln!(out, "{},{},{},{},{}", v.episode, v.step, v.bound.name(), v.r_sq, v.true_var)
            .unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Aggregation.

pub struct SeedOutput {
    pub seed_index: usize,
    pub seed: u64,
    pub record: RegretRecord,
}

#[derive(Debug, Clone, Copy)]
pub struct Checkpoint {
    pub episode: usize,
    pub cum_regret_mean: f64,
    pub cum_regret_stderr: f64,
}

#[derive(Debug, Clone)]
pub struct SummaryStats {
    pub checkpoints: Vec<Checkpoint>,
    pub final_gap_mean: f64,
    pub final_gap_stderr: f64,
    pub final_cum_mean: f64,
    pub final_cum_stderr: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Quarter-point episodes actually present in the evaluated rows.
fn checkpoint_episodes(rows: &[EpisodeRow], episodes: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for q in 1..=4 {
        let target = episodes * q / 4;
        if let Some(e) = rows.iter().map(|r| r.episode).filter(|&e| e <= target).last() {
            if !out.contains(&e) {
                out.push(e);
            }
        }
    }
    out
}

pub fn summarize(outputs: &[SeedOutput], episodes: usize) -> SummaryStats {
    let at = |episode: usize| -> Vec<f64> {
        outputs
            .iter()
            .filter_map(|o| {
                o.record.rows.iter().find(|r| r.episode == episode).map(|r| r.cum_regret)
            })
            .collect()
    };
    let checkpoints = checkpoint_episodes(&outputs[0].record.rows, episodes)
        .into_iter()
        .map(|episode| {
            let (m, s) = mean_stderr(&at(episode));
            Checkpoint { episode, cum_regret_mean: m, cum_regret_stderr: s }
        })
        .collect();
    let finals: Vec<&EpisodeRow> =
        outputs.iter().filter_map(|o| o.record.rows.last()).collect();
    let (final_gap_mean, final_gap_stderr) = if finals.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_stderr(&finals.iter().map(|r| r.duality_gap).collect::<Vec<_>>())
    };
    let (final_cum_mean, final_cum_stderr) = if finals.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_stderr(&finals.iter().map(|r| r.cum_regret).collect::<Vec<_>>())
    };
    SummaryStats {
        checkpoints,
        final_gap_mean,
        final_gap_stderr,
        final_cum_mean,
        final_cum_stderr,
    }
}

pub fn summary_text(
    cfg: &ExperimentConfig,
    game: &KernelMixtureGame,
    outputs: &[SeedOutput],
) -> String {
    let stats = summarize(outputs, cfg.run.episodes);
    let mut out = String::from("kmg-summary-v1\n");
    writeln!(out, "variant {}", cfg.run.variant).unwrap();
    writeln!(out, "episodes {}", cfg.run.episodes).unwrap();
    writeln!(out, "n_seeds {}", cfg.run.n_seeds).unwrap();
    writeln!(out, "master_seed {}", cfg.run.master_seed).unwrap();
    writeln!(out, "eval_every {}", cfg.run.eval_every).unwrap();
    writeln!(out, "beta_scale {}", cfg.run.beta_scale).unwrap();
    writeln!(
        out,
        "game states {} actions {} horizon {} dim {} iota {}",
        game.n_states, game.n_actions, game.horizon, game.feature_dim, game.iota()
    )
    .unwrap();
    for c in &stats.checkpoints {
        writeln!(
            out,
            "checkpoint {} cum_regret_mean {} cum_regret_stderr {}",
            c.episode, c.cum_regret_mean, c.cum_regret_stderr
        )
        .unwrap();
    }
    writeln!(out, "final_gap_mean {} final_gap_stderr {}", stats.final_gap_mean, stats.final_gap_stderr)
        .unwrap();
    writeln!(out, "final_cum_mean {} final_cum_stderr {}", stats.final_cum_mean, stats.final_cum_stderr)
        .unwrap();
    for o in outputs {
        let (final_cum, clips) = o
            .record
            .rows
            .last()
            .map_or((f64::NAN, 0), |r| (r.cum_regret, r.clip_count));
        let (t0, t0_gap) = o
            .record
            .t0
            .map(|t| (t.episode, t.envelope_gap))
            .unwrap_or((0, f64::NAN));
        writeln!(
            out,
            "seed_index {} seed {} t0 {} t0_envelope_gap {} final_cum_regret {} clip_count {}",
            o.seed_index, o.seed, t0, t0_gap, final_cum, clips
        )
        .unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Experiment execution.

pub struct ExperimentOutcome {
    pub game: KernelMixtureGame,
    pub outputs: Vec<SeedOutput>,
    pub files: Vec<PathBuf>,
    pub out_dir: PathBuf,
}

fn write_file(files: &mut Vec<PathBuf>, path: PathBuf, content: &str) -> Result<(), HarnessError> {
    fs::write(&path, content).map_err(io_err(&path))?;
    files.push(path);
    Ok(())
}

/// Runs every seed of an experiment and writes all output files. Seeds run
/// in parallel; each is a pure function of (game, config, seed), so the
/// resulting files do not depend on the worker count.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: Option<usize>,
) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    let game = cfg.resolve_game()?;
    let learner_cfg = cfg.learner_config(&game)?;
    let master = cfg.run.master_seed;

    let indices: Vec<usize> = (0..cfg.run.n_seeds).collect();
    let body = || -> Vec<Result<SeedOutput, LearnerError>> {
        indices
            .par_iter()
            .map(|&i| {
                let seed = derive_seed(master, 1 + i as u64);
                learner::run(&game, &learner_cfg, seed)
                    .map(|record| SeedOutput { seed_index: i, seed, record })
            })
            .collect()
    };
    let results = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?
            .install(body),
        None => body(),
    };
    let mut outputs = Vec::with_capacity(results.len());
    for r in results {
        outputs.push(r?);
    }

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut files = Vec::new();
    write_file(&mut files, out_dir.join("game.kmg"), &write_game(&game))?;
    for o in &outputs {
        let tag = format!("seed{:03}", o.seed_index);
        write_file(&mut files, out_dir.join(format!("{tag}_record.csv")), &record_csv(&o.record.rows))?;
        write_file(&mut files, out_dir.join(format!("{tag}_diag.csv")), &diag_csv(&o.record.rows))?;
        write_file(
            &mut files,
            out_dir.join(format!("{tag}_streams.csv")),
            &streams_csv(&o.record.streams),
        )?;
        if learner_cfg.variant == Variant::Bernstein {
            write_file(
                &mut files,
                out_dir.join(format!("{tag}_variance.csv")),
                &variance_csv(&o.record.variance_samples),
            )?;
        }
    }
    write_file(&mut files, out_dir.join("summary.txt"), &summary_text(cfg, &game, &outputs))?;
    Ok(ExperimentOutcome { game, outputs, files, out_dir: out_dir.to_path_buf() })
}

// ---------------------------------------------------------------------------
// Sweeps.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Episodes,
    BetaScale,
    /// Game misspecification weight; the learner's assumed bias follows it
    /// unless the config pins `run.iota` explicitly.
    Iota,
    FeatureDim,
    Horizon,
    Delta,
    EvalEvery,
    Variant,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<SweepAxis> {
        match s {
            "episodes" | "T" => Some(SweepAxis::Episodes),
            "beta_scale" => Some(SweepAxis::BetaScale),
            "iota" => Some(SweepAxis::Iota),
            "feature_dim" | "d" => Some(SweepAxis::FeatureDim),
            "horizon" | "H" => Some(SweepAxis::Horizon),
            "delta" => Some(SweepAxis::Delta),
            "eval_every" => Some(SweepAxis::EvalEvery),
            "variant" => Some(SweepAxis::Variant),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Episodes => "episodes",
            SweepAxis::BetaScale => "beta_scale",
            SweepAxis::Iota => "iota",
            SweepAxis::FeatureDim => "feature_dim",
            SweepAxis::Horizon => "horizon",
            SweepAxis::Delta => "delta",
            SweepAxis::EvalEvery => "eval_every",
            SweepAxis::Variant => "variant",
        }
    }

    fn touches_game(&self) -> bool {
        matches!(self, SweepAxis::Iota | SweepAxis::FeatureDim | SweepAxis::Horizon)
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig, value: &str) -> Result<(), HarnessError> {
        if self.touches_game() && cfg.game.path.is_some() {
            return Err(HarnessError::BadConfig(format!(
                "axis {} regenerates the game and cannot be combined with a game path",
                self.name()
            )));
        }
        let bad_num =
            |v: &str| HarnessError::BadConfig(format!("bad value {v:?} for axis {}", self.name()));
        match self {
            SweepAxis::Episodes => cfg.run.episodes = value.parse().map_err(|_| bad_num(value))?,
            SweepAxis::BetaScale => {
                cfg.run.beta_scale = value.parse().map_err(|_| bad_num(value))?
            }
            SweepAxis::Iota => {
                cfg.game.iota = value.parse().map_err(|_| bad_num(value))?;
                cfg.run.iota = None;
            }
            SweepAxis::FeatureDim => {
                cfg.game.feature_dim = value.parse().map_err(|_| bad_num(value))?
            }
            SweepAxis::Horizon => cfg.game.horizon = value.parse().map_err(|_| bad_num(value))?,
            SweepAxis::Delta => cfg.run.delta = value.parse().map_err(|_| bad_num(value))?,
            SweepAxis::EvalEvery => {
                cfg.run.eval_every = value.parse().map_err(|_| bad_num(value))?
            }
            SweepAxis::Variant => {
                if Variant::parse(value).is_none() {
                    return Err(HarnessError::BadConfig(format!("unknown variant {value:?}")));
                }
                cfg.run.variant = value.to_string();
            }
        }
        Ok(())
    }
}

/// Runs one experiment per axis value, each into its own subdirectory of
/// `out_root`, and returns the outcomes in value order.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    out_root: &Path,
    workers: Option<usize>,
) -> Result<Vec<(String, ExperimentOutcome)>, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::BadConfig("sweep needs at least one value".into()));
    }
    let mut out = Vec::with_capacity(values.len());
    for value in values {
        let mut point = cfg.clone();
        axis.apply(&mut point, value)?;
        point.validate()?;
        let dir = out_root.join(format!("{}_{}", axis.name(), value));
        let outcome = run_experiment(&point, &dir, workers)?;
        out.push((value.clone(), outcome));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Stage-game payoff files for the standalone equilibrium command.

/// Parses a payoff pair file: one dimension token `n`, then `n * n` floats
/// for the upper table, then `n * n` for the lower, whitespace separated.
pub fn parse_payoff_pair(text: &str) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), HarnessError> {
    let mut tokens = text.split_whitespace();
    let n: usize = tokens
        .next()
        .ok_or_else(|| HarnessError::Parse("empty payoff file".into()))?
        .parse()
        .map_err(|_| HarnessError::Parse("first token must be the dimension".into()))?;
    if n == 0 {
        return Err(HarnessError::Parse("dimension must be at least 1".into()));
    }
    let mut values = Vec::with_capacity(2 * n * n);
    for tok in tokens {
        let v: f64 =
            tok.parse().map_err(|_| HarnessError::Parse(format!("bad float {tok:?}")))?;
        if !v.is_finite() {
            return Err(HarnessError::Parse(format!("non-finite payoff {tok:?}")));
        }
        values.push(v);
    }
    if values.len() != 2 * n * n {
        return Err(HarnessError::Parse(format!(
            "expected {} payoffs for dimension {n}, got {}",
            2 * n * n,
            values.len()
        )));
    }
    let table = |offset: usize| -> Vec<Vec<f64>> {
        (0..n).map(|i| values[offset + i * n..offset + (i + 1) * n].to_vec()).collect()
    };
    Ok((table(0), table(n * n)))
}

pub fn format_joint(joint: &crate::equilibrium::JointDistribution) -> String {
    let mut out = format!("{}\n", joint.n);
    for i in 0..joint.n {
        let row: Vec<String> = (0..joint.n).map(|j| format!("{}", joint.prob(i, j))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
