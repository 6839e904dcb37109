//! Experiment configuration and the pipeline stages behind the CLI.
//!
//! A run is described by one TOML document. Each stage writes its artifacts
//! under `output.dir` and nowhere else. Files that must be reproducible
//! (sequence, learning curve, archives, reports) never contain wall-clock
//! values; timings go to `timing.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{
    ga_populations, greedy_sequence, init_net, train_integrated_observed, train_rl_observed, write_curve_csv,
    CurvePoint, IntegratedConfig, PpoConfig, PretrainConfig, TrainOutcome,
};
use crate::channel::ChannelSpec;
use crate::codec::Construction;
use crate::construction::{code_from_sequence, dega_construct, dega_reliability, NestedSequence};
use crate::error::{Error, Result};
use crate::evaluator::{
    bler_sweep, find_esn0_at_bler, reward, write_sweep_csv, DecoderKind, RewardCache, RewardSpec, SweepRow,
};
use crate::genetic::{write_archive, GaConfig, GaPopulation};
use crate::mdp::{Environment, NestedCodeEnv, RewardSchedule, TargetSetEnv};
use crate::neural::{load_checkpoint, save_checkpoint, Adam, PolicyValueNet};

pub const LEARNING_CURVE_FILE: &str = "learning_curve.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const SEQUENCE_FILE: &str = "sequence.txt";
pub const FINAL_CHECKPOINT_FILE: &str = "final.ckpt";
pub const PRETRAINED_CHECKPOINT_FILE: &str = "pretrained.ckpt";
pub const GA_ARCHIVE_FILE: &str = "ga_archive.txt";
pub const RESOLVED_CONFIG_FILE: &str = "config.toml";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const COMPARISON_PLOT_FILE: &str = "comparison_plot.dat";
pub const SWEEP_FILE: &str = "bler_sweep.csv";

pub const TIMING_CSV_HEADER: &str = "timestep,wall_seconds,simulations,trials";
pub const COMPARISON_CSV_HEADER: &str = "K,esn0_learned_db,esn0_baseline_db,delta_db,status";

/// Bracket half-width around the configured EsN0 for bisections, in dB.
const BRACKET_HALF_WIDTH_DB: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub code: CodeSection,
    pub channel: ChannelSection,
    #[serde(default)]
    pub evaluator: EvaluatorSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    pub n: usize,
    #[serde(default = "default_list_size")]
    pub list_size: usize,
    #[serde(default = "default_decoder")]
    pub decoder: DecoderKind,
}

fn default_list_size() -> usize {
    8
}

fn default_decoder() -> DecoderKind {
    DecoderKind::SclGenie
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// Default operating point, also the DE/GA design SNR.
    pub esn0_db: f64,
    #[serde(default)]
    pub seed: u64,
    /// Per-K operating points overriding `esn0_db`; keys are K values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub esn0_by_k: BTreeMap<String, f64>,
    /// When set, every scheduled K without an explicit entry is simulated at
    /// the EsN0 where its DE/GA code reaches this BLER.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate_bler: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorSection {
    pub error_events: u64,
    pub max_trials: u64,
    pub reward_schedule: KSchedule,
    /// BLER at which `compare` measures EsN0.
    pub target_bler: f64,
    /// K values reported by `compare`; defaults to the reward schedule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare_ks: Option<Vec<usize>>,
    pub cache: bool,
}

impl Default for EvaluatorSection {
    fn default() -> Self {
        Self {
            error_events: 1000,
            max_trials: 10_000_000,
            reward_schedule: KSchedule::All,
            target_bler: 1e-2,
            compare_ks: None,
            cache: true,
        }
    }
}

/// Information lengths that earn a simulated reward.
///
/// Written as `"all"`, `{ stride = 4 }` or an explicit list `[4, 8]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "ScheduleRepr")]
pub enum KSchedule {
    All,
    Stride(usize),
    List(Vec<usize>),
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ScheduleRepr {
    Keyword(String),
    Stride {
        stride: usize,
    },
    List(Vec<usize>),
}

impl TryFrom<ScheduleRepr> for KSchedule {
    type Error = String;

    fn try_from(r: ScheduleRepr) -> std::result::Result<Self, String> {
        match r {
            ScheduleRepr::Keyword(k) if k == "all" => Ok(KSchedule::All),
            ScheduleRepr::Keyword(k) => Err(format!("unknown reward_schedule {k:?}, expected \"all\"")),
            ScheduleRepr::Stride { stride: 0 } => Err("reward_schedule stride must be at least 1".into()),
            ScheduleRepr::Stride { stride } => Ok(KSchedule::Stride(stride)),
            ScheduleRepr::List(ks) => Ok(KSchedule::List(ks)),
        }
    }
}

impl From<KSchedule> for ScheduleRepr {
    fn from(s: KSchedule) -> Self {
        match s {
            KSchedule::All => ScheduleRepr::Keyword("all".into()),
            KSchedule::Stride(stride) => ScheduleRepr::Stride { stride },
            KSchedule::List(ks) => ScheduleRepr::List(ks),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rl,
    Integrated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvironmentKind {
    /// Nested polar-code construction with Monte-Carlo rewards.
    #[serde(rename = "polar")]
    Polar,
    /// Synthetic target-set environment with a known optimum.
    #[serde(rename = "target-set")]
    TargetSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: Mode,
    pub environment: EnvironmentKind,
    /// Hidden width; defaults to 1024 at N = 256 and 2N otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    /// K values given a GA population; defaults to the reward schedule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ga_ks: Option<Vec<usize>>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { mode: Mode::Rl, environment: EnvironmentKind::Polar, hidden: None, ga_ks: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs/default") }
    }
}

impl ExperimentConfig {
    /// Parse and validate. Syntax errors carry line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.code.n;
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Config(format!("code.n = {n} must be a power of two >= 2")));
        }
        self.base_spec()?;
        self.ppo.validate()?;
        self.ga.validate()?;
        if let Some(t) = self.channel.calibrate_bler {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("channel.calibrate_bler = {t} must lie in (0, 1)")));
            }
        }
        if !(self.evaluator.target_bler > 0.0 && self.evaluator.target_bler < 1.0) {
            return Err(Error::Config(format!(
                "evaluator.target_bler = {} must lie in (0, 1)",
                self.evaluator.target_bler
            )));
        }
        for (key, &x) in &self.channel.esn0_by_k {
            let k: usize = key
                .parse()
                .map_err(|_| Error::Config(format!("channel.esn0_by_k: key {key:?} is not an integer")))?;
            if k > n || !x.is_finite() {
                return Err(Error::Config(format!("channel.esn0_by_k: bad entry {key} = {x}")));
            }
        }
        let check = |what: &str, ks: &[usize]| match ks.iter().find(|&&k| k > n) {
            Some(k) => Err(Error::Config(format!("{what}: K = {k} exceeds N = {n}"))),
            None => Ok(()),
        };
        if let KSchedule::List(ks) = &self.evaluator.reward_schedule {
            check("evaluator.reward_schedule", ks)?;
        }
        if let Some(ks) = &self.evaluator.compare_ks {
            check("evaluator.compare_ks", ks)?;
        }
        if let Some(ks) = &self.train.ga_ks {
            check("train.ga_ks", ks)?;
        }
        if self.train.hidden == Some(0) {
            return Err(Error::Config("train.hidden must be at least 1".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.channel.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.channel.seed = seed;
    }

    pub fn hidden(&self) -> usize {
        self.train.hidden.unwrap_or_else(|| PolicyValueNet::default_hidden(self.code.n))
    }

    /// Reward spec at the default operating point.
    pub fn base_spec(&self) -> Result<RewardSpec> {
        RewardSpec::new(
            self.code.decoder,
            self.code.list_size,
            ChannelSpec::new(self.channel.esn0_db, self.channel.seed)?,
            self.evaluator.error_events,
            self.evaluator.max_trials,
        )
    }

    pub fn esn0_by_k(&self) -> BTreeMap<usize, f64> {
        self.channel.esn0_by_k.iter().filter_map(|(k, &x)| Some((k.parse().ok()?, x))).collect()
    }

    pub fn esn0_at(&self, k: usize) -> f64 {
        self.channel.esn0_by_k.get(&k.to_string()).copied().unwrap_or(self.channel.esn0_db)
    }

    pub fn spec_at(&self, k: usize) -> Result<RewardSpec> {
        Ok(self.base_spec()?.with_esn0(self.esn0_at(k)))
    }

    /// Scheduled K values, ascending and distinct.
    pub fn scheduled_ks(&self) -> Vec<usize> {
        let n = self.code.n;
        let mut ks: Vec<usize> = match &self.evaluator.reward_schedule {
            KSchedule::All => (1..n).collect(),
            KSchedule::Stride(s) => (*s..n).step_by(*s).collect(),
            KSchedule::List(ks) => ks.clone(),
        };
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    pub fn schedule(&self) -> Result<RewardSchedule> {
        Ok(RewardSchedule { spec: self.base_spec()?, ks: self.scheduled_ks(), esn0_by_k: self.esn0_by_k() })
    }

    pub fn ga_ks(&self) -> Vec<usize> {
        self.train.ga_ks.clone().unwrap_or_else(|| self.scheduled_ks())
    }

    pub fn compare_ks(&self) -> Vec<usize> {
        let mut ks = self.evaluator.compare_ks.clone().unwrap_or_else(|| self.scheduled_ks());
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    pub fn integrated(&self) -> IntegratedConfig {
        let ga_ks = match self.train.mode {
            Mode::Rl => Vec::new(),
            Mode::Integrated => self.ga_ks(),
        };
        IntegratedConfig { ppo: self.ppo.clone(), ga: self.ga.clone(), ga_ks, pretrain: self.pretrain.clone() }
    }

    fn output_file(&self, name: &str) -> PathBuf {
        self.output.dir.join(name)
    }
}

/// Whether reward simulation can be skipped for `k` because every word
/// fits in the list.
fn genie_trivial(spec: &RewardSpec, k: usize) -> bool {
    spec.decoder == DecoderKind::SclGenie && k < usize::BITS as usize && (1usize << k) <= spec.list_size
}

/// EsN0 at which the DE/GA code of each scheduled K reaches `target`.
///
/// Explicit `esn0_by_k` entries are kept, and K values whose reward is
/// identically zero under genie decoding are skipped.
pub fn calibrate_esn0(cfg: &ExperimentConfig, target: f64) -> Result<BTreeMap<usize, f64>> {
    let explicit = cfg.esn0_by_k();
    let base = cfg.base_spec()?;
    let x0 = cfg.channel.esn0_db;
    let mut out = explicit.clone();
    for k in cfg.scheduled_ks() {
        if k == 0 || explicit.contains_key(&k) || genie_trivial(&base, k) {
            continue;
        }
        let c = dega_construct(cfg.code.n, k, x0)?;
        let x = find_esn0_at_bler(&c, &base, target, (x0 - BRACKET_HALF_WIDTH_DB, x0 + BRACKET_HALF_WIDTH_DB))?;
        out.insert(k, x);
    }
    Ok(out)
}

/// Copy of `cfg` with calibrated per-K operating points filled in.
pub fn resolve(cfg: &ExperimentConfig) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    if let Some(target) = cfg.channel.calibrate_bler {
        out.channel.esn0_by_k = calibrate_esn0(cfg, target)?.into_iter().map(|(k, x)| (k.to_string(), x)).collect();
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Training progress reported after every PPO update.
#[derive(Clone, Debug)]
pub struct Progress<'a> {
    pub timestep: u64,
    pub total_timesteps: u64,
    pub new_points: &'a [CurvePoint],
    pub simulations: u64,
}

/// What `run_train` produced.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub config: ExperimentConfig,
    pub sequence: NestedSequence,
    pub curve: Vec<CurvePoint>,
    pub populations: Vec<GaPopulation>,
    pub simulations: u64,
    pub trials: u64,
    pub cache_hits: u64,
}

enum Env {
    Polar(NestedCodeEnv),
    TargetSet(TargetSetEnv),
}

impl Env {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(match cfg.train.environment {
            EnvironmentKind::Polar => {
                let cache = if cfg.evaluator.cache { RewardCache::new() } else { RewardCache::disabled() };
                Env::Polar(NestedCodeEnv::new(cfg.code.n, cfg.schedule()?, Arc::new(cache))?)
            }
            EnvironmentKind::TargetSet => Env::TargetSet(TargetSetEnv::standard(cfg.code.n)?),
        })
    }

    fn as_dyn(&self) -> &dyn Environment {
        match self {
            Env::Polar(e) => e,
            Env::TargetSet(e) => e,
        }
    }

    fn cache(&self) -> Option<&RewardCache> {
        match self {
            Env::Polar(e) => Some(e.cache()),
            Env::TargetSet(_) => None,
        }
    }

    /// GA fitness: the reward of a code at its own K, scheduled or not.
    fn fitness(&self, cfg: &ExperimentConfig, c: &Construction) -> Result<f64> {
        match self {
            Env::Polar(e) => reward(c, &cfg.spec_at(c.info_len())?, e.cache()),
            Env::TargetSet(e) => Ok(e.overlap(c) as f64),
        }
    }
}

/// Resolve the config, train in the configured mode and write every
/// training artifact.
pub fn run_train(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&Progress)) -> Result<TrainSummary> {
    cfg.validate()?;
    let cfg = match cfg.train.environment {
        EnvironmentKind::Polar => resolve(cfg)?,
        EnvironmentKind::TargetSet => cfg.clone(),
    };
    fs::create_dir_all(&cfg.output.dir)?;
    fs::write(cfg.output_file(RESOLVED_CONFIG_FILE), cfg.to_toml_string()?)?;

    let env = Env::new(&cfg)?;
    let net = init_net(cfg.code.n, cfg.hidden(), cfg.seed())?;
    let started = Instant::now();
    let mut timing = create(&cfg.output_file(TIMING_FILE))?;
    writeln!(timing, "{TIMING_CSV_HEADER}")?;
    let mut io_error = None;
    let mut observe = |t: u64, points: &[CurvePoint]| {
        let (sims, trials) = env.cache().map_or((0, 0), |c| (c.simulations(), c.trials()));
        if let Err(e) = writeln!(timing, "{t},{:.3},{sims},{trials}", started.elapsed().as_secs_f64()) {
            io_error.get_or_insert(e);
        }
        progress(&Progress { timestep: t, total_timesteps: cfg.ppo.total_timesteps, new_points: points, simulations: sims });
    };

    let fitness = |c: &Construction| env.fitness(&cfg, c);
    let (outcome, populations, pretrained): (TrainOutcome, Vec<GaPopulation>, Option<PolicyValueNet>) =
        match cfg.train.mode {
            Mode::Rl => (train_rl_observed(env.as_dyn(), net, &cfg.ppo, cfg.seed(), &mut observe)?, Vec::new(), None),
            Mode::Integrated => {
                let out =
                    train_integrated_observed(env.as_dyn(), net, &cfg.integrated(), &fitness, cfg.seed(), &mut observe)?;
                (out.rl, out.populations, Some(out.pretrained))
            }
        };
    if let Some(e) = io_error {
        return Err(e.into());
    }
    timing.flush()?;

    write_curve_csv(create(&cfg.output_file(LEARNING_CURVE_FILE))?, &outcome.curve)?;
    save_checkpoint(&cfg.output_file(FINAL_CHECKPOINT_FILE), &outcome.net, &outcome.optimizer)?;
    let sequence = greedy_sequence(&outcome.net)?;
    sequence.write_file(&cfg.output_file(SEQUENCE_FILE))?;
    if let Some(net) = pretrained {
        save_checkpoint(&cfg.output_file(PRETRAINED_CHECKPOINT_FILE), &net, &Adam::for_net(&net))?;
        write_archives(&cfg.output_file(GA_ARCHIVE_FILE), &populations)?;
    }

    let (simulations, trials, cache_hits) =
        env.cache().map_or((0, 0, 0), |c| (c.simulations(), c.trials(), c.hits()));
    Ok(TrainSummary { config: cfg, sequence, curve: outcome.curve, populations, simulations, trials, cache_hits })
}

fn write_archives(path: &Path, populations: &[GaPopulation]) -> Result<()> {
    let mut out = create(path)?;
    for p in populations {
        write_archive(&mut out, p)?;
    }
    out.flush()?;
    Ok(())
}

/// Run the GA stage alone for `ks` (the configured GA set if `None`) and
/// write the archive.
pub fn run_ga(cfg: &ExperimentConfig, ks: Option<&[usize]>) -> Result<Vec<GaPopulation>> {
    cfg.validate()?;
    let cfg = match cfg.train.environment {
        EnvironmentKind::Polar => resolve(cfg)?,
        EnvironmentKind::TargetSet => cfg.clone(),
    };
    let ks = ks.map_or_else(|| cfg.ga_ks(), <[usize]>::to_vec);
    if let Some(&k) = ks.iter().find(|&&k| k > cfg.code.n) {
        return Err(Error::InvalidParameter(format!("K = {k} exceeds N = {}", cfg.code.n)));
    }
    let env = Env::new(&cfg)?;
    let fitness = |c: &Construction| env.fitness(&cfg, c);
    let pops = ga_populations(cfg.code.n, &ks, &cfg.ga, &fitness, cfg.seed())?;
    fs::create_dir_all(&cfg.output.dir)?;
    write_archives(&cfg.output_file(GA_ARCHIVE_FILE), &pops)?;
    Ok(pops)
}

/// Reference construction for `compare`.
#[derive(Clone, Debug)]
pub enum Baseline {
    /// DE/GA designed at each K's operating point.
    Dega,
    /// Another nested sequence.
    Sequence(NestedSequence),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub k: usize,
    pub esn0_learned_db: Option<f64>,
    pub esn0_baseline_db: Option<f64>,
    /// `esn0_baseline_db − esn0_learned_db`; positive means the learned
    /// code needs less power.
    pub delta_db: Option<f64>,
    /// `ok`, or why a bisection failed.
    pub status: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub target_bler: f64,
    /// Ascending in K.
    pub rows: Vec<ComparisonRow>,
}

fn opt_cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.4}"))
}

impl ComparisonReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{COMPARISON_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.k,
                opt_cell(r.esn0_learned_db),
                opt_cell(r.esn0_baseline_db),
                opt_cell(r.delta_db),
                r.status.replace(',', ";")
            )?;
        }
        Ok(())
    }

    /// Whitespace-separated `K delta_db` pairs for rows that succeeded.
    pub fn write_plot_data<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# K delta_db (target BLER {})", self.target_bler)?;
        for r in &self.rows {
            if let Some(d) = r.delta_db {
                writeln!(out, "{} {d:.4}", r.k)?;
            }
        }
        Ok(())
    }

    /// Rows where the learned code is better or within `tolerance_db`.
    pub fn count_within(&self, tolerance_db: f64) -> usize {
        self.rows.iter().filter(|r| r.delta_db.is_some_and(|d| d >= -tolerance_db)).count()
    }
}

/// EsN0 at the target BLER for the learned and baseline code of every
/// configured K. A failed bisection is recorded in its row.
///
/// Per-K operating points are resolved first, so a config with
/// `calibrate_bler` compares where it trained.
pub fn compare(cfg: &ExperimentConfig, learned: &NestedSequence, baseline: &Baseline) -> Result<ComparisonReport> {
    cfg.validate()?;
    let cfg = &resolve(cfg)?;
    let n = cfg.code.n;
    if learned.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: learned.len() });
    }
    if let Baseline::Sequence(s) = baseline {
        if s.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: s.len() });
        }
    }
    let target = cfg.evaluator.target_bler;
    let mut rows = Vec::new();
    for k in cfg.compare_ks() {
        let x0 = cfg.esn0_at(k);
        let spec = cfg.spec_at(k)?;
        let bracket = (x0 - BRACKET_HALF_WIDTH_DB, x0 + BRACKET_HALF_WIDTH_DB);
        let base_code = match baseline {
            Baseline::Dega => dega_construct(n, k, x0)?,
            Baseline::Sequence(s) => code_from_sequence(s, k)?,
        };
        let learned_x = find_esn0_at_bler(&code_from_sequence(learned, k)?, &spec, target, bracket);
        let base_x = find_esn0_at_bler(&base_code, &spec, target, bracket);
        let status = match (&learned_x, &base_x) {
            (Ok(_), Ok(_)) => "ok".to_string(),
            (Err(e), _) => format!("learned: {e}"),
            (_, Err(e)) => format!("baseline: {e}"),
        };
        let (l, b) = (learned_x.ok(), base_x.ok());
        let delta_db = l.zip(b).map(|(l, b)| b - l);
        rows.push(ComparisonRow { k, esn0_learned_db: l, esn0_baseline_db: b, delta_db, status });
    }
    Ok(ComparisonReport { target_bler: target, rows })
}

/// [`compare`], writing the report CSV and plot data.
pub fn run_compare(cfg: &ExperimentConfig, learned: &NestedSequence, baseline: &Baseline) -> Result<ComparisonReport> {
    let report = compare(cfg, learned, baseline)?;
    fs::create_dir_all(&cfg.output.dir)?;
    let mut csv = create(&cfg.output_file(COMPARISON_FILE))?;
    report.write_csv(&mut csv)?;
    csv.flush()?;
    let mut plot = create(&cfg.output_file(COMPARISON_PLOT_FILE))?;
    report.write_plot_data(&mut plot)?;
    plot.flush()?;
    Ok(report)
}

/// BLER sweep of each code over `grid`, written as one CSV.
pub fn run_eval(cfg: &ExperimentConfig, codes: &[Construction], grid: &[f64]) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let spec = cfg.base_spec()?;
    let mut rows = Vec::new();
    for c in codes {
        if c.n() != cfg.code.n {
            return Err(Error::LengthMismatch { expected: cfg.code.n, got: c.n() });
        }
        rows.extend(bler_sweep(c, &spec, grid)?);
    }
    fs::create_dir_all(&cfg.output.dir)?;
    let mut out = create(&cfg.output_file(SWEEP_FILE))?;
    write_sweep_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(rows)
}

/// Parse an EsN0 grid: `x`, a comma list `x1,x2,...`, or `start:step:stop`
/// with `stop` included when it lies on the grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("bad EsN0 grid {text:?}"));
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad);
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [list] => list.split(',').map(num).collect(),
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if step <= 0.0 || stop < start {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}

/// Greedy sequence of a saved network.
pub fn export_sequence(checkpoint: &Path) -> Result<NestedSequence> {
    let (net, _) = load_checkpoint(checkpoint)?;
    greedy_sequence(&net)
}

/// Nested sequence ordered by DE/GA reliability at `design_snr_db`.
pub fn dega_sequence(n: usize, design_snr_db: f64) -> Result<NestedSequence> {
    Ok(NestedSequence::from_reliability(&dega_reliability(n, design_snr_db)?))
}
