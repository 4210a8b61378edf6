//! Experiment configuration, sweep orchestration and CSV output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::agent::ppo::{evaluate_policy, Checkpoint, PpoHyper, Trainer};
use crate::channel::ChannelParams;
use crate::covert::CovertBudget;
use crate::env::{Access, Env, EnvConfig, ErrorRedraw};
use crate::error::{Error, Result};
use crate::greedy::{run_greedy, GreedyParams};
use crate::metrics::{average, tail, EpisodeMetrics};
use crate::numerics::{db_to_linear, Rng};
use crate::ratesplit::Regime;

/// Environment variable that replaces the configured seeds.
pub const SEED_ENV_VAR: &str = "COVERT_RSMA_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    PpoRsma,
    PpoSdma,
    GreedyRsma,
    GreedySdma,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::PpoRsma, Scheme::PpoSdma, Scheme::GreedyRsma, Scheme::GreedySdma];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::PpoRsma => "P-RSMA",
            Scheme::PpoSdma => "P-SDMA",
            Scheme::GreedyRsma => "G-RSMA",
            Scheme::GreedySdma => "G-SDMA",
        }
    }

    pub fn access(self) -> Access {
        match self {
            Scheme::PpoRsma | Scheme::GreedyRsma => Access::Rsma,
            Scheme::PpoSdma | Scheme::GreedySdma => Access::Sdma,
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, Scheme::PpoRsma | Scheme::PpoSdma)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::domain(format!("unknown scheme `{s}` (expected P-RSMA, P-SDMA, G-RSMA or G-SDMA)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    None,
    PowerDb,
    Epsilon,
    /// Grid values are the upper ends of the message-length intervals, in kilobits.
    Blocklength,
}

impl Sweep {
    pub fn as_str(self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::PowerDb => "power_db",
            Sweep::Epsilon => "epsilon",
            Sweep::Blocklength => "blocklength",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Sweep::None => vec![],
            Sweep::PowerDb => vec![0.0, 10.0, 20.0, 30.0, 40.0],
            Sweep::Epsilon => vec![0.05, 0.1, 0.15, 0.2, 0.25],
            Sweep::Blocklength => (1..=9).map(|i| f64::from(i) / 10.0).collect(),
        }
    }

    /// Axis label for plots.
    pub fn axis_label(self) -> &'static str {
        match self {
            Sweep::None => "episode",
            Sweep::PowerDb => "transmit power P_t (dB)",
            Sweep::Epsilon => "covert requirement ε",
            Sweep::Blocklength => "maximum message length (kilobits)",
        }
    }
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Sweep::None),
            "power_db" | "power" => Ok(Sweep::PowerDb),
            "epsilon" => Ok(Sweep::Epsilon),
            "blocklength" => Ok(Sweep::Blocklength),
            other => Err(Error::domain(format!("unknown sweep `{other}`"))),
        }
    }
}

/// Physical-layer settings in the units used by the configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSettings {
    pub antennas: usize,
    pub power_db: f64,
    pub epsilon: f64,
    pub qos: Vec<f64>,
    pub covert_weight: f64,
    pub qos_weights: Vec<f64>,
    pub decoding_error: Vec<f64>,
    pub gains: Vec<f64>,
    pub phases_deg: Vec<f64>,
    pub error_dof: Vec<f64>,
    pub warden_gain: f64,
    pub warden_phase_deg: f64,
    pub warden_noise: f64,
    pub blocklength_kbits: (f64, f64),
    pub bits_per_use: f64,
    pub episode_len: usize,
    pub error_redraw: ErrorRedraw,
}

impl Default for SystemSettings {
    fn default() -> Self {
        Self {
            antennas: 3,
            power_db: 20.0,
            epsilon: 0.1,
            qos: vec![1e-4],
            covert_weight: 1.0,
            qos_weights: vec![1.0],
            decoding_error: vec![1e-3],
            gains: vec![1.0, 0.8, 0.2],
            phases_deg: vec![0.0, 20.0, 40.0],
            error_dof: vec![0.6],
            warden_gain: 0.4,
            warden_phase_deg: 30.0,
            warden_noise: 1.0,
            blocklength_kbits: (0.0, 1.0),
            bits_per_use: 1.0,
            episode_len: 200,
            error_redraw: ErrorRedraw::PerStep,
        }
    }
}

fn per_user(key: &str, values: &[f64], k: usize) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; k]),
        n if n == k => Ok(values.to_vec()),
        n => Err(Error::config(key, format!("expected 1 or {k} values, got {n}"))),
    }
}

impl SystemSettings {
    pub fn num_users(&self) -> usize {
        self.gains.len()
    }

    /// Converts to internal units: linear power, radians, channel uses.
    pub fn env_config(&self, regime: Regime, access: Access) -> Result<EnvConfig> {
        let k = self.num_users();
        if self.phases_deg.len() != k {
            return Err(Error::config(
                "phases_deg",
                format!("expected {k} values to match `gains`, got {}", self.phases_deg.len()),
            ));
        }
        if !(self.bits_per_use > 0.0) {
            return Err(Error::config("bits_per_use", "must be > 0"));
        }
        let budget = CovertBudget::new(self.epsilon).map_err(|e| Error::config("epsilon", e.to_string()))?;
        let uses = 1000.0 / self.bits_per_use;
        let cfg = EnvConfig {
            channel: ChannelParams {
                gains: self.gains.clone(),
                phases: self.phases_deg.iter().map(|d| d.to_radians()).collect(),
                error_dof: per_user("error_dof", &self.error_dof, k)?,
                warden_gain: self.warden_gain,
                warden_phase: self.warden_phase_deg.to_radians(),
                antennas: self.antennas,
                warden_noise_var: self.warden_noise,
            },
            total_power: db_to_linear(self.power_db),
            budget,
            qos: per_user("qos", &self.qos, k)?,
            covert_weight: self.covert_weight,
            qos_weights: per_user("qos_weights", &self.qos_weights, k)?,
            length_range: (self.blocklength_kbits.0 * uses, self.blocklength_kbits.1 * uses),
            error_probs: per_user("decoding_error", &self.decoding_error, k)?,
            regime,
            access,
            episode_len: self.episode_len,
            error_redraw: self.error_redraw,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub schemes: Vec<Scheme>,
    pub regimes: Vec<Regime>,
    pub sweep: Sweep,
    pub grid: Vec<f64>,
    /// Width of each message-length interval in a blocklength sweep, kilobits.
    pub blocklength_width: f64,
    pub seeds: Vec<u64>,
    /// Episodes per run; each PPO episode is followed by one update.
    pub episodes: usize,
    pub log_every: usize,
    pub tail_fraction: f64,
    pub workers: usize,
    pub system: SystemSettings,
    pub ppo: PpoHyper,
    pub greedy: GreedyParams,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            regimes: vec![Regime::Fbl, Regime::Ibl],
            sweep: Sweep::None,
            grid: vec![],
            blocklength_width: 0.1,
            seeds: vec![1, 2, 3],
            episodes: 2000,
            log_every: 1,
            tail_fraction: 0.1,
            workers: 1,
            system: SystemSettings::default(),
            ppo: PpoHyper::default(),
            greedy: GreedyParams::default(),
        }
    }
}

/// One (scheme, regime, sweep point, seed) run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub scheme: Scheme,
    pub regime: Regime,
    pub sweep_value: f64,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::config("schemes", "at least one scheme is required"));
        }
        if self.regimes.is_empty() {
            return Err(Error::config("regimes", "at least one regime is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.sweep != Sweep::None && self.grid.is_empty() {
            return Err(Error::config("grid", "a sweep needs a nonempty grid"));
        }
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every", "must be >= 1"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::config("tail_fraction", "must lie in (0,1]"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be >= 1"));
        }
        if !(self.blocklength_width > 0.0) {
            return Err(Error::config("blocklength_width", "must be > 0"));
        }
        self.ppo.validate()?;
        self.greedy.validate()?;
        for &regime in &self.regimes {
            for v in self.points() {
                self.env_config(Scheme::PpoRsma, regime, v)?;
            }
        }
        Ok(())
    }

    /// Sweep points; a run without a sweep has one point, the base power in dB.
    pub fn points(&self) -> Vec<f64> {
        match self.sweep {
            Sweep::None => vec![self.system.power_db],
            _ => self.grid.clone(),
        }
    }

    pub fn env_config(&self, scheme: Scheme, regime: Regime, sweep_value: f64) -> Result<EnvConfig> {
        let mut sys = self.system.clone();
        match self.sweep {
            Sweep::None => {}
            Sweep::PowerDb => sys.power_db = sweep_value,
            Sweep::Epsilon => sys.epsilon = sweep_value,
            Sweep::Blocklength => {
                sys.blocklength_kbits = ((sweep_value - self.blocklength_width).max(0.0), sweep_value)
            }
        }
        sys.env_config(regime, scheme.access())
    }

    /// Jobs in output order: scheme, regime, sweep point, seed.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &scheme in &self.schemes {
            for &regime in &self.regimes {
                for sweep_value in self.points() {
                    for &seed in &self.seeds {
                        jobs.push(Job {
                            scheme,
                            regime,
                            sweep_value,
                            seed,
                        });
                    }
                }
            }
        }
        jobs
    }

    /// Replaces the seed list by `master, master+1, …` of the same length.
    pub fn override_seeds(&mut self, master: u64) {
        let n = self.seeds.len().max(1) as u64;
        self.seeds = (0..n).map(|i| master.wrapping_add(i)).collect();
    }

    /// Applies [`SEED_ENV_VAR`] when it is set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV_VAR) {
            let master = v
                .trim()
                .parse()
                .map_err(|_| Error::config(SEED_ENV_VAR, format!("expected an unsigned integer, got `{v}`")))?;
            self.override_seeds(master);
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("malformed value `{}`", value.trim())))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(|v| parse_value(key, v))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(key, "empty list"));
    }
    Ok(items)
}

fn parse_with<T>(key: &str, value: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| f(v).map_err(|e| Error::config(key, e.to_string())))
        .collect()
}

/// Parses `key = value` lines. `#` starts a comment; unknown and repeated keys are errors.
pub fn parse_config_str(text: &str) -> Result<ExperimentSpec> {
    let mut entries = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim().to_string();
        if entries.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::config(key, "given more than once"));
        }
    }

    let mut spec = ExperimentSpec::default();
    let mut grid_given = false;
    for (key, value) in &entries {
        let (k, v) = (key.as_str(), value.as_str());
        let s = &mut spec.system;
        match k {
            "antennas" => s.antennas = parse_value(k, v)?,
            "power_db" => s.power_db = parse_value(k, v)?,
            "epsilon" => s.epsilon = parse_value(k, v)?,
            "qos" => s.qos = parse_list(k, v)?,
            "covert_weight" => s.covert_weight = parse_value(k, v)?,
            "qos_weights" => s.qos_weights = parse_list(k, v)?,
            "decoding_error" => s.decoding_error = parse_list(k, v)?,
            "gains" => s.gains = parse_list(k, v)?,
            "phases_deg" => s.phases_deg = parse_list(k, v)?,
            "error_dof" => s.error_dof = parse_list(k, v)?,
            "warden_gain" => s.warden_gain = parse_value(k, v)?,
            "warden_phase_deg" => s.warden_phase_deg = parse_value(k, v)?,
            "warden_noise" => s.warden_noise = parse_value(k, v)?,
            "blocklength_kbits" => {
                let b: Vec<f64> = parse_list(k, v)?;
                if b.len() != 2 {
                    return Err(Error::config(k, "expected `min, max`"));
                }
                s.blocklength_kbits = (b[0], b[1]);
            }
            "bits_per_use" => s.bits_per_use = parse_value(k, v)?,
            "episode_len" => s.episode_len = parse_value(k, v)?,
            "error_redraw" => s.error_redraw = parse_value(k, v)?,
            "schemes" => spec.schemes = parse_with(k, v, Scheme::from_str)?,
            "regimes" => spec.regimes = parse_with(k, v, Regime::from_str)?,
            "sweep" => spec.sweep = Sweep::from_str(v).map_err(|e| Error::config(k, e.to_string()))?,
            "grid" => {
                spec.grid = parse_list(k, v)?;
                grid_given = true;
            }
            "blocklength_width" => spec.blocklength_width = parse_value(k, v)?,
            "seeds" => spec.seeds = parse_list(k, v)?,
            "episodes" => spec.episodes = parse_value(k, v)?,
            "log_every" => spec.log_every = parse_value(k, v)?,
            "tail_fraction" => spec.tail_fraction = parse_value(k, v)?,
            "workers" => spec.workers = parse_value(k, v)?,
            "ppo.discount" => spec.ppo.discount = parse_value(k, v)?,
            "ppo.gae_lambda" => spec.ppo.gae_lambda = parse_value(k, v)?,
            "ppo.clip" => spec.ppo.clip = parse_value(k, v)?,
            "ppo.learning_rate" => spec.ppo.learning_rate = parse_value(k, v)?,
            "ppo.epochs" => spec.ppo.epochs = parse_value(k, v)?,
            "ppo.minibatch" => spec.ppo.minibatch = parse_value(k, v)?,
            "ppo.hidden" => spec.ppo.hidden = parse_value(k, v)?,
            "ppo.init_log_std" => spec.ppo.init_log_std = parse_value(k, v)?,
            "ppo.entropy_coef" => spec.ppo.entropy_coef = parse_value(k, v)?,
            "ppo.init_radiated_power" => {
                spec.ppo.init_radiated_power = if v.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(parse_value(k, v)?)
                }
            }
            "greedy.candidates" => spec.greedy.candidates = parse_value(k, v)?,
            "greedy.range" => spec.greedy.range = parse_value(k, v)?,
            "greedy.capacity" => spec.greedy.capacity = parse_value(k, v)?,
            _ => return Err(Error::config(k, "unknown key")),
        }
    }
    if !grid_given {
        spec.grid = spec.sweep.default_grid();
    }
    spec.ppo.updates = spec.episodes;
    Ok(spec)
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub scheme: Scheme,
    pub regime: Regime,
    pub sweep_value: f64,
    pub seed: u64,
    pub episode: usize,
    pub avg_min_rate: f64,
    pub avg_sum_rate: f64,
    pub covert_violation_rate: f64,
    pub qos_violation_rate: f64,
    pub mean_kl: f64,
    pub mean_radiated_power: f64,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "scheme",
    "regime",
    "sweep_value",
    "seed",
    "episode",
    "avg_min_rate",
    "avg_sum_rate",
    "covert_violation_rate",
    "qos_violation_rate",
    "mean_kl",
    "mean_radiated_power",
];

/// Rounds to 9 significant digits and prints the shortest form that reads back exactly.
pub fn format_float(x: f64) -> String {
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    if rounded == 0.0 {
        "0".to_string()
    } else {
        format!("{rounded}")
    }
}

impl MetricRow {
    pub fn new(job: &Job, m: &EpisodeMetrics) -> Self {
        Self {
            scheme: job.scheme,
            regime: job.regime,
            sweep_value: job.sweep_value,
            seed: job.seed,
            episode: m.episode,
            avg_min_rate: m.avg_min_rate,
            avg_sum_rate: m.avg_sum_rate,
            covert_violation_rate: m.covert_violation_rate,
            qos_violation_rate: m.qos_violation_rate,
            mean_kl: m.mean_kl,
            mean_radiated_power: m.mean_radiated_power,
        }
    }

    fn record(&self) -> [String; 11] {
        [
            self.scheme.to_string(),
            self.regime.to_string(),
            format_float(self.sweep_value),
            self.seed.to_string(),
            self.episode.to_string(),
            format_float(self.avg_min_rate),
            format_float(self.avg_sum_rate),
            format_float(self.covert_violation_rate),
            format_float(self.qos_violation_rate),
            format_float(self.mean_kl),
            format_float(self.mean_radiated_power),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        let field = |i: usize| -> Result<&str> {
            rec.get(i).ok_or_else(|| Error::Schema {
                column: CSV_COLUMNS[i].to_string(),
                msg: "missing field".into(),
            })
        };
        fn num<T: FromStr>(i: usize, s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Schema {
                column: CSV_COLUMNS[i].to_string(),
                msg: format!("cannot parse `{s}`"),
            })
        }
        let schema = |i: usize, e: Error| Error::Schema {
            column: CSV_COLUMNS[i].to_string(),
            msg: e.to_string(),
        };
        Ok(Self {
            scheme: field(0)?.parse().map_err(|e| schema(0, e))?,
            regime: field(1)?.parse().map_err(|e| schema(1, e))?,
            sweep_value: num(2, field(2)?)?,
            seed: num(3, field(3)?)?,
            episode: num(4, field(4)?)?,
            avg_min_rate: num(5, field(5)?)?,
            avg_sum_rate: num(6, field(6)?)?,
            covert_violation_rate: num(7, field(7)?)?,
            qos_violation_rate: num(8, field(8)?)?,
            mean_kl: num(9, field(9)?)?,
            mean_radiated_power: num(10, field(10)?)?,
        })
    }
}

pub fn write_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::domain(format!("{other:?}")),
    })?;
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a file written by [`write_rows`]; the header must match exactly.
pub fn read_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema {
            column: String::new(),
            msg: format!("{other:?}"),
        },
    })?;
    let header = r.headers()?.clone();
    for (i, want) in CSV_COLUMNS.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) => {
                return Err(Error::Schema {
                    column: (*want).to_string(),
                    msg: format!("expected column `{want}` at position {i}, found `{got}`"),
                })
            }
            None => {
                return Err(Error::Schema {
                    column: (*want).to_string(),
                    msg: "column missing".into(),
                })
            }
        }
    }
    if header.len() != CSV_COLUMNS.len() {
        return Err(Error::Schema {
            column: header.get(CSV_COLUMNS.len()).unwrap_or("").to_string(),
            msg: "unexpected extra column".into(),
        });
    }
    r.records().map(|rec| MetricRow::from_record(&rec?)).collect()
}

#[derive(Debug, Clone)]
pub struct JobResult {
    pub job: Job,
    pub metrics: Vec<EpisodeMetrics>,
    pub checkpoint: Option<Checkpoint>,
}

pub fn run_job(spec: &ExperimentSpec, job: &Job) -> Result<JobResult> {
    let config = spec.env_config(job.scheme, job.regime, job.sweep_value)?;
    if job.scheme.is_learning() {
        let mut hyper = spec.ppo.clone();
        hyper.updates = spec.episodes;
        let mut trainer = Trainer::new(config, hyper, job.seed)?;
        let mut metrics = Vec::with_capacity(spec.episodes);
        for _ in 0..spec.episodes {
            metrics.push(trainer.train_once()?.0);
        }
        Ok(JobResult {
            job: *job,
            metrics,
            checkpoint: Some(trainer.checkpoint()),
        })
    } else {
        Ok(JobResult {
            job: *job,
            metrics: run_greedy(&config, &spec.greedy, spec.episodes, job.seed)?,
            checkpoint: None,
        })
    }
}

/// Runs every job on a pool of `spec.workers` threads. Results keep job order.
pub fn run_jobs(spec: &ExperimentSpec) -> Result<Vec<JobResult>> {
    spec.validate()?;
    let jobs = spec.jobs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    pool.install(|| jobs.par_iter().map(|j| run_job(spec, j)).collect())
}

/// Logged rows: every `log_every`-th episode and always the last one.
pub fn series_rows(spec: &ExperimentSpec, results: &[JobResult]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for r in results {
        let n = r.metrics.len();
        for (i, m) in r.metrics.iter().enumerate() {
            if (i + 1) % spec.log_every == 0 || i + 1 == n {
                rows.push(MetricRow::new(&r.job, m));
            }
        }
    }
    rows
}

/// One row per job with the tail-window average; `episode` is the episode count.
pub fn summary_rows(spec: &ExperimentSpec, results: &[JobResult]) -> Vec<MetricRow> {
    results
        .iter()
        .map(|r| {
            let mut m = average(tail(&r.metrics, spec.tail_fraction));
            m.episode = r.metrics.len();
            MetricRow::new(&r.job, &m)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub series: PathBuf,
    pub summary: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub results: Vec<JobResult>,
}

/// Runs every job and writes `series.csv`, `summary.csv` and, if asked,
/// one checkpoint per learning job under `checkpoints/`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path, save_checkpoints: bool) -> Result<ExperimentOutput> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results = run_jobs(spec)?;
    let series = out_dir.join("series.csv");
    let summary = out_dir.join("summary.csv");
    write_rows(&series, &series_rows(spec, &results))?;
    write_rows(&summary, &summary_rows(spec, &results))?;
    let mut checkpoints = Vec::new();
    if save_checkpoints {
        let dir = out_dir.join("checkpoints");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for r in &results {
            if let Some(ck) = &r.checkpoint {
                let j = &r.job;
                let path = dir.join(format!(
                    "{}_{}_{}_{}.json",
                    j.scheme,
                    j.regime,
                    format_float(j.sweep_value),
                    j.seed
                ));
                ck.save(&path)?;
                checkpoints.push(path);
            }
        }
    }
    Ok(ExperimentOutput {
        series,
        summary,
        checkpoints,
        results,
    })
}

/// Deterministic rollouts of a saved policy on fresh episodes drawn from `seed`.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, episodes: usize, seed: u64) -> Result<Vec<MetricRow>> {
    let config = ckpt.env.clone();
    let scheme = match config.access {
        Access::Rsma => Scheme::PpoRsma,
        Access::Sdma => Scheme::PpoSdma,
    };
    let job = Job {
        scheme,
        regime: config.regime,
        sweep_value: crate::numerics::linear_to_db(config.total_power),
        seed,
    };
    let mut env = Env::new(config, Rng::with_stream(seed, 3))?;
    Ok(evaluate_policy(&ckpt.agent, &mut env, episodes)?
        .iter()
        .map(|m| MetricRow::new(&job, m))
        .collect())
}
