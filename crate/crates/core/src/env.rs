//! The downlink as a Markov decision process.
//!
//! The state is the per-user channel magnitude and normalized message length
//! (`2K` features). An action is `3K+1` unbounded logits which decode onto the
//! feasible set: stream powers under the budget, message splits, and shares
//! of the common rate. The reward is the min-rate when no constraint is
//! violated and zero otherwise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{redraw_errors, ChannelParams, ChannelState};
use crate::covert::{is_covert, CovertBudget};
use crate::error::{Error, Result};
use crate::numerics::{ComplexVector, Rng};
use crate::ratesplit::{rate_report, Beamformer, RateReport, Regime, SplitLengths, MIN_BLOCKLENGTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Access {
    /// Common plus private streams.
    Rsma,
    /// Private streams only; the common logit and splits are ignored.
    Sdma,
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Access::Rsma => "RSMA",
            Access::Sdma => "SDMA",
        })
    }
}

/// When the CSI estimation error is resampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorRedraw {
    PerStep,
    PerEpisode,
}

impl FromStr for ErrorRedraw {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "step" | "per_step" => Ok(ErrorRedraw::PerStep),
            "episode" | "per_episode" => Ok(ErrorRedraw::PerEpisode),
            other => Err(format!("unknown redraw mode `{other}` (expected step or episode)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub channel: ChannelParams,
    /// Linear transmit power budget (SNR, receiver noise is unit variance).
    pub total_power: f64,
    pub budget: CovertBudget,
    /// Minimum rate per user, bps/Hz.
    pub qos: Vec<f64>,
    pub covert_weight: f64,
    pub qos_weights: Vec<f64>,
    /// Message lengths are drawn uniformly from this interval, in channel uses.
    pub length_range: (f64, f64),
    pub error_probs: Vec<f64>,
    pub regime: Regime,
    pub access: Access,
    pub episode_len: usize,
    pub error_redraw: ErrorRedraw,
}

impl EnvConfig {
    /// Three users at 20 dB, ε = 0.1, messages up to 1000 channel uses.
    pub fn reference() -> Self {
        Self {
            channel: ChannelParams::reference(),
            total_power: 100.0,
            budget: CovertBudget::new(0.1).expect("valid epsilon"),
            qos: vec![1e-4; 3],
            covert_weight: 1.0,
            qos_weights: vec![1.0; 3],
            length_range: (0.0, 1000.0),
            error_probs: vec![1e-3; 3],
            regime: Regime::Fbl,
            access: Access::Rsma,
            episode_len: 200,
            error_redraw: ErrorRedraw::PerStep,
        }
    }

    pub fn num_users(&self) -> usize {
        self.channel.num_users()
    }

    pub fn antennas(&self) -> usize {
        self.channel.antennas
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.num_users()
    }

    pub fn action_dim(&self) -> usize {
        3 * self.num_users() + 1
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        let k = self.num_users();
        if self.antennas() < k {
            return Err(Error::config("antennas", format!("need at least {k} antennas")));
        }
        if !(self.total_power > 0.0 && self.total_power.is_finite()) {
            return Err(Error::config("power_db", "transmit power must be > 0"));
        }
        for (key, v) in [
            ("qos", &self.qos),
            ("qos_weights", &self.qos_weights),
            ("decoding_error", &self.error_probs),
        ] {
            if v.len() != k {
                return Err(Error::config(key, format!("expected {k} entries, got {}", v.len())));
            }
        }
        if self.qos.iter().any(|&q| !(q >= 0.0)) {
            return Err(Error::config("qos", "must be >= 0"));
        }
        if self.error_probs.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
            return Err(Error::config("decoding_error", "must lie in (0,1)"));
        }
        let weights = std::iter::once(&self.covert_weight).chain(&self.qos_weights);
        if weights.clone().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::config("qos_weights", "penalty weights must be >= 0"));
        }
        if weights.sum::<f64>() <= 0.0 {
            return Err(Error::config("qos_weights", "penalty weights are all zero"));
        }
        let (lo, hi) = self.length_range;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::config("blocklength", format!("need 0 <= lo < hi, got ({lo}, {hi})")));
        }
        if self.episode_len == 0 {
            return Err(Error::config("episode_len", "must be >= 1"));
        }
        Ok(())
    }
}

/// `[‖h_1‖, …, ‖h_K‖, L_1/hi, …, L_K/hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Unbounded policy output: `K+1` power logits (common first), `K` split
/// logits, `K` share logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAction(pub Vec<f64>);

impl RawAction {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    /// Stream powers, common first; the sum never exceeds the budget.
    pub powers: Vec<f64>,
    /// Fraction of each message carried by the common stream.
    pub splits: Vec<f64>,
    /// Portions of the common rate; they sum to one.
    pub shares: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub action: Action,
    pub beamformer: Beamformer,
    pub lengths: SplitLengths,
}

/// Softmax over `logits` plus an implicit idle slot with logit 0.
/// Returns the probabilities of the given logits (the idle mass is dropped).
fn softmax_with_idle(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(0.0_f64, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let denom = exps.iter().sum::<f64>() + (-max).exp();
    exps.into_iter().map(|e| e / denom).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let denom: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / denom).collect()
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Maps raw logits onto the feasible set.
///
/// Private precoders are matched to the estimated channels; the common
/// precoder points along the sum of the normalized estimates. Only the
/// magnitudes are learned.
pub fn decode_action(
    raw: &RawAction,
    lengths: &[f64],
    estimated: &[ComplexVector],
    config: &EnvConfig,
) -> Result<Decoded> {
    let k = config.num_users();
    Error::check_len("raw action", 3 * k + 1, raw.0.len())?;
    Error::check_len("message lengths", k, lengths.len())?;
    Error::check_len("estimated channels", k, estimated.len())?;
    if raw.0.iter().any(|z| z.is_nan()) {
        return Err(Error::domain("raw action contains NaN"));
    }
    let sdma = config.access == Access::Sdma;

    let mut power_logits = raw.0[..=k].to_vec();
    if sdma {
        power_logits[0] = f64::NEG_INFINITY;
    }
    let powers: Vec<f64> = softmax_with_idle(&power_logits)
        .into_iter()
        .map(|f| f * config.total_power)
        .collect();
    let splits: Vec<f64> = if sdma {
        vec![0.0; k]
    } else {
        raw.0[k + 1..2 * k + 1].iter().map(|&z| logistic(z)).collect()
    };
    let shares = softmax(&raw.0[2 * k + 1..]);

    let directions: Vec<ComplexVector> = estimated
        .iter()
        .map(|h| h.normalized().unwrap_or_else(|| ComplexVector::zeros(h.len())))
        .collect();
    let mut sum = ComplexVector::zeros(config.antennas());
    for d in &directions {
        sum = &sum + d;
    }
    let common_dir = sum
        .normalized()
        .or_else(|| directions.iter().find_map(|d| d.normalized()))
        .unwrap_or_else(|| ComplexVector::zeros(config.antennas()));

    let beamformer = Beamformer::new(
        common_dir.scale(powers[0].sqrt()),
        directions
            .iter()
            .zip(&powers[1..])
            .map(|(d, p)| d.scale(p.sqrt()))
            .collect(),
    )?;

    let common_on = powers[0] > 0.0;
    let mut common_len = Vec::with_capacity(k);
    let mut private_len = Vec::with_capacity(k);
    for u in 0..k {
        let total = lengths[u];
        let mut lc = splits[u] * total;
        let lo = if common_on { MIN_BLOCKLENGTH } else { 0.0 };
        let hi = if powers[u + 1] > 0.0 { total - MIN_BLOCKLENGTH } else { total };
        if lo <= hi {
            lc = lc.clamp(lo, hi);
        }
        common_len.push(lc);
        private_len.push(total - lc);
    }

    Ok(Decoded {
        action: Action {
            powers,
            splits,
            shares,
        },
        beamformer,
        lengths: SplitLengths::new(common_len, private_len)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    pub value: f64,
    pub covert_violated: bool,
    pub qos_violated: Vec<bool>,
}

/// Weighted fraction of violated constraints, in `[0, 1]`.
///
/// `covert_violated` reports the raw comparison `kl > 2ε²`; it only
/// enters the penalty in the finite-blocklength regime.
pub fn compute_penalty(report: &RateReport, kl: f64, config: &EnvConfig) -> Result<Penalty> {
    let k = config.num_users();
    Error::check_len("rate report", k, report.totals.len())?;
    let norm = config.covert_weight + config.qos_weights.iter().sum::<f64>();
    if !(norm > 0.0) {
        return Err(Error::config("qos_weights", "penalty weights are all zero"));
    }
    let covert_violated = kl - config.budget.threshold() > 0.0;
    let qos_violated: Vec<bool> = config
        .qos
        .iter()
        .zip(&report.totals)
        .map(|(q, r)| q - r > 0.0)
        .collect();
    let mut weighted = 0.0;
    if covert_violated && config.regime == Regime::Fbl {
        weighted += config.covert_weight;
    }
    for (w, &v) in config.qos_weights.iter().zip(&qos_violated) {
        if v {
            weighted += w;
        }
    }
    Ok(Penalty {
        value: weighted / norm,
        covert_violated,
        qos_violated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub report: RateReport,
    pub kl: f64,
    pub radiated_power: f64,
    pub penalty: f64,
    pub covert_violated: bool,
    pub qos_violated: Vec<bool>,
    pub reward: f64,
}

impl StepOutcome {
    /// Sum-rate credited only when every constraint holds.
    pub fn covert_sum_rate(&self) -> f64 {
        if self.penalty == 0.0 {
            self.report.sum_rate
        } else {
            0.0
        }
    }
}

pub fn make_observation(channel: &ChannelState, lengths: &[f64], max_length: f64) -> Observation {
    let mut features: Vec<f64> = channel.realized.iter().map(|h| h.norm()).collect();
    features.extend(lengths.iter().map(|l| l / max_length));
    Observation(features)
}

/// Decode, rate, and score one action against a fixed channel state.
pub fn evaluate_action(
    raw: &RawAction,
    channel: &ChannelState,
    lengths: &[f64],
    config: &EnvConfig,
) -> Result<StepOutcome> {
    let decoded = decode_action(raw, lengths, &channel.estimated, config)?;
    let report = rate_report(
        channel,
        &decoded.beamformer,
        &decoded.lengths,
        &decoded.action.shares,
        &config.error_probs,
        config.regime,
    )?;
    let check = is_covert(&decoded.beamformer, &config.channel, &config.budget)?;
    let penalty = compute_penalty(&report, check.kl, config)?;
    let reward = if penalty.value == 0.0 { report.min_rate } else { 0.0 };
    Ok(StepOutcome {
        report,
        kl: check.kl,
        radiated_power: check.radiated_power,
        penalty: penalty.value,
        covert_violated: penalty.covert_violated,
        qos_violated: penalty.qos_violated,
        reward,
    })
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub outcome: StepOutcome,
    pub observation: Observation,
    pub done: bool,
}

/// One downlink instance. Owns its channel state and random stream.
#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    rng: Rng,
    channel: ChannelState,
    lengths: Vec<f64>,
    t: usize,
}

impl Env {
    pub fn new(config: EnvConfig, rng: Rng) -> Result<Self> {
        config.validate()?;
        let channel = ChannelState::exact(&config.channel)?;
        let k = config.num_users();
        let mut env = Self {
            config,
            rng,
            channel,
            lengths: vec![0.0; k],
            t: 0,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn channel(&self) -> &ChannelState {
        &self.channel
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn rng_state(&self) -> crate::numerics::RngState {
        self.rng.state()
    }

    /// Replaces the generator; the next `reset` draws from it.
    pub fn set_rng(&mut self, rng: Rng) {
        self.rng = rng;
    }

    /// Starts a new episode with fresh errors and message lengths.
    pub fn reset(&mut self) -> Result<Observation> {
        self.t = 0;
        self.redraw_channel()?;
        self.redraw_lengths();
        Ok(self.observation())
    }

    pub fn observation(&self) -> Observation {
        make_observation(&self.channel, &self.lengths, self.config.length_range.1)
    }

    /// Scores an action on the current state without advancing anything.
    pub fn evaluate(&self, raw: &RawAction) -> Result<StepOutcome> {
        evaluate_action(raw, &self.channel, &self.lengths, &self.config)
    }

    pub fn step(&mut self, raw: &RawAction) -> Result<Transition> {
        let outcome = self.evaluate(raw)?;
        self.t += 1;
        if self.config.error_redraw == ErrorRedraw::PerStep {
            self.redraw_channel()?;
        }
        self.redraw_lengths();
        Ok(Transition {
            outcome,
            observation: self.observation(),
            done: self.t >= self.config.episode_len,
        })
    }

    fn redraw_channel(&mut self) -> Result<()> {
        redraw_errors(
            &mut self.channel,
            &self.config.channel,
            self.config.total_power,
            &mut self.rng,
        )
    }

    fn redraw_lengths(&mut self) {
        let (lo, hi) = self.config.length_range;
        for l in &mut self.lengths {
            *l = self.rng.uniform(lo, hi);
        }
    }
}
