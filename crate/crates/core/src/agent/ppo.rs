//! Clipped-surrogate policy optimization with a diagonal Gaussian policy.
//!
//! The policy network maps the `2K` state features to the means of the
//! `3K+1` action logits; the standard deviations are state-independent
//! learned parameters. A separate value network regresses the discounted
//! returns. Both are trained with Adam on exact gradients.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::env::{Env, EnvConfig, Observation, RawAction};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeMetrics, MetricsAccumulator};
use crate::numerics::{Rng, RngState};
use crate::ratesplit::Regime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoHyper {
    /// Discount factor τ.
    pub discount: f64,
    pub gae_lambda: f64,
    /// Clip range of the probability ratio.
    pub clip: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Number of policy updates; each consumes one episode.
    pub updates: usize,
    pub hidden: usize,
    pub init_log_std: f64,
    pub entropy_coef: f64,
    /// When set, the power-logit biases start so the initial mean policy
    /// radiates this much power (linear). `None` starts every logit at zero.
    /// Only used in the finite-blocklength regime, the one with a covert constraint.
    pub init_radiated_power: Option<f64>,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            discount: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            learning_rate: 3e-4,
            epochs: 10,
            minibatch: 64,
            updates: 2000,
            hidden: 64,
            init_log_std: 0.5f64.ln(),
            entropy_coef: 0.0,
            init_radiated_power: Some(1e-2),
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::config("ppo.discount", "must lie in (0,1)"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("ppo.gae_lambda", "must lie in [0,1]"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::config("ppo.clip", "must be > 0"));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::config("ppo.learning_rate", "must be >= 0"));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.hidden == 0 {
            return Err(Error::config("ppo.epochs", "epochs, minibatch and hidden must be >= 1"));
        }
        if let Some(p) = self.init_radiated_power {
            if !(p > 0.0) {
                return Err(Error::config("ppo.init_radiated_power", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Log-density of a diagonal Gaussian at `x`.
pub fn gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), s)| {
            let z = (x - m) / s.exp();
            -0.5 * z * z - s - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// `a = mean + exp(log_std) ⊙ z` with its exact log-density.
pub fn sample_action(mean: &[f64], log_std: &[f64], rng: &mut Rng) -> (RawAction, f64) {
    let a: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(m, s)| m + s.exp() * rng.standard_normal())
        .collect();
    let lp = gaussian_log_prob(&a, mean, log_std);
    (RawAction(a), lp)
}

/// Clip function: `(1+ε)Â` for `Â ≥ 0`, `(1−ε)Â` otherwise.
pub fn clip_term(advantage: f64, clip: f64) -> f64 {
    if advantage >= 0.0 {
        (1.0 + clip) * advantage
    } else {
        (1.0 - clip) * advantage
    }
}

/// `min(ratio·Â, clip_term(Â))`.
pub fn ppo_loss(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(clip_term(advantage, clip))
}

/// `∂ ppo_loss / ∂ ratio`: `Â` on the unclipped branch, zero on the clipped one.
pub fn ppo_loss_grad(ratio: f64, advantage: f64, clip: f64) -> f64 {
    if ratio * advantage < clip_term(advantage, clip) {
        advantage
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], log_prob: f64, reward: f64, value: f64) {
        self.observations.push(obs.to_vec());
        self.actions.push(action.to_vec());
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    /// GAE estimates before normalization.
    pub raw: Vec<f64>,
    /// Zero mean, unit variance over the batch (all zero if the batch is constant).
    pub normalized: Vec<f64>,
    /// Discounted returns within the episode, the value-regression targets.
    pub returns: Vec<f64>,
}

/// GAE(τ, λ) over one episode, no bootstrap past its end.
pub fn compute_advantages(traj: &Trajectory, hyper: &PpoHyper) -> Result<Advantages> {
    let n = traj.len();
    if n == 0 {
        return Err(Error::domain("empty trajectory"));
    }
    Error::check_len("trajectory values", n, traj.values.len())?;
    let (g, lam) = (hyper.discount, hyper.gae_lambda);
    let mut raw = vec![0.0; n];
    let mut returns = vec![0.0; n];
    let (mut gae, mut ret) = (0.0, 0.0);
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { traj.values[t + 1] } else { 0.0 };
        let delta = traj.rewards[t] + g * next_value - traj.values[t];
        gae = delta + g * lam * gae;
        ret = traj.rewards[t] + g * ret;
        raw[t] = gae;
        returns[t] = ret;
    }
    let mean = raw.iter().sum::<f64>() / n as f64;
    let var = raw.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    let normalized = if sd > 1e-12 {
        raw.iter().map(|a| (a - mean) / sd).collect()
    } else {
        vec![0.0; n]
    };
    Ok(Advantages {
        raw,
        normalized,
        returns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    /// One descent step along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// One stored transition as seen by the optimizer.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub observation: &'a [f64],
    pub action: &'a [f64],
    pub old_log_prob: f64,
    pub advantage: f64,
    pub target: f64,
}

/// Gradient of the surrogate objective, split by parameter group.
#[derive(Debug, Clone)]
pub struct PolicyGrad {
    pub objective: f64,
    pub net: Vec<f64>,
    pub log_std: Vec<f64>,
    pub clipped: usize,
    pub approx_kl: f64,
}

/// Mean clipped surrogate over `samples` (plus the optional entropy bonus)
/// and its exact gradient.
pub fn surrogate_and_grad(
    policy: &Mlp,
    log_std: &[f64],
    samples: &[Sample<'_>],
    clip: f64,
    entropy_coef: f64,
) -> Result<PolicyGrad> {
    let n = samples.len().max(1) as f64;
    let mut net_grad = vec![0.0; policy.num_params()];
    let mut std_grad = vec![0.0; log_std.len()];
    let mut objective = 0.0;
    let mut clipped = 0;
    let mut approx_kl = 0.0;
    let inv_var: Vec<f64> = log_std.iter().map(|s| (-2.0 * s).exp()).collect();
    for s in samples {
        let cache = policy.forward_cached(s.observation)?;
        let mean = cache.output();
        let lp = gaussian_log_prob(s.action, mean, log_std);
        let log_ratio = lp - s.old_log_prob;
        let ratio = log_ratio.exp();
        objective += ppo_loss(ratio, s.advantage, clip) / n;
        approx_kl += ((ratio - 1.0) - log_ratio) / n;
        let d_ratio = ppo_loss_grad(ratio, s.advantage, clip);
        if d_ratio == 0.0 {
            if s.advantage != 0.0 {
                clipped += 1;
            }
            continue;
        }
        // ∂L/∂log π = ∂L/∂ratio · ratio
        let d_lp = d_ratio * ratio / n;
        let d_mean: Vec<f64> = s
            .action
            .iter()
            .zip(mean)
            .zip(&inv_var)
            .map(|((a, m), iv)| d_lp * (a - m) * iv)
            .collect();
        for (j, g) in std_grad.iter_mut().enumerate() {
            let z2 = (s.action[j] - mean[j]).powi(2) * inv_var[j];
            *g += d_lp * (z2 - 1.0);
        }
        policy.backward(&cache, &d_mean, &mut net_grad);
    }
    if entropy_coef != 0.0 {
        // entropy = Σ log σ + const per sample
        objective += entropy_coef * log_std.iter().sum::<f64>();
        std_grad.iter_mut().for_each(|g| *g += entropy_coef);
    }
    Ok(PolicyGrad {
        objective,
        net: net_grad,
        log_std: std_grad,
        clipped,
        approx_kl,
    })
}

/// Mean squared error of the value network against `target` and its gradient.
pub fn value_loss_and_grad(value: &Mlp, samples: &[Sample<'_>]) -> Result<(f64, Vec<f64>)> {
    let n = samples.len().max(1) as f64;
    let mut grad = vec![0.0; value.num_params()];
    let mut loss = 0.0;
    for s in samples {
        let cache = value.forward_cached(s.observation)?;
        let err = cache.output()[0] - s.target;
        loss += err * err / n;
        value.backward(&cache, &[2.0 * err / n], &mut grad);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_objective: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Policy, value function and their optimizer states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: Mlp,
    pub log_std: Vec<f64>,
    pub value: Mlp,
    policy_opt: Adam,
    log_std_opt: Adam,
    value_opt: Adam,
}

impl Agent {
    pub fn new(config: &EnvConfig, hyper: &PpoHyper, rng: &mut Rng) -> Self {
        let (obs, act, h) = (config.obs_dim(), config.action_dim(), hyper.hidden);
        let mut policy = Mlp::orthogonal(&[obs, h, h, act], 1.0, 0.01, rng);
        let value = Mlp::orthogonal(&[obs, h, h, 1], 1.0, 1.0, rng);
        let covert = config.regime == Regime::Fbl;
        if let Some(p0) = hyper.init_radiated_power.filter(|_| covert) {
            let streams = (config.num_users() + 1) as f64;
            if p0 < config.total_power {
                // K+1 equal logits b against the idle slot's 0 radiate
                // P_t·(K+1)e^b / (1 + (K+1)e^b) = p0
                let bias = (p0 / (streams * (config.total_power - p0))).ln();
                let out = policy.bias_range(policy.num_layers() - 1);
                for b in &mut policy.params_mut()[out.start..out.start + config.num_users() + 1] {
                    *b = bias;
                }
            }
        }
        let lr = hyper.learning_rate;
        Self {
            policy_opt: Adam::new(policy.num_params(), lr),
            log_std_opt: Adam::new(act, lr),
            value_opt: Adam::new(value.num_params(), lr),
            log_std: vec![hyper.init_log_std; act],
            policy,
            value,
        }
    }

    /// `(mean, log_std)` of the action distribution at `obs`.
    pub fn policy_forward(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.policy.forward(obs)?, self.log_std.clone()))
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.value.forward(obs)?[0])
    }

    /// Stochastic action with its log-probability and the state value.
    pub fn act(&self, obs: &Observation, rng: &mut Rng) -> Result<(RawAction, f64, f64)> {
        let mean = self.policy.forward(obs.as_slice())?;
        let (a, lp) = sample_action(&mean, &self.log_std, rng);
        Ok((a, lp, self.value_of(obs.as_slice())?))
    }

    /// The distribution's mean.
    pub fn act_deterministic(&self, obs: &Observation) -> Result<RawAction> {
        Ok(RawAction(self.policy.forward(obs.as_slice())?))
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        Ok(gaussian_log_prob(action, &self.policy.forward(obs)?, &self.log_std))
    }

    /// Several epochs of minibatch Adam on the clipped surrogate (ascent) and
    /// the value regression (descent).
    pub fn update(
        &mut self,
        traj: &Trajectory,
        adv: &Advantages,
        hyper: &PpoHyper,
        rng: &mut Rng,
    ) -> Result<UpdateStats> {
        let n = traj.len();
        if n == 0 {
            return Err(Error::domain("empty batch"));
        }
        let samples: Vec<Sample<'_>> = (0..n)
            .map(|t| Sample {
                observation: &traj.observations[t],
                action: &traj.actions[t],
                old_log_prob: traj.log_probs[t],
                advantage: adv.normalized[t],
                target: adv.returns[t],
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats::default();
        let mut batches = 0usize;
        let mut clipped = 0usize;
        let mut seen = 0usize;
        for _ in 0..hyper.epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(hyper.minibatch) {
                let mb: Vec<Sample<'_>> = chunk.iter().map(|&i| samples[i]).collect();
                let pg = surrogate_and_grad(&self.policy, &self.log_std, &mb, hyper.clip, hyper.entropy_coef)?;
                let (vloss, vgrad) = value_loss_and_grad(&self.value, &mb)?;
                let finite = pg.net.iter().chain(&pg.log_std).chain(&vgrad).all(|g| g.is_finite());
                if !finite || !pg.objective.is_finite() || !vloss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite gradient (objective {}, value loss {vloss}, approx kl {})",
                        pg.objective, pg.approx_kl
                    )));
                }
                let ascent: Vec<f64> = pg.net.iter().map(|g| -g).collect();
                self.policy_opt.step(self.policy.params_mut(), &ascent);
                let ascent: Vec<f64> = pg.log_std.iter().map(|g| -g).collect();
                self.log_std_opt.step(&mut self.log_std, &ascent);
                self.value_opt.step(self.value.params_mut(), &vgrad);

                stats.policy_objective += pg.objective;
                stats.value_loss += vloss;
                stats.approx_kl += pg.approx_kl;
                clipped += pg.clipped;
                seen += mb.len();
                batches += 1;
            }
        }
        let b = batches.max(1) as f64;
        stats.policy_objective /= b;
        stats.value_loss /= b;
        stats.approx_kl /= b;
        stats.clip_fraction = clipped as f64 / seen.max(1) as f64;
        Ok(stats)
    }
}

/// Runs one episode with the current policy.
pub fn collect_episode(
    agent: &Agent,
    env: &mut Env,
    rng: &mut Rng,
    episode: usize,
) -> Result<(Trajectory, EpisodeMetrics)> {
    let mut obs = env.reset()?;
    let mut traj = Trajectory::default();
    let mut acc = MetricsAccumulator::default();
    loop {
        let (action, lp, v) = agent.act(&obs, rng)?;
        let tr = env.step(&action)?;
        traj.push(obs.as_slice(), action.as_slice(), lp, tr.outcome.reward, v);
        acc.push(&tr.outcome);
        obs = tr.observation;
        if tr.done {
            break;
        }
    }
    Ok((traj, acc.finish(episode)))
}

/// Rolls out the mean action (no exploration noise).
pub fn evaluate_policy(agent: &Agent, env: &mut Env, episodes: usize) -> Result<Vec<EpisodeMetrics>> {
    let mut out = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut obs = env.reset()?;
        let mut acc = MetricsAccumulator::default();
        loop {
            let tr = env.step(&agent.act_deterministic(&obs)?)?;
            acc.push(&tr.outcome);
            obs = tr.observation;
            if tr.done {
                break;
            }
        }
        out.push(acc.finish(ep));
    }
    Ok(out)
}

/// Training state: environment, agent, and the agent's random stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub env: Env,
    pub agent: Agent,
    pub hyper: PpoHyper,
    rng: Rng,
    episodes: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub metrics: Vec<EpisodeMetrics>,
    pub stats: Vec<UpdateStats>,
}

impl Trainer {
    /// Environment on stream 0 of `seed`, agent on stream 1.
    pub fn new(config: EnvConfig, hyper: PpoHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let env = Env::new(config, Rng::with_stream(seed, 0))?;
        let mut rng = Rng::with_stream(seed, 1);
        let agent = Agent::new(env.config(), &hyper, &mut rng);
        Ok(Self {
            env,
            agent,
            hyper,
            rng,
            episodes: 0,
        })
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    /// Collect one episode and update on it.
    pub fn train_once(&mut self) -> Result<(EpisodeMetrics, UpdateStats)> {
        let (traj, metrics) = collect_episode(&self.agent, &mut self.env, &mut self.rng, self.episodes)?;
        let adv = compute_advantages(&traj, &self.hyper)?;
        let stats = self.agent.update(&traj, &adv, &self.hyper, &mut self.rng)?;
        self.episodes += 1;
        Ok((metrics, stats))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            obs_dim: self.env.config().obs_dim(),
            action_dim: self.env.config().action_dim(),
            episodes: self.episodes,
            hyper: self.hyper.clone(),
            env: self.env.config().clone(),
            agent: self.agent.clone(),
            agent_rng: self.rng.state(),
            env_rng: self.env.rng_state(),
        }
    }

    /// Resumes from a checkpoint; the environment restarts its episode.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.check()?;
        let mut env = Env::new(ckpt.env, Rng::new(0))?;
        env.set_rng(Rng::from_state(ckpt.env_rng));
        Ok(Self {
            env,
            agent: ckpt.agent,
            hyper: ckpt.hyper,
            rng: Rng::from_state(ckpt.agent_rng),
            episodes: ckpt.episodes,
        })
    }
}

/// Full training run: `hyper.updates` episodes, one update each.
pub fn train(config: &EnvConfig, hyper: &PpoHyper, seed: u64) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), hyper.clone(), seed)?;
    let mut metrics = Vec::with_capacity(hyper.updates);
    let mut stats = Vec::with_capacity(hyper.updates);
    for _ in 0..hyper.updates {
        let (m, s) = trainer.train_once()?;
        metrics.push(m);
        stats.push(s);
    }
    Ok(TrainOutcome {
        agent: trainer.agent,
        metrics,
        stats,
    })
}

pub const CHECKPOINT_FORMAT: &str = "covert-rsma-ppo";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized training state. JSON, fields in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub episodes: usize,
    pub hyper: PpoHyper,
    pub env: EnvConfig,
    pub agent: Agent,
    pub agent_rng: RngState,
    pub env_rng: RngState,
}

impl Checkpoint {
    fn check(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format tag `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.agent.policy.input_dim() != self.obs_dim
            || self.agent.policy.output_dim() != self.action_dim
            || self.agent.log_std.len() != self.action_dim
            || self.agent.value.input_dim() != self.obs_dim
            || self.env.obs_dim() != self.obs_dim
        {
            return Err(Error::Checkpoint("network shapes do not match the recorded dimensions".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Self = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.check()?;
        Ok(ckpt)
    }
}
