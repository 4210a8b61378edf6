//! Myopic baseline: per-step random search over raw logits.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvConfig, RawAction, StepOutcome};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeMetrics, MetricsAccumulator};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyParams {
    /// Candidates per step, including the replayed historical best.
    pub candidates: usize,
    /// Logits are drawn from `[-range, range]`.
    pub range: f64,
    /// Ring-buffer capacity of the reward history.
    pub capacity: usize,
}

impl Default for GreedyParams {
    fn default() -> Self {
        Self {
            candidates: 64,
            range: 3.0,
            capacity: 1024,
        }
    }
}

impl GreedyParams {
    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 {
            return Err(Error::config("greedy.candidates", "must be >= 1"));
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::config("greedy.range", "must be finite and > 0"));
        }
        if self.capacity == 0 {
            return Err(Error::config("greedy.capacity", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyState {
    params: GreedyParams,
    history: VecDeque<(RawAction, f64)>,
    best: Option<(RawAction, f64)>,
}

impl GreedyState {
    pub fn new(params: GreedyParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            history: VecDeque::with_capacity(params.capacity),
            best: None,
        })
    }

    pub fn params(&self) -> &GreedyParams {
        &self.params
    }

    pub fn history(&self) -> impl Iterator<Item = &(RawAction, f64)> {
        self.history.iter()
    }

    pub fn best_reward(&self) -> Option<f64> {
        self.best.as_ref().map(|(_, r)| *r)
    }

    pub fn best_action(&self) -> Option<&RawAction> {
        self.best.as_ref().map(|(a, _)| a)
    }

    fn record(&mut self, action: &RawAction, reward: f64) {
        if self.history.len() == self.params.capacity {
            self.history.pop_front();
        }
        self.history.push_back((action.clone(), reward));
        if self.best.as_ref().is_none_or(|(_, r)| reward > *r) {
            self.best = Some((action.clone(), reward));
        }
    }
}

/// Index of the largest reward; the first one wins ties.
pub fn select_best(rewards: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rewards.iter().enumerate() {
        if best.is_none_or(|b| *r > rewards[b]) {
            best = Some(i);
        }
    }
    best
}

/// The historical best action (if any) followed by uniform draws.
pub fn propose_candidates(dim: usize, greedy: &GreedyState, rng: &mut Rng) -> Vec<RawAction> {
    let c = greedy.params.range;
    let mut candidates = Vec::with_capacity(greedy.params.candidates);
    if let Some(a) = greedy.best_action() {
        candidates.push(a.clone());
    }
    while candidates.len() < greedy.params.candidates {
        candidates.push(RawAction((0..dim).map(|_| rng.uniform(-c, c)).collect()));
    }
    candidates
}

/// Scores the candidates on the current state, then commits the best via `env.step`.
pub fn greedy_step(
    env: &mut Env,
    greedy: &mut GreedyState,
    rng: &mut Rng,
) -> Result<(RawAction, StepOutcome, bool)> {
    let mut candidates = propose_candidates(env.config().action_dim(), greedy, rng);
    let rewards = candidates
        .iter()
        .map(|a| env.evaluate(a).map(|o| o.reward))
        .collect::<Result<Vec<f64>>>()?;
    let i = select_best(&rewards).expect("at least one candidate");
    let chosen = candidates.swap_remove(i);
    let tr = env.step(&chosen)?;
    greedy.record(&chosen, tr.outcome.reward);
    Ok((chosen, tr.outcome, tr.done))
}

/// `episodes` episodes of greedy search; the history persists across episodes.
pub fn run_greedy(
    config: &EnvConfig,
    params: &GreedyParams,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeMetrics>> {
    let mut env = Env::new(config.clone(), Rng::with_stream(seed, 0))?;
    let mut rng = Rng::with_stream(seed, 2);
    let mut state = GreedyState::new(*params)?;
    let mut out = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        env.reset()?;
        let mut acc = MetricsAccumulator::default();
        loop {
            let (_, outcome, done) = greedy_step(&mut env, &mut state, &mut rng)?;
            acc.push(&outcome);
            if done {
                break;
            }
        }
        out.push(acc.finish(ep));
    }
    Ok(out)
}
