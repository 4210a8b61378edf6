//! Covert rate-splitting downlink simulator with a PPO power allocator.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod agent;
pub mod channel;
pub mod covert;
pub mod env;
pub mod error;
pub mod experiment;
pub mod greedy;
pub mod metrics;
pub mod numerics;
pub mod plot;
pub mod ratesplit;
pub mod selftest;

pub use agent::{Agent, Checkpoint, Mlp, PpoHyper, Trainer};
pub use channel::{ChannelParams, ChannelState};
pub use covert::{CovertBudget, CovertCheck};
pub use env::{Access, Env, EnvConfig, ErrorRedraw, Observation, RawAction, StepOutcome};
pub use error::{Error, Result};
pub use experiment::{ExperimentSpec, MetricRow, Scheme, Sweep};
pub use greedy::{GreedyParams, GreedyState};
pub use metrics::EpisodeMetrics;
pub use numerics::{ComplexVector, Rng, RngState};
pub use ratesplit::{Beamformer, RateReport, Regime, SplitLengths};
