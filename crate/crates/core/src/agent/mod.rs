//! From-scratch PPO agent.

pub mod mlp;
pub mod ppo;

pub use mlp::Mlp;
pub use ppo::{
    clip_term, compute_advantages, gaussian_log_prob, ppo_loss, ppo_loss_grad, sample_action,
    surrogate_and_grad, train, value_loss_and_grad, Advantages, Agent, Checkpoint, PpoHyper,
    Sample, TrainOutcome, Trainer, Trajectory, UpdateStats,
};
