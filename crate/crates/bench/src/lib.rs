//! Fixtures shared by the kernel benchmarks.

use covert_rsma::channel::{draw_channel_state, ChannelState};
use covert_rsma::env::{EnvConfig, RawAction};
use covert_rsma::Rng;

/// Reference configuration and one channel draw at the reference power.
pub fn reference_state(seed: u64) -> (EnvConfig, ChannelState) {
    let cfg = EnvConfig::reference();
    let mut rng = Rng::new(seed);
    let state = draw_channel_state(&cfg.channel, cfg.total_power, &mut rng)
        .expect("reference parameters are valid");
    (cfg, state)
}

/// A fixed mid-range action of the right width.
pub fn sample_action(cfg: &EnvConfig) -> RawAction {
    RawAction((0..cfg.action_dim()).map(|i| (i as f64 * 0.37).sin()).collect())
}
