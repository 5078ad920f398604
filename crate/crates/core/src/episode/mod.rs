//! Closed-loop episodes: reset, step, observe, privileged labeling with
//! branching, label balancing, shuffled buffering and evaluation metrics.

mod balance;
mod buffer;
mod config;
mod control;
mod dataset;
mod env;
mod metrics;

pub use balance::{chi_square_uniform, LabelBalancer};
pub use buffer::{buffer_cycle, ShuffleBuffer};
pub use config::{EpisodeConfig, EventObsConfig, InitRange, ObserveMode, SpeedPolicy};
pub use control::{pure_pursuit, PurePursuitParams};
pub use dataset::{generate_dataset, DatasetSummary, GenerationStats, Generator, Proposal, Sample};
pub use env::{DoneCause, Env, EnvState, Observation, SimContext, Status, StepInfo, FRAME_SUPPORT};
pub use metrics::{
    open_loop_mse, rollout_metrics, ConstantPolicy, LateralFeedbackPolicy, MetricsAccumulator, Policy,
    PrivilegedPolicy, ReplayPolicy, RolloutMetrics,
};

/// Mixes a base seed with two counters into an independent stream seed.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
