//! Desk-scale simulations of the randomized constructions.

pub mod behrend;
pub mod hard;
pub mod pipeline;
pub mod power_mean;
pub mod zero_out;

pub use behrend::{behrend_set, is_progression_free, SalemSpencerSet};
pub use hard::{free_hard_instance, greedy_hard_instance, GreedyOptions, HardInstanceStats};
pub use pipeline::{simulate_laser_pipeline, PipelineSetup, PipelineStats};
pub use power_mean::power_mean_select;
pub use zero_out::{random_zero_out, BlockSupport, ZeroOutResult};
