//! Value bounds, the recursive analysis of CW powers and the exponent search.

pub mod analysis;
pub mod bounds;
pub mod merge;
pub mod schonhage;
pub mod table;

pub use analysis::{
    analyze_class, analyze_cw, analyze_cw_full, omega_bound, CwAnalysis, EngineConfig, OmegaResult, TopBound,
    ValueBound, ValueMethod,
};
pub use bounds::{classic_bound, refined_bound};
pub use merge::merged_value;
pub use schonhage::schonhage_tau;
pub use table::{verify_table, EntryCheck, ValueTable};
