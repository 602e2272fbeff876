//! Experiment configuration, drivers and result files.

mod config;
mod experiments;
mod results;

pub use config::{
    model_preset, suggest, ExperimentConfig, LearnedSettings, PdeSettings, ReprKind, DESK_PATHS, DESK_PDE_PATHS,
    PAPER_PATHS, PAPER_PDE_PATHS,
};
pub use experiments::{
    benchmark_prices, load_learned, representations, run_learned_sweep, run_pricing_table, run_repr_error,
    train_level, TrainedLevel,
};
pub use results::{moneyness, read_rows, version_string, write_results, ReprErrorRow, ResultRow};
