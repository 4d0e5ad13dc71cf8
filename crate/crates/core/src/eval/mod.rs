//! Evaluation harness: splits, ranking metrics, the synthetic generator and
//! the experiment driver.

mod experiment;
mod metrics;
mod split;
mod synth;

pub use experiment::{run_experiment, ExperimentRow};
pub use metrics::{
    format_table, metrics, random_baseline, user_metrics, write_csv, write_user_csv, MetricReport,
    UserMetrics,
};
pub use split::{make_split, Split};
pub use synth::{gen_synth, GroundTruth, SynthSpec};
