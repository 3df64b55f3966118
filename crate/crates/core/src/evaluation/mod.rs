//! SI-SDR metric, enhancement pipelines and comparison reports.

mod metrics;
mod pipeline;
mod report;

pub use metrics::{mean_ci95, si_sdr, SI_SDR_CAP_DB};
pub use pipeline::{run_pipeline, PipelineSpec, Stage, INFERENCE_SHUFFLE_SEED};
pub use report::{
    evaluate, format_table, score_sample, write_reports, write_results_csv, write_summary_csv, EvalReport,
    ExternalMetric, SampleResult,
};
