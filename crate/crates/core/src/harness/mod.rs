//! Experiment plumbing: configuration, batch runs, transcripts, replay,
//! figures and reports.

pub mod config;
pub mod plot;
pub mod report;
pub mod runner;
pub mod transcript;

pub use config::{BackendSpec, ConfigError, ExperimentConfig, PRESETS};
pub use plot::{plot_transcript, PlotError};
pub use report::{report_dir, Report, ReportError};
pub use runner::{
    http_endpoint, replay, replay_transcript, run_matrix, run_trial, Aggregate, EndpointFactory,
    HarnessError, MatrixResult, ReplayReport,
};
pub use transcript::{Transcript, TranscriptError, TRANSCRIPT_SCHEMA_VERSION};
