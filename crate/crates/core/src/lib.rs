//! Confidence-guided adversarial editing of reading-comprehension samples
//! and evaluation of reader models on natural versus edited contexts.

pub mod backend;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod text;

pub use backend::{Backend, Candidate, Completion, EndpointConfig, MockBackend, WireBackend};
pub use dataset::{EditRecord, MrcSample};
pub use error::{BackendError, DatasetError, EvalError, PipelineError, TextError};
pub use eval::{EvalRun, Report};
pub use metrics::{MetricsReport, Variant};
pub use pipeline::{EditTrace, Pipeline, PipelineConfig};
