//! Random testing of twins against the reference device: request
//! generation, forking, rate-limited runs, fleet replays and trace files.

mod generator;
mod run;
mod trace;

pub use generator::{
    draw_value, generate_requests, integer_interval, GeneratorConfig, RequestGenerator,
};
pub use run::{
    fork_and_record, replay, retarget, run, BatchRun, Endpoint, Experiment, HttpEndpoint,
    RateLimiter, RunOutput, RunPlan, BATCH_SIZES, CORPUS_FILE, EMULATOR_TRACE_FILE, META_FILE,
    STANDARD_HOURS, STANDARD_RATES, TWIN_TRACE_FILE,
};
pub use trace::{read_jsonl, write_jsonl, Trace, TraceRecord};

use crate::api::ApiError;
use crate::emulator::EmulatorError;
use crate::factory::FactoryError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid run plan: {0}")]
    InvalidPlan(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Api(#[from] ApiError),
    #[error(transparent)]
    Emulator(#[from] EmulatorError),
    #[error(transparent)]
    Factory(#[from] FactoryError),
}

#[cfg(test)]
mod tests;
