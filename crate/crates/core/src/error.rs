use thiserror::Error;

/// Errors raised by the harvester model, integrator and sensitivity machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-convergent integration: step budget exhausted at t = {last_time}")]
    NonConvergent { last_time: f64 },

    #[error("blow-up: non-finite state at t = {time}")]
    BlowUp { time: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate output: variance {variance:e} is too small")]
    DegenerateOutput { variance: f64 },

    #[error("ill-conditioned design: {0}")]
    IllConditioned(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("task {index} failed: {source}")]
    Task {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
