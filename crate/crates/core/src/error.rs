use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("{what} = {value} lies outside the support [{lower}, {upper}]")]
    OutsideSupport {
        what: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("density vanishes at x = {x}; hazard quantities are undefined")]
    ZeroDensity { x: f64 },

    #[error("virtual valuation has no sign change on [{lower}, {upper}]")]
    NoRoot { lower: f64, upper: f64 },

    #[error("threshold curve {curve} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        curve: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("threshold ordering violated between curves {upper} and {lower} at grid index {index}")]
    OrderingViolation {
        upper: usize,
        lower: usize,
        index: usize,
    },

    #[error("{what} index {index} out of range 1..={max}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        max: usize,
    },

    #[error("time {t} outside horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("arrival at t = {t} after the horizon {horizon} has expired")]
    HorizonExpired { t: f64, horizon: f64 },

    #[error("event at t = {t} precedes the allocator clock {clock}")]
    ClockRegression { t: f64, clock: f64 },

    #[error("{what} must be sorted in descending order")]
    Unsorted { what: &'static str },

    #[error("length mismatch: {left} rates vs {right} thresholds")]
    LengthMismatch { left: usize, right: usize },

    #[error("request {0} already holds a live allocation")]
    DuplicateRequest(u64),

    #[error("no live allocation for request {0}")]
    UnknownAllocation(u64),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("malformed threshold table: {0}")]
    Table(String),

    #[error("sweep point {value} failed: {source}")]
    SweepPoint {
        value: f64,
        #[source]
        source: Box<Error>,
    },
}
