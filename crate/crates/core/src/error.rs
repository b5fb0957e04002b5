use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure category, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Inputs violate a documented precondition; the operation refused.
    Precondition,
    /// Inputs were admissible but the numerics degenerated.
    Degenerate,
    /// Reading or writing an artifact failed.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("error schedule has {got} entries but {expected} frames were requested")]
    ScheduleLength { expected: usize, got: usize },

    #[error("PSA has {psa} taps but the stack has {stack} frames")]
    FrameCountMismatch { psa: usize, stack: usize },

    #[error("PSA nominal step {psa} rad/frame differs from stack step {stack} rad/frame")]
    StepMismatch { psa: f64, stack: f64 },

    #[error("carrier magnitude {0} rad/px is outside (0, pi)")]
    CarrierOutOfBand(f64),

    #[error(
        "spatial carrier {carrier} rad/px does not exceed the max wavefront slope \
         {max_slope} rad/px along the carrier direction"
    )]
    CarrierBelowSlope { carrier: f64, max_slope: f64 },

    #[error("no usable spatial carrier: {0}")]
    NoCarrier(String),

    #[error("ambiguous carrier peak: ({first_u0}, {first_v0}) vs ({second_u0}, {second_v0}) rad/px")]
    AmbiguousCarrier {
        first_u0: f64,
        first_v0: f64,
        second_u0: f64,
        second_v0: f64,
    },

    #[error("mask cutoff {cutoff} rad/px must lie in (0, {carrier}) for carrier magnitude {carrier}")]
    MaskCarrierInconsistent { cutoff: f64, carrier: f64 },

    #[error(
        "conjugate lobe comes within {lobe_edge} rad/px of baseband, inside the \
         passband cutoff {cutoff} rad/px"
    )]
    ConjugateInPassband { lobe_edge: f64, cutoff: f64 },

    #[error("requested zeros null the passband at -omega0 = {0} rad/frame")]
    PassbandZeroed(f64),

    #[error("PSA does not reject the background: |H(0)| = {0:e}")]
    NoBackgroundRejection(f64),

    #[error("signal amplitude A1 vanishes for this PSA and error schedule")]
    DegenerateSignal,

    #[error("conjugate dominates: leak ratio |A2|/|A1| = {0} >= 1")]
    ConjugateDominates(f64),

    #[error(
        "least-squares fit is ill-conditioned: basis overlap {overlap:.4} exceeds {limit} \
         (phase spans too little of a fringe)"
    )]
    IllConditioned { overlap: f64, limit: f64 },

    #[error("residual phase still wraps at {0} interior pixel pairs after piston removal")]
    ResidualWraps(usize),

    #[error("malformed artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DegenerateSignal
            | Error::IllConditioned { .. }
            | Error::AmbiguousCarrier { .. } => ErrorClass::Degenerate,
            Error::Format(_) | Error::Io(_) | Error::Json(_) | Error::Image(_) => ErrorClass::Io,
            _ => ErrorClass::Precondition,
        }
    }
}
