//! Error type shared by all modules.

use thiserror::Error;

/// Everything that can go wrong across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shift {tau} is not an integer multiple of the sample step {dt}")]
    NonCommensurateShift { tau: f64, dt: f64 },

    #[error("time {t} does not land on the sample grid")]
    OffGridTime { t: f64 },

    #[error("window [{lo}, {hi}] is not contained in the sampled domain [{dom_lo}, {dom_hi}]")]
    WindowOutOfDomain {
        lo: f64,
        hi: f64,
        dom_lo: f64,
        dom_hi: f64,
    },

    #[error("|lambda| = {modulus} is within 1e-6 of the unit circle")]
    LambdaOnCircle { modulus: f64 },

    #[error("Re(lambda) = {re} is on the imaginary axis")]
    LambdaOnImaginaryAxis { re: f64 },

    #[error("window too short: {0}")]
    WindowTooShort(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time-reversed propagation: t = {t} < s = {s}")]
    TimeReversed { s: f64, t: f64 },

    #[error("integration failure near t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("resonance: {0}")]
    Resonance(String),

    #[error("certification failure: {0}")]
    CertificationFailure(String),

    #[error("frequency module holds {got} modes, exceeding the cap of {cap}")]
    ModuleOverflow { got: usize, cap: usize },

    #[error("epsilon = {epsilon} exceeds the admissible threshold {threshold}")]
    EpsilonTooLarge { epsilon: f64, threshold: f64 },

    #[error("iteration diverged: {0}")]
    IterationDiverged(String),

    #[error("cut-off active at the fixed point: |w| = {norm} exceeds the ball radius {bound}")]
    CutoffActiveAtFixedPoint { norm: f64, bound: f64 },

    #[error("unknown corpus name: {0}")]
    UnknownCorpusName(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
