use thiserror::Error;

pub type Result<T> = std::result::Result<T, SqaError>;

#[derive(Debug, Error)]
pub enum SqaError {
    /// Malformed or inconsistent input (bad index, length mismatch, invalid parameter).
    #[error("invalid input: {0}")]
    Input(String),

    /// A function was evaluated outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The dense state space 2^(N*M) is larger than the configured cap.
    #[error("dense state space requires N*M = {spins} spins but the cap is {cap}; raise dense_cap or use the sampler")]
    ResourceCap { spins: usize, cap: usize },

    /// The adaptive integrator could not make progress.
    #[error("step size underflow at t = {t:.6e} (step {step:.3e}); the problem is too stiff for explicit stepping, reduce N*M*beta")]
    Stiff { t: f64, step: f64 },

    /// Requested eigenlevels are degenerate within tolerance.
    #[error("degenerate spectrum: levels {level} and {next} differ by {split:.3e}")]
    Degenerate { level: usize, next: usize, split: f64 },

    /// An operation needs data that the object does not carry.
    #[error("state error: {0}")]
    State(String),

    #[error("numerical check failed: {0}")]
    Check(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SqaError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        SqaError::Input(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        SqaError::Domain(msg.into())
    }
}
