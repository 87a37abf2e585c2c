use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// A discriminant sits inside the boundary band, so the solution count
    /// cannot be decided in floating point.
    #[error("{quantity} = {value:e} lies within the ambiguity band (scale {scale:e}) at theta = {theta}, p = {p}")]
    ToleranceAmbiguity {
        quantity: &'static str,
        value: f64,
        scale: f64,
        theta: f64,
        p: f64,
    },

    #[error("solution set at theta = {theta}, p = {p} does not match any region: {detail}")]
    Unclassified { theta: f64, p: f64, detail: String },

    #[error("branch {branch} residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualExceeded { branch: u8, residual: f64, tol: f64 },

    #[error("row {row} of the normalized kernel sums to 1 + {defect:e}; input is not a fixed point")]
    StochasticityViolation { row: usize, defect: f64 },

    #[error("iteration did not converge after {iterations} steps (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("branch {branch} vanished inside the bracket; last valid sub-bracket [{lo}, {hi}]")]
    BranchVanished { branch: u8, lo: f64, hi: f64 },

    #[error("branch {branch} does not exist at theta = {theta}, p = {p}")]
    BranchAbsent { branch: u8, theta: f64, p: f64 },

    #[error("not defined: {0}")]
    NotDefined(String),
}
