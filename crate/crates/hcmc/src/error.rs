use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("truncation orders differ: {0} vs {1}")]
    OrderMismatch(usize, usize),

    #[error("scalar loop vanishes on the sample circle: min |value| = {0:.3e}")]
    DivisionBySmall(f64),

    #[error("matrix log branch failure: {0}")]
    LogBranch(String),

    #[error("evaluation point outside the annulus: |lambda| = {0:.3e}, rho = {1}")]
    OutsideAnnulus(f64, f64),

    #[error("loop is not positive on the circle: Cholesky pivot {pivot} = {value:.3e}")]
    NotPositive { pivot: usize, value: f64 },

    #[error("Iwasawa positive factor defect: {0}")]
    PositiveFactor(String),

    #[error("invalid hyperbolic datum: {0}")]
    Hyperbolic(String),

    #[error("matrix is not elliptic (trace {0:.6})")]
    NotElliptic(f64),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("evaluation too close to a pole: |z - p| = {0:.3e}")]
    NearPole(f64),

    #[error("ODE step underflow at path parameter {0:.6}")]
    StepUnderflow(f64),

    #[error("resonance: |k - 2 mu| = {0:.3e} at k = {1}")]
    Resonance(f64, usize),

    #[error("deflation remainder {remainder:.3e} exceeds tolerance {tol:.3e}; the monodromy problem is not solved for this potential")]
    Deflation { remainder: f64, tol: f64 },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("balancing condition violated: |sum tau_i u_i| = {0:.3e}")]
    Unbalanced(f64),

    #[error("{0}")]
    Invalid(String),
}
