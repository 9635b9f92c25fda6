use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("non-finite value {value} at node {node}")]
    Evaluation { node: usize, value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// All points lie in a closed half-space; `direction` is a witness
    /// `w != 0` with `<p_j, w> >= 0` for every point.
    #[error("no equilibrium weights exist: every point satisfies <p, w> >= 0 for w = {direction:?}")]
    NoEquilibrium { direction: [f64; 3] },

    #[error("flux target unreachable on this grid: mu = {mu}, achievable range ({lo}, {hi})")]
    FluxUnreachable { mu: f64, lo: f64, hi: f64 },

    #[error("insufficient grid resolution: {0}")]
    Resolution(String),

    #[error("normals do not positively span R^3; the intersection is unbounded")]
    NotPositivelySpanning,

    #[error("degenerate hull: {0}")]
    Degenerate(String),

    #[error("parallel body empty: the half-spaces have no common interior")]
    EmptyBody,

    #[error("closure condition violated: |sum F_i u_i| = {defect} > {bound}")]
    ClosureViolated { defect: f64, bound: f64 },

    #[error("hemisphere condition violated for probe direction {direction:?}")]
    HemisphereViolated { direction: [f64; 3] },

    #[error("solver did not converge in {} iterations (residual {:.3e})", .0.iterations, .0.final_residual)]
    NonConvergence(Box<SolveReport>),

    #[error("line search stalled after {} iterations (residual {:.3e})", .0.iterations, .0.final_residual)]
    Stalled(Box<SolveReport>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("support function is not smooth at the probe direction")]
    NonSmooth,
}
