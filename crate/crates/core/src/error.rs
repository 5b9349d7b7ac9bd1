use thiserror::Error;

use crate::scalar::C64;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curve modulus tau = {0}: imaginary part must be positive")]
    InvalidModulus(C64),

    #[error("invalid series control: {0}")]
    InvalidSeriesControl(String),

    #[error("theta series did not converge within {max_terms} terms at z = {z}")]
    SeriesNonConvergence { z: C64, max_terms: usize },

    #[error("evaluation at z = {z} lies within {distance:e} of a pole (guard {guard:e})")]
    PoleProximity { z: C64, distance: f64, guard: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("constraint sum_i beta_a^i alpha_a^i = 0 violated at point {a}: residual {residual:e}")]
    ConstraintViolation { a: usize, residual: f64 },

    #[error("marked points {a} and {b} coincide modulo the lattice (separation {separation:e})")]
    CoincidentPoints { a: usize, b: usize, separation: f64 },

    #[error("marked point {a} lies within {distance:e} of the origin P")]
    PointAtOrigin { a: usize, distance: f64 },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("gauge element has det = {det}, expected 1")]
    NotUnimodular { det: C64 },

    #[error("rescale factor must be nonzero")]
    ZeroRescale,

    #[error("chart pivot component {pivot} of alpha_{a} vanishes")]
    ChartPivot { a: usize, pivot: usize },

    #[error("contour radius {radius:e} is infeasible: {reason}")]
    InfeasibleRadius { radius: f64, reason: String },

    #[error("contour quadrature did not converge: node counts disagree by {disagreement:e}")]
    QuadratureNonConvergence { disagreement: f64 },

    #[error("singular parts have nonzero residue sum {sum:e}; no elliptic differential exists")]
    ResidueSum { sum: f64 },

    #[error("infeasible sampling options: {0}")]
    InfeasibleSample(String),

    #[error("derivative methods disagree for coordinate {coordinate}: relative gap {gap:e}")]
    MethodDisagreement { coordinate: String, gap: f64 },

    #[error("point is off the gauge slice: |G(alpha) - 1| = {deviation:e}")]
    OffSlice { deviation: f64 },

    #[error("compensator branch crossed the cut: {0}")]
    BranchAmbiguity(String),

    #[error("flow aborted at t = {t}: {reason}")]
    FlowAborted { t: f64, reason: String, partial: Box<crate::dynamics::Trajectory> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
