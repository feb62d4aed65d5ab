use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("element {element} is degenerate (signed area {area:e})")]
    DegenerateElement { element: usize, area: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("subdomain {subdomain} is not connected")]
    DisconnectedSubdomain { subdomain: usize },

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("unknown traction tag `{0}`")]
    UnknownTractionTag(String),

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("matrix is not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("singular constrained system: {0}")]
    SingularSystem(String),

    #[error("right-hand side incompatible with the rigid-body kernel of subdomain {subdomain} (defect {defect:e})")]
    IncompatibleRhs { subdomain: usize, defect: f64 },

    #[error("test field does not vanish on the Dirichlet boundary (max value {0:e})")]
    NotKinematicallyAdmissible(f64),

    #[error("conjugate gradient breakdown at iteration {iteration}: non-positive curvature {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("meshes are not nested: {0}")]
    NonNestedMeshes(String),

    #[error("star patch of vertex {vertex} is singular after regularization")]
    SingularPatch { vertex: usize },

    #[error("statically admissible residual {residual:e} exceeds tolerance {tolerance:e} in subdomain {subdomain} (dof {dof})")]
    NotStaticallyAdmissible { subdomain: usize, dof: usize, residual: f64, tolerance: f64 },

    #[error("iteration stamps differ: fields at {fields}, recovery at {recovery}")]
    IterationMismatch { fields: usize, recovery: usize },

    #[error("forward error estimate is zero; the quantity of interest is already exact")]
    ZeroForwardError,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}
