use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid frequency: {0}")]
    InvalidFrequency(String),
    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),
    #[error("unsupported derivative order {0}: the pencil is quadratic")]
    UnsupportedOrder(usize),
    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),
    #[error("window violation: {0}")]
    WindowViolation(String),
    #[error("ODE integrator failure: {0}")]
    IntegratorFailure(String),
    #[error("rank ambiguity: {0}")]
    RankAmbiguity(String),
    #[error("singular biorthogonality normalization: {0}")]
    SingularNormalization(String),
    #[error("contour touches the spectrum: {0}")]
    CircleTouchesSpectrum(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("degenerate flux form: {0}")]
    DegenerateForm(String),
    #[error("integration line too close to the spectrum: {0}")]
    LineNearSpectrum(String),
    #[error("contour quadrature underresolved: {0}")]
    QuadratureUnderresolved(String),
    #[error("ill-conditioned radiation closure: {0}")]
    IllConditionedClosure(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
