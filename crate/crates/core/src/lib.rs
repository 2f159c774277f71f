//! Guided elastic waves in a traction-free strip: cross-section pencil, Jordan chains,
//! energy-flux classification, strip asymptotics and the half-strip Dirichlet problem.
//!
//! Assembly is generic over [`scalar::Real`]; the spectral and solver layers work in `f64`.

pub mod cross_section;
pub mod error;
pub mod halfstrip_solver;
pub mod linalg;
pub mod modes_flux;
pub mod pencil_spectrum;
pub mod quadrature;
pub mod scalar;
pub mod strip_solver;

pub use error::{Error, Result};

pub type Config = cross_section::ProblemConfig<f64>;
pub type Config32 = cross_section::ProblemConfig<f32>;
pub type Grid = cross_section::CrossSectionGrid<f64>;
pub type Grid32 = cross_section::CrossSectionGrid<f32>;
pub type Forms = cross_section::FormMatrices<f64>;
pub type Forms32 = cross_section::FormMatrices<f32>;

/// Default cross-section discretization: elements and Lagrange order.
pub const DEFAULT_ELEMENTS: usize = 8;
pub const DEFAULT_ORDER: usize = 4;
