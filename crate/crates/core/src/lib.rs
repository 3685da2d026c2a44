//! Real-space multiple scattering: structure constants, single-site
//! t-matrices, the scattering-path operator `τ = (I − t g)⁻¹ t` by dense and
//! partitioned inversion, local densities of states and operation counts.
//!
//! The numerical core is generic over `f32`/`f64` through [`scalar::Real`];
//! the aliases below fix `f64`.

pub mod angmom;
pub mod cluster;
pub mod dos;
pub mod error;
pub mod linalg;
pub mod opcount;
pub mod partitioned_solver;
pub mod propagator;
pub mod scalar;
pub mod single_site;
pub mod systems;

pub use error::{MsError, Result};

pub type Complex64 = scalar::Cplx<f64>;
pub type Matrix = linalg::DenseMatrix<f64>;
pub type RadialPotential = single_site::RadialPotential<f64>;
pub type RadialSolution = single_site::RadialSolution<f64>;
pub type SiteMatrices = single_site::SiteMatrices<f64>;
pub type StructureConstants = propagator::StructureConstants<f64>;
pub type ScatteringSystem = partitioned_solver::ScatteringSystem<f64>;
pub type TauResult = partitioned_solver::TauResult<f64>;
pub type SiteScatterer = systems::SiteScatterer<f64>;
pub type SiteDosData = dos::SiteDosData<f64>;
