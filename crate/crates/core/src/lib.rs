//! Homogeneous cooling and uniform shear flow for the Boltzmann equation with
//! Maxwell molecules: collision kernels, self-similar profiles, moment
//! closures, the linear moment spectrum and a DSMC solver in the
//! self-similar frame.

pub mod closure;
pub mod dsmc;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod moments;
pub mod profile;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use closure::{DistributionMoments, GaussianMixture, GaussianTestDistribution, McEstimate};
pub use error::{Result, UsfError};
pub use kernel::{derive_constants, CollisionConstants, KernelFamily, KernelSpec, Vec3};
pub use moments::{assemble_u, mode_moments, ModeMoments, MomentState, ParticleEnsemble};
pub use profile::{ProfileOrder, ProfileSpec, SteadyMoments};
pub use spectral::{EigenSystem, ShearParams, SourceSeries};
pub use dsmc::{InitSpec, Record, RunOutput, SimConfig, SimState, VelocityShape};
pub use stats::{fit_exponential, ExpFit};
