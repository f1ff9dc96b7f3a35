//! Numerical laboratory for the critical sinh-Gordon gradient flow on the flat unit torus.

pub mod barrier;
pub mod blowup;
pub mod energy;
pub mod error;
pub mod flow;
pub mod green;
pub mod initial;
pub mod mfe;
pub mod radial;
pub mod scalar;
pub mod torus;
pub mod weights;

pub use energy::{FlowConfig, SinhModel};
pub use error::{Error, Result};
pub use scalar::Real;
pub use torus::{Grid, Point, ScalarField, SpectralInterpolant, SpectralWorkspace};
pub use weights::WeightSpec;

/// Double-precision field, the type every solver above the kernels works in.
pub type Field = ScalarField<f64>;
pub type Field32 = ScalarField<f32>;
pub type Workspace = SpectralWorkspace<f64>;
pub type Workspace32 = SpectralWorkspace<f32>;
pub type Model = SinhModel<f64>;
