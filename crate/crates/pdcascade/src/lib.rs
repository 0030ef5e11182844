//! Period-doubling cascades for interval and disk maps: the renormalization fixed point,
//! cascades of periodic orbits, winding signatures and the models that realize them.

pub mod cli;
pub mod maps;
pub mod models;
pub mod orbits;
pub mod poly;
pub mod renorm;
pub mod signature;

pub use maps::{Affine2, DiskMap, IntervalMap, MapError, MapSpec, Orientation, P2};
pub use models::{BfyOrientation, RigidDiskSystem};
pub use orbits::{CascadeOrbits, PeriodicOrbit};
pub use poly::{Poly, Real};
pub use renorm::{FixedPoint, RenormError};
pub use signature::{ExtendedArc, Isotopy, Signature};

/// Double-precision polynomial, the instantiation used everywhere outside `poly`.
pub type Polynomial = Poly<f64>;
/// Single-precision polynomial.
pub type Polynomial32 = Poly<f32>;
