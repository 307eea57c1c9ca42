//! Collective Casimir-Polder forces on chains of two-level emitters above a
//! planar half-space, with surface-modified collective decay.

pub mod coeffs;
pub mod config;
pub mod dicke;
pub mod dynamics;
pub mod error;
pub mod forces;
pub mod greens;
pub mod media;
pub mod quadrature;
pub mod units;

pub use error::{Error, Result};
pub use media::{Frequency, Medium};
pub use quadrature::QuadratureSpec;
pub use coeffs::{couplings, CouplingCache, CouplingSet, EmitterParams, Geometry};
pub use dicke::{QuantumState, SpinOps};
pub use forces::{force_of_state, force_map, subradiant_sweep, ForceMap, MapGrid, SpecialForces, SubradiantSweep};
pub use dynamics::{evolve, EvolutionSpec, ForceSeries, InitialState, Integrator};
pub use config::{RunConfig, PRESETS};
