//! Thermodynamic formalism for hyperbolic meromorphic maps.
//!
//! Pressure of the spherical transfer operator over preimage trees, the Bowen root
//! (Poincaré exponent), IFS lower bounds, box counting on rendered Julia sets, and the
//! shift coding of Cantor Julia sets of `λ tan z`.

pub mod cli;
pub mod dimension;
pub mod error;
pub mod hyperbolicity;
pub mod maps;
pub mod numerics;
pub mod poly;
pub mod render;
pub mod sphere;
pub mod symbolic;
pub mod transfer;

pub use error::{Error, Result};
pub use maps::{Family, MapSpec, OrbitRecord, SingularData, Terminal};
pub use sphere::{chordal_distance, spherical_derivative, SpherePoint, SphericalDerivativeValue};
