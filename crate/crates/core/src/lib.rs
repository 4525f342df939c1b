//! Numerics for Liouville systems on the flat unit torus: global radial
//! solutions, critical hypersurfaces, torus Green's functions, blowup
//! location and leading-term coefficients, and a spectral mean-field solver.

pub mod error;
pub mod fft2;
pub mod geometry;
pub mod green;
pub mod leading;
pub mod mass_map;
pub mod pde;
pub mod radial;
pub mod special;
pub mod system_algebra;
pub mod verify;

pub use error::{Error, Result};
