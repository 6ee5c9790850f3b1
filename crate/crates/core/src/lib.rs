//! Desk-scale numerics for biharmonic maps from the unit ball of R^4.
//!
//! The crate is organised by subsystem:
//!
//! * [`manifold`]: target geometry (nearest point, projectors, second fundamental form)
//! * [`grid4`]: lattice fields on a 4-ball, finite differences, quadrature, polar resampling
//! * [`elliptic`]: matrix-free Poisson solves and the Hodge split of matrix-valued 1-forms
//! * [`tension`]: tension fields, the rewritten equations and the normal-form coefficients
//! * [`flow`]: the biharmonic map heat flow
//! * [`lorentz`]: decreasing rearrangement and Lorentz norms
//! * [`s3harmonics`]: spherical harmonics on S^3 and annulus expansions
//! * [`pohozaev`]: both sides of the Pohozaev identities on annuli
//! * [`bubbletree`]: concentration detection, bubble extraction and neck analysis

pub mod bubbletree;
pub mod elliptic;
pub mod error;
pub mod flow;
pub mod fixtures;
pub mod grid4;
pub mod lorentz;
pub mod manifold;
pub mod pohozaev;
pub mod s3harmonics;
pub mod tension;

pub use error::{Error, Result};
