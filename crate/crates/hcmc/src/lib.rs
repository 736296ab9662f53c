//! Constant mean curvature (H > 1) surfaces in hyperbolic space, built with the
//! DPW loop-group method.
//!
//! The pipeline: a holomorphic potential (matrix Laurent series in the spectral
//! parameter) is integrated to a holomorphic frame, the frame is split by loop-group
//! Iwasawa decomposition, and the Sym-Bobenko formula turns the unitary factor into
//! an immersion into the matrix model of hyperbolic 3-space. Supported potentials:
//! round spheres, Delaunay surfaces, n-noids with Delaunay ends, and CMC
//! perturbations of minimal n-noids. A Gauss-Newton continuation solver closes the
//! monodromy and regularity problems for the n-noid families, and a `verify` layer
//! checks the generated geometry against closed-form oracles (profile ODE, period
//! integrals, blow-up limits, axes, embeddedness certificates).

pub mod error;
pub mod frame;
pub mod hyperbolic;
pub mod immersion;
pub mod iwasawa;
pub mod loops;
pub mod mat2;
pub mod potentials;
pub mod profile;
pub mod rk;
pub mod solver;
pub mod verify;
pub mod zap;

pub use error::{Error, Result};
pub use mat2::{Mat2, C64};
