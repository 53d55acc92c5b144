//! Rolled Gaussian processes on Riemannian manifolds: geometry kernels for
//! several embedded manifolds, discrete rolling/unrolling/wrapping/
//! unwrapping of curves, Fréchet means, a B-spline matrix-normal generative
//! model, parameter estimation, and a two-sample permutation test for
//! equality of mean curves.

pub mod basis;
pub mod curves;
pub mod error;
pub mod estimate;
pub mod frechet;
pub mod inference;
pub mod linalg;
pub mod manifold;
pub mod model;
pub mod optim;

pub use error::{Error, Result};
