//! Monte Carlo Feynman–Kac solver for parabolic equations driven by
//! fractional Gaussian noise on bounded domains.

pub mod acceptance;
pub mod analysis;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod noisefield;
pub mod pdecheck;
pub mod pathsim;
pub mod rng;
pub mod special;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
