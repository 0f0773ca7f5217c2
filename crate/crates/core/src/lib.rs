pub mod config;
pub mod error;
pub mod fem;
pub mod fourier_op;
pub mod harmonics;
pub mod invert;
pub mod krylov;
pub mod measure;
pub mod mesh;
pub mod par;
pub mod pipeline;
pub mod potentials;
pub mod quadrature;
pub mod sgdiff;

pub use error::{Error, Result};
