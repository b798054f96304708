//! Calculus on Wasserstein space restricted to finitely supported measures.
//!
//! The crate evaluates k-polynomial functionals `F_Φ[m] = (1/k)∫Φ dm^{⊗k}`,
//! their Wasserstein derivatives and partial Laplacians, the spectral
//! representation through the eigenfunctions `F^k_ξ`, the Brownian flow on
//! measures, kernel reconstruction by inclusion–exclusion and the signed
//! product measures `P^{k,R}`.

pub mod calculus;
pub mod coupling;
pub mod error;
pub mod heat;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod measure;
pub mod product_measure;
pub mod reconstruction;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod sum;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
