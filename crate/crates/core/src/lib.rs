pub mod bessel;
pub mod density;
pub mod domain;
pub mod eigen;
pub mod error;
pub mod extrapolate;
pub mod fem;
pub mod fields;
pub mod harness;
pub mod mesh;
pub mod ortho;
pub mod quadrature;
pub mod radial;
pub mod sparse;

pub use error::{Error, Result};
