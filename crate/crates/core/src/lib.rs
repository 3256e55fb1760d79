pub mod domain;
pub mod duality;
pub mod error;
pub mod harness;
pub mod hitting;
pub mod hydro;
pub mod laplace;
pub mod quadrature;
pub mod sep_process;
pub mod specfun;

pub use error::{Error, Result};
