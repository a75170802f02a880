pub mod error;
pub mod linalg;
pub mod tensor;
pub mod carleman;
pub mod dissipativity;
pub mod semigroup;
pub mod oracle;
pub mod convergence;
pub mod burgers;
pub mod perturbation;
pub mod io;
pub mod runner;

pub use error::{Error, Result};
