pub mod coprime;
pub mod error;
pub mod linalg;
pub mod lti;
pub mod param_maps;
pub mod synthesis;

pub use error::{Error, Result};
