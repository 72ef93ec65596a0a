pub mod arch;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod ops;
pub mod plot;
pub mod record;
pub mod runner;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
