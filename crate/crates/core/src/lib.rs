//! Long-horizon forecasting with a Haar approximation, a scaled DCT-II and a
//! shared low-rank linear head.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod transforms;

pub use error::{HadlError, Result};
pub use model::{HadlModel, HeadKind, Variant};
pub use tensor::{Matrix, Tensor3};
