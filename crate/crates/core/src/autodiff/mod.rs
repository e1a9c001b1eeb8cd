//! Minimal reverse-mode automatic differentiation over dense f64 arrays.

pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use params::ParamStore;
pub use tape::{NodeId, Tape};
pub use tensor::{Shape, TensorValue};
