//! Recurrent attentive neural processes: meta-learning sequence
//! regression with a latent path, an attentive deterministic path, and
//! an LSTM input transform, trained by a variational ELBO.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
