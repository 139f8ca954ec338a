pub mod attention;
pub mod autograd;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod extract;
pub mod geometry;
pub mod kernels;
pub mod layers;
pub mod locenc;
pub mod mask;
pub mod narrate;
pub mod params;
pub mod pipeline;
pub mod segnet;
pub mod service;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
