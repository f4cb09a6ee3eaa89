pub mod config;
pub mod error;
pub mod gradcheck;
pub mod hybrid;
pub mod image;
pub mod nets;
pub mod patches;
pub mod sketch;
pub mod stylize;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
