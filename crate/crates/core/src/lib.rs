pub mod cli;
pub mod data;
pub mod error;
pub mod grad;
pub mod network;
pub mod tensor;
pub mod train;
pub mod tspool;

pub use error::{Error, Result};
