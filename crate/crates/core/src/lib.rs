pub mod error;
pub mod network;
pub mod scenarios;
pub mod statespace;
pub mod tsvf;
pub mod weakmeas;

pub use error::{Error, Result};
