pub mod dataio;
pub mod error;
pub mod gradcore;
pub mod harness;
mod init;
pub mod kme;
pub mod malstm;
pub mod mat;
pub mod metrics;
pub mod model;
pub mod syngen;

pub use error::{Error, Result};
pub use init::INIT_STD;
