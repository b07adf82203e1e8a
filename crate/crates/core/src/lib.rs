pub mod activation;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod network;
pub mod quadrature;
pub mod report;
pub mod sde;
pub mod smuc;
pub mod special;
pub mod uncertainty;

pub use error::{Error, Result};
