pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod sysmodel;
pub mod fbl;
pub mod htt;
pub mod accum;
