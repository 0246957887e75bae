pub mod error;
pub mod exp_sampler;
pub mod laws;
pub mod object;
pub mod ord_transform;
pub mod oracle;
pub mod quad;
pub mod rng;
pub mod series;
pub mod spec;
pub mod special;
pub mod stats;
pub mod words;

pub use error::{Error, Result};
