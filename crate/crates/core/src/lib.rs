pub mod cli;
pub mod error;
pub mod exact;
pub mod freelimit;
pub mod geometry;
pub mod inference;
pub mod mcmc;
pub mod model;
pub mod poly;
pub mod quad;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{EigenvalueConfig, ModelSpec, Support, Theta};
pub use poly::{pv_stieltjes, GridDensity, Polynomial};
