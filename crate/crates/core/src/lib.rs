//! MDHR: multi-scale facial dynamics with hierarchical AU relationship
//! modelling, built on the `mdhr-tensor` autodiff crate.

pub mod backbone;
pub mod checkpoint;
pub mod combo;
pub mod config;
pub mod data;
pub mod error;
pub mod head;
pub mod hsr;
pub mod mfd;
pub mod model;
pub mod objective;
pub mod optim;
pub mod params;
pub mod trainer;
pub mod verify;

pub use config::{Precision, RunConfig};
pub use error::{CoreError, Result};
pub use model::Mdhr;
pub use params::ParamStore;
