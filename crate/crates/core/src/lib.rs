pub mod autodiff;
pub mod constraints;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nets;
pub mod objective;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::{Point, Trajectory};
