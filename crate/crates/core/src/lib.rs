//! Max-min-rate data harvesting with a multi-antenna UAV.

pub mod channel;
pub mod energy;
pub mod error;
pub mod hover;
pub mod opt_kernels;
pub mod scenario;
pub mod schedule;
pub mod trajectory;

pub use error::{Error, Result};
pub use opt_kernels::Mode;
pub use scenario::{BoxRegion, MissionTemplate, Point, RadioParams, Scenario};
