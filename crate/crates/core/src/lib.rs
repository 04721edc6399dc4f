//! Headless simulator and navigation stack for a differential-drive robot
//! working a row-crop field.
//!
//! The crate is organised bottom-up: [`world`] generates the field and answers
//! ray queries, [`robot`] and [`sensors`] model the platform, [`geo`] handles
//! the GPS/UTM/map chain, [`mapping`], [`localization`] and [`planner`] form the
//! navigation stack, [`vision_guidance`] turns segmentation masks into bounded
//! steering corrections, [`mission`] ties everything into the waypoint state
//! machine and [`metrics`] scores the result. [`pipeline`] runs complete
//! experiments for the `rowsim` binary.

pub mod config;
pub mod error;
pub mod geo;
pub mod localization;
pub mod mapping;
pub mod math;
pub mod metrics;
pub mod mission;
pub mod pipeline;
pub mod planner;
pub mod robot;
pub mod sensors;
pub mod svg;
pub mod vision_guidance;
pub mod world;

pub use error::{Error, Result};
