//! Data-driven multi-sensor driving simulation.
//!
//! Recorded traces ([`trace`]) are re-rendered from novel viewpoints for
//! RGB ([`rgb`]), LiDAR ([`lidar`]) and event cameras ([`event`]), and
//! driven closed-loop by the episode engine ([`episode`]).

pub mod camera;
pub mod cloud;
pub mod episode;
pub mod error;
pub mod event;
pub mod geometry;
pub mod lidar;
pub mod parallel;
pub mod rgb;
pub mod synthetic;
pub mod trace;

pub use error::{Error, Result};
