//! IO, formats, CLI plumbing and the teleoperation bridge on top of
//! `crowdnav-core`.

pub mod archive;
pub mod checkpoint;
pub mod config;
pub mod parallel;
pub mod report;
pub mod teleop;

pub use crowdnav_core as core;
