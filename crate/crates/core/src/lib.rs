//! Socially-aware local navigation with trajectory-ranked maximum-entropy
//! deep inverse reinforcement learning.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! pipeline: a social-force crowd simulator, the per-cell feature stack over a
//! robot-local grid window, the grid MDP solvers, the reward network, the
//! ranked IRL trainer and the planning loop. File formats, the CLI and the
//! teleoperation bridge live in the `crowdnav` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod demo;
pub mod error;
pub mod features;
pub mod geometry;
pub mod mdp;
pub mod nav;
pub mod optim;
pub mod reward_net;
pub mod sim;
pub mod svcr;
pub mod tmedirl;

pub use error::{Error, Result};
pub use geometry::{Rect, Vec2};
