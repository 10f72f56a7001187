//! Density-adaptive social distance and the social layer.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::GridWindow;
use crate::geometry::Vec2;
use crate::sim::PedestrianState;
use crate::{Error, Result};

/// Lower asymptote of the fitted comfort-distance curve, persons/m².
pub const DENSITY_ASYMPTOTE: f64 = 0.8824;
/// Offset above the asymptote where the density is clamped.
pub const DENSITY_CLAMP_OFFSET: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SocialDistanceParams {
    pub alpha: f64,
    pub beta: f64,
    pub density_radius: f64,
    pub d_social_min: f64,
    pub d_social_max: f64,
}

impl Default for SocialDistanceParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 2.0, density_radius: 2.0, d_social_min: 0.45, d_social_max: 2.0 }
    }
}

impl SocialDistanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter { name: "beta", reason: "must be > 0" });
        }
        if !(self.d_social_min > 0.0 && self.d_social_min < self.d_social_max) {
            return Err(Error::InvalidParameter { name: "d_social", reason: "need 0 < min < max" });
        }
        if !(self.density_radius > 0.0) {
            return Err(Error::InvalidParameter { name: "density_radius", reason: "must be > 0" });
        }
        Ok(())
    }
}

/// Comfort distance for a local crowd density, clamped to
/// `[d_social_min, d_social_max]`.
pub fn social_distance(rho_den: f64, params: &SocialDistanceParams) -> f64 {
    let rho = rho_den.max(DENSITY_ASYMPTOTE + DENSITY_CLAMP_OFFSET);
    let d = 1.577 / libm::pow(rho - DENSITY_ASYMPTOTE, 0.215) - 0.967;
    d.clamp(params.d_social_min, params.d_social_max)
}

/// Persons per m² around pedestrian `index`: other pedestrians within
/// `density_radius`, divided by the disc area.
pub fn crowd_density(pedestrians: &[PedestrianState], index: usize, density_radius: f64) -> f64 {
    let me = pedestrians[index].position;
    let neighbours = pedestrians
        .iter()
        .enumerate()
        .filter(|&(j, p)| j != index && p.position.distance(me) <= density_radius)
        .count();
    neighbours as f64 / (PI * density_radius * density_radius)
}

/// Social radius of every pedestrian, in input order.
pub fn social_radii(pedestrians: &[PedestrianState], params: &SocialDistanceParams) -> Vec<f64> {
    (0..pedestrians.len())
        .map(|i| social_distance(crowd_density(pedestrians, i, params.density_radius), params))
        .collect()
}

/// Penalty for a point at distance `d` from a person with comfort radius
/// `d_social`: `α·(d^β − d_social^β)/d_social^β` inside the disc, 0 outside.
pub fn social_value(d: f64, d_social: f64, params: &SocialDistanceParams) -> f64 {
    if d <= d_social {
        let ds = libm::pow(d_social, params.beta);
        params.alpha * (libm::pow(d, params.beta) - ds) / ds
    } else {
        0.0
    }
}

/// Raw social layer, scored against the nearest pedestrian of each cell.
pub fn social_layer(window: &GridWindow, pedestrians: &[PedestrianState], params: &SocialDistanceParams) -> Vec<f64> {
    let radii = social_radii(pedestrians, params);
    (0..window.state_count())
        .map(|s| {
            let c: Vec2 = window.state_center(s);
            let nearest = pedestrians
                .iter()
                .enumerate()
                .map(|(i, p)| (i, p.position.distance(c)))
                .fold(None, |best: Option<(usize, f64)>, cand| match best {
                    Some(b) if b.1 <= cand.1 => Some(b),
                    _ => Some(cand),
                });
            nearest.map_or(0.0, |(i, d)| social_value(d, radii[i], params))
        })
        .collect()
}
