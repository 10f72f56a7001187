//! Rayon-backed training and evaluation. Results are gathered in input
//! order, so they match the sequential versions exactly.

use rayon::prelude::*;

use crowdnav_core::demo::{Demonstration, NoiseModel};
use crowdnav_core::nav::{collect_scripted_with, run_episode, EpisodeResult, RuntimeConfig};
use crowdnav_core::reward_net::RewardFunction;
use crowdnav_core::sim::Scenario;
use crowdnav_core::tmedirl::{PairExecutor, PairOutcome};
use crowdnav_core::Result;

pub struct RayonPairs;

impl PairExecutor for RayonPairs {
    fn run(&self, pairs: &[(usize, usize)], job: &(dyn Fn(usize, usize) -> Result<PairOutcome> + Sync)) -> Vec<Result<PairOutcome>> {
        pairs.par_iter().map(|&(i, j)| job(i, j)).collect()
    }
}

pub fn evaluate(reward: &(dyn RewardFunction + Sync), scenarios: &[Scenario], config: &RuntimeConfig) -> Result<Vec<EpisodeResult>> {
    scenarios.par_iter().map(|s| run_episode(s, reward, config)).collect()
}

/// Scripted demonstrations: episode `k` runs `scenario` with seed
/// `seed + k` and noise level `noise_levels[k % len]`.
pub fn collect(
    scenario: &Scenario,
    episodes: usize,
    seed: u64,
    noise: NoiseModel,
    noise_levels: &[f64],
    config: &RuntimeConfig,
) -> Result<Vec<Demonstration>> {
    (0..episodes)
        .into_par_iter()
        .map(|k| {
            let s = scenario.with_seed(seed + k as u64);
            let p = noise_levels[k % noise_levels.len()];
            collect_scripted_with(&s, noise, p, noise_seed(s.seed), k as u64, config)
        })
        .collect()
}

/// Noise stream seed of a scripted episode, decorrelated from the scenario
/// seed.
pub fn noise_seed(scenario_seed: u64) -> u64 {
    scenario_seed ^ 0x9e37_79b9_7f4a_7c15
}
