//! Trajectory-ranked maximum-entropy deep IRL.
//!
//! Every epoch samples pairs of demonstrations. Each pair contributes the
//! MaxEnt visitation gradient of both demos and, when their SVCR scores
//! differ, a logistic ranking loss asking the less disruptive demo to earn
//! the higher discounted trajectory reward. Pair gradients are computed
//! against the epoch-start parameters, summed in sampled order and applied
//! as one optimiser step.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::demo::{DemoWindow, Demonstration};
use crate::mdp::{expected_svf, sequence_log_likelihood, soft_value_iteration, ActionSet, GridMdp};
use crate::optim::{apply_update, AdamConfig, AdamState};
use crate::reward_net::{Gradients, RewardModel, DEFAULT_WIDTHS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainingConfig {
    pub epochs: usize,
    pub pairs_per_epoch: usize,
    pub lambda_rank: f64,
    /// Soft value iteration horizon (steps).
    pub horizon: usize,
    pub gamma_mdp: f64,
    pub seed: u64,
    pub widths: Vec<usize>,
    pub optimizer: AdamConfig,
    pub action_set: ActionSet,
    pub include_incomplete: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            pairs_per_epoch: 16,
            lambda_rank: 1.0,
            horizon: 6,
            gamma_mdp: 0.9,
            seed: 0,
            widths: DEFAULT_WIDTHS.to_vec(),
            optimizer: AdamConfig::default(),
            action_set: ActionSet::Cardinal,
            include_incomplete: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs_per_epoch == 0 || self.horizon == 0 {
            return Err(Error::InvalidParameter { name: "training", reason: "pairs_per_epoch and horizon must be >= 1" });
        }
        if !(self.lambda_rank >= 0.0) || !(self.optimizer.learning_rate > 0.0) {
            return Err(Error::InvalidParameter { name: "training", reason: "lambda_rank >= 0 and learning_rate > 0" });
        }
        GridMdp::new(2, self.gamma_mdp).map(|_| ())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean log-likelihood of the demo window paths under the soft policy.
    pub likelihood: f64,
    /// Mean ranking loss over ranked pairs; absent when every pair tied.
    pub ranking_loss: Option<f64>,
    pub ranked_pairs: usize,
    pub pairwise_accuracy: Option<f64>,
    /// Mean L1 gap between demo and expected visitation per window.
    pub svf_l1_gap: f64,
}

/// Pairwise logistic ranking loss `−log σ(r_better − r_worse)`, overflow
/// safe, with its partials `(loss, ∂/∂r_i, ∂/∂r_j)`. The demo with the lower
/// SVCR is the better one; with the usual convention `eps_j < eps_i` this is
/// `−log σ(r_j − r_i)`. Ties carry no ranking signal and return zeros.
pub fn ranking_loss(r_i: f64, r_j: f64, eps_i: f64, eps_j: f64) -> (f64, f64, f64) {
    if eps_i == eps_j {
        return (0.0, 0.0, 0.0);
    }
    if eps_i < eps_j {
        let (loss, dj, di) = ranking_loss(r_j, r_i, eps_j, eps_i);
        return (loss, di, dj);
    }
    let x = r_i - r_j;
    // softplus(x) = max(x, 0) + log1p(exp(−|x|))
    let loss = x.max(0.0) + libm::log1p(libm::exp(-x.abs()));
    let sigma = if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    };
    (loss, sigma, -sigma)
}

fn window_mdp(window: &DemoWindow, config: &TrainingConfig) -> Result<GridMdp> {
    GridMdp::new(window.window.cells_per_side, config.gamma_mdp)?
        .with_action_set(config.action_set)
        .with_goal(window.goal_state)
}

/// Per-state weights `Σ_{k: s_k = s} γ^k` of a demo's visited states,
/// window by window, with a running step index.
fn discount_weights(demo: &Demonstration, gamma: f64) -> Vec<Vec<f64>> {
    let mut k_weight = 1.0;
    demo.windows
        .iter()
        .map(|w| {
            let mut weights = vec![0.0; w.window.state_count()];
            for &s in &w.visited {
                weights[s] += k_weight;
                k_weight *= gamma;
            }
            weights
        })
        .collect()
}

/// Discounted cumulative reward `Σ_k γ^k r(s_k)` over all visited states.
pub fn trajectory_reward(demo: &Demonstration, model: &RewardModel, gamma_mdp: f64) -> Result<f64> {
    let mut total = 0.0;
    for (w, weights) in demo.windows.iter().zip(discount_weights(demo, gamma_mdp)) {
        let rewards = model.forward(&w.features)?;
        total += rewards.iter().zip(&weights).map(|(r, k)| r * k).sum::<f64>();
    }
    Ok(total)
}

/// `∂ trajectory_reward / ∂θ`.
pub fn trajectory_reward_gradient(demo: &Demonstration, model: &RewardModel, gamma_mdp: f64) -> Result<Gradients> {
    let mut grad = model.zero_gradients();
    for (w, weights) in demo.windows.iter().zip(discount_weights(demo, gamma_mdp)) {
        grad.add_scaled(&model.backward(&w.features, &weights)?, 1.0);
    }
    Ok(grad)
}

/// MaxEnt data-term statistics for one demo.
#[derive(Debug, Clone, PartialEq)]
pub struct MedirlTerm {
    /// Gradient of the negative data log-likelihood, averaged over windows:
    /// `(E[μ] − μ_D)·∂r/∂θ`.
    pub gradient: Gradients,
    pub likelihood: f64,
    pub svf_l1_gap: f64,
    pub windows: usize,
}

pub fn medirl_term(demo: &Demonstration, model: &RewardModel, config: &TrainingConfig) -> Result<MedirlTerm> {
    let mut gradient = model.zero_gradients();
    let (mut likelihood, mut gap) = (0.0, 0.0);
    for w in &demo.windows {
        let mdp = window_mdp(w, config)?;
        let rewards = model.forward(&w.features)?;
        let policy = soft_value_iteration(&mdp, &rewards, config.horizon)?;
        let path = w.padded_states(config.horizon);
        let expected = expected_svf(&mdp, &policy, path[0], config.horizon)?;
        let mut error = expected;
        for &s in &path {
            error[s] -= 1.0;
        }
        gap += error.iter().map(|e| e.abs()).sum::<f64>();
        likelihood += sequence_log_likelihood(&mdp, &policy, &path).max(-1e300);
        gradient.add_scaled(&model.backward(&w.features, &error)?, 1.0);
    }
    let n = demo.windows.len().max(1) as f64;
    gradient.scale(1.0 / n);
    Ok(MedirlTerm { gradient, likelihood: likelihood / n, svf_l1_gap: gap / n, windows: demo.windows.len() })
}

/// Everything one sampled pair contributes to an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub gradient: Gradients,
    pub likelihood: f64,
    pub svf_l1_gap: f64,
    pub ranking_loss: Option<f64>,
}

/// Loss gradient of one pair: the mean MaxEnt term of both demos plus
/// `λ_rank` times the ranking gradient (skipped on SVCR ties or `λ_rank = 0`).
pub fn pair_gradient(a: &Demonstration, b: &Demonstration, model: &RewardModel, config: &TrainingConfig) -> Result<PairOutcome> {
    let ta = medirl_term(a, model, config)?;
    let tb = medirl_term(b, model, config)?;
    let mut gradient = ta.gradient;
    gradient.add_scaled(&tb.gradient, 1.0);
    gradient.scale(0.5);

    let mut ranking = None;
    if config.lambda_rank > 0.0 && a.svcr != b.svcr {
        let r_a = trajectory_reward(a, model, config.gamma_mdp)?;
        let r_b = trajectory_reward(b, model, config.gamma_mdp)?;
        let (loss, d_a, d_b) = ranking_loss(r_a, r_b, a.svcr, b.svcr);
        gradient.add_scaled(&trajectory_reward_gradient(a, model, config.gamma_mdp)?, config.lambda_rank * d_a);
        gradient.add_scaled(&trajectory_reward_gradient(b, model, config.gamma_mdp)?, config.lambda_rank * d_b);
        ranking = Some(loss);
    }
    Ok(PairOutcome {
        gradient,
        likelihood: 0.5 * (ta.likelihood + tb.likelihood),
        svf_l1_gap: 0.5 * (ta.svf_l1_gap + tb.svf_l1_gap),
        ranking_loss: ranking,
    })
}

/// Pairs `(i, j)`, `i ≠ j`, drawn for `epoch`. The stream depends only on
/// `(seed, epoch)`.
pub fn sample_pairs(dataset_len: usize, config: &TrainingConfig, epoch: usize) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(epoch as u64);
    (0..config.pairs_per_epoch)
        .map(|_| {
            let i = rng.gen_range(0..dataset_len);
            let mut j = rng.gen_range(0..dataset_len - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect()
}

/// How pair gradients of an epoch get evaluated. Implementations must
/// return outcomes in input order.
pub trait PairExecutor {
    fn run(&self, pairs: &[(usize, usize)], job: &(dyn Fn(usize, usize) -> Result<PairOutcome> + Sync)) -> Vec<Result<PairOutcome>>;
}

pub struct Sequential;

impl PairExecutor for Sequential {
    fn run(&self, pairs: &[(usize, usize)], job: &(dyn Fn(usize, usize) -> Result<PairOutcome> + Sync)) -> Vec<Result<PairOutcome>> {
        pairs.iter().map(|&(i, j)| job(i, j)).collect()
    }
}

/// Demonstrations usable for training under `config`.
pub fn training_set<'a>(dataset: &'a [Demonstration], config: &TrainingConfig) -> Vec<&'a Demonstration> {
    dataset
        .iter()
        .filter(|d| (d.complete || config.include_incomplete) && !d.windows.is_empty())
        .collect()
}

/// The combined loss gradient of one epoch, summed in sampled-pair order,
/// plus summary statistics (pairwise accuracy is left unset).
pub fn epoch_gradient(
    dataset: &[&Demonstration],
    model: &RewardModel,
    config: &TrainingConfig,
    epoch: usize,
    executor: &dyn PairExecutor,
) -> Result<(Gradients, EpochStats)> {
    if dataset.len() < 2 {
        return Err(Error::NotEnoughDemonstrations { needed: 2, found: dataset.len() });
    }
    let pairs = sample_pairs(dataset.len(), config, epoch);
    let job = |i: usize, j: usize| pair_gradient(dataset[i], dataset[j], model, config);
    let outcomes = executor.run(&pairs, &job);

    let mut gradient = model.zero_gradients();
    let (mut likelihood, mut gap, mut rank_loss, mut ranked) = (0.0, 0.0, 0.0, 0usize);
    for outcome in outcomes {
        let o = outcome?;
        gradient.add_scaled(&o.gradient, 1.0);
        likelihood += o.likelihood;
        gap += o.svf_l1_gap;
        if let Some(l) = o.ranking_loss {
            rank_loss += l;
            ranked += 1;
        }
    }
    let n = pairs.len() as f64;
    gradient.scale(1.0 / n);
    let stats = EpochStats {
        epoch,
        likelihood: likelihood / n,
        ranking_loss: (ranked > 0).then(|| rank_loss / ranked as f64),
        ranked_pairs: ranked,
        pairwise_accuracy: None,
        svf_l1_gap: gap / n,
    };
    Ok((gradient, stats))
}

/// One training epoch: sample pairs, compute their gradients with
/// `executor`, apply a single optimiser step.
pub fn train_epoch_with(
    dataset: &[Demonstration],
    model: &mut RewardModel,
    optimizer: &mut AdamState,
    config: &TrainingConfig,
    epoch: usize,
    executor: &dyn PairExecutor,
) -> Result<EpochStats> {
    let usable = training_set(dataset, config);
    let (gradient, mut stats) = epoch_gradient(&usable, model, config, epoch, executor)?;
    apply_update(model, &gradient, optimizer, &config.optimizer)?;
    stats.pairwise_accuracy = pairwise_accuracy_refs(&usable, model, config.gamma_mdp)?;
    Ok(stats)
}

pub fn train_epoch(
    dataset: &[Demonstration],
    model: &mut RewardModel,
    optimizer: &mut AdamState,
    config: &TrainingConfig,
    epoch: usize,
) -> Result<EpochStats> {
    train_epoch_with(dataset, model, optimizer, config, epoch, &Sequential)
}

/// Full training run from a freshly initialised model.
pub fn train_with(
    dataset: &[Demonstration],
    config: &TrainingConfig,
    executor: &dyn PairExecutor,
    mut on_epoch: impl FnMut(&EpochStats, &RewardModel),
) -> Result<RewardModel> {
    config.validate()?;
    let mut model = RewardModel::new(&config.widths, config.seed)?;
    let mut optimizer = AdamState::new(&model);
    for epoch in 0..config.epochs {
        let stats = train_epoch_with(dataset, &mut model, &mut optimizer, config, epoch, executor)?;
        on_epoch(&stats, &model);
    }
    Ok(model)
}

pub fn train(dataset: &[Demonstration], config: &TrainingConfig) -> Result<RewardModel> {
    train_with(dataset, config, &Sequential, |_, _| {})
}

fn pairwise_accuracy_refs(dataset: &[&Demonstration], model: &RewardModel, gamma_mdp: f64) -> Result<Option<f64>> {
    let rewards = dataset
        .iter()
        .map(|d| trajectory_reward(d, model, gamma_mdp))
        .collect::<Result<Vec<f64>>>()?;
    let (mut correct, mut total) = (0usize, 0usize);
    for i in 0..dataset.len() {
        for j in i + 1..dataset.len() {
            let (ei, ej) = (dataset[i].svcr, dataset[j].svcr);
            if ei == ej {
                continue;
            }
            total += 1;
            let (worse, better) = if ei > ej { (i, j) } else { (j, i) };
            if rewards[worse] < rewards[better] {
                correct += 1;
            }
        }
    }
    Ok((total > 0).then(|| correct as f64 / total as f64))
}

/// Fraction of unordered pairs with distinct SVCR where the higher-SVCR
/// demo has strictly lower discounted reward; `None` without such pairs.
pub fn pairwise_accuracy(dataset: &[Demonstration], model: &RewardModel, gamma_mdp: f64) -> Result<Option<f64>> {
    let refs: Vec<&Demonstration> = dataset.iter().collect();
    pairwise_accuracy_refs(&refs, model, gamma_mdp)
}
