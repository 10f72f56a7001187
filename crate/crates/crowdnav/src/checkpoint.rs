//! JSON reward-model checkpoints.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crowdnav_core::reward_net::RewardModel;
use crowdnav_core::tmedirl::TrainingConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub widths: Vec<usize>,
    pub seed: u64,
    /// Layer by layer: row-major weights, then biases.
    pub parameters: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingConfig>,
}

impl Checkpoint {
    pub fn from_model(model: &RewardModel, training: Option<TrainingConfig>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            widths: model.widths(),
            seed: model.seed,
            parameters: model.parameters(),
            training,
        }
    }

    pub fn model(&self) -> anyhow::Result<RewardModel> {
        if self.version != CHECKPOINT_VERSION {
            bail!("unsupported checkpoint version {}", self.version);
        }
        let model = RewardModel::from_parameters(&self.widths, self.seed, &self.parameters)?;
        if !model.is_finite() {
            bail!("checkpoint holds non-finite parameters");
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, self.to_json() + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
