//! Run configuration. Defaults: m = 64, four propagation steps, margin 4, gamma 0.7, T = 15,
//! K = 10, rewards 1 / 0.1 / -0.01 / -0.3, beta 0.1.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ItemLoss {
    /// `-Σ [ln σ(y_pos) + ln σ(-y_neg)]`
    #[default]
    Pointwise,
    /// `-Σ ln σ(y_pos - y_neg)`
    Bpr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    /// Embedding size of each propagation step (m).
    pub dim: usize,
    /// Number of propagation steps, counting the raw embedding as step 1.
    pub steps: usize,
    /// Margin of the graph loss.
    pub margin: f64,
    pub lr: f64,
    /// Epochs of graph-loss-only pretraining.
    pub pretrain_epochs: usize,
    /// Epochs of alternating graph / item training.
    pub epochs: usize,
    pub batch_size: usize,
    /// Normalise attention with a softmax over each neighbourhood.
    pub softmax_attention: bool,
    /// Maximum incident triples aggregated per entity (0 = unlimited).
    pub max_degree: usize,
    pub item_loss: ItemLoss,
    /// Half-width of the uniform noise added to the identity propagation
    /// matrices at initialisation.
    pub init_noise: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 64,
            steps: 4,
            margin: 4.0,
            lr: 0.001,
            pretrain_epochs: 10,
            epochs: 10,
            batch_size: 256,
            softmax_attention: false,
            max_degree: 0,
            item_loss: ItemLoss::Pointwise,
            init_noise: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub optimizer: Optimizer,
    /// Subtract the mean return of the trajectory before the update.
    pub mean_baseline: bool,
    /// Passes over the training pairs in `train-policy`.
    pub epochs: usize,
    /// Hard cap on training sessions (0 = no cap).
    pub max_sessions: usize,
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    /// Teacher sessions rolled out for imitation pretraining.
    pub pretrain_sessions: usize,
    /// Pick the argmax action at evaluation time instead of sampling.
    pub greedy_eval: bool,
    /// Validation sessions run after each training epoch.
    pub valid_sessions: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: vec![64],
            lr: 0.001,
            optimizer: Optimizer::Sgd,
            mean_baseline: false,
            epochs: 1,
            max_sessions: 0,
            pretrain_lr: 0.01,
            pretrain_epochs: 20,
            pretrain_sessions: 500,
            greedy_eval: false,
            valid_sessions: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QuestionMode {
    #[default]
    Binary,
    Enumerated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EntropyMode {
    /// `-p ln p - (1-p) ln (1-p)` of attribute presence among candidates.
    #[default]
    Binary,
    /// `-p ln p` only.
    Single,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Maximum number of turns (T).
    pub max_turns: usize,
    /// Items per recommendation (K).
    pub rec_size: usize,
    pub question_mode: QuestionMode,
    /// Candidate-count bin boundaries for the dialogue feature.
    pub bins: Vec<usize>,
    pub entropy: EntropyMode,
    /// Fine-tuning passes after a rejected recommendation.
    pub finetune_steps: usize,
    /// Fine-tuning learning rate; `None` reuses the offline rate.
    pub finetune_lr: Option<f64>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            max_turns: 15,
            rec_size: 10,
            question_mode: QuestionMode::Binary,
            bins: vec![10, 50, 100, 200, 500],
            entropy: EntropyMode::Binary,
            finetune_steps: 1,
            finetune_lr: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// Coarse-grained.
    #[default]
    Cg,
    /// Fine-grained: adds the ranking-improvement term to relevant questions.
    Fg,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub item: f64,
    pub attr: f64,
    pub turn: f64,
    pub quit: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mode: RewardMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            item: 1.0,
            attr: 0.1,
            turn: -0.01,
            quit: -0.3,
            beta: 0.1,
            gamma: 0.7,
            mode: RewardMode::Cg,
        }
    }
}

/// Component switches for ablation runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// `-graphCon`: zero the graph-derived parts of the state.
    pub no_graph_conv: bool,
    /// `-graphRec`: score items from un-propagated embeddings.
    pub no_graph_rec: bool,
    /// `-dynamic`: never remove negative entities from the session graph.
    pub static_graph: bool,
    /// `-map`: identity role projections.
    pub no_projection: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Train / valid / test ratios.
    pub split: [f64; 3],
    /// Users with fewer interactions are dropped.
    pub min_interactions: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { split: [0.7, 0.2, 0.1], min_interactions: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub embed: EmbedConfig,
    pub policy: PolicyConfig,
    pub session: SessionConfig,
    pub reward: RewardConfig,
    pub ablation: Ablation,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 2021,
            data: DataConfig::default(),
            embed: EmbedConfig::default(),
            policy: PolicyConfig::default(),
            session: SessionConfig::default(),
            reward: RewardConfig::default(),
            ablation: Ablation::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(String::from(msg)));
        if self.embed.dim == 0 || self.embed.steps == 0 {
            return bad("embed.dim and embed.steps must be positive");
        }
        if self.embed.margin <= 0.0 {
            return bad("embed.margin must be positive");
        }
        if self.embed.batch_size == 0 {
            return bad("embed.batch_size must be positive");
        }
        if !(self.reward.gamma > 0.0 && self.reward.gamma <= 1.0) {
            return bad("reward.gamma must lie in (0, 1]");
        }
        if self.session.max_turns == 0 || self.session.rec_size == 0 {
            return bad("session.max_turns and session.rec_size must be positive");
        }
        if self.session.bins.windows(2).any(|w| w[0] >= w[1]) {
            return bad("session.bins must be strictly increasing");
        }
        let s: f64 = self.data.split.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.data.split.iter().any(|&x| x < 0.0) {
            return bad("data.split must be nonnegative and sum to 1");
        }
        Ok(())
    }
}
