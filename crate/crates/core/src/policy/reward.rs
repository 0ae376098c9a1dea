use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::{RewardConfig, RewardMode};
use crate::{Error, Result};

/// The five user responses that carry a reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserResponse {
    AcceptRecommendation,
    RelevantQuestion,
    IrrelevantQuestion,
    RejectRecommendation,
    Quit,
}

impl UserResponse {
    pub const ALL: [UserResponse; 5] = [
        UserResponse::AcceptRecommendation,
        UserResponse::RelevantQuestion,
        UserResponse::IrrelevantQuestion,
        UserResponse::RejectRecommendation,
        UserResponse::Quit,
    ];
}

/// Reward of one turn. In fine-grained mode a relevant question also earns
/// `beta * (loc_before - loc_after) / loc_before`, where `loc` is the
/// 1-based rank of the target item before and after the answer.
pub fn compute_reward(event: UserResponse, cfg: &RewardConfig, loc_before: Option<usize>, loc_after: Option<usize>) -> Result<f64> {
    Ok(match event {
        UserResponse::AcceptRecommendation => cfg.item,
        UserResponse::RelevantQuestion => {
            let base = cfg.attr + cfg.turn;
            match cfg.mode {
                RewardMode::Cg => base,
                RewardMode::Fg => {
                    let (Some(before), Some(after)) = (loc_before, loc_after) else {
                        return Err(Error::MissingLocation);
                    };
                    let before = before as f64;
                    base + cfg.beta * ((before - after as f64) / before)
                }
            }
        }
        UserResponse::IrrelevantQuestion | UserResponse::RejectRecommendation => cfg.turn,
        UserResponse::Quit => cfg.quit,
    })
}

/// `G_t = r_t + gamma * G_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, &r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}
