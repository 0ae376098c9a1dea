use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{QuestionScheme, SessionState};
use crate::policy::{argmax, sample_action, PolicyParams};
use crate::{Error, Result, Rng};

/// What an agent may look at when choosing an action.
pub struct Decision<'a> {
    /// Encoded state; present whenever the agent asked for it.
    pub state: Option<&'a [f64]>,
    pub allowed: &'a [bool],
    pub session: &'a SessionState,
    /// Per-attribute entropy over the current candidates.
    pub entropy: &'a [f64],
    pub scheme: &'a QuestionScheme,
    pub rec_size: usize,
}

/// Dialogue policies: the learned MLP and the rule-based agents.
#[derive(Clone, Debug)]
pub enum Agent<'p> {
    Learned { params: &'p PolicyParams, greedy: bool },
    /// Always recommends.
    AbsGreedy,
    /// Recommends with probability `min(1, K/|V_cand|)`, otherwise asks the
    /// unasked question of maximum entropy.
    MaxEntropy,
    /// Teacher that asks, in random order, the unasked questions touching
    /// the target's attributes and then recommends.
    GroundTruth,
    /// Replays fixed actions, then recommends.
    Scripted { actions: Vec<usize>, next: usize },
}

impl Agent<'_> {
    pub fn scripted(actions: Vec<usize>) -> Self {
        Agent::Scripted { actions, next: 0 }
    }

    pub fn needs_state(&self) -> bool {
        matches!(self, Agent::Learned { .. })
    }

    pub fn choose(&mut self, d: &Decision<'_>, rng: &mut Rng) -> Result<usize> {
        let recommend = d.scheme.recommend_action();
        match self {
            Agent::Learned { params, greedy } => {
                let state = d.state.ok_or(Error::DimensionMismatch { expected: params.input_dim(), got: 0 })?;
                let probs = params.forward(state, d.allowed)?;
                Ok(if *greedy { argmax(&probs) } else { sample_action(&probs, rng) })
            }
            Agent::AbsGreedy => Ok(recommend),
            Agent::MaxEntropy => Ok(max_entropy_action(d, rng)),
            Agent::GroundTruth => {
                let useful: Vec<usize> = (0..d.scheme.n_questions())
                    .filter(|&a| d.allowed[a] && d.scheme.attrs(a).iter().any(|p| d.session.preferred.binary_search(p).is_ok()))
                    .collect();
                Ok(useful.choose(rng).copied().unwrap_or(recommend))
            }
            Agent::Scripted { actions, next } => {
                let a = actions.get(*next).copied().unwrap_or(recommend);
                *next += 1;
                Ok(a)
            }
        }
    }
}

/// Max Entropy rule. A question's entropy is its attribute's entropy in
/// binary mode and the largest entropy among its attributes for facets.
pub fn max_entropy_action(d: &Decision<'_>, rng: &mut Rng) -> usize {
    let recommend = d.scheme.recommend_action();
    let n = d.session.candidates.len().max(1);
    let trigger = (d.rec_size as f64 / n as f64).min(1.0);
    let draw: f64 = rng.gen();
    if draw < trigger {
        return recommend;
    }
    let mut best: Option<(usize, f64)> = None;
    for a in (0..d.scheme.n_questions()).filter(|&a| d.allowed[a]) {
        let h = d.scheme.attrs(a).iter().map(|&p| d.entropy[p as usize]).fold(f64::NEG_INFINITY, f64::max);
        if best.is_none_or(|(_, b)| h > b) {
            best = Some((a, h));
        }
    }
    best.map_or(recommend, |(a, _)| a)
}
