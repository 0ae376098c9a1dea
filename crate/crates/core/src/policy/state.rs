//! The state vector `[s_ent, s_user, s_conv, s_dial]`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::config::EntropyMode;
use crate::embed::Role;
use crate::graph::{EntityId, KnowledgeGraph};
use crate::math::{binary_entropy, dot, neg_x_ln_x};
use crate::recommend::Scorer;
use crate::{Error, Result};

/// How one finished turn is coded in the dialogue history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnOutcome {
    PositiveAsk,
    IrrelevantAsk,
    RejectedRecommendation,
}

impl TurnOutcome {
    pub fn code(self) -> f64 {
        match self {
            TurnOutcome::PositiveAsk => 1.0,
            TurnOutcome::IrrelevantAsk => 0.0,
            TurnOutcome::RejectedRecommendation => -1.0,
        }
    }
}

/// Sizes of the four state blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub n_attrs: usize,
    /// Number of candidate-count bins (boundaries + 1).
    pub n_bins: usize,
    pub max_turns: usize,
}

impl StateLayout {
    pub fn new(n_attrs: usize, bins: &[usize], max_turns: usize) -> Self {
        StateLayout { n_attrs, n_bins: bins.len() + 1, max_turns }
    }

    pub fn len(&self) -> usize {
        3 * self.n_attrs + self.n_bins + self.max_turns
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entropy(&self) -> Range<usize> {
        0..self.n_attrs
    }

    pub fn user(&self) -> Range<usize> {
        self.n_attrs..2 * self.n_attrs
    }

    pub fn conv(&self) -> Range<usize> {
        2 * self.n_attrs..3 * self.n_attrs
    }

    pub fn dialogue(&self) -> Range<usize> {
        3 * self.n_attrs..self.len()
    }
}

/// Per-attribute entropy of presence among the candidates.
pub fn entropy_vector(g: &KnowledgeGraph, candidates: &[u32], mode: EntropyMode) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut counts = vec![0usize; g.n_attrs()];
    for &v in candidates {
        for &p in g.item_attrs(v) {
            counts[p as usize] += 1;
        }
    }
    let n = candidates.len() as f64;
    Ok(counts
        .into_iter()
        .map(|c| {
            let p = c as f64 / n;
            match mode {
                EntropyMode::Binary => binary_entropy(p),
                EntropyMode::Single => neg_x_ln_x(p),
            }
        })
        .collect())
}

/// `u2 . p2` for every attribute; removed attributes read 0.
pub fn user_pref_vector(scorer: &Scorer<'_>, user: u32) -> Vec<f64> {
    let g = scorer.graph;
    let u2 = scorer.projected(Role::UserAttrUser, g.global(EntityId::user(user)));
    (0..g.n_attrs() as u32)
        .map(|p| {
            let gp = g.global(EntityId::attr(p));
            if scorer.prop.is_removed(gp) {
                0.0
            } else {
                dot(&u2, &scorer.projected(Role::UserAttrAttr, gp))
            }
        })
        .collect()
}

/// `Σ_{q ∈ P_u} q1 . p1` for every attribute; removed attributes read 0.
pub fn conv_pref_vector(scorer: &Scorer<'_>, known: &[u32]) -> Vec<f64> {
    let g = scorer.graph;
    let n = g.n_attrs();
    if known.is_empty() {
        return vec![0.0; n];
    }
    let mut ctx = vec![0.0; scorer.prop.out_dim()];
    for &q in known {
        let gq = g.global(EntityId::attr(q));
        crate::math::axpy(1.0, &scorer.projected(Role::ItemAttrAttr, gq), &mut ctx);
    }
    (0..n as u32)
        .map(|p| {
            let gp = g.global(EntityId::attr(p));
            if scorer.prop.is_removed(gp) {
                0.0
            } else {
                dot(&ctx, &scorer.projected(Role::ItemAttrAttr, gp))
            }
        })
        .collect()
}

/// Index of the bin holding `count`: the number of boundaries below it.
pub fn bin_index(count: usize, bins: &[usize]) -> usize {
    bins.iter().filter(|&&b| count > b).count()
}

/// One-hot candidate-count bin followed by the zero-padded turn history.
pub fn dialogue_vector(history: &[TurnOutcome], candidate_count: usize, max_turns: usize, bins: &[usize]) -> Result<Vec<f64>> {
    if history.len() > max_turns {
        return Err(Error::HistoryTooLong { len: history.len(), max: max_turns });
    }
    let mut out = vec![0.0; bins.len() + 1 + max_turns];
    out[bin_index(candidate_count, bins)] = 1.0;
    for (slot, h) in out[bins.len() + 1..].iter_mut().zip(history) {
        *slot = h.code();
    }
    Ok(out)
}

/// Concatenates the four blocks; `no_graph_conv` zeroes the two
/// graph-derived ones.
pub fn encode_state(entropy: &[f64], user: &[f64], conv: &[f64], dialogue: &[f64], no_graph_conv: bool) -> Vec<f64> {
    let mut s = Vec::with_capacity(entropy.len() + user.len() + conv.len() + dialogue.len());
    s.extend_from_slice(entropy);
    if no_graph_conv {
        s.resize(s.len() + user.len() + conv.len(), 0.0);
    } else {
        s.extend_from_slice(user);
        s.extend_from_slice(conv);
    }
    s.extend_from_slice(dialogue);
    s
}
