use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::QuestionMode;
use crate::graph::KnowledgeGraph;
use crate::policy::TurnOutcome;
use crate::{Error, Result, Rng};

/// Maps question actions to the attribute sets they ask about. The
/// recommend action comes last, at index `n_questions()`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionScheme {
    pub mode: QuestionMode,
    actions: Vec<Vec<u32>>,
    attr_action: Vec<usize>,
}

impl QuestionScheme {
    /// One yes/no question per attribute.
    pub fn binary(n_attrs: usize) -> Self {
        QuestionScheme {
            mode: QuestionMode::Binary,
            actions: (0..n_attrs as u32).map(|p| vec![p]).collect(),
            attr_action: (0..n_attrs).collect(),
        }
    }

    /// One question per facet; `facet_of[p]` is attribute `p`'s facet and
    /// facets must be numbered densely from 0.
    pub fn enumerated(facet_of: &[u32]) -> Result<Self> {
        let n = facet_of.iter().map(|&f| f as usize + 1).max().unwrap_or(0);
        let mut actions = vec![Vec::new(); n];
        for (p, &f) in facet_of.iter().enumerate() {
            actions[f as usize].push(p as u32);
        }
        if let Some(f) = actions.iter().position(|a| a.is_empty()) {
            return Err(Error::InvalidConfig(format!("facet {f} has no attributes")));
        }
        Ok(QuestionScheme {
            mode: QuestionMode::Enumerated,
            actions,
            attr_action: facet_of.iter().map(|&f| f as usize).collect(),
        })
    }

    pub fn n_questions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len() + 1
    }

    pub fn recommend_action(&self) -> usize {
        self.actions.len()
    }

    pub fn n_attrs(&self) -> usize {
        self.attr_action.len()
    }

    pub fn is_question(&self, action: usize) -> bool {
        action < self.actions.len()
    }

    /// Attribute set `P_a` of a question action.
    pub fn attrs(&self, action: usize) -> &[u32] {
        &self.actions[action]
    }

    /// The question action that covers attribute `p`.
    pub fn action_of(&self, p: u32) -> usize {
        self.attr_action[p as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ongoing,
    Success,
    Quit,
}

/// Everything a conversation knows about its user so far. Sets are kept as
/// sorted vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    /// Completed turns.
    pub turn: usize,
    pub user: u32,
    /// Ground-truth item; `None` when a human plays the user.
    pub target: Option<u32>,
    /// Attributes of the target (`P_ses`).
    pub preferred: Vec<u32>,
    /// The attribute the user opened with.
    pub start_attr: u32,
    /// Confirmed attributes (`P_u`).
    pub known: Vec<u32>,
    /// Rejected attributes (`P_neg`).
    pub rejected_attrs: Vec<u32>,
    /// Candidate items (`V_cand`).
    pub candidates: Vec<u32>,
    /// Rejected items (`V_neg`).
    pub rejected_items: Vec<u32>,
    /// Per question action, whether it has been asked.
    pub asked: Vec<bool>,
    pub rewards: Vec<f64>,
    pub history: Vec<TurnOutcome>,
    pub outcome: Outcome,
}

fn insert_sorted(set: &mut Vec<u32>, x: u32) {
    if let Err(i) = set.binary_search(&x) {
        set.insert(i, x);
    }
}

impl SessionState {
    /// A session whose user opens with `start_attr`: `P_u = {p}`,
    /// `V_cand = V_p` and the question covering `p` counts as asked.
    pub fn opened_with(g: &KnowledgeGraph, scheme: &QuestionScheme, user: u32, target: Option<u32>, preferred: Vec<u32>, start_attr: u32) -> Self {
        let mut asked = vec![false; scheme.n_questions()];
        asked[scheme.action_of(start_attr)] = true;
        SessionState {
            turn: 0,
            user,
            target,
            preferred,
            start_attr,
            known: vec![start_attr],
            rejected_attrs: Vec::new(),
            candidates: g.attr_items(start_attr).to_vec(),
            rejected_items: Vec::new(),
            asked,
            rewards: Vec::new(),
            history: Vec::new(),
            outcome: Outcome::Ongoing,
        }
    }

    /// Allowed actions: unasked questions plus the always-available
    /// recommend action.
    pub fn allowed(&self) -> Vec<bool> {
        let mut m: Vec<bool> = self.asked.iter().map(|&a| !a).collect();
        m.push(true);
        m
    }

    /// Applies the answer to question `action`; `revealed` is the part of
    /// `P_a` the user confirms. Returns whether the answer was positive.
    pub fn apply_question(&mut self, g: &KnowledgeGraph, scheme: &QuestionScheme, action: usize, revealed: &[u32]) -> Result<bool> {
        if !scheme.is_question(action) {
            return Err(Error::InvalidAction(action));
        }
        if self.asked[action] {
            return Err(Error::ActionAlreadyAsked(action));
        }
        self.asked[action] = true;
        let attrs = scheme.attrs(action);
        for &p in attrs {
            if revealed.contains(&p) {
                insert_sorted(&mut self.known, p);
            } else {
                insert_sorted(&mut self.rejected_attrs, p);
            }
        }
        let positive = attrs.iter().any(|p| revealed.contains(p));
        if positive {
            self.candidates.retain(|&v| {
                let have = g.item_attrs(v);
                revealed.iter().filter(|p| attrs.contains(p)).all(|p| have.binary_search(p).is_ok())
            });
        }
        Ok(positive)
    }

    /// Applies the answer to a recommendation. On rejection the items
    /// leave `V_cand` and join `V_neg`.
    pub fn apply_recommendation(&mut self, recommended: &[u32], accepted: bool) -> Result<()> {
        if let Some(&v) = recommended.iter().find(|v| self.candidates.binary_search(v).is_err()) {
            return Err(Error::RecommendationOutsideCandidates(v));
        }
        if !accepted {
            self.candidates.retain(|v| !recommended.contains(v));
            for &v in recommended {
                insert_sorted(&mut self.rejected_items, v);
            }
        }
        Ok(())
    }
}

/// Opens a simulated session for `(user, target)` with a uniformly drawn
/// attribute of the target.
pub fn start_session(g: &KnowledgeGraph, scheme: &QuestionScheme, user: u32, target: u32, rng: &mut Rng) -> Result<SessionState> {
    let preferred = g.item_attrs(target).to_vec();
    let &p = preferred.choose(rng).ok_or(Error::TargetHasNoAttributes(target))?;
    Ok(SessionState::opened_with(g, scheme, user, Some(target), preferred, p))
}

/// The simulated user answers a question with `P_a ∩ P_ses`.
pub fn simulate_response_question(state: &mut SessionState, g: &KnowledgeGraph, scheme: &QuestionScheme, action: usize) -> Result<Vec<u32>> {
    if !scheme.is_question(action) {
        return Err(Error::InvalidAction(action));
    }
    let revealed: Vec<u32> = scheme.attrs(action).iter().copied().filter(|p| state.preferred.binary_search(p).is_ok()).collect();
    state.apply_question(g, scheme, action, &revealed)?;
    Ok(revealed)
}

/// The simulated user accepts iff the target is among the recommended items.
pub fn simulate_response_recommendation(state: &mut SessionState, recommended: &[u32]) -> Result<bool> {
    let accepted = state.target.is_some_and(|t| recommended.contains(&t));
    state.apply_recommendation(recommended, accepted)?;
    Ok(accepted)
}
