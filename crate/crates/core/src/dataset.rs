//! Interaction data: user filtering, per-user splits and triple
//! construction.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, QuestionMode};
use crate::graph::{EntityId, KnowledgeGraph, Relation, Triple};
use crate::metrics::HeldOutUser;
use crate::session::QuestionScheme;
use crate::{Error, Result, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub timestamp: Option<i64>,
}

/// Dense-indexed input before filtering and splitting.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawData {
    pub n_users: u32,
    pub n_items: u32,
    pub n_attrs: u32,
    pub interactions: Vec<Interaction>,
    pub item_attrs: Vec<(u32, u32)>,
    /// Facet of every attribute, for enumerated questions.
    pub facets: Option<Vec<u32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// A filtered, split dataset. Users are re-indexed densely; `user_ids`
/// maps them back to raw indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_users: u32,
    pub n_items: u32,
    pub n_attrs: u32,
    pub user_ids: Vec<u32>,
    /// Per user, sorted item lists.
    pub train: Vec<Vec<u32>>,
    pub valid: Vec<Vec<u32>>,
    pub test: Vec<Vec<u32>>,
    /// Per item, sorted attributes.
    pub item_attrs: Vec<Vec<u32>>,
    pub facets: Option<Vec<u32>>,
}

fn split_sizes(n: usize, ratios: [f64; 3]) -> (usize, usize) {
    let part = |r: f64| (n as f64 * r + 1e-9) as usize;
    (part(ratios[1]), part(ratios[2]))
}

impl Dataset {
    /// Drops users below `min_interactions`, then splits each user's
    /// interactions: chronologically when every one has a timestamp
    /// (latest go to test), otherwise after a seeded shuffle. Duplicate
    /// interactions keep their first occurrence.
    pub fn build(raw: &RawData, cfg: &DataConfig, rng: &mut Rng) -> Result<Self> {
        let mut per_user: Vec<Vec<Interaction>> = vec![Vec::new(); raw.n_users as usize];
        let mut seen = BTreeSet::new();
        for it in &raw.interactions {
            if it.user >= raw.n_users || it.item >= raw.n_items {
                return Err(Error::UnknownEntity(if it.user >= raw.n_users { EntityId::user(it.user) } else { EntityId::item(it.item) }));
            }
            if seen.insert((it.user, it.item)) {
                per_user[it.user as usize].push(*it);
            }
        }
        let mut item_attrs = vec![Vec::new(); raw.n_items as usize];
        for &(v, p) in &raw.item_attrs {
            if v >= raw.n_items {
                return Err(Error::UnknownEntity(EntityId::item(v)));
            }
            if p >= raw.n_attrs {
                return Err(Error::UnknownEntity(EntityId::attr(p)));
            }
            item_attrs[v as usize].push(p);
        }
        for a in &mut item_attrs {
            a.sort_unstable();
            a.dedup();
        }

        let mut ds = Dataset {
            n_users: 0,
            n_items: raw.n_items,
            n_attrs: raw.n_attrs,
            user_ids: Vec::new(),
            train: Vec::new(),
            valid: Vec::new(),
            test: Vec::new(),
            item_attrs,
            facets: raw.facets.clone(),
        };
        for (u, mut its) in per_user.into_iter().enumerate() {
            if its.len() < cfg.min_interactions.max(1) {
                continue;
            }
            if its.iter().all(|i| i.timestamp.is_some()) {
                its.sort_by_key(|i| (i.timestamp, i.item));
            } else {
                its.shuffle(rng);
            }
            let (n_valid, n_test) = split_sizes(its.len(), cfg.split);
            let n_train = its.len() - n_valid - n_test;
            let sorted = |s: &[Interaction]| {
                let mut v: Vec<u32> = s.iter().map(|i| i.item).collect();
                v.sort_unstable();
                v
            };
            ds.user_ids.push(u as u32);
            ds.train.push(sorted(&its[..n_train]));
            ds.valid.push(sorted(&its[n_train..n_train + n_valid]));
            ds.test.push(sorted(&its[n_train + n_valid..]));
        }
        ds.n_users = ds.user_ids.len() as u32;
        if ds.train.iter().all(Vec::is_empty) {
            return Err(Error::EmptySplit("train"));
        }
        if cfg.split[1] > 0.0 && ds.valid.iter().all(Vec::is_empty) {
            return Err(Error::EmptySplit("valid"));
        }
        if cfg.split[2] > 0.0 && ds.test.iter().all(Vec::is_empty) {
            return Err(Error::EmptySplit("test"));
        }
        Ok(ds)
    }

    /// Triples: user-item from training interactions, item-attribute from
    /// the attribute table, user-attribute iff a training item has it.
    pub fn triples(&self) -> Vec<Triple> {
        let mut out = Vec::new();
        for (u, items) in self.train.iter().enumerate() {
            let u = u as u32;
            let mut attrs = BTreeSet::new();
            for &v in items {
                out.push(Triple::new(EntityId::user(u), Relation::UserItem, EntityId::item(v)));
                attrs.extend(self.item_attrs[v as usize].iter().copied());
            }
            for p in attrs {
                out.push(Triple::new(EntityId::user(u), Relation::UserAttribute, EntityId::attr(p)));
            }
        }
        for (v, attrs) in self.item_attrs.iter().enumerate() {
            for &p in attrs {
                out.push(Triple::new(EntityId::item(v as u32), Relation::ItemAttribute, EntityId::attr(p)));
            }
        }
        out
    }

    pub fn graph(&self) -> Result<KnowledgeGraph> {
        KnowledgeGraph::with_counts([self.n_users, self.n_items, self.n_attrs], &self.triples())
    }

    pub fn scheme(&self, mode: QuestionMode) -> Result<QuestionScheme> {
        match mode {
            QuestionMode::Binary => Ok(QuestionScheme::binary(self.n_attrs as usize)),
            QuestionMode::Enumerated => match &self.facets {
                Some(f) => QuestionScheme::enumerated(f),
                None => Err(Error::InvalidConfig("enumerated questions need a facet table".into())),
            },
        }
    }

    pub fn split(&self, s: Split) -> &[Vec<u32>] {
        match s {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// `(user, target)` session pairs of a split, skipping targets without
    /// attributes (a session cannot open on them).
    pub fn session_pairs(&self, s: Split) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (u, items) in self.split(s).iter().enumerate() {
            for &v in items {
                if !self.item_attrs[v as usize].is_empty() {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }

    /// Users with held-out positives in `s`, for offline metrics.
    pub fn held_out(&self, s: Split) -> Vec<HeldOutUser> {
        (0..self.n_users as usize)
            .filter(|&u| !self.split(s)[u].is_empty())
            .map(|u| {
                let mut interacted: Vec<u32> = self.train[u].iter().chain(&self.valid[u]).chain(&self.test[u]).copied().collect();
                interacted.sort_unstable();
                HeldOutUser { user: u as u32, positives: self.split(s)[u].clone(), train: self.train[u].clone(), interacted }
            })
            .collect()
    }
}
