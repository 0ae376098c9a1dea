//! Heterogeneous user/item/attribute knowledge graph.
//!
//! [`KnowledgeGraph`] is the immutable base store. A conversation works on a
//! [`SessionGraph`], a borrowed view with an overlay of removed entities:
//! every triple touching a removed entity disappears from all queries, and
//! [`SessionGraph::reset_session`] brings back the base graph exactly.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    User,
    Item,
    Attribute,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::User, EntityKind::Item, EntityKind::Attribute];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> &'static str {
        match self {
            EntityKind::User => "user",
            EntityKind::Item => "item",
            EntityKind::Attribute => "attr",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "user" | "u" => Some(EntityKind::User),
            "item" | "v" => Some(EntityKind::Item),
            "attr" | "attribute" | "p" => Some(EntityKind::Attribute),
            _ => None,
        }
    }
}

/// An entity, identified by its kind and a dense per-kind index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId {
    pub kind: EntityKind,
    pub index: u32,
}

impl EntityId {
    pub const fn user(index: u32) -> Self {
        EntityId { kind: EntityKind::User, index }
    }
    pub const fn item(index: u32) -> Self {
        EntityId { kind: EntityKind::Item, index }
    }
    pub const fn attr(index: u32) -> Self {
        EntityId { kind: EntityKind::Attribute, index }
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.tag(), self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    /// r0: user interacted with item.
    UserItem = 0,
    /// r1: item has attribute.
    ItemAttribute = 1,
    /// r2: user cares about attribute.
    UserAttribute = 2,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::UserItem, Relation::ItemAttribute, Relation::UserAttribute];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Relation::ALL.get(id).copied()
    }

    /// Kinds of (head, tail) this relation connects.
    pub fn kinds(self) -> (EntityKind, EntityKind) {
        match self {
            Relation::UserItem => (EntityKind::User, EntityKind::Item),
            Relation::ItemAttribute => (EntityKind::Item, EntityKind::Attribute),
            Relation::UserAttribute => (EntityKind::User, EntityKind::Attribute),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.id())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: Relation,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: Relation, tail: EntityId) -> Self {
        Triple { head, relation, tail }
    }

    fn check_kinds(&self) -> Result<()> {
        let (h, t) = self.relation.kinds();
        if self.head.kind != h || self.tail.kind != t {
            return Err(Error::MalformedTriple {
                head: self.head,
                relation: self.relation,
                tail: self.tail,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// The queried entity is the triple's head.
    Outgoing,
    /// The queried entity is the triple's tail.
    Incoming,
}

/// One incident triple seen from one of its endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub relation: Relation,
    pub entity: EntityId,
    pub direction: Direction,
    /// Index of the triple in [`KnowledgeGraph::triples`].
    pub triple: u32,
}

/// Immutable base graph plus derived index maps.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeGraph {
    counts: [u32; 3],
    offsets: [usize; 3],
    triples: Vec<Triple>,
    adj_start: Vec<usize>,
    adj: Vec<Neighbor>,
    item_attrs: Vec<Vec<u32>>,
    attr_items: Vec<Vec<u32>>,
    user_items: Vec<Vec<u32>>,
}

impl KnowledgeGraph {
    /// Builds a graph whose entity counts are inferred from the triples
    /// (largest index + 1 per kind).
    pub fn build(triples: &[Triple]) -> Result<Self> {
        let mut counts = [0u32; 3];
        for t in triples {
            for e in [t.head, t.tail] {
                let c = &mut counts[e.kind.slot()];
                *c = (*c).max(e.index + 1);
            }
        }
        Self::with_counts(counts, triples)
    }

    /// Builds a graph with explicit entity counts `[users, items, attributes]`,
    /// so entities without any triple still exist.
    pub fn with_counts(counts: [u32; 3], triples: &[Triple]) -> Result<Self> {
        let mut sorted: Vec<Triple> = triples.to_vec();
        for t in &sorted {
            t.check_kinds()?;
            for e in [t.head, t.tail] {
                if e.index >= counts[e.kind.slot()] {
                    return Err(Error::UnknownEntity(e));
                }
            }
        }
        sorted.sort_by_key(|t| (t.relation, t.head, t.tail));
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateTriple {
                head: w[0].head,
                relation: w[0].relation,
                tail: w[0].tail,
            });
        }

        let offsets = [0, counts[0] as usize, (counts[0] + counts[1]) as usize];
        let n = (counts[0] + counts[1] + counts[2]) as usize;

        let mut per_entity: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
        for (id, t) in sorted.iter().enumerate() {
            let id = id as u32;
            per_entity[offsets[t.head.kind.slot()] + t.head.index as usize].push(Neighbor {
                relation: t.relation,
                entity: t.tail,
                direction: Direction::Outgoing,
                triple: id,
            });
            per_entity[offsets[t.tail.kind.slot()] + t.tail.index as usize].push(Neighbor {
                relation: t.relation,
                entity: t.head,
                direction: Direction::Incoming,
                triple: id,
            });
        }
        let mut adj_start = Vec::with_capacity(n + 1);
        let mut adj = Vec::with_capacity(sorted.len() * 2);
        for mut list in per_entity {
            list.sort_by_key(|nb| (nb.relation, nb.entity.index));
            adj_start.push(adj.len());
            adj.extend(list);
        }
        adj_start.push(adj.len());

        let mut item_attrs = vec![Vec::new(); counts[1] as usize];
        let mut attr_items = vec![Vec::new(); counts[2] as usize];
        let mut user_items = vec![Vec::new(); counts[0] as usize];
        for t in &sorted {
            match t.relation {
                Relation::ItemAttribute => {
                    item_attrs[t.head.index as usize].push(t.tail.index);
                    attr_items[t.tail.index as usize].push(t.head.index);
                }
                Relation::UserItem => user_items[t.head.index as usize].push(t.tail.index),
                Relation::UserAttribute => {}
            }
        }
        for list in item_attrs.iter_mut().chain(attr_items.iter_mut()).chain(user_items.iter_mut()) {
            list.sort_unstable();
        }

        Ok(KnowledgeGraph {
            counts,
            offsets,
            triples: sorted,
            adj_start,
            adj,
            item_attrs,
            attr_items,
            user_items,
        })
    }

    pub fn count(&self, kind: EntityKind) -> u32 {
        self.counts[kind.slot()]
    }

    pub fn counts(&self) -> [u32; 3] {
        self.counts
    }

    pub fn n_users(&self) -> usize {
        self.counts[0] as usize
    }
    pub fn n_items(&self) -> usize {
        self.counts[1] as usize
    }
    pub fn n_attrs(&self) -> usize {
        self.counts[2] as usize
    }

    /// Total number of entities of all kinds.
    pub fn n_entities(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    /// Dense global index (users, then items, then attributes).
    #[inline]
    pub fn global(&self, e: EntityId) -> usize {
        self.offsets[e.kind.slot()] + e.index as usize
    }

    pub fn entity_at(&self, global: usize) -> EntityId {
        let kind = if global < self.offsets[1] {
            EntityKind::User
        } else if global < self.offsets[2] {
            EntityKind::Item
        } else {
            EntityKind::Attribute
        };
        EntityId { kind, index: (global - self.offsets[kind.slot()]) as u32 }
    }

    pub fn contains(&self, e: EntityId) -> bool {
        e.index < self.counts[e.kind.slot()]
    }

    pub(crate) fn check(&self, e: EntityId) -> Result<()> {
        if self.contains(e) {
            Ok(())
        } else {
            Err(Error::UnknownEntity(e))
        }
    }

    /// Base triples in canonical order (relation, head, tail).
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// All base incident triples of the entity at `global`.
    #[inline]
    pub fn base_neighbors_global(&self, global: usize) -> &[Neighbor] {
        &self.adj[self.adj_start[global]..self.adj_start[global + 1]]
    }

    pub fn base_neighbors(&self, e: EntityId) -> &[Neighbor] {
        self.base_neighbors_global(self.global(e))
    }

    /// Whether `(head, relation, tail)` is a base triple.
    pub fn has_triple(&self, head: EntityId, relation: Relation, tail: EntityId) -> bool {
        if !self.contains(head) || !self.contains(tail) {
            return false;
        }
        self.base_neighbors(head)
            .binary_search_by_key(&(relation, tail.index), |nb| (nb.relation, nb.entity.index))
            .map(|i| self.base_neighbors(head)[i].direction == Direction::Outgoing)
            .unwrap_or(false)
    }

    /// Sorted attribute indices of an item.
    pub fn item_attrs(&self, item: u32) -> &[u32] {
        &self.item_attrs[item as usize]
    }

    /// Sorted item indices carrying an attribute.
    pub fn attr_items(&self, attr: u32) -> &[u32] {
        &self.attr_items[attr as usize]
    }

    /// Sorted items the user interacted with (r0 triples).
    pub fn user_items(&self, user: u32) -> &[u32] {
        &self.user_items[user as usize]
    }

    /// A fresh session view with nothing removed.
    pub fn session(&self) -> SessionGraph<'_> {
        SessionGraph::new(self)
    }
}

/// Session-scoped view of a [`KnowledgeGraph`] with removed entities hidden.
#[derive(Clone, Debug)]
pub struct SessionGraph<'g> {
    graph: &'g KnowledgeGraph,
    removed: Vec<bool>,
    removed_list: Vec<usize>,
    removed_per_kind: [u32; 3],
}

impl<'g> SessionGraph<'g> {
    pub fn new(graph: &'g KnowledgeGraph) -> Self {
        SessionGraph {
            graph,
            removed: vec![false; graph.n_entities()],
            removed_list: Vec::new(),
            removed_per_kind: [0; 3],
        }
    }

    pub fn base(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    #[inline]
    pub fn is_removed(&self, e: EntityId) -> bool {
        self.graph.contains(e) && self.removed[self.graph.global(e)]
    }

    #[inline]
    pub fn is_removed_global(&self, global: usize) -> bool {
        self.removed[global]
    }

    pub fn removed_count(&self, kind: EntityKind) -> u32 {
        self.removed_per_kind[kind.slot()]
    }

    /// Removed entities in removal order.
    pub fn removed(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.removed_list.iter().map(|&g| self.graph.entity_at(g))
    }

    pub fn has_removals(&self) -> bool {
        !self.removed_list.is_empty()
    }

    /// Hides every triple touching any of `ids`. Already removed or unknown
    /// ids are ignored. Returns whether anything changed.
    pub fn remove_entities<I: IntoIterator<Item = EntityId>>(&mut self, ids: I) -> bool {
        let mut changed = false;
        for e in ids {
            if !self.graph.contains(e) {
                continue;
            }
            let g = self.graph.global(e);
            if !self.removed[g] {
                self.removed[g] = true;
                self.removed_list.push(g);
                self.removed_per_kind[e.kind.slot()] += 1;
                changed = true;
            }
        }
        changed
    }

    /// Restores the base graph.
    pub fn reset_session(&mut self) {
        for g in self.removed_list.drain(..) {
            self.removed[g] = false;
        }
        self.removed_per_kind = [0; 3];
    }

    /// Effective incident triples of the entity at `global`, in deterministic
    /// (relation, neighbour index) order. Does not check that `global` itself
    /// is removed.
    #[inline]
    pub fn effective_neighbors_global(&self, global: usize) -> impl Iterator<Item = &'g Neighbor> + '_ {
        let graph = self.graph;
        graph
            .base_neighbors_global(global)
            .iter()
            .filter(move |nb| !self.removed[graph.global(nb.entity)])
    }

    /// Every effective triple incident to `h`.
    pub fn neighbors(&self, h: EntityId) -> Result<Vec<Neighbor>> {
        self.graph.check(h)?;
        if self.is_removed(h) {
            return Err(Error::EntityRemoved(h));
        }
        Ok(self.effective_neighbors_global(self.graph.global(h)).copied().collect())
    }

    pub fn is_effective(&self, t: &Triple) -> bool {
        !self.is_removed(t.head) && !self.is_removed(t.tail)
    }

    /// Ids (into [`KnowledgeGraph::triples`]) of effective triples.
    pub fn effective_triples(&self) -> impl Iterator<Item = usize> + '_ {
        self.graph
            .triples
            .iter()
            .enumerate()
            .filter(move |(_, t)| self.is_effective(t))
            .map(|(i, _)| i)
    }

    pub fn effective_triple_count(&self) -> usize {
        self.effective_triples().count()
    }

    /// Whether `(head, relation, tail)` is an effective triple.
    pub fn has_effective_triple(&self, head: EntityId, relation: Relation, tail: EntityId) -> bool {
        self.graph.has_triple(head, relation, tail) && !self.is_removed(head) && !self.is_removed(tail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn u(i: u32) -> EntityId {
        EntityId::user(i)
    }
    fn v(i: u32) -> EntityId {
        EntityId::item(i)
    }
    fn p(i: u32) -> EntityId {
        EntityId::attr(i)
    }

    fn toy() -> KnowledgeGraph {
        KnowledgeGraph::build(&[
            Triple::new(u(0), Relation::UserItem, v(0)),
            Triple::new(v(0), Relation::ItemAttribute, p(0)),
        ])
        .unwrap()
    }

    #[test]
    fn empty_graph() {
        let g = KnowledgeGraph::build(&[]).unwrap();
        assert_eq!(g.n_entities(), 0);
        assert!(g.triples().is_empty());
        assert_eq!(g.session().effective_triple_count(), 0);
    }

    #[test]
    fn adjacency_is_bidirectional_and_ordered() {
        let g = toy();
        let s = g.session();
        let nb: Vec<_> = s.neighbors(v(0)).unwrap().iter().map(|n| (n.relation, n.entity, n.direction)).collect();
        assert_eq!(
            nb,
            [
                (Relation::UserItem, u(0), Direction::Incoming),
                (Relation::ItemAttribute, p(0), Direction::Outgoing)
            ]
        );
    }

    #[test]
    fn kind_violation_is_rejected() {
        let err = KnowledgeGraph::build(&[Triple::new(u(0), Relation::ItemAttribute, p(0))]).unwrap_err();
        assert!(matches!(err, Error::MalformedTriple { .. }));
    }

    #[test]
    fn duplicates_are_rejected() {
        let t = Triple::new(u(0), Relation::UserItem, v(0));
        assert!(matches!(KnowledgeGraph::build(&[t, t]), Err(Error::DuplicateTriple { .. })));
    }

    #[test]
    fn isolated_entity_has_no_neighbors() {
        let g = KnowledgeGraph::with_counts([1, 2, 1], &[Triple::new(u(0), Relation::UserItem, v(0))]).unwrap();
        assert!(g.session().neighbors(v(1)).unwrap().is_empty());
    }

    #[test]
    fn removal_filters_and_reset_restores() {
        let g = toy();
        let mut s = g.session();
        let before = s.neighbors(v(0)).unwrap();
        s.remove_entities([p(0)]);
        let nb = s.neighbors(v(0)).unwrap();
        assert_eq!(nb.len(), 1);
        assert_eq!((nb[0].relation, nb[0].entity, nb[0].direction), (Relation::UserItem, u(0), Direction::Incoming));
        assert_eq!(s.neighbors(p(0)), Err(Error::EntityRemoved(p(0))));
        s.reset_session();
        assert_eq!(s.neighbors(v(0)).unwrap(), before);
    }

    #[test]
    fn removal_is_idempotent_and_counts_incident() {
        let mut triples = Vec::new();
        for i in 0..4 {
            triples.push(Triple::new(v(3), Relation::ItemAttribute, p(i)));
        }
        triples.push(Triple::new(u(0), Relation::UserAttribute, p(0)));
        let g = KnowledgeGraph::build(&triples).unwrap();
        let mut s = g.session();
        assert!(!s.remove_entities([]));
        assert_eq!(s.effective_triple_count(), 5);
        s.remove_entities([v(3)]);
        assert_eq!(s.effective_triple_count(), 1);
        let snapshot: Vec<_> = s.removed().collect();
        assert!(!s.remove_entities([v(3)]));
        assert_eq!(s.removed().collect::<Vec<_>>(), snapshot);
    }

    #[test]
    fn has_triple_respects_direction() {
        let g = toy();
        assert!(g.has_triple(u(0), Relation::UserItem, v(0)));
        assert!(!g.has_triple(v(0), Relation::UserItem, u(0)));
        assert!(!g.has_triple(u(0), Relation::UserItem, v(9)));
    }

    fn arb_graph() -> impl Strategy<Value = (Vec<Triple>, [u32; 3])> {
        (1u32..8, 1u32..12, 1u32..8).prop_flat_map(|(nu, nv, np)| {
            let r0 = proptest::collection::btree_set((0..nu, 0..nv), 0..20);
            let r1 = proptest::collection::btree_set((0..nv, 0..np), 0..25);
            let r2 = proptest::collection::btree_set((0..nu, 0..np), 0..10);
            (r0, r1, r2).prop_map(move |(a, b, c)| {
                let mut t = Vec::new();
                t.extend(a.into_iter().map(|(x, y)| Triple::new(u(x), Relation::UserItem, v(y))));
                t.extend(b.into_iter().map(|(x, y)| Triple::new(v(x), Relation::ItemAttribute, p(y))));
                t.extend(c.into_iter().map(|(x, y)| Triple::new(u(x), Relation::UserAttribute, p(y))));
                (t, [nu, nv, np])
            })
        })
    }

    proptest! {
        #[test]
        fn overlay_matches_rebuild((triples, counts) in arb_graph(), picks in proptest::collection::vec(0usize..64, 0..10)) {
            let g = KnowledgeGraph::with_counts(counts, &triples).unwrap();
            let n = g.n_entities();
            let removed: BTreeSet<EntityId> = picks.iter().map(|&i| g.entity_at(i % n)).collect();
            let mut s = g.session();
            s.remove_entities(removed.iter().copied());
            let kept: Vec<Triple> = triples.iter().copied()
                .filter(|t| !removed.contains(&t.head) && !removed.contains(&t.tail)).collect();
            let rebuilt = KnowledgeGraph::with_counts(counts, &kept).unwrap();
            let rs = rebuilt.session();
            for gi in 0..n {
                let e = g.entity_at(gi);
                if removed.contains(&e) { continue; }
                let a: Vec<_> = s.neighbors(e).unwrap().iter().map(|x| (x.relation, x.entity, x.direction)).collect();
                let b: Vec<_> = rs.neighbors(e).unwrap().iter().map(|x| (x.relation, x.entity, x.direction)).collect();
                prop_assert_eq!(a, b);
            }
            prop_assert_eq!(s.effective_triple_count(), kept.len());
            s.reset_session();
            prop_assert_eq!(s.effective_triple_count(), triples.len());
            for gi in 0..n {
                prop_assert_eq!(s.neighbors(g.entity_at(gi)).unwrap(), g.session().neighbors(g.entity_at(gi)).unwrap());
            }
        }

        #[test]
        fn removal_is_monotone_and_commutative((triples, counts) in arb_graph(), a in proptest::collection::vec(0usize..64, 0..5), b in proptest::collection::vec(0usize..64, 0..5)) {
            let g = KnowledgeGraph::with_counts(counts, &triples).unwrap();
            let n = g.n_entities();
            let sa: Vec<_> = a.iter().map(|&i| g.entity_at(i % n)).collect();
            let sb: Vec<_> = b.iter().map(|&i| g.entity_at(i % n)).collect();
            let mut x = g.session();
            x.remove_entities(sa.iter().copied());
            let after_a = x.effective_triple_count();
            prop_assert!(after_a <= triples.len());
            x.remove_entities(sb.iter().copied());
            prop_assert!(x.effective_triple_count() <= after_a);
            let mut y = g.session();
            y.remove_entities(sb.iter().copied());
            y.remove_entities(sa.iter().copied());
            prop_assert_eq!(x.effective_triples().collect::<Vec<_>>(), y.effective_triples().collect::<Vec<_>>());
        }
    }
}
