//! Item scoring `y_v = u0.v0 + Σ_{p ∈ P_u} v1.p1` on propagated
//! representations, top-K ranking, the item loss and session-local
//! fine-tuning.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::config::{Ablation, ItemLoss};
use crate::embed::{AttentionCache, EmbedParams, PropagateOptions, Propagation, Role};
use crate::graph::{EntityId, KnowledgeGraph, SessionGraph};
use crate::math::{axpy, dot, log_sigmoid, sigmoid};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScoreOptions {
    /// Apply the role projections (off under `-map`).
    pub projection: bool,
    /// Use propagated representations (off under `-graphRec`).
    pub propagated: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions { projection: true, propagated: true }
    }
}

impl ScoreOptions {
    pub fn for_recommendation(a: &Ablation) -> Self {
        ScoreOptions { projection: !a.no_projection, propagated: !a.no_graph_rec }
    }

    /// Options for the graph-derived state features: always propagated.
    pub fn for_state(a: &Ablation) -> Self {
        ScoreOptions { projection: !a.no_projection, propagated: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredItem {
    pub item: u32,
    pub score: f64,
}

/// Descending score, ascending item index on ties.
fn rank_order(a: &ScoredItem, b: &ScoredItem) -> Ordering {
    b.score.total_cmp(&a.score).then(a.item.cmp(&b.item))
}

/// Read-only scorer over one forward propagation.
pub struct Scorer<'a> {
    pub params: &'a EmbedParams,
    pub prop: &'a Propagation,
    pub graph: &'a KnowledgeGraph,
    pub opts: ScoreOptions,
}

impl<'a> Scorer<'a> {
    pub fn new(params: &'a EmbedParams, prop: &'a Propagation, graph: &'a KnowledgeGraph, opts: ScoreOptions) -> Self {
        Scorer { params, prop, graph, opts }
    }

    fn check(&self, e: EntityId) -> Result<usize> {
        self.graph.check(e)?;
        let g = self.graph.global(e);
        if self.prop.is_removed(g) {
            return Err(Error::EntityRemoved(e));
        }
        Ok(g)
    }

    /// Representation of `global` (propagated or not, per options).
    pub fn representation(&self, global: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.prop.out_dim()];
        if self.opts.propagated {
            self.prop.write_embedding(global, &mut out);
        } else {
            self.prop.write_unpropagated(global, &mut out);
        }
        out
    }

    /// Role-projected representation of `global`.
    pub fn projected(&self, role: Role, global: usize) -> Vec<f64> {
        let x = self.representation(global);
        if !self.opts.projection {
            return x;
        }
        let mut out = vec![0.0; x.len()];
        self.params.project_role(role, &x, &mut out);
        out
    }

    /// `Σ_{p ∈ attrs} p1`, the attribute side of the second score term.
    pub fn attr_context(&self, attrs: &[u32]) -> Result<Vec<f64>> {
        let mut ctx = vec![0.0; self.prop.out_dim()];
        for &p in attrs {
            let g = self.check(EntityId::attr(p))?;
            axpy(1.0, &self.projected(Role::ItemAttrAttr, g), &mut ctx);
        }
        Ok(ctx)
    }

    pub fn user_vector(&self, user: u32) -> Result<Vec<f64>> {
        let g = self.check(EntityId::user(user))?;
        Ok(self.projected(Role::UserItemUser, g))
    }

    fn score_prepared(&self, u0: &[f64], ctx: &[f64], global_item: usize) -> f64 {
        let v0 = self.projected(Role::UserItemItem, global_item);
        let mut y = dot(u0, &v0);
        if ctx.iter().any(|&x| x != 0.0) {
            y += dot(&self.projected(Role::ItemAttrItem, global_item), ctx);
        }
        y
    }

    pub fn score_item(&self, user: u32, item: u32, attrs: &[u32]) -> Result<f64> {
        let u0 = self.user_vector(user)?;
        let ctx = self.attr_context(attrs)?;
        let g = self.check(EntityId::item(item))?;
        Ok(self.score_prepared(&u0, &ctx, g))
    }

    /// Scores of every candidate, in input order.
    pub fn score_all(&self, user: u32, candidates: &[u32], attrs: &[u32]) -> Result<Vec<ScoredItem>> {
        let u0 = self.user_vector(user)?;
        let ctx = self.attr_context(attrs)?;
        candidates
            .iter()
            .map(|&v| {
                let g = self.check(EntityId::item(v))?;
                Ok(ScoredItem { item: v, score: self.score_prepared(&u0, &ctx, g) })
            })
            .collect()
    }

    /// Top `k` candidates by descending score (ties: ascending item index).
    pub fn rank_candidates(&self, user: u32, candidates: &[u32], attrs: &[u32], k: usize) -> Result<Vec<ScoredItem>> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let mut scored = self.score_all(user, candidates, attrs)?;
        scored.sort_by(rank_order);
        scored.truncate(k.max(1));
        Ok(scored)
    }

    /// 1-based rank of `target` among all candidates.
    pub fn ideal_item_position(&self, user: u32, candidates: &[u32], attrs: &[u32], target: u32) -> Result<usize> {
        if !candidates.contains(&target) {
            return Err(Error::TargetNotCandidate(target));
        }
        let scored = self.score_all(user, candidates, attrs)?;
        Ok(position_of(&scored, target))
    }
}

/// 1-based rank of `target` within `scored` under the ranking order.
pub fn position_of(scored: &[ScoredItem], target: u32) -> usize {
    let t = scored.iter().find(|s| s.item == target).expect("target must be scored");
    1 + scored.iter().filter(|s| rank_order(s, t) == Ordering::Less).count()
}

/// Sorts already-scored items into ranking order and keeps the top `k`.
pub fn top_k(mut scored: Vec<ScoredItem>, k: usize) -> Vec<ScoredItem> {
    scored.sort_by(rank_order);
    scored.truncate(k);
    scored
}

/// Pointwise item loss `-Σ [ln σ(y_pos) + ln σ(-y_neg)]`.
pub fn item_loss(pos_scores: &[f64], neg_scores: &[f64]) -> f64 {
    item_loss_with(ItemLoss::Pointwise, pos_scores, neg_scores)
}

pub fn item_loss_with(kind: ItemLoss, pos_scores: &[f64], neg_scores: &[f64]) -> f64 {
    assert_eq!(pos_scores.len(), neg_scores.len(), "paired score lists");
    pos_scores
        .iter()
        .zip(neg_scores)
        .map(|(&p, &n)| pair_loss(kind, p, n).0)
        .sum()
}

/// Loss of one pair and its derivatives w.r.t. (y_pos, y_neg).
fn pair_loss(kind: ItemLoss, pos: f64, neg: f64) -> (f64, f64, f64) {
    match kind {
        ItemLoss::Pointwise => (-(log_sigmoid(pos) + log_sigmoid(-neg)), sigmoid(pos) - 1.0, sigmoid(neg)),
        ItemLoss::Bpr => {
            let d = pos - neg;
            let g = sigmoid(d) - 1.0;
            (-log_sigmoid(d), g, -g)
        }
    }
}

/// One training pair for the item loss.
#[derive(Clone, Copy, Debug)]
pub struct ItemPair<'a> {
    pub user: u32,
    pub pos: u32,
    pub neg: u32,
    /// Known positive attributes `P_u` used in both scores.
    pub attrs: &'a [u32],
}

/// Summed item loss over `pairs` on the given (session) graph and its
/// gradient w.r.t. entity embeddings, propagation weights and role
/// projections. Attention weights are constants.
pub fn item_loss_gradients(
    params: &EmbedParams,
    graph: &SessionGraph<'_>,
    cache: &AttentionCache,
    popts: PropagateOptions,
    sopts: ScoreOptions,
    kind: ItemLoss,
    pairs: &[ItemPair<'_>],
) -> (f64, EmbedParams) {
    let prop = Propagation::forward(params, graph, cache, popts);
    item_loss_gradients_with(params, graph.base(), &prop, sopts, kind, pairs)
}

pub(crate) fn item_loss_gradients_with(
    params: &EmbedParams,
    base: &KnowledgeGraph,
    prop: &Propagation,
    sopts: ScoreOptions,
    kind: ItemLoss,
    pairs: &[ItemPair<'_>],
) -> (f64, EmbedParams) {
    let scorer = Scorer::new(params, prop, base, sopts);
    let d = prop.out_dim();
    let mut grad = EmbedParams::zeros_like(params);
    let mut d_final = vec![0.0; prop.n_entities() * d];
    let mut loss = 0.0;

    // Backprop through x = X + a (b . X) into d_final[row] and the role grads.
    let back = |role: Role, global: usize, dx: &[f64], grad: &mut EmbedParams, d_final: &mut [f64]| {
        let x = scorer.representation(global);
        let row = &mut d_final[global * d..(global + 1) * d];
        if !sopts.projection {
            axpy(1.0, dx, row);
            return;
        }
        let a = params.role_rel(role);
        let b = params.role_ent(role);
        let adx = dot(a, dx);
        let bx = dot(b, &x);
        axpy(1.0, dx, row);
        axpy(adx, b, row);
        let r = role as usize;
        axpy(bx, dx, &mut grad.role_rel[r * d..(r + 1) * d]);
        axpy(adx, &x, &mut grad.role_ent[r * d..(r + 1) * d]);
    };

    for pair in pairs {
        let gu = base.global(EntityId::user(pair.user));
        let u0 = scorer.projected(Role::UserItemUser, gu);
        let attr_globals: Vec<usize> = pair.attrs.iter().map(|&p| base.global(EntityId::attr(p))).collect();
        let mut ctx = vec![0.0; d];
        for &ga in &attr_globals {
            axpy(1.0, &scorer.projected(Role::ItemAttrAttr, ga), &mut ctx);
        }
        let term = |item: u32| {
            let gv = base.global(EntityId::item(item));
            let v0 = scorer.projected(Role::UserItemItem, gv);
            let v1 = scorer.projected(Role::ItemAttrItem, gv);
            (gv, dot(&u0, &v0) + dot(&v1, &ctx), v0, v1)
        };
        let (gp, yp, p0, p1) = term(pair.pos);
        let (gn, yn, n0, n1) = term(pair.neg);
        let (l, cp, cn) = pair_loss(kind, yp, yn);
        loss += l;

        for (gv, c, v0, v1) in [(gp, cp, p0, p1), (gn, cn, n0, n1)] {
            if c == 0.0 {
                continue;
            }
            let du0: Vec<f64> = v0.iter().map(|x| c * x).collect();
            back(Role::UserItemUser, gu, &du0, &mut grad, &mut d_final);
            let dv0: Vec<f64> = u0.iter().map(|x| c * x).collect();
            back(Role::UserItemItem, gv, &dv0, &mut grad, &mut d_final);
            if !attr_globals.is_empty() {
                let dv1: Vec<f64> = ctx.iter().map(|x| c * x).collect();
                back(Role::ItemAttrItem, gv, &dv1, &mut grad, &mut d_final);
                let dp1: Vec<f64> = v1.iter().map(|x| c * x).collect();
                for &ga in &attr_globals {
                    back(Role::ItemAttrAttr, ga, &dp1, &mut grad, &mut d_final);
                }
            }
        }
    }

    if !sopts.propagated {
        // Representation is [e; 0...]: only the first block reaches e.
        let m = params.dim;
        for row in d_final.chunks_mut(d) {
            row[m..].fill(0.0);
        }
    }
    prop.backward(params, &d_final, &mut grad);
    (loss, grad)
}

/// Fine-tunes session-local parameters after a rejected recommendation:
/// the user's historical positives are paired with the rejected items and
/// `steps` gradient steps of the item loss are taken on the session graph.
#[allow(clippy::too_many_arguments)]
pub fn session_finetune(
    params: &mut EmbedParams,
    graph: &SessionGraph<'_>,
    cache: &AttentionCache,
    popts: PropagateOptions,
    sopts: ScoreOptions,
    kind: ItemLoss,
    user: u32,
    positives: &[u32],
    rejected: &[u32],
    attrs: &[u32],
    steps: usize,
    lr: f64,
) -> Result<()> {
    if positives.is_empty() || rejected.is_empty() || steps == 0 {
        return Ok(());
    }
    let n = positives.len().max(rejected.len());
    let pairs: Vec<ItemPair<'_>> = (0..n)
        .map(|i| ItemPair {
            user,
            pos: positives[i % positives.len()],
            neg: rejected[i % rejected.len()],
            attrs,
        })
        .collect();
    for _ in 0..steps {
        let (_, grad) = item_loss_gradients(params, graph, cache, popts, sopts, kind, &pairs);
        params.axpy(-lr, &grad);
        if !params.is_finite() {
            return Err(Error::DivergenceDetected);
        }
    }
    Ok(())
}
