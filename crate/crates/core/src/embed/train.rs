//! Offline training: negative sampling, the two losses and the joint loop.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{graph_loss_gradients, AttentionCache, EmbedParams, PropagateOptions, Propagation};
use crate::config::{Ablation, EmbedConfig, ItemLoss};
use crate::graph::{EntityId, KnowledgeGraph, Relation, SessionGraph, Triple};
use crate::recommend::{item_loss_gradients_with, ItemPair, ScoreOptions};
use crate::{Error, Result, Rng};

/// Draws a tail `t'` of the right kind such that `(h, r, t')` is not an
/// effective triple and `t'` is not removed, uniformly over such tails.
pub fn negative_sample(g: &SessionGraph<'_>, h: EntityId, r: Relation, rng: &mut Rng) -> Result<EntityId> {
    let (_, tail_kind) = r.kinds();
    let n = g.base().count(tail_kind);
    let valid = |i: u32| {
        let t = EntityId { kind: tail_kind, index: i };
        !g.is_removed(t) && !g.has_effective_triple(h, r, t)
    };
    if n > 0 {
        for _ in 0..32 {
            let i = rng.gen_range(0..n);
            if valid(i) {
                return Ok(EntityId { kind: tail_kind, index: i });
            }
        }
    }
    let pool: Vec<u32> = (0..n).filter(|&i| valid(i)).collect();
    pool.choose(rng)
        .map(|&i| EntityId { kind: tail_kind, index: i })
        .ok_or(Error::NoNegativeAvailable { head: h, relation: r })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    Graph { margin: f64 },
    Item(ItemLoss),
}

/// Training examples for one loss.
#[derive(Clone, Copy, Debug)]
pub enum Batch<'a> {
    /// `(positive, corrupted)` triple pairs.
    Graph(&'a [(Triple, Triple)]),
    Item(&'a [ItemPair<'a>]),
}

/// Everything the item loss needs besides parameters and examples.
#[derive(Clone, Copy)]
pub struct GradContext<'a, 'g> {
    pub graph: &'a SessionGraph<'g>,
    pub cache: &'a AttentionCache,
    pub propagate: PropagateOptions,
    pub score: ScoreOptions,
}

/// Loss value and analytic gradient of `kind` over `batch`.
///
/// # Panics
/// If `kind` and `batch` disagree.
pub fn gradients(params: &EmbedParams, ctx: GradContext<'_, '_>, kind: LossKind, batch: Batch<'_>) -> (f64, EmbedParams) {
    match (kind, batch) {
        (LossKind::Graph { margin }, Batch::Graph(pairs)) => graph_loss_gradients(params, ctx.graph.base(), pairs, margin),
        (LossKind::Item(loss), Batch::Item(pairs)) => {
            let prop = Propagation::forward(params, ctx.graph, ctx.cache, ctx.propagate);
            item_loss_gradients_with(params, ctx.graph.base(), &prop, ctx.score, loss, pairs)
        }
        _ => panic!("loss kind does not match batch"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub margin: f64,
    pub item_loss: ItemLoss,
    pub propagate: PropagateOptions,
    pub score: ScoreOptions,
}

impl TrainOptions {
    pub fn from_config(cfg: &EmbedConfig, ablation: &Ablation) -> Self {
        TrainOptions {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            margin: cfg.margin,
            item_loss: cfg.item_loss,
            propagate: PropagateOptions::from(cfg),
            score: ScoreOptions::for_recommendation(ablation),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Node-feature pretraining with the graph loss only.
    Pretrain,
    /// Joint graph + item training.
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub phase: Phase,
    pub epoch: usize,
    pub batch: usize,
    /// Mean graph loss over the batch's triple pairs.
    pub graph_loss: f64,
    /// Mean item loss over the batch's user-item pairs, if it had any.
    pub item_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub batches: Vec<BatchLog>,
}

impl TrainLog {
    /// Mean graph loss of each epoch of `phase`.
    pub fn epoch_graph_losses(&self, phase: Phase) -> Vec<f64> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for b in self.batches.iter().filter(|b| b.phase == phase) {
            if out.len() <= b.epoch {
                out.resize(b.epoch + 1, (0.0, 0));
            }
            out[b.epoch].0 += b.graph_loss;
            out[b.epoch].1 += 1;
        }
        out.into_iter().map(|(s, n)| if n == 0 { 0.0 } else { s / n as f64 }).collect()
    }
}

fn sgd_step(params: &mut EmbedParams, grad: &EmbedParams, lr: f64) -> Result<()> {
    params.axpy(-lr, grad);
    if params.is_finite() {
        Ok(())
    } else {
        Err(Error::DivergenceDetected)
    }
}

/// Positive/negative pairs for a batch. Triples whose head is linked to
/// every possible tail have no negative and are skipped.
fn graph_pairs(g: &SessionGraph<'_>, batch: &[Triple], rng: &mut Rng) -> Result<Vec<(Triple, Triple)>> {
    let mut out = Vec::with_capacity(batch.len());
    for t in batch {
        match negative_sample(g, t.head, t.relation, rng) {
            Ok(neg) => out.push((*t, Triple::new(t.head, t.relation, neg))),
            Err(Error::NoNegativeAvailable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn shuffled_batches(graph: &KnowledgeGraph, rng: &mut Rng) -> Vec<Triple> {
    let mut order = graph.triples().to_vec();
    order.shuffle(rng);
    order
}

/// Graph-loss-only epochs over every triple (TransD pretraining).
pub fn pretrain_graph(graph: &KnowledgeGraph, params: &mut EmbedParams, opts: &TrainOptions, epochs: usize, rng: &mut Rng) -> Result<TrainLog> {
    let g = graph.session();
    let mut log = TrainLog::default();
    for epoch in 0..epochs {
        let order = shuffled_batches(graph, rng);
        for (bi, batch) in order.chunks(opts.batch_size.max(1)).enumerate() {
            let pairs = graph_pairs(&g, batch, rng)?;
            let (loss, grad) = graph_loss_gradients(params, graph, &pairs, opts.margin);
            sgd_step(params, &grad, opts.lr)?;
            log.batches.push(BatchLog {
                phase: Phase::Pretrain,
                epoch,
                batch: bi,
                graph_loss: loss / pairs.len().max(1) as f64,
                item_loss: None,
            });
        }
    }
    Ok(log)
}

/// Item-loss examples from the user-item triples of a batch: each observed
/// `(u, v)` is paired with a uniformly drawn item `u` never interacted
/// with, and `P_u` is one attribute of `v` drawn uniformly (empty if `v` has
/// none).
fn item_examples(graph: &KnowledgeGraph, batch: &[Triple], rng: &mut Rng) -> Vec<(u32, u32, u32, Option<u32>)> {
    let n_items = graph.n_items() as u32;
    let mut out = Vec::new();
    for t in batch.iter().filter(|t| t.relation == Relation::UserItem) {
        let (u, v) = (t.head.index, t.tail.index);
        let seen = graph.user_items(u);
        if seen.len() as u32 >= n_items {
            continue;
        }
        let neg = loop {
            let c = rng.gen_range(0..n_items);
            if seen.binary_search(&c).is_err() {
                break c;
            }
        };
        let attr = graph.item_attrs(v).choose(rng).copied();
        out.push((u, v, neg, attr));
    }
    out
}

/// Joint offline training. Per batch: one SGD step on the graph loss with
/// fresh negatives, then a full propagation and one SGD step on the item
/// loss. Attention is refreshed before the first epoch and after every
/// epoch; the returned cache matches the final parameters.
pub fn train_offline(graph: &KnowledgeGraph, params: &mut EmbedParams, opts: &TrainOptions, rng: &mut Rng) -> Result<(TrainLog, AttentionCache)> {
    let g = graph.session();
    let mut cache = AttentionCache::compute(params, graph);
    let mut log = TrainLog::default();
    for epoch in 0..opts.epochs {
        let order = shuffled_batches(graph, rng);
        for (bi, batch) in order.chunks(opts.batch_size.max(1)).enumerate() {
            let pairs = graph_pairs(&g, batch, rng)?;
            let (gl, grad) = graph_loss_gradients(params, graph, &pairs, opts.margin);
            sgd_step(params, &grad, opts.lr)?;

            let examples = item_examples(graph, batch, rng);
            let item_loss = if examples.is_empty() {
                None
            } else {
                let attrs: Vec<[u32; 1]> = examples.iter().map(|e| [e.3.unwrap_or(0)]).collect();
                let item_pairs: Vec<ItemPair<'_>> = examples
                    .iter()
                    .zip(&attrs)
                    .map(|(e, a)| ItemPair {
                        user: e.0,
                        pos: e.1,
                        neg: e.2,
                        attrs: if e.3.is_some() { &a[..] } else { &[] },
                    })
                    .collect();
                let prop = Propagation::forward(params, &g, &cache, opts.propagate);
                let (il, grad) = item_loss_gradients_with(params, graph, &prop, opts.score, opts.item_loss, &item_pairs);
                sgd_step(params, &grad, opts.lr)?;
                Some(il / item_pairs.len() as f64)
            };

            log.batches.push(BatchLog {
                phase: Phase::Joint,
                epoch,
                batch: bi,
                graph_loss: gl / pairs.len().max(1) as f64,
                item_loss,
            });
        }
        cache.refresh(params, graph);
    }
    Ok((log, cache))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::transd_score;
    use crate::rng_from_seed;
    use std::vec::Vec;

    fn u(i: u32) -> EntityId {
        EntityId::user(i)
    }
    fn v(i: u32) -> EntityId {
        EntityId::item(i)
    }
    fn p(i: u32) -> EntityId {
        EntityId::attr(i)
    }

    #[test]
    fn single_valid_negative() {
        let triples: Vec<Triple> = (0..10).filter(|&i| i != 7).map(|i| Triple::new(u(0), Relation::UserItem, v(i))).collect();
        let g = KnowledgeGraph::with_counts([1, 10, 0], &triples).unwrap();
        let s = g.session();
        let mut rng = rng_from_seed(1);
        for _ in 0..50 {
            assert_eq!(negative_sample(&s, u(0), Relation::UserItem, &mut rng).unwrap(), v(7));
        }
    }

    #[test]
    fn exhausted_negatives() {
        let triples: Vec<Triple> = (0..4).map(|i| Triple::new(u(0), Relation::UserItem, v(i))).collect();
        let g = KnowledgeGraph::build(&triples).unwrap();
        let err = negative_sample(&g.session(), u(0), Relation::UserItem, &mut rng_from_seed(1)).unwrap_err();
        assert_eq!(err, Error::NoNegativeAvailable { head: u(0), relation: Relation::UserItem });
    }

    #[test]
    fn negatives_skip_removed_entities() {
        let g = KnowledgeGraph::with_counts([1, 3, 0], &[Triple::new(u(0), Relation::UserItem, v(0))]).unwrap();
        let mut s = g.session();
        s.remove_entities([v(1)]);
        let mut rng = rng_from_seed(5);
        for _ in 0..50 {
            assert_eq!(negative_sample(&s, u(0), Relation::UserItem, &mut rng).unwrap(), v(2));
        }
    }

    #[test]
    fn negatives_are_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        // user linked to items 0..5 of 25: 20 valid tails
        let triples: Vec<Triple> = (0..5).map(|i| Triple::new(u(0), Relation::UserItem, v(i))).collect();
        let g = KnowledgeGraph::with_counts([1, 25, 0], &triples).unwrap();
        let s = g.session();
        let mut rng = rng_from_seed(2021);
        let mut counts = [0usize; 25];
        let draws = 10_000;
        for _ in 0..draws {
            let t = negative_sample(&s, u(0), Relation::UserItem, &mut rng).unwrap();
            counts[t.index as usize] += 1;
        }
        assert!(counts[..5].iter().all(|&c| c == 0));
        let expected = draws as f64 / 20.0;
        let chi2: f64 = counts[5..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p_value = 1.0 - ChiSquared::new(19.0).unwrap().cdf(chi2);
        assert!(p_value > 0.01, "chi2 {chi2}, p {p_value}");
    }

    fn small_world(seed: u64, m: usize, steps: usize) -> (KnowledgeGraph, EmbedParams) {
        let mut rng = rng_from_seed(seed);
        let mut triples = Vec::new();
        for ui in 0..3 {
            for vi in 0..5 {
                if rng.gen_bool(0.4) {
                    triples.push(Triple::new(u(ui), Relation::UserItem, v(vi)));
                }
            }
            if rng.gen_bool(0.5) {
                triples.push(Triple::new(u(ui), Relation::UserAttribute, p(ui)));
            }
        }
        for vi in 0..5 {
            triples.push(Triple::new(v(vi), Relation::ItemAttribute, p(vi % 4)));
        }
        let g = KnowledgeGraph::with_counts([3, 5, 4], &triples).unwrap();
        let cfg = EmbedConfig { dim: m, steps, init_noise: 0.3, ..Default::default() };
        let mut params = EmbedParams::init(&g, &cfg, &mut rng);
        // make every tensor non-trivial so all gradient paths are exercised
        for x in params.entity.iter_mut() {
            *x *= 0.3;
        }
        for t in [&mut params.entity_proj, &mut params.relation_proj, &mut params.role_rel, &mut params.role_ent, &mut params.biases] {
            for x in t.iter_mut() {
                *x = rng.gen_range(-0.3..0.3);
            }
        }
        (g, params)
    }

    /// Central differences of `loss` at every scalar of `params`.
    fn finite_differences(params: &EmbedParams, loss: impl Fn(&EmbedParams) -> f64) -> Vec<f64> {
        let h = 1e-5;
        let mut q = params.clone();
        (0..params.len())
            .map(|i| {
                let x = *q.scalar_mut(i);
                *q.scalar_mut(i) = x + h;
                let up = loss(&q);
                *q.scalar_mut(i) = x - h;
                let down = loss(&q);
                *q.scalar_mut(i) = x;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn relative_error(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    #[test]
    fn graph_loss_gradient_matches_finite_differences() {
        for seed in 0..20u64 {
            let m = 2 + (seed as usize % 7);
            let (g, params) = small_world(seed, m, 2);
            let mut rng = rng_from_seed(seed + 100);
            let pairs = graph_pairs(&g.session(), g.triples(), &mut rng).unwrap();
            let margin = 40.0;
            let loss = |q: &EmbedParams| graph_loss_gradients(q, &g, &pairs, margin).0;
            let (_, grad) = graph_loss_gradients(&params, &g, &pairs, margin);
            let fd = finite_differences(&params, loss);
            let err = relative_error(&grad.flatten(), &fd);
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
        }
    }

    fn item_pairs_for(g: &KnowledgeGraph, rng: &mut Rng) -> Vec<(u32, u32, u32, Vec<u32>)> {
        let mut out = Vec::new();
        for t in g.triples().iter().filter(|t| t.relation == Relation::UserItem) {
            let neg = (0..5).find(|c| !g.user_items(t.head.index).contains(c));
            if let Some(neg) = neg {
                let k = rng.gen_range(0..3);
                out.push((t.head.index, t.tail.index, neg, (0..k).collect()));
            }
        }
        out
    }

    fn check_item_gradient(score: ScoreOptions, kind: ItemLoss, softmax: bool) {
        for seed in 0..20u64 {
            let m = 2 + (seed as usize % 7);
            let steps = 1 + (seed as usize % 3);
            let (g, params) = small_world(seed, m, steps);
            let mut rng = rng_from_seed(seed + 7);
            let owned = item_pairs_for(&g, &mut rng);
            if owned.is_empty() {
                continue;
            }
            let pairs: Vec<ItemPair<'_>> =
                owned.iter().map(|(u, p, n, a)| ItemPair { user: *u, pos: *p, neg: *n, attrs: a }).collect();
            let cache = AttentionCache::compute(&params, &g);
            let mut session = g.session();
            if seed % 2 == 1 {
                session.remove_entities([p(3)]);
            }
            let ctx = GradContext { graph: &session, cache: &cache, propagate: PropagateOptions { softmax, max_degree: 0 }, score };
            let batch = Batch::Item(&pairs);
            let (_, grad) = gradients(&params, ctx, LossKind::Item(kind), batch);
            let fd = finite_differences(&params, |q| gradients(q, ctx, LossKind::Item(kind), batch).0);
            let err = relative_error(&grad.flatten(), &fd);
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn item_loss_gradient_matches_finite_differences() {
        check_item_gradient(ScoreOptions::default(), ItemLoss::Pointwise, false);
    }

    #[test]
    fn item_loss_gradient_variants() {
        check_item_gradient(ScoreOptions::default(), ItemLoss::Bpr, true);
        check_item_gradient(ScoreOptions { projection: false, propagated: true }, ItemLoss::Pointwise, false);
        check_item_gradient(ScoreOptions { projection: true, propagated: false }, ItemLoss::Pointwise, false);
    }

    #[test]
    fn untouched_parameters_get_zero_gradient() {
        let (g, params) = small_world(3, 4, 2);
        let pairs = graph_pairs(&g.session(), &g.triples()[..1], &mut rng_from_seed(1)).unwrap();
        let (_, grad) = graph_loss_gradients(&params, &g, &pairs, 40.0);
        assert!(grad.weights.iter().chain(&grad.biases).chain(&grad.role_rel).chain(&grad.role_ent).all(|&x| x == 0.0));
        // entities outside both triples get nothing
        let touched = [pairs[0].0.head, pairs[0].0.tail, pairs[0].1.tail].map(|e| g.global(e));
        for i in (0..g.n_entities()).filter(|i| !touched.contains(i)) {
            assert!(grad.entity[i * 4..(i + 1) * 4].iter().all(|&x| x == 0.0));
        }
    }

    fn opts(lr: f64, epochs: usize) -> TrainOptions {
        TrainOptions {
            epochs,
            batch_size: 4,
            lr,
            margin: 4.0,
            item_loss: ItemLoss::Pointwise,
            propagate: PropagateOptions::default(),
            score: ScoreOptions::default(),
        }
    }

    #[test]
    fn zero_learning_rate_is_a_noop() {
        let (g, params) = small_world(9, 4, 2);
        let mut trained = params.clone();
        train_offline(&g, &mut trained, &opts(0.0, 2), &mut rng_from_seed(4)).unwrap();
        let bits = |p: &EmbedParams| p.flatten().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&trained), bits(&params));
    }

    #[test]
    fn toy_graph_separates_positive_from_negative() {
        let t = Triple::new(v(0), Relation::ItemAttribute, p(0));
        let g = KnowledgeGraph::with_counts([0, 1, 2], &[t]).unwrap();
        let cfg = EmbedConfig { dim: 4, steps: 2, ..Default::default() };
        let mut rng = rng_from_seed(11);
        let mut params = EmbedParams::init(&g, &cfg, &mut rng);
        let (log, _) = train_offline(&g, &mut params, &opts(0.01, 200), &mut rng).unwrap();
        assert_eq!(log.batches.len(), 200);
        let neg = Triple::new(v(0), Relation::ItemAttribute, p(1));
        assert!(transd_score(&params, &g, &t) < transd_score(&params, &g, &neg));
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let (g, mut params) = small_world(5, 4, 2);
            let (log, cache) = train_offline(&g, &mut params, &opts(0.01, 3), &mut rng_from_seed(8)).unwrap();
            (log, cache, params)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn attention_refreshes_only_between_epochs() {
        let (g, mut params) = small_world(6, 4, 2);
        let before = AttentionCache::compute(&params, &g);
        let (_, after) = train_offline(&g, &mut params, &opts(0.01, 1), &mut rng_from_seed(8)).unwrap();
        assert_ne!(before, after);
        assert_eq!(after, AttentionCache::compute(&params, &g));
    }

    #[test]
    fn divergence_is_detected() {
        let (g, mut params) = small_world(2, 4, 2);
        params.entity[0] = f64::MAX;
        params.entity[1] = f64::MAX;
        let r = train_offline(&g, &mut params, &opts(1e300, 1), &mut rng_from_seed(1));
        assert_eq!(r.unwrap_err(), Error::DivergenceDetected);
    }

    #[test]
    fn pretraining_lowers_graph_loss() {
        let (g, mut params) = small_world(12, 8, 2);
        let log = pretrain_graph(&g, &mut params, &opts(0.01, 0), 60, &mut rng_from_seed(3)).unwrap();
        let losses = log.epoch_graph_losses(Phase::Pretrain);
        assert_eq!(losses.len(), 60);
        assert!(losses[59] < losses[0], "{losses:?}");
    }

    #[test]
    fn saturated_heads_are_skipped() {
        // the user links to both attributes, so r2 has no negative tail
        let triples = [
            Triple::new(u(0), Relation::UserItem, v(0)),
            Triple::new(u(0), Relation::UserAttribute, p(0)),
            Triple::new(u(0), Relation::UserAttribute, p(1)),
            Triple::new(v(0), Relation::ItemAttribute, p(0)),
        ];
        let g = KnowledgeGraph::with_counts([1, 2, 2], &triples).unwrap();
        let cfg = EmbedConfig { dim: 3, steps: 2, ..EmbedConfig::default() };
        let mut params = EmbedParams::init(&g, &cfg, &mut rng_from_seed(1));
        let log = pretrain_graph(&g, &mut params, &opts(0.01, 0), 3, &mut rng_from_seed(2)).unwrap();
        assert_eq!(log.batches.len(), 3);
        assert!(params.is_finite());
    }
}
