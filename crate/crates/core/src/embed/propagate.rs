//! Attention-weighted neighbourhood propagation over the effective graph.
//!
//! Step 1 is the raw embedding. Each later step computes
//! `e^(k) = ReLU(W^k (e^(k-1) + N^(k-1)) + b^k)` with
//! `N^(k) = Σ α e_t^(k)` over the effective incident triples, and the final
//! representation concatenates all steps. All entities are propagated
//! together, layer by layer, so the forward pass can be reused for many
//! queries and for backpropagation.

use alloc::vec;
use alloc::vec::Vec;

use super::{AttentionCache, EmbedParams};
use crate::config::EmbedConfig;
use crate::graph::{EntityId, SessionGraph};
use crate::math::axpy;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PropagateOptions {
    /// Softmax-normalise the attention weights over each neighbourhood.
    pub softmax: bool,
    /// Keep at most this many incident triples per entity (0 = all).
    pub max_degree: usize,
}

impl From<&EmbedConfig> for PropagateOptions {
    fn from(cfg: &EmbedConfig) -> Self {
        PropagateOptions { softmax: cfg.softmax_attention, max_degree: cfg.max_degree }
    }
}

/// Result of a full forward propagation, with the intermediates needed for
/// the backward pass.
#[derive(Clone, Debug)]
pub struct Propagation {
    n: usize,
    dim: usize,
    steps: usize,
    removed: Vec<bool>,
    /// `steps` layers of `n x dim`.
    layers: Vec<Vec<f64>>,
    /// Pre-activations of layers 2..=steps.
    pre: Vec<Vec<f64>>,
    /// Inputs `e + N` of layers 2..=steps.
    sums: Vec<Vec<f64>>,
    edge_start: Vec<usize>,
    edge_other: Vec<u32>,
    edge_weight: Vec<f64>,
}

impl Propagation {
    pub fn forward(params: &EmbedParams, graph: &SessionGraph<'_>, cache: &AttentionCache, opts: PropagateOptions) -> Self {
        let base = graph.base();
        let n = base.n_entities();
        assert_eq!(n, params.n_entities, "parameters were built for a different graph");
        let m = params.dim;

        let mut edge_start = Vec::with_capacity(n + 1);
        let mut edge_other = Vec::new();
        let mut edge_weight = Vec::new();
        let mut removed = vec![false; n];
        for (i, r) in removed.iter_mut().enumerate() {
            edge_start.push(edge_other.len());
            if graph.is_removed_global(i) {
                *r = true;
                continue;
            }
            let first = edge_weight.len();
            let limit = if opts.max_degree == 0 { usize::MAX } else { opts.max_degree };
            for nb in graph.effective_neighbors_global(i).take(limit) {
                edge_other.push(base.global(nb.entity) as u32);
                edge_weight.push(cache.weight(nb.triple));
            }
            if opts.softmax && edge_weight.len() > first {
                let w = &mut edge_weight[first..];
                let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for x in w.iter_mut() {
                    *x = libm::exp(*x - max);
                    total += *x;
                }
                for x in w.iter_mut() {
                    *x /= total;
                }
            }
        }
        edge_start.push(edge_other.len());

        let mut layers = Vec::with_capacity(params.steps);
        let mut pre = Vec::with_capacity(params.steps - 1);
        let mut sums = Vec::with_capacity(params.steps - 1);
        layers.push(params.entity.clone());
        for k in 0..params.steps - 1 {
            let prev = &layers[k];
            let mut s = prev.clone();
            for i in 0..n {
                let row = &mut s[i * m..(i + 1) * m];
                for e in edge_start[i]..edge_start[i + 1] {
                    let j = edge_other[e] as usize;
                    axpy(edge_weight[e], &prev[j * m..(j + 1) * m], row);
                }
            }
            let w = params.weight(k);
            let b = params.bias(k);
            let mut z = vec![0.0; n * m];
            for i in 0..n {
                let si = &s[i * m..(i + 1) * m];
                for r in 0..m {
                    let wr = &w[r * m..(r + 1) * m];
                    z[i * m + r] = wr.iter().zip(si).map(|(a, b)| a * b).sum::<f64>() + b[r];
                }
            }
            let h: Vec<f64> = z.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
            sums.push(s);
            pre.push(z);
            layers.push(h);
        }

        Propagation { n, dim: m, steps: params.steps, removed, layers, pre, sums, edge_start, edge_other, edge_weight }
    }

    pub fn n_entities(&self) -> usize {
        self.n
    }

    /// Width of a final representation.
    pub fn out_dim(&self) -> usize {
        self.dim * self.steps
    }

    pub fn is_removed(&self, global: usize) -> bool {
        self.removed[global]
    }

    /// Writes the concatenated representation of entity `global`.
    pub fn write_embedding(&self, global: usize, out: &mut [f64]) {
        let m = self.dim;
        for (k, layer) in self.layers.iter().enumerate() {
            out[k * m..(k + 1) * m].copy_from_slice(&layer[global * m..(global + 1) * m]);
        }
    }

    /// Writes `[e_h; 0; ...; 0]`, the representation without propagation.
    pub fn write_unpropagated(&self, global: usize, out: &mut [f64]) {
        let m = self.dim;
        out.fill(0.0);
        out[..m].copy_from_slice(&self.layers[0][global * m..(global + 1) * m]);
    }

    pub fn embedding(&self, global: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        self.write_embedding(global, &mut out);
        out
    }

    /// Effective weighted neighbours `(global index, weight)` used for `global`.
    pub fn edges(&self, global: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.edge_start[global]..self.edge_start[global + 1]).map(|e| (self.edge_other[e] as usize, self.edge_weight[e]))
    }

    /// Backpropagates `d_final` (`n x D`, gradient w.r.t. every final
    /// representation) into the entity embeddings, propagation matrices and
    /// biases of `grad`. Attention weights are treated as constants.
    pub fn backward(&self, params: &EmbedParams, d_final: &[f64], grad: &mut EmbedParams) {
        let (n, m, d) = (self.n, self.dim, self.out_dim());
        assert_eq!(d_final.len(), n * d);
        let mut dh: Vec<Vec<f64>> = (0..self.steps)
            .map(|k| {
                let mut layer = vec![0.0; n * m];
                for i in 0..n {
                    layer[i * m..(i + 1) * m].copy_from_slice(&d_final[i * d + k * m..i * d + (k + 1) * m]);
                }
                layer
            })
            .collect();

        let mut dz = vec![0.0; m];
        let mut ds = vec![0.0; m];
        for k in (1..self.steps).rev() {
            let (lower, upper) = dh.split_at_mut(k);
            let d_prev = &mut lower[k - 1];
            let d_cur = &upper[0];
            let w = params.weight(k - 1);
            let z = &self.pre[k - 1];
            let s = &self.sums[k - 1];
            let mm = m * m;
            for i in 0..n {
                let mut any = false;
                for r in 0..m {
                    let g = if z[i * m + r] > 0.0 { d_cur[i * m + r] } else { 0.0 };
                    dz[r] = g;
                    any |= g != 0.0;
                }
                if !any {
                    continue;
                }
                let si = &s[i * m..(i + 1) * m];
                let gw = &mut grad.weights[(k - 1) * mm..k * mm];
                for r in 0..m {
                    if dz[r] != 0.0 {
                        axpy(dz[r], si, &mut gw[r * m..(r + 1) * m]);
                    }
                }
                axpy(1.0, &dz, &mut grad.biases[(k - 1) * m..k * m]);
                ds.fill(0.0);
                for r in 0..m {
                    if dz[r] != 0.0 {
                        axpy(dz[r], &w[r * m..(r + 1) * m], &mut ds);
                    }
                }
                axpy(1.0, &ds, &mut d_prev[i * m..(i + 1) * m]);
                for e in self.edge_start[i]..self.edge_start[i + 1] {
                    let j = self.edge_other[e] as usize;
                    axpy(self.edge_weight[e], &ds, &mut d_prev[j * m..(j + 1) * m]);
                }
            }
        }
        axpy(1.0, &dh[0], &mut grad.entity);
    }
}

/// Final representation of a single entity on the effective graph.
pub fn propagate(
    graph: &SessionGraph<'_>,
    params: &EmbedParams,
    cache: &AttentionCache,
    opts: PropagateOptions,
    h: EntityId,
) -> Result<Vec<f64>> {
    let base = graph.base();
    if !base.contains(h) {
        return Err(Error::UnknownEntity(h));
    }
    if graph.is_removed(h) {
        return Err(Error::EntityRemoved(h));
    }
    Ok(Propagation::forward(params, graph, cache, opts).embedding(base.global(h)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{KnowledgeGraph, Relation, Triple};

    fn identity_params(n: usize, m: usize, steps: usize) -> EmbedParams {
        let mut p = EmbedParams::zeros(n, m, steps);
        for k in 0..steps - 1 {
            for i in 0..m {
                p.weights[k * m * m + i * m + i] = 1.0;
            }
        }
        p
    }

    #[test]
    fn isolated_entity_repeats_embedding() {
        let g = KnowledgeGraph::with_counts([1, 1, 0], &[]).unwrap();
        let mut p = identity_params(2, 3, 4);
        p.entity_row_mut(0).copy_from_slice(&[0.5, 0.0, 2.0]);
        let cache = AttentionCache::compute(&p, &g);
        let out = propagate(&g.session(), &p, &cache, PropagateOptions::default(), EntityId::user(0)).unwrap();
        assert_eq!(out, [0.5, 0.0, 2.0, 0.5, 0.0, 2.0, 0.5, 0.0, 2.0, 0.5, 0.0, 2.0]);
    }

    #[test]
    fn single_step_is_raw_embedding() {
        let g = KnowledgeGraph::build(&[Triple::new(EntityId::user(0), Relation::UserItem, EntityId::item(0))]).unwrap();
        let mut p = EmbedParams::zeros(2, 2, 1);
        p.entity.copy_from_slice(&[1.0, -2.0, 3.0, 4.0]);
        let cache = AttentionCache::constant(&g, 5.0);
        let out = propagate(&g.session(), &p, &cache, PropagateOptions::default(), EntityId::user(0)).unwrap();
        assert_eq!(out, [1.0, -2.0]);
    }

    #[test]
    fn two_node_hand_unrolled() {
        // u0 - v0 with alpha = 0.5, m = 2, K = 2
        let g = KnowledgeGraph::build(&[Triple::new(EntityId::user(0), Relation::UserItem, EntityId::item(0))]).unwrap();
        let mut p = EmbedParams::zeros(2, 2, 2);
        p.entity.copy_from_slice(&[1.0, 2.0, -1.0, 4.0]);
        p.weights.copy_from_slice(&[1.0, -1.0, 0.5, 2.0]);
        p.biases.copy_from_slice(&[0.1, -0.2]);
        let cache = AttentionCache::from_weights(alloc::vec![0.5]);
        // user: s = [1,2] + 0.5*[-1,4] = [0.5, 4]; z = [0.5-4+0.1, 0.25+8-0.2] = [-3.4, 8.05]
        let u = propagate(&g.session(), &p, &cache, PropagateOptions::default(), EntityId::user(0)).unwrap();
        assert_eq!(u[..2], [1.0, 2.0]);
        assert!((u[2] - 0.0).abs() < 1e-12 && (u[3] - 8.05).abs() < 1e-12);
        // item: s = [-1,4] + 0.5*[1,2] = [-0.5, 5]; z = [-0.5-5+0.1, -0.25+10-0.2] = [-5.4, 9.55]
        let v = propagate(&g.session(), &p, &cache, PropagateOptions::default(), EntityId::item(0)).unwrap();
        assert!((v[2] - 0.0).abs() < 1e-12 && (v[3] - 9.55).abs() < 1e-12);
    }

    #[test]
    fn removed_entity_is_an_error_and_stops_contributing() {
        let g = KnowledgeGraph::build(&[Triple::new(EntityId::user(0), Relation::UserItem, EntityId::item(0))]).unwrap();
        let mut p = identity_params(2, 2, 2);
        p.entity.copy_from_slice(&[1.0, 1.0, 3.0, 3.0]);
        let cache = AttentionCache::constant(&g, 1.0);
        let mut s = g.session();
        let with = propagate(&s, &p, &cache, PropagateOptions::default(), EntityId::user(0)).unwrap();
        assert_eq!(with, [1.0, 1.0, 4.0, 4.0]);
        s.remove_entities([EntityId::item(0)]);
        assert_eq!(
            propagate(&s, &p, &cache, PropagateOptions::default(), EntityId::item(0)),
            Err(Error::EntityRemoved(EntityId::item(0)))
        );
        let without = propagate(&s, &p, &cache, PropagateOptions::default(), EntityId::user(0)).unwrap();
        assert_eq!(without, [1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn softmax_weights_sum_to_one() {
        let triples: Vec<Triple> =
            (0..5).map(|i| Triple::new(EntityId::item(0), Relation::ItemAttribute, EntityId::attr(i))).collect();
        let g = KnowledgeGraph::build(&triples).unwrap();
        let cache = AttentionCache::from_weights(alloc::vec![0.3, -2.0, 5.0, 0.0, 1.0]);
        let p = identity_params(g.n_entities(), 2, 2);
        let prop = Propagation::forward(&p, &g.session(), &cache, PropagateOptions { softmax: true, max_degree: 0 });
        for i in 0..g.n_entities() {
            let total: f64 = prop.edges(i).map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degree_cap_limits_neighbours() {
        let triples: Vec<Triple> =
            (0..5).map(|i| Triple::new(EntityId::item(0), Relation::ItemAttribute, EntityId::attr(i))).collect();
        let g = KnowledgeGraph::build(&triples).unwrap();
        let p = identity_params(g.n_entities(), 2, 2);
        let cache = AttentionCache::constant(&g, 1.0);
        let prop = Propagation::forward(&p, &g.session(), &cache, PropagateOptions { softmax: false, max_degree: 2 });
        let others: Vec<usize> = prop.edges(0).map(|(j, _)| j).collect();
        assert_eq!(others, [1, 2]);
    }
}
