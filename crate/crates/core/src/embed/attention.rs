use alloc::vec::Vec;

use super::transd::project;
use super::EmbedParams;
use crate::graph::{KnowledgeGraph, Relation};
use crate::math::dot;

/// `e_t' . tanh(e_h' + e_r)` for global entity indices, using the TransD
/// projections of relation `r`.
pub fn attention(params: &EmbedParams, head: usize, r: Relation, tail: usize) -> f64 {
    let m_r = params.relation_proj_row(r);
    let eh = project(m_r, params.entity_proj_row(head), params.entity_row(head));
    let et = project(m_r, params.entity_proj_row(tail), params.entity_row(tail));
    let er = params.relation_row(r);
    eh.iter()
        .zip(er)
        .zip(&et)
        .map(|((h, r), t)| t * libm::tanh(h + r))
        .sum()
}

/// Raw attention weight per base triple. Refreshed only at epoch boundaries,
/// so it stays constant while embeddings move within an epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionCache {
    alpha: Vec<f64>,
}

impl AttentionCache {
    pub fn compute(params: &EmbedParams, graph: &KnowledgeGraph) -> Self {
        let alpha = graph
            .triples()
            .iter()
            .map(|t| attention(params, graph.global(t.head), t.relation, graph.global(t.tail)))
            .collect();
        AttentionCache { alpha }
    }

    pub fn refresh(&mut self, params: &EmbedParams, graph: &KnowledgeGraph) {
        *self = Self::compute(params, graph);
    }

    /// Cache of all-equal weights, mostly for tests.
    pub fn constant(graph: &KnowledgeGraph, value: f64) -> Self {
        AttentionCache { alpha: alloc::vec![value; graph.triples().len()] }
    }

    pub fn from_weights(alpha: Vec<f64>) -> Self {
        AttentionCache { alpha }
    }

    #[inline]
    pub fn weight(&self, triple: u32) -> f64 {
        self.alpha[triple as usize]
    }

    pub fn weights(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Attention as `dot` of precomputed parts, exposed for tests.
#[allow(dead_code)]
pub(crate) fn attention_from_parts(eh: &[f64], er: &[f64], et: &[f64]) -> f64 {
    let arg: Vec<f64> = eh.iter().zip(er).map(|(a, b)| libm::tanh(a + b)).collect();
    dot(et, &arg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityId, Triple};

    fn setup(eh: [f64; 2], er: [f64; 2], et: [f64; 2]) -> (KnowledgeGraph, EmbedParams) {
        let g = KnowledgeGraph::build(&[Triple::new(EntityId::item(0), Relation::ItemAttribute, EntityId::attr(0))]).unwrap();
        let mut p = EmbedParams::zeros(g.n_entities(), 2, 1);
        p.entity_row_mut(0).copy_from_slice(&eh);
        p.entity_row_mut(1).copy_from_slice(&et);
        p.relation[2..4].copy_from_slice(&er);
        (g, p)
    }

    #[test]
    fn zero_argument_gives_zero() {
        let (g, p) = setup([0.5, -1.0], [-0.5, 1.0], [3.0, 4.0]);
        assert_eq!(AttentionCache::compute(&p, &g).weight(0), 0.0);
    }

    #[test]
    fn saturated_tanh() {
        let (_, p) = setup([10.0, 0.0], [0.0, 0.0], [1.0, 0.0]);
        let a = attention(&p, 0, Relation::ItemAttribute, 1);
        assert_eq!(a, libm::tanh(10.0));
        assert!((a - 0.99999).abs() < 1e-5);
    }

    #[test]
    fn linear_in_tail() {
        let (_, p) = setup([0.3, -0.2], [0.1, 0.4], [1.5, -2.0]);
        let (_, q) = setup([0.3, -0.2], [0.1, 0.4], [-1.5, 2.0]);
        let a = attention(&p, 0, Relation::ItemAttribute, 1);
        assert_eq!(attention(&q, 0, Relation::ItemAttribute, 1), -a);
        assert!((attention_from_parts(&[0.3, -0.2], &[0.1, 0.4], &[1.5, -2.0]) - a).abs() < 1e-15);
    }
}
