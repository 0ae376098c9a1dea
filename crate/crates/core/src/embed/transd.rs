//! TransD node features: projected translation score and margin loss.

use alloc::vec::Vec;

use super::EmbedParams;
use crate::graph::{KnowledgeGraph, Relation, Triple};
use crate::math::dot;
use crate::{Error, Result};

/// Dense `m x m` matrix `m_r m_e^T + I`, row-major.
pub fn projection_matrix(m_r: &[f64], m_e: &[f64]) -> Result<Vec<f64>> {
    if m_r.len() != m_e.len() {
        return Err(Error::DimensionMismatch { expected: m_r.len(), got: m_e.len() });
    }
    let m = m_r.len();
    let mut out = alloc::vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = m_r[i] * m_e[j] + if i == j { 1.0 } else { 0.0 };
        }
    }
    Ok(out)
}

/// `(m_r m_e^T + I) e` without materialising the matrix.
pub fn project(m_r: &[f64], m_e: &[f64], e: &[f64]) -> Vec<f64> {
    let s = dot(m_e, e);
    e.iter().zip(m_r).map(|(x, r)| x + r * s).collect()
}

/// Translation residual `e_h' + e_r - e_t'` for global entity indices.
pub(crate) fn residual(params: &EmbedParams, head: usize, r: Relation, tail: usize) -> Vec<f64> {
    let m_r = params.relation_proj_row(r);
    let eh = project(m_r, params.entity_proj_row(head), params.entity_row(head));
    let et = project(m_r, params.entity_proj_row(tail), params.entity_row(tail));
    let er = params.relation_row(r);
    (0..params.dim).map(|i| eh[i] + er[i] - et[i]).collect()
}

/// `||e_h' + e_r - e_t'||^2`.
pub fn transd_score(params: &EmbedParams, graph: &KnowledgeGraph, t: &Triple) -> f64 {
    let d = residual(params, graph.global(t.head), t.relation, graph.global(t.tail));
    dot(&d, &d)
}

/// `max(f_pos - f_neg, -margin)`.
pub fn graph_loss(f_pos: f64, f_neg: f64, margin: f64) -> f64 {
    (f_pos - f_neg).max(-margin)
}

/// Adds `sign * d f(h, r, t)` to `grad`.
fn accumulate_score_grad(params: &EmbedParams, head: usize, r: Relation, tail: usize, sign: f64, grad: &mut EmbedParams) {
    let m = params.dim;
    let d = residual(params, head, r, tail);
    // df/dd = 2d
    let g: Vec<f64> = d.iter().map(|x| 2.0 * sign * x).collect();
    let m_r = params.relation_proj_row(r);
    let rg = dot(m_r, &g);
    let rid = r.id();

    for (dst, gi) in grad.relation[rid * m..(rid + 1) * m].iter_mut().zip(&g) {
        *dst += gi;
    }

    // e_h' = e_h + m_r (m_h . e_h), enters with +1
    let (eh, mh) = (params.entity_row(head), params.entity_proj_row(head));
    let sh = dot(mh, eh);
    for i in 0..m {
        grad.entity[head * m + i] += g[i] + mh[i] * rg;
        grad.entity_proj[head * m + i] += eh[i] * rg;
        grad.relation_proj[rid * m + i] += g[i] * sh;
    }

    // e_t' enters with -1
    let (et, mt) = (params.entity_row(tail), params.entity_proj_row(tail));
    let st = dot(mt, et);
    for i in 0..m {
        grad.entity[tail * m + i] -= g[i] + mt[i] * rg;
        grad.entity_proj[tail * m + i] -= et[i] * rg;
        grad.relation_proj[rid * m + i] -= g[i] * st;
    }
}

/// Summed graph loss over `(positive, negative)` pairs and its gradient.
/// Pairs on the clamped branch contribute `-margin` and no gradient.
pub fn graph_loss_gradients(
    params: &EmbedParams,
    graph: &KnowledgeGraph,
    pairs: &[(Triple, Triple)],
    margin: f64,
) -> (f64, EmbedParams) {
    let mut grad = EmbedParams::zeros_like(params);
    let mut loss = 0.0;
    for (pos, neg) in pairs {
        let fp = transd_score(params, graph, pos);
        let fn_ = transd_score(params, graph, neg);
        loss += graph_loss(fp, fn_, margin);
        if fp - fn_ > -margin {
            accumulate_score_grad(params, graph.global(pos.head), pos.relation, graph.global(pos.tail), 1.0, &mut grad);
            accumulate_score_grad(params, graph.global(neg.head), neg.relation, graph.global(neg.tail), -1.0, &mut grad);
        }
    }
    (loss, grad)
}
