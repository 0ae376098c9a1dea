//! Graph embedding: TransD node features, cached attention weights and
//! attention-weighted neighbourhood propagation.

mod attention;
mod propagate;
mod train;
mod transd;

pub use attention::{attention, AttentionCache};
pub use propagate::{propagate, PropagateOptions, Propagation};
pub use train::{
    gradients, negative_sample, pretrain_graph, train_offline, Batch, BatchLog, GradContext, LossKind, Phase, TrainLog,
    TrainOptions,
};
pub use transd::{graph_loss, graph_loss_gradients, project, projection_matrix, transd_score};

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::EmbedConfig;
use crate::graph::{KnowledgeGraph, Relation};
use crate::math;
use crate::Rng;

/// The six (relation, entity kind) roles that get a post-propagation
/// projection. Indices match the storage order in [`EmbedParams`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// User side of user-item.
    UserItemUser = 0,
    /// Item side of user-item.
    UserItemItem = 1,
    /// Item side of item-attribute.
    ItemAttrItem = 2,
    /// Attribute side of item-attribute.
    ItemAttrAttr = 3,
    /// User side of user-attribute.
    UserAttrUser = 4,
    /// Attribute side of user-attribute.
    UserAttrAttr = 5,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::UserItemUser,
        Role::UserItemItem,
        Role::ItemAttrItem,
        Role::ItemAttrAttr,
        Role::UserAttrUser,
        Role::UserAttrAttr,
    ];
}

/// All trainable tensors of the graph embedding and recommendation model.
///
/// Every tensor is a flat row-major `Vec<f64>`. The same struct doubles as a
/// gradient bundle (see [`EmbedParams::zeros_like`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedParams {
    /// Per-step embedding size (m).
    pub dim: usize,
    /// Propagation steps; the final representation has `steps * dim` entries.
    pub steps: usize,
    pub n_entities: usize,
    /// `n_entities x dim` entity embeddings.
    pub entity: Vec<f64>,
    /// `n_entities x dim` TransD entity projection vectors.
    pub entity_proj: Vec<f64>,
    /// `3 x dim` relation embeddings.
    pub relation: Vec<f64>,
    /// `3 x dim` TransD relation projection vectors.
    pub relation_proj: Vec<f64>,
    /// `(steps - 1) x dim x dim` propagation matrices, row-major (out, in).
    pub weights: Vec<f64>,
    /// `(steps - 1) x dim` propagation biases.
    pub biases: Vec<f64>,
    /// `6 x D` relation-side vectors of the role projections.
    pub role_rel: Vec<f64>,
    /// `6 x D` entity-side vectors of the role projections.
    pub role_ent: Vec<f64>,
}

impl EmbedParams {
    pub fn zeros(n_entities: usize, dim: usize, steps: usize) -> Self {
        assert!(dim > 0 && steps > 0);
        let d = dim * steps;
        EmbedParams {
            dim,
            steps,
            n_entities,
            entity: vec![0.0; n_entities * dim],
            entity_proj: vec![0.0; n_entities * dim],
            relation: vec![0.0; 3 * dim],
            relation_proj: vec![0.0; 3 * dim],
            weights: vec![0.0; (steps - 1) * dim * dim],
            biases: vec![0.0; (steps - 1) * dim],
            role_rel: vec![0.0; 6 * d],
            role_ent: vec![0.0; 6 * d],
        }
    }

    pub fn zeros_like(other: &EmbedParams) -> Self {
        Self::zeros(other.n_entities, other.dim, other.steps)
    }

    /// Random initialisation: embeddings uniform in `±6/sqrt(m)`, projection
    /// vectors zero (identity projections), propagation matrices identity plus
    /// uniform noise, biases zero.
    pub fn init(graph: &KnowledgeGraph, cfg: &EmbedConfig, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(graph.n_entities(), cfg.dim, cfg.steps);
        let bound = 6.0 / libm::sqrt(cfg.dim as f64);
        for x in p.entity.iter_mut().chain(p.relation.iter_mut()) {
            *x = rng.gen_range(-bound..bound);
        }
        let m = cfg.dim;
        for k in 0..cfg.steps - 1 {
            let w = &mut p.weights[k * m * m..(k + 1) * m * m];
            for i in 0..m {
                for j in 0..m {
                    let noise = if cfg.init_noise > 0.0 {
                        rng.gen_range(-cfg.init_noise..cfg.init_noise)
                    } else {
                        0.0
                    };
                    w[i * m + j] = if i == j { 1.0 } else { 0.0 } + noise;
                }
            }
        }
        p
    }

    /// Width of a propagated representation (D = steps * dim).
    pub fn out_dim(&self) -> usize {
        self.dim * self.steps
    }

    pub fn entity_row(&self, global: usize) -> &[f64] {
        &self.entity[global * self.dim..(global + 1) * self.dim]
    }

    pub fn entity_row_mut(&mut self, global: usize) -> &mut [f64] {
        &mut self.entity[global * self.dim..(global + 1) * self.dim]
    }

    pub fn entity_proj_row(&self, global: usize) -> &[f64] {
        &self.entity_proj[global * self.dim..(global + 1) * self.dim]
    }

    pub fn relation_row(&self, r: Relation) -> &[f64] {
        &self.relation[r.id() * self.dim..(r.id() + 1) * self.dim]
    }

    pub fn relation_proj_row(&self, r: Relation) -> &[f64] {
        &self.relation_proj[r.id() * self.dim..(r.id() + 1) * self.dim]
    }

    /// Propagation matrix for layer `k` (0-based over the `steps - 1` layers).
    pub fn weight(&self, k: usize) -> &[f64] {
        let mm = self.dim * self.dim;
        &self.weights[k * mm..(k + 1) * mm]
    }

    pub fn bias(&self, k: usize) -> &[f64] {
        &self.biases[k * self.dim..(k + 1) * self.dim]
    }

    pub fn role_rel(&self, role: Role) -> &[f64] {
        let d = self.out_dim();
        &self.role_rel[role as usize * d..(role as usize + 1) * d]
    }

    pub fn role_ent(&self, role: Role) -> &[f64] {
        let d = self.out_dim();
        &self.role_ent[role as usize * d..(role as usize + 1) * d]
    }

    /// Applies the role projection `x + a (b . x)`.
    pub fn project_role(&self, role: Role, x: &[f64], out: &mut [f64]) {
        let a = self.role_rel(role);
        let b = self.role_ent(role);
        let s = math::dot(b, x);
        for ((o, xi), ai) in out.iter_mut().zip(x).zip(a) {
            *o = xi + ai * s;
        }
    }

    /// Read-only view of every tensor, in a fixed order.
    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.entity,
            &self.entity_proj,
            &self.relation,
            &self.relation_proj,
            &self.weights,
            &self.biases,
            &self.role_rel,
            &self.role_ent,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.entity,
            &mut self.entity_proj,
            &mut self.relation,
            &mut self.relation_proj,
            &mut self.weights,
            &mut self.biases,
            &mut self.role_rel,
            &mut self.role_ent,
        ]
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn axpy(&mut self, alpha: f64, other: &EmbedParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            math::axpy(alpha, src, dst);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| math::all_finite(t))
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0))
    }

    /// Number of scalar parameters.
    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened copy of every tensor (mostly for tests and hashing).
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for t in self.tensors() {
            v.extend_from_slice(t);
        }
        v
    }

    /// Mutable access to the `i`-th scalar of [`flatten`](Self::flatten).
    pub fn scalar_mut(&mut self, mut i: usize) -> &mut f64 {
        for t in self.tensors_mut() {
            if i < t.len() {
                return &mut t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range");
    }
}
