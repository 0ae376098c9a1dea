//! Wall-clock medians of the main operations.

use std::hint::black_box;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use kgcrs_core::config::RunConfig;
use kgcrs_core::embed::{transd_score, AttentionCache, PropagateOptions, Propagation};
use kgcrs_core::graph::EntityId;
use kgcrs_core::policy::{conv_pref_vector, dialogue_vector, encode_state, entropy_vector, user_pref_vector};
use kgcrs_core::recommend::{ScoreOptions, Scorer};
use kgcrs_core::rng_from_seed;

use crate::commands::{load_data, load_embedding, write_json, DataArg, EmbeddingArg};
use crate::report::table;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Op {
    /// TransD score of every triple.
    NodeFeature,
    /// Full propagation plus scoring every item for one user.
    PropagateScore,
    AttentionRefresh,
    /// State vector of a fresh session.
    StateEncode,
    /// Policy forward pass on an encoded state.
    Action,
    /// Removing ten entities and resetting the session graph.
    GraphUpdate,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub embedding: EmbeddingArg,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Op::NodeFeature, Op::PropagateScore, Op::AttentionRefresh, Op::StateEncode, Op::Action, Op::GraphUpdate])]
    pub ops: Vec<Op>,
    #[arg(long, default_value_t = 30)]
    pub reps: usize,
    #[arg(long)]
    pub report: Option<std::path::PathBuf>,
}

/// Median seconds of `reps` runs of `f`.
pub fn median_secs(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let s = Instant::now();
            f();
            s.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[t.len() / 2]
}

pub fn run(cfg: &RunConfig, a: &BenchArgs) -> Result<()> {
    if a.reps < 30 {
        bail!("bench needs at least 30 repetitions");
    }
    let data = load_data(&a.data.data, cfg)?;
    let emb = load_embedding(&a.embedding.embedding, cfg, &data)?;
    let g = &data.graph;
    let params = &emb.checkpoint.params;
    let popts = PropagateOptions::from(&cfg.embed);
    let base = Propagation::forward(params, &g.session(), &emb.cache, popts);
    let items: Vec<u32> = (0..g.n_items() as u32).collect();
    let start = (0..g.n_attrs() as u32).max_by_key(|&p| g.attr_items(p).len()).unwrap_or(0);
    let policy = kgcrs_core::policy::PolicyParams::new(
        crate::commands::env(cfg, &data, &emb).layout().len(),
        &cfg.policy.hidden,
        data.scheme.n_actions(),
        &mut rng_from_seed(cfg.seed),
    );

    let mut rows = Vec::new();
    let mut results = Vec::new();
    for &op in &a.ops {
        let secs = match op {
            Op::NodeFeature => median_secs(a.reps, || {
                black_box(g.triples().iter().map(|t| transd_score(params, g, t)).sum::<f64>());
            }),
            Op::PropagateScore => median_secs(a.reps, || {
                let prop = Propagation::forward(params, &g.session(), &emb.cache, popts);
                let s = Scorer::new(params, &prop, g, ScoreOptions::default());
                black_box(s.score_all(0, &items, &[]).ok());
            }),
            Op::AttentionRefresh => median_secs(a.reps, || {
                black_box(AttentionCache::compute(params, g));
            }),
            Op::StateEncode => {
                let s = Scorer::new(params, &base, g, ScoreOptions::for_state(&cfg.ablation));
                median_secs(a.reps, || {
                    let cands = g.attr_items(start);
                    let ent = entropy_vector(g, cands, cfg.session.entropy).unwrap_or_default();
                    let u = user_pref_vector(&s, 0);
                    let c = conv_pref_vector(&s, &[start]);
                    let d = dialogue_vector(&[], cands.len(), cfg.session.max_turns, &cfg.session.bins).unwrap_or_default();
                    black_box(encode_state(&ent, &u, &c, &d, false));
                })
            }
            Op::Action => {
                let state = vec![0.1; policy.input_dim()];
                let allowed = vec![true; policy.n_actions()];
                median_secs(a.reps, || {
                    black_box(policy.forward(&state, &allowed).ok());
                })
            }
            Op::GraphUpdate => {
                let ids: Vec<EntityId> = (0..10.min(g.n_items() as u32)).map(EntityId::item).collect();
                let mut sg = g.session();
                median_secs(a.reps, || {
                    sg.remove_entities(ids.iter().copied());
                    sg.reset_session();
                })
            }
        };
        rows.push((format!("{op:?}"), format!("{:.3} us", secs * 1e6)));
        results.push(serde_json::json!({"op": op, "median_seconds": secs, "reps": a.reps}));
    }
    print!("{}", table("bench (median wall-clock)", &rows));
    if let (Some(ns), Some(at)) = (position(&a.ops, Op::NodeFeature, &results), position(&a.ops, Op::AttentionRefresh, &results)) {
        println!("attention refresh / node-feature pass = {:.2}", at / ns);
    }
    if let Some(p) = &a.report {
        write_json(p, &serde_json::json!({ "config_hash": crate::config::config_hash(cfg), "timings": results }))?;
    }
    Ok(())
}

fn position(ops: &[Op], op: Op, results: &[serde_json::Value]) -> Option<f64> {
    ops.iter().position(|&o| o == op).and_then(|i| results[i]["median_seconds"].as_f64())
}
