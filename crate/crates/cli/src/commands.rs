//! Subcommands: data preparation, training stages and evaluation.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kgcrs_core::config::RunConfig;
use kgcrs_core::dataset::{Dataset, Split};
use kgcrs_core::embed::{pretrain_graph, train_offline, AttentionCache, EmbedParams, PropagateOptions, Propagation, TrainLog, TrainOptions};
use kgcrs_core::graph::KnowledgeGraph;
use kgcrs_core::metrics::{auc, offline_ranking_metrics, online_metrics};
use kgcrs_core::policy::PolicyOptimizer;
use kgcrs_core::recommend::{ScoreOptions, Scorer};
use kgcrs_core::session::{
    derive_seed, evaluation_session, pretrain_policy, run_training, Agent, PolicyTraining, QuestionScheme, SessionEnv,
    SessionRecord, Teacher,
};
use kgcrs_core::synth::{make_synthetic, SyntheticOptions};
use kgcrs_core::rng_from_seed;

use crate::artifacts::{self, check_upstream, DatasetBundle, EmbeddingCheckpoint, Header, PolicyCheckpoint};
use crate::formats::{numbered_vocab, read_files, write_files};
use crate::report::{offline_rows, online_rows, report_json, table, Transcript};
use crate::{bench, config, interact};

const STREAM_SPLIT: u64 = 100;
const STREAM_EMBED: u64 = 101;
const STREAM_POLICY: u64 = 102;
const STREAM_RL: u64 = 103;
const STREAM_AUC: u64 = 104;
const STREAM_SYNTH: u64 = 105;

#[derive(Parser, Debug)]
#[command(name = "kgcrs", version, about = "Conversational recommendation over a dynamic knowledge graph")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Config override `section.key=value` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a dataset bundle from TSV files.
    Ingest(IngestArgs),
    /// Write a bit-pattern world as TSV files and a dataset bundle.
    MakeSynthetic(SynthArgs),
    /// Node-feature pretraining with the graph loss.
    PretrainKg(PretrainKgArgs),
    /// Alternating graph / item training.
    TrainOffline(TrainOfflineArgs),
    /// Imitation pretraining of the dialogue policy on teacher roll-outs.
    PretrainPolicy(PretrainPolicyArgs),
    /// REINFORCE training of the dialogue policy against the simulator.
    TrainPolicy(TrainPolicyArgs),
    /// Simulated conversations with a policy or a rule-based agent.
    EvalOnline(EvalOnlineArgs),
    /// Precision / Recall / NDCG@K and AUC of the recommender.
    EvalOffline(EvalOfflineArgs),
    /// Play the user in a terminal session.
    Interact(interact::InteractArgs),
    /// Time the main operations.
    Bench(bench::BenchArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub interactions: PathBuf,
    #[arg(long)]
    pub item_attrs: PathBuf,
    #[arg(long)]
    pub facets: Option<PathBuf>,
    #[arg(long, default_value = "dataset.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub bits: u32,
    #[arg(long, default_value_t = 50)]
    pub users: u32,
    #[arg(long, default_value_t = 20)]
    pub per_user: u32,
    #[arg(long, default_value_t = 2)]
    pub pattern_bits: u32,
    /// Add "bit unset" attributes and one two-valued facet per bit.
    #[arg(long)]
    pub complement: bool,
    /// Directory for the TSV files.
    #[arg(long, default_value = ".")]
    pub dir: PathBuf,
    #[arg(long, default_value = "dataset.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct DataArg {
    #[arg(long, default_value = "dataset.json")]
    pub data: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct EmbeddingArg {
    #[arg(long, default_value = "embedding.json")]
    pub embedding: PathBuf,
}

#[derive(Args, Debug)]
pub struct PretrainKgArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long, default_value = "embedding.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainOfflineArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// Start from a pretrained checkpoint instead of pretraining here.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value = "embedding.json")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    /// Max Entropy teacher.
    Me,
    /// Ground-truth teacher.
    Gt,
}

#[derive(Args, Debug)]
pub struct PretrainPolicyArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub embedding: EmbeddingArg,
    #[arg(long, value_enum)]
    pub strategy: Strategy,
    #[arg(long, default_value = "policy.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainPolicyArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub embedding: EmbeddingArg,
    /// Continue from a (pretrained) policy checkpoint.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value = "policy.json")]
    pub out: PathBuf,
    /// Transcript of every training session (JSON lines).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AgentKind {
    Policy,
    AbsGreedy,
    MaxEntropy,
    GroundTruth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalOnlineArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub embedding: EmbeddingArg,
    #[arg(long, value_enum, default_value_t = AgentKind::Policy)]
    pub agent: AgentKind,
    #[arg(long, default_value = "policy.json")]
    pub policy: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Sessions to run (default: one per pair in the split).
    #[arg(long)]
    pub sessions: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Turn limits reported as SR@T (default: 5, 10 and the session limit).
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<usize>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalOfflineArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub embedding: EmbeddingArg,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, value_delimiter = ',', default_value = "10,20")]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// A dataset bundle with its graph and question scheme.
pub struct Data {
    pub bundle: DatasetBundle,
    pub fingerprint: String,
    pub graph: KnowledgeGraph,
    pub scheme: QuestionScheme,
}

pub fn load_data(path: &Path, cfg: &RunConfig) -> Result<Data> {
    let (mut bundle, fingerprint) = artifacts::load::<DatasetBundle>(path, cfg)?;
    bundle.vocab.reindex();
    let graph = bundle.dataset.graph()?;
    let scheme = bundle.dataset.scheme(cfg.session.question_mode)?;
    Ok(Data { bundle, fingerprint, graph, scheme })
}

pub struct Embedding {
    pub checkpoint: EmbeddingCheckpoint,
    pub fingerprint: String,
    pub cache: AttentionCache,
}

pub fn load_embedding(path: &Path, cfg: &RunConfig, data: &Data) -> Result<Embedding> {
    let (checkpoint, fingerprint) = artifacts::load::<EmbeddingCheckpoint>(path, cfg)?;
    check_upstream("dataset", &checkpoint.dataset, &data.fingerprint)?;
    if checkpoint.params.n_entities != data.graph.n_entities() {
        bail!("embedding has {} entities, the graph {}", checkpoint.params.n_entities, data.graph.n_entities());
    }
    let cache = AttentionCache::compute(&checkpoint.params, &data.graph);
    Ok(Embedding { checkpoint, fingerprint, cache })
}

pub fn env<'a>(cfg: &'a RunConfig, data: &'a Data, emb: &'a Embedding) -> SessionEnv<'a> {
    SessionEnv { graph: &data.graph, params: &emb.checkpoint.params, cache: &emb.cache, scheme: &data.scheme, config: cfg }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = config::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Ingest(a) => ingest(&cfg, &a),
        Command::MakeSynthetic(a) => synthetic(&cfg, &a),
        Command::PretrainKg(a) => pretrain_kg(&cfg, &a),
        Command::TrainOffline(a) => offline(&cfg, &a),
        Command::PretrainPolicy(a) => policy_pretrain(&cfg, &a),
        Command::TrainPolicy(a) => policy_train(&cfg, &a),
        Command::EvalOnline(a) => eval_online(&cfg, &a),
        Command::EvalOffline(a) => eval_offline(&cfg, &a),
        Command::Interact(a) => interact::run(&cfg, &a),
        Command::Bench(a) => bench::run(&cfg, &a),
    }
}

fn write_bundle(cfg: &RunConfig, raw: &kgcrs_core::dataset::RawData, vocab: crate::formats::Vocab, out: &Path) -> Result<()> {
    let dataset = Dataset::build(raw, &cfg.data, &mut rng_from_seed(derive_seed(cfg.seed, STREAM_SPLIT, 0)))?;
    let d = &dataset;
    let count = |s: &[Vec<u32>]| s.iter().map(Vec::len).sum::<usize>();
    println!(
        "{} users ({} dropped), {} items, {} attributes; interactions train/valid/test = {}/{}/{}",
        d.n_users,
        raw.n_users - d.n_users,
        d.n_items,
        d.n_attrs,
        count(&d.train),
        count(&d.valid),
        count(&d.test)
    );
    let bundle = DatasetBundle { header: Header::new("dataset", cfg), vocab, dataset };
    let fp = artifacts::save(out, &bundle)?;
    println!("wrote {} ({})", out.display(), &fp[..12]);
    Ok(())
}

fn ingest(cfg: &RunConfig, a: &IngestArgs) -> Result<()> {
    let (raw, vocab) = read_files(&a.interactions, &a.item_attrs, a.facets.as_deref())?;
    write_bundle(cfg, &raw, vocab, &a.out)
}

fn synthetic(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    let opts = SyntheticOptions { n_bits: a.bits, n_users: a.users, interactions_per_user: a.per_user, pattern_bits: a.pattern_bits, complement: a.complement };
    let raw = make_synthetic(&opts, &mut rng_from_seed(derive_seed(cfg.seed, STREAM_SYNTH, 0)))?;
    let vocab = numbered_vocab(&raw);
    fs::create_dir_all(&a.dir)?;
    write_files(&raw, &vocab, &a.dir)?;
    write_bundle(cfg, &raw, vocab, &a.out)
}

fn print_epochs(title: &str, log: &TrainLog) {
    use kgcrs_core::embed::Phase;
    for phase in [Phase::Pretrain, Phase::Joint] {
        let losses = log.epoch_graph_losses(phase);
        if !losses.is_empty() {
            let rows: Vec<(String, String)> = losses.iter().enumerate().map(|(e, l)| (format!("epoch {e}"), format!("{l:.6}"))).collect();
            print!("{}", table(&format!("{title} ({phase:?}): mean graph loss"), &rows));
        }
    }
}

fn pretrain_kg(cfg: &RunConfig, a: &PretrainKgArgs) -> Result<()> {
    let data = load_data(&a.data.data, cfg)?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, STREAM_EMBED, 0));
    let mut params = EmbedParams::init(&data.graph, &cfg.embed, &mut rng);
    let opts = TrainOptions::from_config(&cfg.embed, &cfg.ablation);
    let log = pretrain_graph(&data.graph, &mut params, &opts, cfg.embed.pretrain_epochs, &mut rng)?;
    print_epochs("pretrain-kg", &log);
    let ck = EmbeddingCheckpoint { header: Header::new("embedding", cfg), dataset: data.fingerprint, stage: "pretrain".into(), params, log };
    let fp = artifacts::save(&a.out, &ck)?;
    println!("wrote {} ({})", a.out.display(), &fp[..12]);
    Ok(())
}

fn offline(cfg: &RunConfig, a: &TrainOfflineArgs) -> Result<()> {
    let data = load_data(&a.data.data, cfg)?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, STREAM_EMBED, 1));
    let opts = TrainOptions::from_config(&cfg.embed, &cfg.ablation);
    let (mut params, mut log) = match &a.init {
        Some(p) => {
            let (ck, _) = artifacts::load::<EmbeddingCheckpoint>(p, cfg)?;
            check_upstream("dataset", &ck.dataset, &data.fingerprint)?;
            (ck.params, ck.log)
        }
        None => {
            let mut init_rng = rng_from_seed(derive_seed(cfg.seed, STREAM_EMBED, 0));
            let mut params = EmbedParams::init(&data.graph, &cfg.embed, &mut init_rng);
            let log = pretrain_graph(&data.graph, &mut params, &opts, cfg.embed.pretrain_epochs, &mut init_rng)?;
            (params, log)
        }
    };
    let (joint, _) = train_offline(&data.graph, &mut params, &opts, &mut rng)?;
    log.batches.extend(joint.batches);
    print_epochs("train-offline", &log);
    let ck = EmbeddingCheckpoint { header: Header::new("embedding", cfg), dataset: data.fingerprint, stage: "offline".into(), params, log };
    let fp = artifacts::save(&a.out, &ck)?;
    println!("wrote {} ({})", a.out.display(), &fp[..12]);
    Ok(())
}

fn policy_pretrain(cfg: &RunConfig, a: &PretrainPolicyArgs) -> Result<()> {
    let data = load_data(&a.data.data, cfg)?;
    let emb = load_embedding(&a.embedding.embedding, cfg, &data)?;
    let env = env(cfg, &data, &emb);
    let mut params = env.new_policy(&mut rng_from_seed(derive_seed(cfg.seed, STREAM_POLICY, 0)));
    let teacher = match a.strategy {
        Strategy::Me => Teacher::MaxEntropy,
        Strategy::Gt => Teacher::GroundTruth,
    };
    let pairs = data.bundle.dataset.session_pairs(Split::Train);
    let losses = pretrain_policy(
        env,
        &mut params,
        teacher,
        &pairs,
        cfg.policy.pretrain_sessions,
        cfg.policy.pretrain_epochs,
        cfg.policy.pretrain_lr,
        derive_seed(cfg.seed, STREAM_POLICY, 1),
    )?;
    let rows: Vec<(String, String)> = losses.iter().enumerate().map(|(e, l)| (format!("epoch {e}"), format!("{l:.6}"))).collect();
    print!("{}", table(&format!("pretrain-policy ({teacher:?}): cross-entropy"), &rows));
    let ck = PolicyCheckpoint {
        header: Header::new("policy", cfg),
        dataset: data.fingerprint.clone(),
        embedding: emb.fingerprint.clone(),
        params,
        optimizer: None,
        pretrain_losses: losses,
        epochs: Vec::new(),
    };
    let fp = artifacts::save(&a.out, &ck)?;
    println!("wrote {} ({})", a.out.display(), &fp[..12]);
    Ok(())
}

pub fn load_policy(path: &Path, cfg: &RunConfig, data: &Data, emb: &Embedding) -> Result<PolicyCheckpoint> {
    let (ck, _) = artifacts::load::<PolicyCheckpoint>(path, cfg)?;
    check_upstream("dataset", &ck.dataset, &data.fingerprint)?;
    check_upstream("embedding", &ck.embedding, &emb.fingerprint)?;
    Ok(ck)
}

fn policy_train(cfg: &RunConfig, a: &TrainPolicyArgs) -> Result<()> {
    let data = load_data(&a.data.data, cfg)?;
    let emb = load_embedding(&a.embedding.embedding, cfg, &data)?;
    let env = env(cfg, &data, &emb);
    let (mut params, optimizer, pretrain_losses, mut epochs) = match &a.init {
        Some(p) => {
            let ck = load_policy(p, cfg, &data, &emb)?;
            (ck.params, ck.optimizer, ck.pretrain_losses, ck.epochs)
        }
        None => (env.new_policy(&mut rng_from_seed(derive_seed(cfg.seed, STREAM_POLICY, 0))), None, Vec::new(), Vec::new()),
    };
    let mut optimizer = optimizer.unwrap_or_else(|| PolicyOptimizer::new(cfg.policy.optimizer, cfg.policy.lr));
    let header = Header::new("policy", cfg);
    let mut transcript = match &a.log {
        Some(p) => Some(Transcript::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?), &header, "train-policy")?),
        None => None,
    };
    let train = data.bundle.dataset.session_pairs(Split::Train);
    let valid = data.bundle.dataset.session_pairs(Split::Valid);
    let mut write_err = None;
    let logs = run_training(
        env,
        &mut params,
        &mut optimizer,
        &train,
        &valid,
        PolicyTraining::from_config(cfg),
        derive_seed(cfg.seed, STREAM_RL, epochs.len() as u64),
        &mut |r| {
            if let Some(t) = transcript.as_mut() {
                if let Err(e) = t.session(r) {
                    write_err.get_or_insert(e);
                }
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(e);
    }
    if let Some(t) = transcript {
        t.finish()?;
    }
    let offset = epochs.len();
    for mut l in logs {
        l.epoch += offset;
        let mut rows = vec![
            ("sessions".to_string(), l.sessions.to_string()),
            ("mean return".to_string(), format!("{:.4}", l.mean_return)),
            ("train success".to_string(), format!("{:.4}", l.train_success)),
        ];
        if let Some(v) = &l.valid {
            rows.extend(online_rows(v).into_iter().map(|(k, v)| (format!("valid {k}"), v)));
        }
        print!("{}", table(&format!("train-policy epoch {}", l.epoch), &rows));
        epochs.push(l);
    }
    let ck = PolicyCheckpoint {
        header,
        dataset: data.fingerprint.clone(),
        embedding: emb.fingerprint.clone(),
        params,
        optimizer: Some(optimizer),
        pretrain_losses,
        epochs,
    };
    let fp = artifacts::save(&a.out, &ck)?;
    println!("wrote {} ({})", a.out.display(), &fp[..12]);
    Ok(())
}

/// Runs sessions `0..n` over `threads` workers; the records come back in
/// index order and do not depend on the worker count.
pub fn run_sessions<'p>(env: SessionEnv<'_>, make: &(dyn Fn() -> Agent<'p> + Sync), pairs: &[(u32, u32)], n: usize, seed: u64, threads: usize) -> Vec<SessionRecord> {
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(|i| evaluation_session(env, &mut make(), pairs, seed, i)).collect();
    }
    let mut out: Vec<(usize, SessionRecord)> = thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|k| s.spawn(move || (k..n).step_by(threads).map(|i| (i, evaluation_session(env, &mut make(), pairs, seed, i))).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, r)| r).collect()
}

fn eval_online(cfg: &RunConfig, a: &EvalOnlineArgs) -> Result<()> {
    let data = load_data(&a.data.data, cfg)?;
    let emb = load_embedding(&a.embedding.embedding, cfg, &data)?;
    let env = env(cfg, &data, &emb);
    let pairs = data.bundle.dataset.session_pairs(a.split.into());
    if pairs.is_empty() {
        bail!("no session pairs in the {:?} split", a.split);
    }
    let n = a.sessions.unwrap_or(pairs.len());
    let policy = match a.agent {
        AgentKind::Policy => Some(load_policy(&a.policy, cfg, &data, &emb)?),
        _ => None,
    };
    let greedy = cfg.policy.greedy_eval;
    let make = || match (a.agent, &policy) {
        (AgentKind::Policy, Some(p)) => Agent::Learned { params: &p.params, greedy },
        (AgentKind::MaxEntropy, _) => Agent::MaxEntropy,
        (AgentKind::GroundTruth, _) => Agent::GroundTruth,
        _ => Agent::AbsGreedy,
    };
    let records = run_sessions(env, &make, &pairs, n, cfg.seed, a.parallel);
    let t = cfg.session.max_turns;
    let levels = if a.levels.is_empty() {
        let mut l: Vec<usize> = [5, 10].into_iter().filter(|&x| x < t).collect();
        l.push(t);
        l
    } else {
        a.levels.clone()
    };
    let metrics = online_metrics(&records, &levels, t)?;
    let header = Header::new("report", cfg);
    if let Some(p) = &a.log {
        let mut tr = Transcript::new(BufWriter::new(File::create(p)?), &header, "eval-online")?;
        for r in &records {
            tr.session(r)?;
        }
        tr.finish()?;
    }
    print!("{}", table(&format!("eval-online ({:?}, {:?} split)", a.agent, a.split), &online_rows(&metrics)));
    if let Some(p) = &a.report {
        write_json(p, &report_json(&header, "eval-online", &metrics)?)?;
    }
    Ok(())
}

fn eval_offline(cfg: &RunConfig, a: &EvalOfflineArgs) -> Result<()> {
    let data = load_data(&a.data.data, cfg)?;
    let emb = load_embedding(&a.embedding.embedding, cfg, &data)?;
    let params = &emb.checkpoint.params;
    let prop = Propagation::forward(params, &data.graph.session(), &emb.cache, PropagateOptions::from(&cfg.embed));
    let scorer = Scorer::new(params, &prop, &data.graph, ScoreOptions::for_recommendation(&cfg.ablation));
    let users = data.bundle.dataset.held_out(a.split.into());
    let ranking = offline_ranking_metrics(&scorer, &users, &a.ks)?;
    let auc = auc(&scorer, &users, 1, &mut rng_from_seed(derive_seed(cfg.seed, STREAM_AUC, 0)))?;
    print!("{}", table(&format!("eval-offline ({:?} split)", a.split), &offline_rows(&ranking, auc)));
    if let Some(p) = &a.report {
        let header = Header::new("report", cfg);
        write_json(p, &report_json(&header, "eval-offline", &serde_json::json!({"ranking": ranking, "auc": auc}))?)?;
    }
    Ok(())
}

pub fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, v)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}
