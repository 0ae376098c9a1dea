//! A person plays the user. Answers are saved to a replay file that
//! reproduces the session without a terminal.

use std::collections::VecDeque;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use anyhow::{anyhow, bail, Result};
use clap::Args;
use kgcrs_core::config::{QuestionMode, RunConfig};
use kgcrs_core::session::{run_session, Agent, Outcome, Responder, RunOptions, SessionRecord, SessionState};
use kgcrs_core::{rng_from_seed, Error};
use serde::{Deserialize, Serialize};

use crate::commands::{env, load_data, load_embedding, load_policy, AgentKind, DataArg, EmbeddingArg};
use crate::formats::Vocab;

#[derive(Args, Debug)]
pub struct InteractArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub embedding: EmbeddingArg,
    #[arg(long, value_enum, default_value_t = AgentKind::Policy)]
    pub agent: AgentKind,
    #[arg(long, default_value = "policy.json")]
    pub policy: PathBuf,
    /// User id as in the interactions file.
    #[arg(long)]
    pub user: Option<String>,
    /// Attribute the user opens with.
    #[arg(long)]
    pub start_attr: Option<String>,
    /// Replay the answers of a saved session instead of prompting.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Save the answers for later replay.
    #[arg(long)]
    pub save: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Revealed(Vec<String>),
    Accepted(bool),
}

/// Everything needed to replay a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub user: String,
    pub start_attr: String,
    pub seed: u64,
    pub answers: Vec<Answer>,
}

/// Prompts on `output`, reads from `input`, re-prompting on bad input.
pub struct Human<'v, R, W> {
    pub input: R,
    pub output: W,
    pub vocab: &'v Vocab,
    pub mode: QuestionMode,
    pub answers: Vec<Answer>,
}

impl<R: BufRead, W: Write> Human<'_, R, W> {
    fn ask(&mut self, prompt: &str) -> Result<String, Error> {
        let io_err = |e: io::Error| Error::Responder(e.to_string());
        write!(self.output, "{prompt} ").map_err(io_err)?;
        self.output.flush().map_err(io_err)?;
        let mut line = String::new();
        if self.input.read_line(&mut line).map_err(io_err)? == 0 {
            return Err(Error::Responder("input closed".into()));
        }
        Ok(line.trim().to_lowercase())
    }

    fn yes_no(&mut self, prompt: &str) -> Result<bool, Error> {
        loop {
            match self.ask(prompt)?.as_str() {
                "y" | "yes" | "a" | "accept" => return Ok(true),
                "n" | "no" | "r" | "reject" => return Ok(false),
                _ => {
                    let _ = writeln!(self.output, "please answer y or n");
                }
            }
        }
    }

    fn pick(&mut self, attrs: &[u32]) -> Result<Vec<u32>, Error> {
        loop {
            let line = self.ask("numbers separated by commas, or none:")?;
            if line.is_empty() || line == "none" {
                return Ok(Vec::new());
            }
            let parsed: Option<Vec<u32>> = line
                .split(',')
                .map(|s| s.trim().parse::<usize>().ok().filter(|&i| (1..=attrs.len()).contains(&i)).map(|i| attrs[i - 1]))
                .collect();
            match parsed {
                Some(mut v) => {
                    v.sort_unstable();
                    v.dedup();
                    return Ok(v);
                }
                None => {
                    let _ = writeln!(self.output, "invalid selection");
                }
            }
        }
    }
}

impl<R: BufRead, W: Write> Responder for Human<'_, R, W> {
    fn answer_question(&mut self, state: &SessionState, _: usize, attrs: &[u32]) -> kgcrs_core::Result<Vec<u32>> {
        let names: Vec<&str> = attrs.iter().map(|&p| self.vocab.attrs.name(p)).collect();
        let revealed = if self.mode == QuestionMode::Binary && attrs.len() == 1 {
            let yes = self.yes_no(&format!("[turn {}] do you want `{}`? (y/n)", state.turn, names[0]))?;
            if yes {
                attrs.to_vec()
            } else {
                Vec::new()
            }
        } else {
            let _ = writeln!(self.output, "[turn {}] which of these do you want?", state.turn);
            for (i, n) in names.iter().enumerate() {
                let _ = writeln!(self.output, "  {}) {n}", i + 1);
            }
            self.pick(attrs)?
        };
        self.answers.push(Answer::Revealed(revealed.iter().map(|&p| self.vocab.attrs.name(p).to_string()).collect()));
        Ok(revealed)
    }

    fn answer_recommendation(&mut self, state: &SessionState, items: &[u32]) -> kgcrs_core::Result<bool> {
        let _ = writeln!(self.output, "[turn {}] recommended:", state.turn);
        for v in items {
            let _ = writeln!(self.output, "  - {}", self.vocab.items.name(*v));
        }
        let ok = self.yes_no("accept? (y/n)")?;
        self.answers.push(Answer::Accepted(ok));
        Ok(ok)
    }
}

/// Feeds saved answers back in order.
pub struct Replayer<'v> {
    pub answers: VecDeque<Answer>,
    pub vocab: &'v Vocab,
    pub given: Vec<Answer>,
}

impl Responder for Replayer<'_> {
    fn answer_question(&mut self, _: &SessionState, _: usize, attrs: &[u32]) -> kgcrs_core::Result<Vec<u32>> {
        match self.answers.pop_front() {
            Some(Answer::Revealed(names)) => {
                let mut out = Vec::new();
                for n in &names {
                    let p = self.vocab.attrs.get(n).filter(|p| attrs.contains(p)).ok_or_else(|| Error::Responder(format!("replayed attribute `{n}` was not asked")))?;
                    out.push(p);
                }
                out.sort_unstable();
                self.given.push(Answer::Revealed(names));
                Ok(out)
            }
            other => Err(Error::Responder(format!("replay expected a question answer, found {other:?}"))),
        }
    }

    fn answer_recommendation(&mut self, _: &SessionState, _: &[u32]) -> kgcrs_core::Result<bool> {
        match self.answers.pop_front() {
            Some(Answer::Accepted(b)) => {
                self.given.push(Answer::Accepted(b));
                Ok(b)
            }
            other => Err(Error::Responder(format!("replay expected a recommendation answer, found {other:?}"))),
        }
    }
}

pub fn run(cfg: &RunConfig, a: &InteractArgs) -> Result<()> {
    let data = load_data(&a.data.data, cfg)?;
    let emb = load_embedding(&a.embedding.embedding, cfg, &data)?;
    let policy = match a.agent {
        AgentKind::Policy => Some(load_policy(&a.policy, cfg, &data, &emb)?),
        AgentKind::GroundTruth => bail!("the ground-truth agent needs a known target and cannot talk to a person"),
        _ => None,
    };
    let mut agent = match (&policy, a.agent) {
        (Some(p), _) => Agent::Learned { params: &p.params, greedy: cfg.policy.greedy_eval },
        (None, AgentKind::MaxEntropy) => Agent::MaxEntropy,
        _ => Agent::AbsGreedy,
    };
    let vocab = &data.bundle.vocab;
    let replay: Option<Replay> = match &a.replay {
        Some(p) => Some(serde_json::from_slice(&fs::read(p)?)?),
        None => None,
    };
    let stdin = io::stdin();
    let mut stdout = io::stdout();
    let (user_name, attr_name, seed) = match &replay {
        Some(r) => (r.user.clone(), r.start_attr.clone(), r.seed),
        None => {
            let mut prompt = |what: &str, given: &Option<String>| -> Result<String> {
                if let Some(g) = given {
                    return Ok(g.clone());
                }
                write!(stdout, "{what}: ")?;
                stdout.flush()?;
                let mut line = String::new();
                stdin.lock().read_line(&mut line)?;
                Ok(line.trim().to_string())
            };
            (prompt("user id", &a.user)?, prompt("opening attribute", &a.start_attr)?, cfg.seed)
        }
    };
    let raw_user = vocab.users.get(&user_name).ok_or_else(|| anyhow!("unknown user `{user_name}`"))?;
    let user = data.bundle.dataset.user_ids.iter().position(|&u| u == raw_user).ok_or_else(|| anyhow!("user `{user_name}` was filtered out"))? as u32;
    let start = vocab.attrs.get(&attr_name).ok_or_else(|| anyhow!("unknown attribute `{attr_name}`"))?;

    let env = env(cfg, &data, &emb);
    let mut state = SessionState::opened_with(&data.graph, &data.scheme, user, None, Vec::new(), start);
    let mut rng = rng_from_seed(seed);
    let (record, answers) = match replay {
        Some(r) => {
            let mut resp = Replayer { answers: r.answers.into(), vocab, given: Vec::new() };
            let (_, rec) = run_session(env, &mut agent, &mut state, &mut resp, &mut rng, RunOptions::default());
            (rec, resp.given)
        }
        None => {
            let mut human = Human { input: stdin.lock(), output: io::stdout(), vocab, mode: cfg.session.question_mode, answers: Vec::new() };
            let (_, rec) = run_session(env, &mut agent, &mut state, &mut human, &mut rng, RunOptions::default());
            (rec, human.answers)
        }
    };
    print_outcome(&record)?;
    if let Some(p) = &a.save {
        let r = Replay { user: user_name, start_attr: attr_name, seed, answers };
        fs::write(p, serde_json::to_vec_pretty(&r)?)?;
    }
    Ok(())
}

fn print_outcome(r: &SessionRecord) -> Result<()> {
    match r.outcome {
        Outcome::Success => println!("Success@{}", r.n_turns),
        _ => println!("Quit after {} turns", r.n_turns),
    }
    if let Some(e) = &r.error {
        println!("error: {e}");
    }
    println!("{}", serde_json::to_string_pretty(r)?);
    Ok(())
}
