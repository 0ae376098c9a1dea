//! Loading the run configuration from TOML with `section.key=value`
//! overrides, and hashing it.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use kgcrs_core::config::RunConfig;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

/// Reads `path` (if any), applies `overrides` in order and validates.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            text.parse::<Table>().with_context(|| format!("parsing config {}", p.display()))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: RunConfig = Value::Table(table).try_into().context("invalid configuration")?;
    cfg.validate()?;
    Ok(cfg)
}

/// `embed.dim=16`, `session.bins=[5,10]`, `ablation.static_graph=true`.
/// Values are parsed as TOML and fall back to plain strings.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override `{spec}` is not of the form key=value");
    };
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().unwrap();
    let mut cur = table;
    for s in sections {
        let entry = cur.entry(s.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => bail!("override `{spec}`: `{s}` is not a section"),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// SHA-256 of the canonical JSON form.
pub fn config_hash(cfg: &RunConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serialises");
    hex::encode(Sha256::digest(json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_and_change_the_hash() {
        let base = load(None, &[]).unwrap();
        assert_eq!(base, RunConfig::default());
        let cfg = load(None, &["embed.dim=16".into(), "ablation.static_graph=true".into(), "session.bins=[5, 9]".into()]).unwrap();
        assert_eq!(cfg.embed.dim, 16);
        assert!(cfg.ablation.static_graph);
        assert_eq!(cfg.session.bins, vec![5, 9]);
        assert_ne!(config_hash(&cfg), config_hash(&base));
        assert_eq!(config_hash(&base), config_hash(&RunConfig::default()));
    }

    #[test]
    fn enum_values_parse_as_strings() {
        let cfg = load(None, &["reward.mode=fg".into(), "policy.optimizer=adam".into()]).unwrap();
        assert_eq!(cfg.reward.mode, kgcrs_core::config::RewardMode::Fg);
    }

    #[test]
    fn bad_keys_and_values_fail() {
        assert!(load(None, &["embed.nope=1".into()]).is_err());
        assert!(load(None, &["reward.gamma=0".into()]).is_err());
        assert!(load(None, &["embed".into()]).is_err());
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "seed = 7\n[embed]\ndim = 8\nsteps = 2\n").unwrap();
        let cfg = load(Some(&p), &["embed.dim=4".into()]).unwrap();
        assert_eq!((cfg.seed, cfg.embed.dim, cfg.embed.steps), (7, 4, 2));
    }
}
