//! Tab-separated input files and the string-id vocabulary.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{Context, Result};
use kgcrs_core::dataset::{Interaction, RawData};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("{file}:{line}: {msg}")]
pub struct ParseError {
    pub file: String,
    pub line: usize,
    pub msg: String,
}

/// Dense ids for string keys, in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interner {
    pub names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(s.to_string());
        self.index.insert(s.to_string(), i);
        i
    }

    pub fn get(&self, s: &str) -> Option<u32> {
        if self.index.len() != self.names.len() {
            return self.names.iter().position(|n| n == s).map(|i| i as u32);
        }
        self.index.get(s).copied()
    }

    pub fn name(&self, i: u32) -> &str {
        &self.names[i as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Rebuilds the lookup table after deserialisation.
    pub fn reindex(&mut self) {
        self.index = self.names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub users: Interner,
    pub items: Interner,
    pub attrs: Interner,
    pub facets: Interner,
}

impl Vocab {
    pub fn reindex(&mut self) {
        for i in [&mut self.users, &mut self.items, &mut self.attrs, &mut self.facets] {
            i.reindex();
        }
    }
}

/// Non-empty, non-comment lines split on tabs, with 1-based line numbers.
fn rows<'a>(text: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.split('\t').map(str::trim).collect()))
}

/// Parses the three files into dense raw data. Facets are optional; when
/// present every attribute needs one.
pub fn parse_files(interactions: &str, item_attrs: &str, facets: Option<&str>, names: [&str; 3]) -> Result<(RawData, Vocab), ParseError> {
    let mut vocab = Vocab::default();
    let err = |file: &str, line: usize, msg: String| ParseError { file: file.to_string(), line, msg };
    let mut raw = RawData::default();
    for (line, f) in rows(interactions) {
        if !(2..=3).contains(&f.len()) || f[..2].iter().any(|s| s.is_empty()) {
            return Err(err(names[0], line, format!("expected user_id<TAB>item_id[<TAB>timestamp], got {} fields", f.len())));
        }
        let timestamp = match f.get(2) {
            Some(t) => Some(t.parse::<i64>().map_err(|e| err(names[0], line, format!("bad timestamp `{t}`: {e}")))?),
            None => None,
        };
        let user = vocab.users.intern(f[0]);
        let item = vocab.items.intern(f[1]);
        raw.interactions.push(Interaction { user, item, timestamp });
    }
    for (line, f) in rows(item_attrs) {
        if f.len() != 2 || f.iter().any(|s| s.is_empty()) {
            return Err(err(names[1], line, format!("expected item_id<TAB>attr_id, got {} fields", f.len())));
        }
        let item = vocab.items.intern(f[0]);
        let attr = vocab.attrs.intern(f[1]);
        raw.item_attrs.push((item, attr));
    }
    if let Some(text) = facets {
        let mut facet_of: Vec<Option<u32>> = Vec::new();
        for (line, f) in rows(text) {
            if f.len() != 2 || f.iter().any(|s| s.is_empty()) {
                return Err(err(names[2], line, format!("expected attr_id<TAB>facet_id, got {} fields", f.len())));
            }
            let attr = vocab.attrs.intern(f[0]) as usize;
            let facet = vocab.facets.intern(f[1]);
            if facet_of.len() <= attr {
                facet_of.resize(attr + 1, None);
            }
            if facet_of[attr].is_some_and(|old| old != facet) {
                return Err(err(names[2], line, format!("attribute `{}` assigned to two facets", f[0])));
            }
            facet_of[attr] = Some(facet);
        }
        facet_of.resize(vocab.attrs.len(), None);
        let mut out = Vec::with_capacity(facet_of.len());
        for (a, f) in facet_of.into_iter().enumerate() {
            match f {
                Some(f) => out.push(f),
                None => return Err(err(names[2], 0, format!("attribute `{}` has no facet", vocab.attrs.name(a as u32)))),
            }
        }
        raw.facets = Some(out);
    }
    raw.n_users = vocab.users.len() as u32;
    raw.n_items = vocab.items.len() as u32;
    raw.n_attrs = vocab.attrs.len() as u32;
    Ok((raw, vocab))
}

pub fn read_files(interactions: &Path, item_attrs: &Path, facets: Option<&Path>) -> Result<(RawData, Vocab)> {
    let read = |p: &Path| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let a = read(interactions)?;
    let b = read(item_attrs)?;
    let c = facets.map(read).transpose()?;
    let names = [interactions, item_attrs, facets.unwrap_or(Path::new("-"))].map(|p| p.display().to_string());
    Ok(parse_files(&a, &b, c.as_deref(), [&names[0], &names[1], &names[2]])?)
}

/// The inverse of [`parse_files`], used for synthetic worlds.
pub fn write_files(raw: &RawData, vocab: &Vocab, dir: &Path) -> Result<()> {
    let mut inter = String::new();
    for i in &raw.interactions {
        inter.push_str(&format!("{}\t{}", vocab.users.name(i.user), vocab.items.name(i.item)));
        if let Some(t) = i.timestamp {
            inter.push_str(&format!("\t{t}"));
        }
        inter.push('\n');
    }
    let mut attrs = String::new();
    for &(v, p) in &raw.item_attrs {
        attrs.push_str(&format!("{}\t{}\n", vocab.items.name(v), vocab.attrs.name(p)));
    }
    std::fs::write(dir.join("interactions.tsv"), inter)?;
    std::fs::write(dir.join("item_attrs.tsv"), attrs)?;
    if let Some(f) = &raw.facets {
        let text: String = f.iter().enumerate().map(|(p, &fa)| format!("{}\t{}\n", vocab.attrs.name(p as u32), vocab.facets.name(fa))).collect();
        std::fs::write(dir.join("facets.tsv"), text)?;
    }
    Ok(())
}

/// Vocabulary naming dense ids `u0`, `i0`, `a0`, `f0`.
pub fn numbered_vocab(raw: &RawData) -> Vocab {
    let mut v = Vocab::default();
    for (n, prefix, interner) in [(raw.n_users, "u", &mut v.users), (raw.n_items, "i", &mut v.items), (raw.n_attrs, "a", &mut v.attrs)] {
        for i in 0..n {
            interner.intern(&format!("{prefix}{i}"));
        }
    }
    if let Some(f) = &raw.facets {
        let n = f.iter().max().map_or(0, |m| m + 1);
        for i in 0..n {
            v.facets.intern(&format!("f{i}"));
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: [&str; 3] = ["inter", "attrs", "facets"];

    #[test]
    fn parses_ids_timestamps_and_facets() {
        let (raw, vocab) = parse_files("alice\tx\t5\nbob\ty\t3\n# note\n\nalice\ty\t9\n", "x\tred\ny\tblue\nx\tbig\n", Some("red\tcolour\nblue\tcolour\nbig\tsize\n"), N).unwrap();
        assert_eq!((raw.n_users, raw.n_items, raw.n_attrs), (2, 2, 3));
        assert_eq!(raw.interactions[2], Interaction { user: 0, item: 1, timestamp: Some(9) });
        assert_eq!(raw.facets, Some(vec![0, 0, 1]));
        assert_eq!(vocab.attrs.name(2), "big");
    }

    #[test]
    fn reports_line_numbers() {
        let e = parse_files("a\tb\nc\n", "", None, N).unwrap_err();
        assert_eq!((e.file.as_str(), e.line), ("inter", 2));
        let e = parse_files("a\tb\tnot-a-number\n", "", None, N).unwrap_err();
        assert!(e.msg.contains("timestamp"));
        let e = parse_files("a\tb\n", "b\tp\nb\tq\n", Some("p\tf\n"), N).unwrap_err();
        assert!(e.msg.contains("no facet"));
    }

    #[test]
    fn write_then_parse_round_trips() {
        let (raw, vocab) = parse_files("u1\ti1\nu2\ti2\t4\n", "i1\tp\ni2\tq\n", Some("p\tf\nq\tg\n"), N).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_files(&raw, &vocab, dir.path()).unwrap();
        let (raw2, vocab2) = read_files(&dir.path().join("interactions.tsv"), &dir.path().join("item_attrs.tsv"), Some(&dir.path().join("facets.tsv"))).unwrap();
        assert_eq!(raw, raw2);
        assert_eq!(vocab.items.names, vocab2.items.names);
    }

    #[test]
    fn interner_lookup_survives_serde() {
        let mut v = Vocab::default();
        v.items.intern("a");
        v.items.intern("b");
        let mut back: Vocab = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back.items.get("b"), Some(1));
        back.reindex();
        assert_eq!(back.items.get("b"), Some(1));
        assert_eq!(back.items.get("c"), None);
    }
}
