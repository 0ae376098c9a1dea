//! Session transcripts (JSON lines) and metric reports (aligned table plus
//! JSON).

use std::io::Write;

use anyhow::Result;
use kgcrs_core::metrics::{OfflineMetrics, OnlineMetrics};
use kgcrs_core::session::SessionRecord;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::Header;

/// Writes one line per turn and a closing line per session.
pub struct Transcript<W: Write> {
    out: W,
}

impl<W: Write> Transcript<W> {
    pub fn new(mut out: W, header: &Header, command: &str) -> Result<Self> {
        writeln!(out, "{}", json!({"kind": "header", "command": command, "config_hash": header.config_hash}))?;
        Ok(Transcript { out })
    }

    pub fn session(&mut self, r: &SessionRecord) -> Result<()> {
        for t in &r.turns {
            let line = json!({
                "kind": "turn",
                "session_id": r.session_id,
                "turn": t.turn,
                "action": t.action,
                "action_kind": t.action_kind,
                "asked": t.asked,
                "revealed": t.revealed,
                "recommended": t.recommended,
                "response": t.response,
                "candidates": t.candidates,
                "reward": t.reward,
            });
            writeln!(self.out, "{line}")?;
        }
        let end = json!({
            "kind": "end",
            "session_id": r.session_id,
            "user": r.user,
            "target": r.target,
            "start_attr": r.start_attr,
            "outcome": r.outcome,
            "turns": r.n_turns,
            "positive_actions": r.positive_actions,
            "error": r.error,
            "warning": r.warning,
        });
        writeln!(self.out, "{end}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn online_rows(m: &OnlineMetrics) -> Vec<(String, String)> {
    let mut rows = vec![("sessions".to_string(), m.n_sessions.to_string())];
    rows.extend(m.sr_at.iter().map(|(t, v)| (format!("SR@{t}"), format!("{v:.4}"))));
    rows.push(("AT".into(), format!("{:.4}", m.at)));
    rows.push(("APA".into(), format!("{:.4}", m.apa)));
    rows.push(("positive actions / session".into(), format!("{:.4}", m.mean_positive_actions)));
    if m.errors > 0 {
        rows.push(("errored sessions".into(), m.errors.to_string()));
    }
    rows
}

pub fn offline_rows(m: &OfflineMetrics, auc: f64) -> Vec<(String, String)> {
    let mut rows = vec![("users".to_string(), m.n_users.to_string())];
    for k in m.precision.keys() {
        rows.push((format!("Precision@{k}"), format!("{:.4}", m.precision[k])));
        rows.push((format!("Recall@{k}"), format!("{:.4}", m.recall[k])));
        rows.push((format!("NDCG@{k}"), format!("{:.4}", m.ndcg[k])));
    }
    rows.push(("AUC".into(), format!("{auc:.4}")));
    rows
}

/// Two left-aligned columns.
pub fn table(title: &str, rows: &[(String, String)]) -> String {
    let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6);
    let mut s = format!("{title}\n");
    s.push_str(&format!("{:-<1$}\n", "", w + 12));
    for (k, v) in rows {
        s.push_str(&format!("{k:<w$}  {v}\n"));
    }
    s
}

/// JSON report with provenance.
pub fn report_json<T: Serialize>(header: &Header, command: &str, body: &T) -> Result<Value> {
    Ok(json!({
        "command": command,
        "config_hash": header.config_hash,
        "config": header.config,
        "metrics": serde_json::to_value(body)?,
    }))
}
