//! Online conversation metrics over session logs and offline ranking
//! metrics over held-out interactions.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use libm::log2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::recommend::{top_k, Scorer};
use crate::session::{Outcome, SessionRecord};
use crate::{Error, Result, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineMetrics {
    pub n_sessions: usize,
    /// SR@T for each requested turn limit.
    pub sr_at: BTreeMap<usize, f64>,
    /// Mean turns to end; quits count as the turn limit.
    pub at: f64,
    /// Mean per-session ratio of positive actions to turns.
    pub apa: f64,
    /// Mean count of positive actions per session.
    pub mean_positive_actions: f64,
    /// Sessions that ended on an internal error.
    pub errors: usize,
}

fn turns_to_end(r: &SessionRecord, max_turns: usize) -> usize {
    if r.outcome == Outcome::Success {
        r.n_turns
    } else {
        max_turns
    }
}

/// SR@T for each `levels` entry, AT and APA. Sessions that quit count as
/// `max_turns` turns.
pub fn online_metrics(records: &[SessionRecord], levels: &[usize], max_turns: usize) -> Result<OnlineMetrics> {
    if records.is_empty() {
        return Err(Error::EmptyLog);
    }
    let n = records.len() as f64;
    let sr_at = levels
        .iter()
        .map(|&t| {
            let hits = records.iter().filter(|r| r.outcome == Outcome::Success && r.n_turns <= t).count();
            (t, hits as f64 / n)
        })
        .collect();
    let at = records.iter().map(|r| turns_to_end(r, max_turns) as f64).sum::<f64>() / n;
    let apa = records
        .iter()
        .map(|r| {
            let turns = turns_to_end(r, max_turns);
            if turns == 0 {
                0.0
            } else {
                r.positive_actions as f64 / turns as f64
            }
        })
        .sum::<f64>()
        / n;
    let mean_positive_actions = records.iter().map(|r| r.positive_actions as f64).sum::<f64>() / n;
    let errors = records.iter().filter(|r| r.error.is_some()).count();
    Ok(OnlineMetrics { n_sessions: records.len(), sr_at, at, apa, mean_positive_actions, errors })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingAtK {
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
}

/// Top-K metrics of one ranked list against its relevant set.
pub fn ranking_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> RankingAtK {
    if k == 0 || relevant.is_empty() {
        return RankingAtK { precision: 0.0, recall: 0.0, ndcg: 0.0 };
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (i, v) in ranked.iter().take(k).enumerate() {
        if relevant.contains(v) {
            hits += 1;
            dcg += 1.0 / log2(i as f64 + 2.0);
        }
    }
    let idcg: f64 = (0..k.min(relevant.len())).map(|i| 1.0 / log2(i as f64 + 2.0)).sum();
    RankingAtK {
        precision: hits as f64 / k as f64,
        recall: hits as f64 / relevant.len() as f64,
        ndcg: dcg / idcg,
    }
}

/// A user with held-out interactions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldOutUser {
    pub user: u32,
    /// Held-out positives.
    pub positives: Vec<u32>,
    /// Training positives, excluded from ranking. Sorted.
    pub train: Vec<u32>,
    /// Every known interaction, never sampled as a negative. Sorted.
    pub interacted: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineMetrics {
    pub n_users: usize,
    pub precision: BTreeMap<usize, f64>,
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
}

/// Precision / Recall / NDCG at each K, averaged over users. Each user ranks
/// all items except their training positives, with no known attributes.
pub fn offline_ranking_metrics(scorer: &Scorer<'_>, users: &[HeldOutUser], ks: &[usize]) -> Result<OfflineMetrics> {
    let users: Vec<&HeldOutUser> = users.iter().filter(|u| !u.positives.is_empty()).collect();
    if users.is_empty() {
        return Err(Error::NoTestData);
    }
    let n_items = scorer.graph.n_items() as u32;
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let mut out = OfflineMetrics { n_users: users.len(), precision: BTreeMap::new(), recall: BTreeMap::new(), ndcg: BTreeMap::new() };
    let mut sums: Vec<RankingAtK> = ks.iter().map(|_| RankingAtK { precision: 0.0, recall: 0.0, ndcg: 0.0 }).collect();
    for u in &users {
        let cands: Vec<u32> = (0..n_items).filter(|v| u.train.binary_search(v).is_err()).collect();
        let ranked: Vec<u32> = top_k(scorer.score_all(u.user, &cands, &[])?, kmax).into_iter().map(|s| s.item).collect();
        for (s, &k) in sums.iter_mut().zip(ks) {
            let m = ranking_at_k(&ranked, &u.positives, k);
            s.precision += m.precision;
            s.recall += m.recall;
            s.ndcg += m.ndcg;
        }
    }
    let n = users.len() as f64;
    for (s, &k) in sums.iter().zip(ks) {
        out.precision.insert(k, s.precision / n);
        out.recall.insert(k, s.recall / n);
        out.ndcg.insert(k, s.ndcg / n);
    }
    Ok(out)
}

/// Fraction of `(positive, negative)` score pairs ordered correctly, ties
/// counting one half.
pub fn pairwise_auc(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::NoTestData);
    }
    let s: f64 = pairs
        .iter()
        .map(|&(p, n)| {
            if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    Ok(s / pairs.len() as f64)
}

/// AUC with `neg_per_pos` negatives per held-out positive, drawn uniformly
/// from the items the user never interacted with.
pub fn auc(scorer: &Scorer<'_>, users: &[HeldOutUser], neg_per_pos: usize, rng: &mut Rng) -> Result<f64> {
    let n_items = scorer.graph.n_items() as u32;
    let mut pairs = Vec::new();
    for u in users {
        if u.positives.is_empty() {
            continue;
        }
        let pool: Vec<u32> = (0..n_items).filter(|v| u.interacted.binary_search(v).is_err()).collect();
        if pool.is_empty() {
            continue;
        }
        for &p in &u.positives {
            let yp = scorer.score_item(u.user, p, &[])?;
            for _ in 0..neg_per_pos {
                let &v = pool.choose(rng).unwrap();
                pairs.push((yp, scorer.score_item(u.user, v, &[])?));
            }
        }
    }
    pairwise_auc(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{ActionKind, Response, TurnRecord};
    use alloc::vec;
    use proptest::prelude::*;

    fn rec(outcome: Outcome, n_turns: usize, positive: usize) -> SessionRecord {
        let turns = (0..n_turns)
            .map(|i| TurnRecord {
                turn: i + 1,
                action: 0,
                action_kind: ActionKind::Ask,
                asked: vec![],
                revealed: vec![],
                recommended: vec![],
                scores: vec![],
                response: if i < positive { Response::Positive } else { Response::Negative },
                candidates: 1,
                reward: 0.0,
            })
            .collect();
        SessionRecord {
            session_id: 0,
            user: 0,
            target: Some(0),
            start_attr: Some(0),
            turns,
            outcome,
            n_turns,
            positive_actions: positive,
            error: None,
            warning: None,
        }
    }

    #[test]
    fn all_succeed_at_turn_one() {
        let recs = vec![rec(Outcome::Success, 1, 1); 4];
        let m = online_metrics(&recs, &[15], 15).unwrap();
        assert_eq!(m.sr_at[&15], 1.0);
        assert_eq!(m.at, 1.0);
        assert_eq!(m.apa, 1.0);
    }

    #[test]
    fn success_and_quit_average() {
        let recs = vec![rec(Outcome::Success, 3, 1), rec(Outcome::Quit, 15, 0)];
        let m = online_metrics(&recs, &[15], 15).unwrap();
        assert_eq!(m.sr_at[&15], 0.5);
        assert_eq!(m.at, 9.0);
    }

    #[test]
    fn positive_action_ratio() {
        // positive ask, irrelevant ask, accepted recommendation
        let mut r = rec(Outcome::Success, 3, 1);
        r.positive_actions = 2;
        let m = online_metrics(&[r], &[15], 15).unwrap();
        assert!((m.apa - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.mean_positive_actions, 2.0);
    }

    #[test]
    fn empty_log() {
        assert_eq!(online_metrics(&[], &[15], 15), Err(Error::EmptyLog));
    }

    #[test]
    fn ranking_examples() {
        let m = ranking_at_k(&[7, 1, 2, 3, 4, 5, 6, 8, 9, 10], &[7], 10);
        assert_eq!((m.precision, m.recall, m.ndcg), (0.1, 1.0, 1.0));
        let ranked: Vec<u32> = (0..20).collect();
        let m = ranking_at_k(&ranked, &[10], 10);
        assert_eq!((m.precision, m.recall, m.ndcg), (0.0, 0.0, 0.0));
        // positives at ranks 2 and 5
        let m = ranking_at_k(&ranked, &[1, 4], 10);
        let want = (1.0 / 3f64.log2() + 1.0 / 6f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert!((m.ndcg - want).abs() < 1e-12);
        assert!((m.ndcg - 0.6241).abs() < 1e-4);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(pairwise_auc(&[(2.0, 1.0), (5.0, -1.0)]).unwrap(), 1.0);
        assert_eq!(pairwise_auc(&[(1.0, 1.0); 7]).unwrap(), 0.5);
        assert_eq!(pairwise_auc(&[]), Err(Error::NoTestData));
    }

    fn arb_record() -> impl Strategy<Value = SessionRecord> {
        (1usize..=15, any::<bool>()).prop_flat_map(|(t, ok)| {
            (0..=t).prop_map(move |p| rec(if ok { Outcome::Success } else { Outcome::Quit }, if ok { t } else { 15 }, p.min(if ok { t } else { 15 })))
        })
    }

    proptest! {
        #[test]
        fn online_metric_properties(mut recs in proptest::collection::vec(arb_record(), 1..30)) {
            let levels: Vec<usize> = (1..=15).collect();
            let m = online_metrics(&recs, &levels, 15).unwrap();
            let mut prev = 0.0;
            for t in 1..=15 {
                let brute = recs.iter().filter(|r| r.outcome == Outcome::Success && r.n_turns <= t).count() as f64 / recs.len() as f64;
                prop_assert_eq!(m.sr_at[&t], brute);
                prop_assert!(m.sr_at[&t] >= prev);
                prev = m.sr_at[&t];
            }
            prop_assert!((1.0..=15.0).contains(&m.at));
            prop_assert!((0.0..=1.0).contains(&m.apa));
            recs.reverse();
            let r = online_metrics(&recs, &levels, 15).unwrap();
            prop_assert!((r.at - m.at).abs() < 1e-12 && (r.apa - m.apa).abs() < 1e-12);
        }

        #[test]
        fn ranking_bounds_and_monotone_invariance(scores in proptest::collection::vec(-5.0f64..5.0, 20), rel in proptest::collection::btree_set(0u32..20, 1..6), k in 1usize..15) {
            let rel: Vec<u32> = rel.into_iter().collect();
            let order = |s: &[f64]| {
                let mut idx: Vec<u32> = (0..20).collect();
                idx.sort_by(|&a, &b| s[b as usize].partial_cmp(&s[a as usize]).unwrap().then(a.cmp(&b)));
                idx
            };
            let m = ranking_at_k(&order(&scores), &rel, k);
            prop_assert!(m.recall <= 1.0);
            prop_assert!(m.precision * k as f64 <= k.min(rel.len()) as f64 + 1e-9);
            let squashed: Vec<f64> = scores.iter().map(|x| 3.0 * x.exp() + 1.0).collect();
            let m2 = ranking_at_k(&order(&squashed), &rel, k);
            prop_assert_eq!(m, m2);
        }
    }
}
