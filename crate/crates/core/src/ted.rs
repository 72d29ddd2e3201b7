//! Temporal exponential decay rule baseline.
//!
//! For an object query `(s, r, ?, t)` the reference tuples `(o', t')` with
//! `t' != t` come from training facts in three tiers: (1) `(s, r, o')`,
//! (2) `(s, *, o')`, (3) `(*, r, o')`. A tuple in a higher tier is removed
//! from the lower ones. Subject queries mirror this. Entities are scored per
//! tier by `sum exp(-sigma |t - t'|)` over their tuples.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::data::{Quadruple, Split, TkgDataset};
use crate::error::{ModelError, Result};
use crate::eval::{Query, QueryDirection, StepScorer};

/// Training occurrences grouped for tier lookups.
#[derive(Clone, Debug, Default)]
pub struct TedIndex {
    entities: usize,
    // object side: (s, r) / s / r -> (o, t)
    by_sr: HashMap<(usize, usize), Vec<(usize, usize)>>,
    by_s: HashMap<usize, Vec<(usize, usize)>>,
    by_r_obj: HashMap<usize, Vec<(usize, usize)>>,
    // subject side: (r, o) / o / r -> (s, t)
    by_ro: HashMap<(usize, usize), Vec<(usize, usize)>>,
    by_o: HashMap<usize, Vec<(usize, usize)>>,
    by_r_subj: HashMap<usize, Vec<(usize, usize)>>,
}

impl TedIndex {
    pub fn new(ds: &TkgDataset) -> Self {
        let mut ix = Self { entities: ds.entity_count, ..Default::default() };
        for q in ds.quadruples(Split::Train) {
            let (s, r, o, t) = (q.subject, q.relation, q.object, q.time);
            ix.by_sr.entry((s, r)).or_default().push((o, t));
            ix.by_s.entry(s).or_default().push((o, t));
            ix.by_r_obj.entry(r).or_default().push((o, t));
            ix.by_ro.entry((r, o)).or_default().push((s, t));
            ix.by_o.entry(o).or_default().push((s, t));
            ix.by_r_subj.entry(r).or_default().push((s, t));
        }
        ix
    }

    pub fn entity_count(&self) -> usize {
        self.entities
    }
}

/// Deduplicated `(entity, time)` tuples per tier, highest priority first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReferenceSets {
    pub tiers: [Vec<(usize, usize)>; 3],
}

pub fn build_reference_sets(index: &TedIndex, q: &Quadruple, direction: QueryDirection) -> ReferenceSets {
    let empty = Vec::new();
    let sources: [&Vec<(usize, usize)>; 3] = match direction {
        QueryDirection::Object => [
            index.by_sr.get(&(q.subject, q.relation)).unwrap_or(&empty),
            index.by_s.get(&q.subject).unwrap_or(&empty),
            index.by_r_obj.get(&q.relation).unwrap_or(&empty),
        ],
        QueryDirection::Subject => [
            index.by_ro.get(&(q.relation, q.object)).unwrap_or(&empty),
            index.by_o.get(&q.object).unwrap_or(&empty),
            index.by_r_subj.get(&q.relation).unwrap_or(&empty),
        ],
    };
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut tiers: [Vec<(usize, usize)>; 3] = Default::default();
    for (tier, src) in tiers.iter_mut().zip(sources) {
        for &tuple in src {
            if tuple.1 != q.time && seen.insert(tuple) {
                tier.push(tuple);
            }
        }
        tier.sort_unstable();
    }
    ReferenceSets { tiers }
}

/// `sum exp(-sigma |t - t'|)` over the occurrence times of one entity.
pub fn ted_score(times: &[usize], sigma: f64, t: usize) -> f64 {
    times.iter().map(|&tp| (-sigma * tp.abs_diff(t) as f64).exp()).sum()
}

/// How tiers are combined into one ordering.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum TierPolicy {
    /// Tier first, decay score second.
    #[default]
    Lexicographic,
    /// Single score `sum_k w_k * score_k` over the tiers.
    BlendSum([f64; 3]),
}

impl TierPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lexicographic" | "lex" => Some(Self::Lexicographic),
            "sum" | "blend=sum" => Some(Self::BlendSum([100.0, 10.0, 1.0])),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TedConfig {
    pub sigma: f64,
    pub policy: TierPolicy,
}

impl TedConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(ModelError::Config(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma, policy: TierPolicy::Lexicographic })
    }
}

/// Per-tier decay scores of every referenced entity.
pub fn tier_scores(sets: &ReferenceSets, sigma: f64, t: usize) -> [BTreeMap<usize, f64>; 3] {
    let mut out: [BTreeMap<usize, f64>; 3] = Default::default();
    for (scores, tier) in out.iter_mut().zip(&sets.tiers) {
        let mut times: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(e, tp) in tier {
            times.entry(e).or_default().push(tp);
        }
        for (e, ts) in times {
            scores.insert(e, ted_score(&ts, sigma, t));
        }
    }
    out
}

/// All entities, best first. Referenced entities come first in policy
/// order with ties broken by index; unreferenced ones follow by index.
pub fn ted_rank(index: &TedIndex, q: &Quadruple, direction: QueryDirection, config: &TedConfig) -> Vec<usize> {
    let sets = build_reference_sets(index, q, direction);
    let scores = tier_scores(&sets, config.sigma, q.time);
    let mut keyed: Vec<(usize, usize, f64)> = Vec::new();
    let mut placed = vec![false; index.entities];
    match config.policy {
        TierPolicy::Lexicographic => {
            for (tier, map) in scores.iter().enumerate() {
                for (&e, &s) in map {
                    if !placed[e] {
                        placed[e] = true;
                        keyed.push((e, tier, s));
                    }
                }
            }
        }
        TierPolicy::BlendSum(w) => {
            let mut total: BTreeMap<usize, f64> = BTreeMap::new();
            for (tier, map) in scores.iter().enumerate() {
                for (&e, &s) in map {
                    *total.entry(e).or_default() += w[tier] * s;
                }
            }
            for (e, s) in total {
                placed[e] = true;
                keyed.push((e, 0, s));
            }
        }
    }
    keyed.sort_by(|a, b| a.1.cmp(&b.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0)));
    let mut order: Vec<usize> = keyed.into_iter().map(|k| k.0).collect();
    order.extend((0..index.entities).filter(|&e| !placed[e]));
    order
}

/// Scores entities by negated position in the TED ranking.
pub struct TedScorer<'a> {
    pub index: &'a TedIndex,
    pub config: TedConfig,
}

impl StepScorer for TedScorer<'_> {
    fn entity_count(&self) -> usize {
        self.index.entities
    }

    fn score_step(&self, _t: usize, queries: &[Query]) -> Result<Vec<Vec<f64>>> {
        Ok(queries
            .iter()
            .map(|q| {
                let order = ted_rank(self.index, &q.quad, q.direction, &self.config);
                let mut s = vec![0.0; self.index.entities];
                for (pos, e) in order.into_iter().enumerate() {
                    s[e] = -(pos as f64);
                }
                s
            })
            .collect())
    }
}
