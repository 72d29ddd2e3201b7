//! Filtered ranking, MRR / Hits@k and frequency-binned analysis.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde_json::json;

use crate::data::{Quadruple, Snapshot, TrueTripleIndex};
use crate::error::{ModelError, Result};
use crate::heterogeneity::{PatternKind, Tpf, TpfTable};
use crate::model::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryDirection {
    /// `(s, r, ?, t)`.
    Object,
    /// `(?, r, o, t)`.
    Subject,
}

impl QueryDirection {
    pub const BOTH: [QueryDirection; 2] = [Self::Object, Self::Subject];

    pub fn name(self) -> &'static str {
        match self {
            Self::Object => "object",
            Self::Subject => "subject",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "object" => Some(Self::Object),
            "subject" => Some(Self::Subject),
            _ => None,
        }
    }

    pub fn answer(self, q: &Quadruple) -> usize {
        match self {
            Self::Object => q.object,
            Self::Subject => q.subject,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Query {
    pub quad: Quadruple,
    pub direction: QueryDirection,
}

/// Something that scores every entity for queries at one time step.
pub trait StepScorer: Sync {
    fn entity_count(&self) -> usize;

    /// One score vector of length `entity_count` per query; higher is better.
    fn score_step(&self, t: usize, queries: &[Query]) -> Result<Vec<Vec<f64>>>;
}

/// Pessimistic filtered rank: one plus the number of unfiltered candidates
/// other than `answer` scoring at least as high as it. `filtered` must be
/// sorted; the answer itself is never removed.
pub fn rank_query(scores: &[f64], answer: usize, filtered: &[usize]) -> usize {
    let target = scores[answer];
    let mut rank = 1;
    for (c, &s) in scores.iter().enumerate() {
        if c == answer || filtered.binary_search(&c).is_ok() {
            continue;
        }
        if target.is_nan() || s >= target || s.is_nan() {
            rank += 1;
        }
    }
    rank
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    pub query: Query,
    pub rank: usize,
    pub tpf: Option<Tpf>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankingReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub results: Vec<QueryResult>,
}

impl RankingReport {
    pub fn from_results(results: Vec<QueryResult>) -> Self {
        let n = results.len() as f64;
        if results.is_empty() {
            return Self::default();
        }
        let hits = |k: usize| results.iter().filter(|r| r.rank <= k).count() as f64 / n;
        Self {
            mrr: results.iter().map(|r| 1.0 / r.rank as f64).sum::<f64>() / n,
            hits1: hits(1),
            hits3: hits(3),
            hits10: hits(10),
            results,
        }
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "metric,value")?;
        writeln!(out, "queries,{}", self.len())?;
        writeln!(out, "mrr,{}", self.mrr)?;
        writeln!(out, "hits1,{}", self.hits1)?;
        writeln!(out, "hits3,{}", self.hits3)?;
        writeln!(out, "hits10,{}", self.hits10)
    }

    /// One JSON object per query: direction, ids, rank and, when known, the
    /// seven frequencies.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.results {
            let q = r.query.quad;
            let mut rec = json!({
                "direction": r.query.direction.name(),
                "subject": q.subject,
                "relation": q.relation,
                "object": q.object,
                "time": q.time,
                "rank": r.rank,
            });
            if let Some(tpf) = &r.tpf {
                let map: serde_json::Map<String, serde_json::Value> =
                    PatternKind::ALL.iter().map(|k| (k.name().to_string(), json!(tpf.get(*k)))).collect();
                rec["tpf"] = serde_json::Value::Object(map);
            }
            writeln!(out, "{rec}")?;
        }
        Ok(())
    }
}

/// Parses per-query records written by [`RankingReport::write_jsonl`].
pub fn read_jsonl(text: &str) -> Result<Vec<QueryResult>> {
    let bad = |line: usize, what: &str| ModelError::Config(format!("results line {line}: {what}"));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(i + 1, &e.to_string()))?;
        let field = |k: &str| v.get(k).and_then(|x| x.as_u64()).ok_or_else(|| bad(i + 1, &format!("missing `{k}`")));
        let direction =
            v.get("direction").and_then(|d| d.as_str()).and_then(QueryDirection::parse).ok_or_else(|| bad(i + 1, "missing `direction`"))?;
        let quad =
            Quadruple::new(field("subject")? as usize, field("relation")? as usize, field("object")? as usize, field("time")? as usize);
        let rank = field("rank")? as usize;
        if rank == 0 {
            return Err(bad(i + 1, "rank must be at least 1"));
        }
        let tpf = match v.get("tpf") {
            None => None,
            Some(map) => {
                let get = |k: PatternKind| {
                    map.get(k.name()).and_then(|x| x.as_u64()).ok_or_else(|| bad(i + 1, &format!("missing frequency `{}`", k.name())))
                };
                Some(Tpf {
                    s: get(PatternKind::S)?,
                    o: get(PatternKind::O)?,
                    r: get(PatternKind::R)?,
                    sr: get(PatternKind::SR)?,
                    ro: get(PatternKind::RO)?,
                    so: get(PatternKind::SO)?,
                    sro: get(PatternKind::SRO)?,
                })
            }
        };
        out.push(QueryResult { query: Query { quad, direction }, rank, tpf });
    }
    Ok(out)
}

/// Evenly strided subsample of at most `max` queries, in order.
pub fn subsample(queries: &[Quadruple], max: usize) -> Vec<Quadruple> {
    if queries.len() <= max {
        return queries.to_vec();
    }
    (0..max).map(|i| queries[i * queries.len() / max]).collect()
}

/// Ranks both directions of every quadruple. Results are ordered as the
/// input (object query before subject query) regardless of scheduling.
pub fn evaluate(quads: &[Quadruple], scorer: &dyn StepScorer, filter: &TrueTripleIndex, tpf: Option<&TpfTable>) -> Result<RankingReport> {
    let mut by_time: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, q) in quads.iter().enumerate() {
        by_time.entry(q.time).or_default().push(i);
    }
    let groups: Vec<(usize, Vec<usize>)> = by_time.into_iter().collect();
    let ranked: Vec<Vec<(usize, usize)>> = groups
        .par_iter()
        .map(|(t, idx)| {
            let queries: Vec<Query> =
                idx.iter().flat_map(|&i| QueryDirection::BOTH.map(|direction| Query { quad: quads[i], direction })).collect();
            let scores = scorer.score_step(*t, &queries)?;
            if scores.len() != queries.len() {
                return Err(ModelError::Config("scorer returned the wrong number of score vectors".into()));
            }
            Ok(queries
                .iter()
                .zip(&scores)
                .enumerate()
                .map(|(j, (q, s))| {
                    let quad = &q.quad;
                    let known = match q.direction {
                        QueryDirection::Object => filter.objects(quad.subject, quad.relation, quad.time),
                        QueryDirection::Subject => filter.subjects(quad.relation, quad.object, quad.time),
                    };
                    (2 * idx[j / 2] + j % 2, rank_query(s, q.direction.answer(quad), known))
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut ranks = vec![0; 2 * quads.len()];
    for (slot, rank) in ranked.into_iter().flatten() {
        ranks[slot] = rank;
    }
    let results = ranks
        .into_iter()
        .enumerate()
        .map(|(slot, rank)| {
            let quad = quads[slot / 2];
            QueryResult { query: Query { quad, direction: QueryDirection::BOTH[slot % 2] }, rank, tpf: tpf.map(|t| t.frequencies(&quad)) }
        })
        .collect();
    Ok(RankingReport::from_results(results))
}

/// Scores with a trained model; context snapshots are the encoder input
/// (the training snapshots at evaluation time).
pub struct ModelScorer<'a> {
    pub model: &'a Model,
    pub context: &'a [Snapshot],
    /// Gate inputs; required when the model uses gating.
    pub tpf: Option<&'a TpfTable>,
}

impl StepScorer for ModelScorer<'_> {
    fn entity_count(&self) -> usize {
        self.model.config.entities
    }

    fn score_step(&self, t: usize, queries: &[Query]) -> Result<Vec<Vec<f64>>> {
        if self.model.params.gating.is_some() && self.tpf.is_none() {
            return Err(ModelError::Config("gated model needs a frequency table".into()));
        }
        let frozen = self.model.freeze_step(self.context, t)?;
        queries
            .iter()
            .map(|q| {
                let freq = self.tpf.map(|t| t.frequencies(&q.quad)).unwrap_or_default();
                match q.direction {
                    QueryDirection::Object => self.model.score_candidates(&frozen, &q.quad, true, freq.object_query()),
                    QueryDirection::Subject => self.model.score_candidates(&frozen, &q.quad, false, freq.subject_query()),
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EffectGroup {
    /// Frequency of a pattern that contains the answer.
    Replication,
    /// Frequency of a related pattern without the answer.
    Reference,
}

impl EffectGroup {
    pub fn name(self) -> &'static str {
        match self {
            Self::Replication => "replication",
            Self::Reference => "reference",
        }
    }
}

/// Frequency kind, query direction and the effect the pairing probes.
pub const PAIRINGS: [(PatternKind, QueryDirection, EffectGroup); 12] = {
    use EffectGroup::*;
    use PatternKind::*;
    use QueryDirection::*;
    [
        (S, Subject, Replication),
        (O, Object, Replication),
        (RO, Object, Replication),
        (SO, Subject, Replication),
        (SO, Object, Replication),
        (SRO, Subject, Replication),
        (SRO, Object, Replication),
        (SR, Subject, Replication),
        (S, Object, Reference),
        (O, Subject, Reference),
        (RO, Subject, Reference),
        (SR, Object, Reference),
    ]
};

#[derive(Clone, Debug, PartialEq)]
pub struct BinRow {
    pub kind: PatternKind,
    pub direction: QueryDirection,
    pub group: EffectGroup,
    /// Bin bounds in `log10(1 + f)`.
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub hits10: Option<f64>,
}

fn bin_of(edges: &[f64], v: f64) -> usize {
    let bins = edges.len() - 1;
    edges[1..bins].partition_point(|&e| e <= v)
}

/// Hits@10 per frequency bin for each pairing. Bins are `[e_i, e_{i+1})` in
/// `log10(1 + f)`; values beyond the outer edges fall in the outer bins.
/// Default edges are unit bins covering every observed value. Results
/// without frequencies are ignored.
pub fn tpf_binned_analysis(results: &[QueryResult], edges: Option<&[f64]>) -> Vec<BinRow> {
    let with_tpf: Vec<(&QueryResult, &Tpf)> = results.iter().filter_map(|r| r.tpf.as_ref().map(|t| (r, t))).collect();
    if with_tpf.is_empty() {
        return Vec::new();
    }
    let logf = |f: u64| (1.0 + f as f64).log10();
    let edges: Vec<f64> = match edges {
        Some(e) if e.len() >= 2 => e.to_vec(),
        _ => {
            let top = with_tpf.iter().flat_map(|(_, t)| PatternKind::ALL.map(|k| logf(t.get(k)))).fold(0.0, f64::max);
            (0..=top.floor() as usize + 1).map(|e| e as f64).collect()
        }
    };
    let bins = edges.len() - 1;
    let mut rows = Vec::with_capacity(PAIRINGS.len() * bins);
    for (kind, direction, group) in PAIRINGS {
        let mut count = vec![0usize; bins];
        let mut hits = vec![0usize; bins];
        for (r, t) in with_tpf.iter().filter(|(r, _)| r.query.direction == direction) {
            let b = bin_of(&edges, logf(t.get(kind)));
            count[b] += 1;
            if r.rank <= 10 {
                hits[b] += 1;
            }
        }
        for b in 0..bins {
            rows.push(BinRow {
                kind,
                direction,
                group,
                bin_lo: edges[b],
                bin_hi: edges[b + 1],
                count: count[b],
                hits10: (count[b] > 0).then(|| hits[b] as f64 / count[b] as f64),
            });
        }
    }
    rows
}

pub fn write_bins_csv<W: Write>(rows: &[BinRow], mut out: W) -> io::Result<()> {
    writeln!(out, "pattern_kind,direction,bin_lo,bin_hi,count,hits10")?;
    for r in rows {
        let h = r.hits10.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{},{}", r.kind.name(), r.direction.name(), r.bin_lo, r.bin_hi, r.count, h)?;
    }
    Ok(())
}
