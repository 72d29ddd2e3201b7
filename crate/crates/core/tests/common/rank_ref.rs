//! Brute-force filtered ranking: score everything, drop known-true
//! alternatives, count ties against the answer.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkgc_core::data::{build_true_index, Quadruple, Split, TimeScope, TkgDataset};
use tkgc_core::error::Result;
use tkgc_core::eval::{evaluate, Query, QueryDirection, StepScorer};

/// Scores from a fixed table keyed by query; few distinct values so ties
/// are common.
struct TableScorer {
    entities: usize,
    salt: u64,
}

impl TableScorer {
    fn scores(&self, q: &Query) -> Vec<f64> {
        let d = q.direction as u64;
        let key = [q.quad.subject, q.quad.relation, q.quad.object, q.quad.time]
            .iter()
            .fold(self.salt ^ d, |h, &v| h.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(v as u64 + 1));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        (0..self.entities).map(|_| rng.random_range(0..6) as f64 * 0.5).collect()
    }
}

impl StepScorer for TableScorer {
    fn entity_count(&self) -> usize {
        self.entities
    }

    fn score_step(&self, _t: usize, queries: &[Query]) -> Result<Vec<Vec<f64>>> {
        Ok(queries.iter().map(|q| self.scores(q)).collect())
    }
}

fn oracle_rank(all: &[Quadruple], q: &Query, scores: &[f64], scope: TimeScope) -> usize {
    let quad = &q.quad;
    let answer = q.direction.answer(quad);
    let same_time = |t: usize| scope == TimeScope::Static || t == quad.time;
    let known = |e: usize| {
        all.iter().any(|f| {
            same_time(f.time)
                && f.relation == quad.relation
                && match q.direction {
                    QueryDirection::Object => f.subject == quad.subject && f.object == e,
                    QueryDirection::Subject => f.object == quad.object && f.subject == e,
                }
        })
    };
    // pessimistic: among equal scores the answer sorts last
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then((a == answer).cmp(&(b == answer))));
    order.retain(|&e| e == answer || !known(e));
    1 + order.iter().position(|&e| e == answer).unwrap()
}

/// Ranks at least `queries` random queries with the evaluator and the
/// oracle; returns how many were compared.
pub fn check_random_rankings(seed: u64, queries: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    while compared < queries {
        let e = rng.random_range(2..=100);
        let r = rng.random_range(1..5);
        let steps = rng.random_range(1..6);
        let random_quads = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Quadruple> {
            (0..n)
                .map(|_| {
                    // a narrow subject/object range makes filter collisions likely
                    let hot = rng.random_range(1..=e.min(8));
                    Quadruple::new(rng.random_range(0..hot), rng.random_range(0..r), rng.random_range(0..e), rng.random_range(0..steps))
                })
                .collect()
        };
        let train = random_quads(rng.random_range(1..60), &mut rng);
        let valid = random_quads(rng.random_range(0..20), &mut rng);
        let test = random_quads(rng.random_range(1..20), &mut rng);
        let ds = TkgDataset::from_quadruples(e, r, steps, &train, &valid, &test);
        let all: Vec<Quadruple> = Split::ALL.iter().flat_map(|&s| ds.quadruples(s)).collect();
        let scope = if rng.random_bool(0.5) { TimeScope::PerStep } else { TimeScope::Static };
        let filter = build_true_index(&ds, &Split::ALL, scope);
        let scorer = TableScorer { entities: e, salt: rng.random() };
        let quads: Vec<Quadruple> = ds.quadruples(Split::Test).collect();
        let report = evaluate(&quads, &scorer, &filter, None).unwrap();
        for res in &report.results {
            let expect = oracle_rank(&all, &res.query, &scorer.scores(&res.query), scope);
            assert_eq!(res.rank, expect, "{:?} (E = {e}, {scope:?})", res.query);
            compared += 1;
        }
    }
    compared
}
