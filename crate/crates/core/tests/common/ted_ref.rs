//! TED reference built by scanning every training fact.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkgc_core::data::{Quadruple, Split, TkgDataset};
use tkgc_core::eval::QueryDirection;
use tkgc_core::ted::{build_reference_sets, ted_rank, tier_scores, TedConfig, TedIndex};

/// Tier sets straight from the definitions, by scanning every train fact.
pub fn oracle_tiers(train: &[Quadruple], q: &Quadruple, dir: QueryDirection) -> [BTreeSet<(usize, usize)>; 3] {
    let mut raw: [BTreeSet<(usize, usize)>; 3] = Default::default();
    for f in train.iter().filter(|f| f.time != q.time) {
        let (hit, e) = match dir {
            QueryDirection::Object => {
                ([f.subject == q.subject && f.relation == q.relation, f.subject == q.subject, f.relation == q.relation], f.object)
            }
            QueryDirection::Subject => {
                ([f.relation == q.relation && f.object == q.object, f.object == q.object, f.relation == q.relation], f.subject)
            }
        };
        for k in 0..3 {
            if hit[k] {
                raw[k].insert((e, f.time));
            }
        }
    }
    let t2: BTreeSet<_> = raw[1].difference(&raw[0]).copied().collect();
    let t3: BTreeSet<_> = raw[2].difference(&raw[0]).filter(|x| !t2.contains(x)).copied().collect();
    [raw[0].clone(), t2, t3]
}

pub fn oracle_rank(train: &[Quadruple], q: &Quadruple, dir: QueryDirection, sigma: f64, entities: usize) -> Vec<usize> {
    let tiers = oracle_tiers(train, q, dir);
    let mut keyed: Vec<(usize, f64, usize)> = Vec::new();
    let mut rest = Vec::new();
    for e in 0..entities {
        match (0..3).find(|&k| tiers[k].iter().any(|&(x, _)| x == e)) {
            Some(k) => {
                let mut score = 0.0;
                for &(x, tp) in &tiers[k] {
                    if x == e {
                        score += (-sigma * (q.time as f64 - tp as f64).abs()).exp();
                    }
                }
                keyed.push((k, score, e));
            }
            None => rest.push(e),
        }
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.partial_cmp(&a.1).unwrap()).then(a.2.cmp(&b.2)));
    keyed.into_iter().map(|k| k.2).chain(rest).collect()
}

pub fn random_corpus(rng: &mut ChaCha8Rng) -> TkgDataset {
    let e = rng.random_range(2..12);
    let r = rng.random_range(1..4);
    let steps = rng.random_range(2..8);
    let n = rng.random_range(1..30);
    let train: Vec<Quadruple> = (0..n)
        .map(|_| Quadruple::new(rng.random_range(0..e), rng.random_range(0..r), rng.random_range(0..e), rng.random_range(0..steps)))
        .collect();
    TkgDataset::from_quadruples(e, r, steps, &train, &[], &[])
}

/// Panics on the first disagreement with the reference.
pub fn check_against_oracle(seed: u64, corpora: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..corpora {
        let ds = random_corpus(&mut rng);
        let train: Vec<Quadruple> = ds.quadruples(Split::Train).collect();
        let index = TedIndex::new(&ds);
        let sigma = [0.01, 0.1, 1.0][rng.random_range(0..3)];
        let config = TedConfig::new(sigma).unwrap();
        for _ in 0..5 {
            let q = Quadruple::new(
                rng.random_range(0..ds.entity_count),
                rng.random_range(0..ds.relation_count),
                rng.random_range(0..ds.entity_count),
                rng.random_range(0..ds.step_count),
            );
            for dir in QueryDirection::BOTH {
                let sets = build_reference_sets(&index, &q, dir);
                let expect = oracle_tiers(&train, &q, dir);
                for k in 0..3 {
                    let got: BTreeSet<_> = sets.tiers[k].iter().copied().collect();
                    assert_eq!(got.len(), sets.tiers[k].len(), "duplicates in tier {k}");
                    assert_eq!(got, expect[k], "tier {k} of {q:?} {dir:?}");
                }
                let scores = tier_scores(&sets, sigma, q.time);
                for k in 0..3 {
                    for (&e, &s) in &scores[k] {
                        let direct: f64 = expect[k].iter().filter(|x| x.0 == e).map(|x| (-sigma * x.1.abs_diff(q.time) as f64).exp()).sum();
                        assert!((s - direct).abs() < 1e-12);
                    }
                }
                assert_eq!(ted_rank(&index, &q, dir, &config), oracle_rank(&train, &q, dir, sigma, ds.entity_count));
            }
        }
    }
}
