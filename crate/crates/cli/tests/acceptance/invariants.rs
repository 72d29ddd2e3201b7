use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tkgc_core::data::{build_true_index, Quadruple, Snapshot, Split, TimeScope, TkgDataset, Triple};
use tkgc_core::eval::{evaluate, Query, StepScorer};
use tkgc_core::heterogeneity::{compute_tpf, imputation_coefficients, FrequencyTransform, GateMlp, TpfWindow};
use tkgc_core::ted::{TedConfig, TedIndex, TedScorer};
use tkgc_core::temporal::{attention_keep, decay_weight, encode_sa, ActivityMask, DecayParams, SaParams, Window};
use tkgc_tensor::{ParamStore, Tape, Tensor};

use crate::Outcome;

pub const CASES: u32 = 1000;

fn runner() -> TestRunner {
    TestRunner::new(Config { cases: CASES, failure_persistence: None, ..Config::default() })
}

fn seeded(seed: u64) -> ChaCha8Rng {
    <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn random_dataset(rng: &mut ChaCha8Rng) -> TkgDataset {
    let e = rng.random_range(2..30);
    let r = rng.random_range(1..4);
    let steps = rng.random_range(1..8);
    let mut quads = |n: usize| -> Vec<Quadruple> {
        (0..n)
            .map(|_| Quadruple::new(rng.random_range(0..e), rng.random_range(0..r), rng.random_range(0..e), rng.random_range(0..steps)))
            .collect()
    };
    let (train, valid, test) = (quads(40), quads(5), quads(10));
    TkgDataset::from_quadruples(e, r, steps, &train, &valid, &test)
}

fn decay(runner: &mut TestRunner) -> Result<(), String> {
    // lambda * delta + b stays below the f64 exp underflow threshold
    let strategy = (0u32..=365, 0u32..=365, 0.0f64..1.5, -20.0f64..20.0);
    runner
        .run(&strategy, |(d1, d2, lambda, bias)| {
            let (near, far) = (d1.min(d2) as f64, d1.max(d2) as f64);
            let (a, b) = (decay_weight(near, lambda, bias), decay_weight(far, lambda, bias));
            prop_assert!(a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0);
            prop_assert!(b <= a);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn attention(runner: &mut TestRunner) -> Result<(), String> {
    runner
        .run(&any::<u64>(), |seed| {
            let mut rng = seeded(seed);
            let entities = rng.random_range(1..7);
            let steps = rng.random_range(1..6);
            let heads = rng.random_range(1..3);
            let dim = heads * rng.random_range(1..4);
            let mut store = ParamStore::new();
            let sa = SaParams::init(&mut store, &mut rng, dim, heads).unwrap();
            let dp = DecayParams::init(&mut store, "decay").unwrap();
            *store.get_mut(dp.lambda) = Tensor::scalar(rng.random_range(0.0..2.0));
            *store.get_mut(dp.bias) = Tensor::scalar(rng.random_range(-2.0..2.0));
            let snaps: Vec<Snapshot> = (0..steps)
                .map(|t| {
                    let n = rng.random_range(0..4);
                    let triples = (0..n).map(|_| Triple::new(rng.random_range(0..entities), 0, rng.random_range(0..entities))).collect();
                    Snapshot::new(t, triples)
                })
                .collect();
            let mut tape = Tape::new();
            let x: Vec<_> = (0..steps).map(|_| tape.constant(random_matrix(&mut rng, entities, dim, 3.0))).collect();
            let target = rng.random_range(0..steps);
            let window = Window { times: (0..steps).collect(), target, x: x.clone(), mask: ActivityMask::from_snapshots(&snaps, entities) };
            let keep = attention_keep(&window.mask, target);
            let out = encode_sa(&mut tape, &store, &sa, &dp, &window, x[target]).unwrap();
            for beta in &out.weights {
                let beta = tape.value(*beta);
                for i in 0..entities {
                    let row = beta.row_slice(i);
                    let total: f64 = row.iter().sum();
                    prop_assert!((total - 1.0).abs() <= 1e-12, "row sums to {total}");
                    for (k, &w) in row.iter().enumerate() {
                        if keep[i * steps + k] {
                            prop_assert!(w >= 0.0);
                        } else {
                            prop_assert_eq!(w, 0.0);
                        }
                        let active = window.mask.is_active(k, i);
                        let inactive_everywhere = (0..steps).all(|j| !window.mask.is_active(j, i));
                        prop_assert_eq!(keep[i * steps + k], active || (inactive_everywhere && k == target));
                    }
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn imputation(runner: &mut TestRunner) -> Result<(), String> {
    let strategy = (prop::option::of(1u32..=365), prop::option::of(1u32..=365), 0.0f64..1.5, -20.0f64..20.0, any::<bool>());
    runner
        .run(&strategy, |(past, future, lambda, bias, bidirectional)| {
            let (p, f, c) = imputation_coefficients(past.map(f64::from), future.map(f64::from), lambda, bias, bidirectional);
            prop_assert!(p >= 0.0 && f >= 0.0 && c >= 0.0, "{p} {f} {c}");
            prop_assert!((p + f + c - 1.0).abs() <= 1e-12);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn gating(runner: &mut TestRunner) -> Result<(), String> {
    let strategy = (any::<u64>(), prop::array::uniform3(0u64..10_000_000), any::<bool>());
    runner
        .run(&strategy, |(seed, counts, raw)| {
            let mut rng = seeded(seed);
            let mut store = ParamStore::new();
            let hidden = rng.random_range(1..8);
            let gate = GateMlp::init(&mut store, &mut rng, "g", hidden).unwrap();
            // widen the weights well beyond their initial scale
            for id in [gate.w1, gate.b1, gate.w2, gate.b2] {
                let t = store.get(id);
                let (r, c) = (t.rows(), t.cols());
                *store.get_mut(id) = random_matrix(&mut rng, r, c, 20.0);
            }
            let transform = if raw { FrequencyTransform::Raw } else { FrequencyTransform::Log1p };
            let features = transform.apply(counts);
            let alpha = gate.eval(&store, features);
            prop_assert!((0.0..=1.0).contains(&alpha), "{alpha}");
            let mut tape = Tape::new();
            let f = tape.constant(Tensor::from_rows(&[features]).unwrap());
            let a = gate.forward(&mut tape, &store, f).unwrap();
            let a = tape.value(a).item();
            prop_assert!((0.0..=1.0).contains(&a), "{a}");
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn tpf_monotone(runner: &mut TestRunner) -> Result<(), String> {
    runner
        .run(&(any::<u64>(), 0usize..4), |(seed, w)| {
            let mut rng = seeded(seed);
            let ds = random_dataset(&mut rng);
            let window = [TpfWindow::StrictPast, TpfWindow::Trailing(2), TpfWindow::Symmetric(1), TpfWindow::All][w];
            let table = compute_tpf(&ds, window);
            for _ in 0..5 {
                let q = Quadruple::new(
                    rng.random_range(0..ds.entity_count),
                    rng.random_range(0..ds.relation_count),
                    rng.random_range(0..ds.entity_count),
                    rng.random_range(0..ds.step_count),
                );
                let f = table.frequencies(&q);
                // each more specific pattern is bounded by every pattern it refines
                for (general, specific) in [
                    (f.s, f.sr),
                    (f.s, f.so),
                    (f.r, f.sr),
                    (f.r, f.ro),
                    (f.o, f.ro),
                    (f.o, f.so),
                    (f.sr, f.sro),
                    (f.ro, f.sro),
                    (f.so, f.sro),
                ] {
                    prop_assert!(specific <= general, "{f:?}");
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Arbitrary scores, including ties and NaN.
struct NoiseScorer {
    entities: usize,
    seed: u64,
}

impl StepScorer for NoiseScorer {
    fn entity_count(&self) -> usize {
        self.entities
    }

    fn score_step(&self, t: usize, queries: &[Query]) -> tkgc_core::error::Result<Vec<Vec<f64>>> {
        let mut rng = seeded(self.seed ^ t as u64);
        Ok(queries
            .iter()
            .map(|_| {
                (0..self.entities)
                    .map(|_| match rng.random_range(0..10) {
                        0 => f64::NAN,
                        1..=3 => 0.0,
                        _ => rng.random_range(-5.0..5.0),
                    })
                    .collect()
            })
            .collect())
    }
}

fn report_bounds(runner: &mut TestRunner) -> Result<(), String> {
    runner
        .run(&(any::<u64>(), any::<bool>()), |(seed, ted)| {
            let mut rng = seeded(seed);
            let ds = random_dataset(&mut rng);
            let scope = if rng.random_bool(0.5) { TimeScope::PerStep } else { TimeScope::Static };
            let filter = build_true_index(&ds, &Split::ALL, scope);
            let quads: Vec<Quadruple> = ds.quadruples(Split::Test).collect();
            let index = TedIndex::new(&ds);
            let report = if ted {
                let scorer = TedScorer { index: &index, config: TedConfig::new(rng.random_range(1e-3..10.0)).unwrap() };
                evaluate(&quads, &scorer, &filter, None)
            } else {
                let scorer = NoiseScorer { entities: ds.entity_count, seed };
                evaluate(&quads, &scorer, &filter, None)
            }
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
            let e = ds.entity_count as f64;
            prop_assert!(report.hits1 <= report.hits3 && report.hits3 <= report.hits10);
            prop_assert!(report.mrr >= 1.0 / e - 1e-15 && report.mrr <= 1.0, "mrr {} with {e} entities", report.mrr);
            for r in &report.results {
                prop_assert!(r.rank >= 1 && r.rank <= ds.entity_count);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

type Property = (&'static str, fn(&mut TestRunner) -> Result<(), String>);

pub fn run() -> Outcome {
    let properties: [Property; 6] = [
        ("decay", decay),
        ("attention", attention),
        ("imputation", imputation),
        ("gating", gating),
        ("tpf subsets", tpf_monotone),
        ("report bounds", report_bounds),
    ];
    let mut failures = Vec::new();
    for (name, property) in properties {
        if let Err(e) = property(&mut runner()) {
            failures.push(format!("{name}: {e}"));
        }
    }
    if failures.is_empty() {
        Outcome::Pass(format!("{} properties x {CASES} cases", properties.len()))
    } else {
        Outcome::Fail(failures.join("; "))
    }
}
