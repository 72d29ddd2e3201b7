//! With a zero-length window the temporal variants see only the target
//! snapshot, so they collapse to the structural-only model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkgc_core::data::{Quadruple, Snapshot, Triple};
use tkgc_core::model::{Model, ModelConfig, Variant};
use tkgc_tensor::Tensor;

const E: usize = 6;
const R: usize = 2;
const T: usize = 5;

fn random_context(rng: &mut ChaCha8Rng) -> Vec<Snapshot> {
    (0..T)
        .map(|t| {
            let n = rng.random_range(1..6);
            let triples = (0..n).map(|_| Triple::new(rng.random_range(0..E), rng.random_range(0..R), rng.random_range(0..E))).collect();
            Snapshot::new(t, triples)
        })
        .collect()
}

fn config(variant: Variant) -> ModelConfig {
    ModelConfig { dim: 8, heads: 2, window: 0, ..ModelConfig::new(variant, E, R, T) }
}

fn all_scores(model: &Model, context: &[Snapshot], t: usize) -> Vec<f64> {
    let frozen = model.freeze_step(context, t).unwrap();
    let mut out = Vec::new();
    for s in 0..E {
        for r in 0..R {
            let q = Quadruple::new(s, r, 0, t);
            out.extend(model.score_candidates(&frozen, &q, true, [0; 3]).unwrap());
            out.extend(model.score_candidates(&frozen, &Quadruple::new(0, r, s, t), false, [0; 3]).unwrap());
        }
    }
    out
}

#[test]
fn other_snapshots_are_ignored() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for variant in [Variant::TempGru, Variant::TempSa] {
        let model = Model::new(config(variant), 5).unwrap();
        for _ in 0..10 {
            let a = random_context(&mut rng);
            let mut b = random_context(&mut rng);
            let t = rng.random_range(0..T);
            b[t] = a[t].clone();
            assert_eq!(all_scores(&model, &a, t), all_scores(&model, &b, t), "{variant:?} t={t}");
        }
    }
}

#[test]
fn identity_attention_matches_structural_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let srgcn = Model::new(config(Variant::Srgcn), 5).unwrap();
    let mut sa = Model::new(config(Variant::TempSa), 5).unwrap();
    let wv = sa.store.id("sa.wv").unwrap();
    *sa.store.get_mut(wv) = Tensor::identity(8);
    for _ in 0..10 {
        let ctx = random_context(&mut rng);
        let t = rng.random_range(0..T);
        let a = all_scores(&srgcn, &ctx, t);
        let b = all_scores(&sa, &ctx, t);
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "{worst}");
    }
}
