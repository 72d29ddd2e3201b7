use tkgc_core::data::{generate_synthetic, Quadruple, Split, SyntheticSpec};
use tkgc_core::model::{Model, ModelConfig, Variant};
use tkgc_core::train::{evaluate_model, train, TrainConfig};
use tkgc_tensor::{load_checkpoint, save_checkpoint};

use crate::Outcome;

const OVERFIT_TARGET: f64 = 0.95;
const OVERFIT_EPOCHS: usize = 200;

/// Train MRR on the default 20/4/10 synthetic set, scored every epoch.
pub fn overfit() -> Outcome {
    let ds = generate_synthetic(&SyntheticSpec::default(), 1).unwrap();
    let model = ModelConfig {
        dim: 32,
        heads: 2,
        window: 3,
        ..ModelConfig::new(Variant::TempGru, ds.entity_count, ds.relation_count, ds.step_count)
    };
    let cfg = TrainConfig {
        lr: 0.01,
        negatives: 19,
        batch_snapshots: 1,
        max_epochs: OVERFIT_EPOCHS,
        patience: OVERFIT_EPOCHS,
        valid_split: Split::Train,
        ..TrainConfig::new(model)
    };
    let out = train(&ds, &cfg, |_| {}).unwrap();
    let reached = out.log.epochs.iter().find(|e| e.valid_mrr >= OVERFIT_TARGET).map(|e| e.epoch);

    // the best model, saved and reloaded, scored on its full train split
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("overfit.ckpt");
    save_checkpoint(&out.model.store, &ckpt).unwrap();
    let mut reloaded = Model::new(cfg.model.clone(), cfg.seed).unwrap();
    reloaded.store = load_checkpoint(&ckpt).unwrap();
    let train_quads: Vec<Quadruple> = ds.quadruples(Split::Train).collect();
    let full = evaluate_model(&reloaded, &ds, &train_quads, &cfg.filter.build(&ds), None).unwrap().mrr;

    let detail = format!(
        "best train MRR {:.4} (epoch {}), first >= {OVERFIT_TARGET} at epoch {}, reloaded checkpoint {full:.4}",
        out.log.best_valid_mrr,
        out.log.best_epoch.map_or("-".into(), |e| e.to_string()),
        reached.map_or("never".into(), |e| e.to_string()),
    );
    if reached.is_some() && full >= OVERFIT_TARGET {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

/// Every held-out fact repeats a training fact exactly one period earlier.
/// The window equals the period, so a model sees the matching step only
/// through its temporal encoder.
fn replication_spec() -> SyntheticSpec {
    SyntheticSpec {
        entities: 40,
        relations: 1,
        steps: 24,
        facts_per_step: 160,
        period: 4,
        periodicity: 1.0,
        valid_fraction: 0.15,
        test_fraction: 0.15,
    }
}

fn test_hits10(variant: Variant, data_seed: u64) -> f64 {
    let ds = generate_synthetic(&replication_spec(), data_seed).unwrap();
    let model = ModelConfig { dim: 16, window: 4, ..ModelConfig::new(variant, ds.entity_count, ds.relation_count, ds.step_count) };
    let cfg = TrainConfig { lr: 0.01, negatives: 16, batch_snapshots: 1, max_epochs: 50, patience: 20, ..TrainConfig::new(model) };
    let out = train(&ds, &cfg, |_| {}).unwrap();
    let test: Vec<Quadruple> = ds.quadruples(Split::Test).collect();
    evaluate_model(&out.model, &ds, &test, &cfg.filter.build(&ds), None).unwrap().hits10
}

pub fn replication() -> Outcome {
    let mut rows = Vec::new();
    let mut all = true;
    for seed in 1..=3 {
        let srgcn = test_hits10(Variant::Srgcn, seed);
        let gru = test_hits10(Variant::TempGru, seed);
        all &= gru > srgcn;
        rows.push(format!("seed {seed}: temp-gru {gru:.3} vs srgcn {srgcn:.3}"));
    }
    let detail = format!("test Hits@10, {}", rows.join(", "));
    if all {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}
