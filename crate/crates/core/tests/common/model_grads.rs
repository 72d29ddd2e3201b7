//! Small fixed instance for finite-difference checks of the full losses.

#![allow(dead_code)]

use tkgc_core::data::{Quadruple, Snapshot, Triple};
use tkgc_core::decoder::{LossMode, NegativeBatch};
use tkgc_core::error::ModelError;
use tkgc_core::model::{Model, ModelConfig, StepBatch, Variant};
use tkgc_tensor::gradcheck::{check_params, DEFAULT_STEP};
use tkgc_tensor::{Tensor, TensorError};

pub fn context() -> Vec<Snapshot> {
    vec![
        Snapshot::new(0, vec![Triple::new(0, 0, 1), Triple::new(2, 1, 3)]),
        Snapshot::new(1, vec![Triple::new(1, 1, 2), Triple::new(3, 0, 2)]),
        Snapshot::new(2, vec![Triple::new(0, 0, 1), Triple::new(3, 1, 0)]),
    ]
}

pub fn batches() -> Vec<StepBatch> {
    let b = |time, positives: Vec<Quadruple>, objects: Vec<Vec<usize>>, subjects: Vec<Vec<usize>>| StepBatch {
        time,
        negatives: objects.into_iter().zip(subjects).map(|(objects, subjects)| NegativeBatch { objects, subjects }).collect(),
        object_features: positives.iter().map(|q| [q.subject as u64 + 1, 2, 1]).collect(),
        subject_features: positives.iter().map(|q| [q.object as u64, 3, 0]).collect(),
        positives,
    };
    vec![
        b(1, vec![Quadruple::new(1, 1, 2, 1), Quadruple::new(3, 0, 2, 1)], vec![vec![0, 3], vec![1, 3]], vec![vec![0, 2], vec![0, 1]]),
        b(2, vec![Quadruple::new(0, 0, 1, 2)], vec![vec![2, 3]], vec![vec![1, 2]]),
    ]
}

pub fn tensor_err(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => panic!("{other}"),
    }
}

pub fn check(config: ModelConfig, mode: LossMode) -> f64 {
    let mut model = Model::new(config, 17).unwrap();
    // Move decay offsets off the max(0, .) kink at zero elapsed time.
    for name in ["decay.bias", "impute.bias"] {
        if let Some(id) = model.store.id(name) {
            *model.store.get_mut(id) = Tensor::scalar(0.05);
        }
    }
    let ctx = context();
    let batches = batches();
    let report =
        check_params(&model.store, |tape, store| model.batch_loss(tape, store, &ctx, &batches, mode).map_err(tensor_err), DEFAULT_STEP)
            .unwrap();
    assert!(report.checked == model.store.numel());
    report.max_rel_error
}

pub fn config(variant: Variant) -> ModelConfig {
    ModelConfig { dim: 4, heads: 2, window: 2, gate_hidden: 3, ..ModelConfig::new(variant, 4, 2, 3) }
}

pub fn full(variant: Variant, bidirectional: bool) -> ModelConfig {
    ModelConfig { bidirectional, gating: true, imputation: true, positional: true, ..config(variant) }
}
