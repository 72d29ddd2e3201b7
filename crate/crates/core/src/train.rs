//! Mini-batch training with early stopping on validation MRR.

use std::io::{self, Write};
use std::time::Instant;

use log::{info, warn};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tkgc_tensor::{Adam, ParamStore, Tape};

use crate::data::{build_true_index, Quadruple, Snapshot, Split, TimeScope, TkgDataset, TrueTripleIndex};
use crate::decoder::{sample_negatives, LossMode};
use crate::error::{ModelError, Result};
use crate::eval::{evaluate, subsample, ModelScorer, RankingReport};
use crate::heterogeneity::{compute_tpf, TpfTable, TpfWindow};
use crate::model::{Model, ModelConfig, StepBatch};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    /// Consecutive snapshots per batch.
    pub batch_snapshots: usize,
    /// Maximum training quadruples drawn from one snapshot per batch.
    pub snapshot_cap: usize,
    /// Negatives per slot per positive.
    pub negatives: usize,
    pub dropout_current: f64,
    pub dropout_reference: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub loss: LossMode,
    /// Cap on validation quadruples scored per epoch.
    pub valid_queries: usize,
    /// Split used for per-epoch validation. Falls back to train when empty.
    pub valid_split: Split,
    pub tpf_window: TpfWindow,
    pub filter: FilterConfig,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            lr: 0.001,
            batch_snapshots: 8,
            snapshot_cap: 3000,
            negatives: 500,
            dropout_current: 0.5,
            dropout_reference: 0.2,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            loss: LossMode::CrossEntropy,
            valid_queries: 1000,
            valid_split: Split::Valid,
            tpf_window: TpfWindow::StrictPast,
            filter: FilterConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_snapshots == 0 || self.snapshot_cap == 0 {
            return bad("batch size and snapshot cap must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negative sample count must be at least 1");
        }
        for rate in [self.dropout_current, self.dropout_reference] {
            if !(0.0..1.0).contains(&rate) {
                return bad("dropout rates must lie in [0, 1)");
            }
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.valid_queries == 0 {
            return bad("validation query cap must be at least 1");
        }
        Ok(())
    }
}

/// Which known facts are removed from candidate lists at evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterConfig {
    pub splits: Vec<Split>,
    pub scope: TimeScope,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { splits: Split::ALL.to_vec(), scope: TimeScope::PerStep }
    }
}

impl FilterConfig {
    pub fn build(&self, ds: &TkgDataset) -> TrueTripleIndex {
        build_true_index(ds, &self.splits, self.scope)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub valid_mrr: f64,
    pub wall_secs: f64,
    pub improved: bool,
    pub epochs_without_improvement: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub best_valid_mrr: f64,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.epochs {
            let rec = serde_json::json!({
                "epoch": e.epoch,
                "loss": e.loss,
                "valid_mrr": e.valid_mrr,
                "wall_secs": e.wall_secs,
                "improved": e.improved,
                "epochs_without_improvement": e.epochs_without_improvement,
            });
            writeln!(out, "{rec}")?;
        }
        Ok(())
    }
}

pub struct TrainOutcome {
    /// Model with the best validation parameters.
    pub model: Model,
    pub log: TrainingLog,
}

/// Training snapshots as encoder input, one per step.
pub fn train_context(ds: &TkgDataset) -> Vec<Snapshot> {
    ds.split(Split::Train).to_vec()
}

/// Frequency table for gate inputs, or `None` for ungated models.
pub fn gate_table(ds: &TkgDataset, config: &ModelConfig, window: TpfWindow) -> Option<TpfTable> {
    config.gating.then(|| compute_tpf(ds, window))
}

/// Ranks `quads` with `model`, using the training snapshots as context.
pub fn evaluate_model(
    model: &Model,
    ds: &TkgDataset,
    quads: &[Quadruple],
    filter: &TrueTripleIndex,
    tpf: Option<&TpfTable>,
) -> Result<RankingReport> {
    let context = train_context(ds);
    let scorer = ModelScorer { model, context: &context, tpf };
    evaluate(quads, &scorer, filter, tpf)
}

fn drop_edges(snap: &Snapshot, rate: f64, rng: &mut ChaCha8Rng) -> Snapshot {
    use rand::Rng;
    if rate <= 0.0 {
        return snap.clone();
    }
    let kept = snap.triples().iter().filter(|_| rng.random::<f64>() >= rate).copied().collect();
    Snapshot::new(snap.time, kept)
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    train_index: TrueTripleIndex,
    tpf: Option<TpfTable>,
    context: Vec<Snapshot>,
}

impl Trainer<'_> {
    /// Loss of one batch of target steps, or `None` when it holds no facts.
    fn batch(&self, model: &Model, targets: &[usize], rng: &mut ChaCha8Rng) -> Result<Option<(Tape, tkgc_tensor::Var)>> {
        let cfg = self.cfg;
        let mut batches = Vec::new();
        for &t in targets {
            let snap = &self.context[t];
            let picks: Vec<usize> = if snap.len() > cfg.snapshot_cap {
                let mut p = index::sample(rng, snap.len(), cfg.snapshot_cap).into_vec();
                p.sort_unstable();
                p
            } else {
                (0..snap.len()).collect()
            };
            let mut positives = Vec::with_capacity(picks.len());
            let mut negatives = Vec::with_capacity(picks.len());
            for i in picks {
                let q = snap.triples()[i].at(t);
                match sample_negatives(&q, &self.train_index, cfg.model.entities, cfg.negatives, rng) {
                    Ok(n) => {
                        positives.push(q);
                        negatives.push(n);
                    }
                    Err(ModelError::NoNegatives) => warn!("no negatives for {q:?}; skipped"),
                    Err(e) => return Err(e),
                }
            }
            if positives.is_empty() {
                continue;
            }
            let freqs: Vec<_> = positives.iter().map(|q| self.tpf.as_ref().map(|tpf| tpf.frequencies(q)).unwrap_or_default()).collect();
            batches.push(StepBatch {
                time: t,
                object_features: freqs.iter().map(|f| f.object_query()).collect(),
                subject_features: freqs.iter().map(|f| f.subject_query()).collect(),
                positives,
                negatives,
            });
        }
        if batches.is_empty() {
            return Ok(None);
        }
        let steps = cfg.model.steps;
        let mut needed = vec![false; steps];
        for b in &batches {
            let (lo, hi) = cfg.model.window_range(b.time);
            needed[lo..=hi].iter_mut().for_each(|n| *n = true);
        }
        let context: Vec<Snapshot> = (0..steps)
            .map(|k| {
                if !needed[k] {
                    Snapshot::empty(k)
                } else if targets.contains(&k) {
                    drop_edges(&self.context[k], cfg.dropout_current, rng)
                } else {
                    drop_edges(&self.context[k], cfg.dropout_reference, rng)
                }
            })
            .collect();
        let mut tape = Tape::new();
        tape.bind_all(&model.store);
        let loss = model.batch_loss(&mut tape, &model.store, &context, &batches, cfg.loss)?;
        Ok(Some((tape, loss)))
    }

    fn validate(&self, model: &Model, quads: &[Quadruple], filter: &TrueTripleIndex) -> Result<f64> {
        let scorer = ModelScorer { model, context: &self.context, tpf: self.tpf.as_ref() };
        Ok(evaluate(quads, &scorer, filter, None)?.mrr)
    }
}

/// Trains a fresh model on the train split of `ds`. `on_epoch` sees every
/// record as it is appended.
pub fn train(ds: &TkgDataset, cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mc = &cfg.model;
    if (mc.entities, mc.relations, mc.steps) != (ds.entity_count, ds.relation_count, ds.step_count) {
        return Err(ModelError::Config(format!(
            "model sized for {}/{}/{} entities/relations/steps but dataset has {}/{}/{}",
            mc.entities, mc.relations, mc.steps, ds.entity_count, ds.relation_count, ds.step_count
        )));
    }
    let mut model = Model::new(mc.clone(), cfg.seed)?;
    let trainer = Trainer {
        cfg,
        train_index: build_true_index(ds, &[Split::Train], TimeScope::PerStep),
        tpf: gate_table(ds, mc, cfg.tpf_window),
        context: train_context(ds),
    };
    let valid_split = if ds.split_len(cfg.valid_split) == 0 {
        warn!("{} split is empty; validating on train", cfg.valid_split.name());
        Split::Train
    } else {
        cfg.valid_split
    };
    let valid_all: Vec<Quadruple> = ds.quadruples(valid_split).collect();
    let valid = subsample(&valid_all, cfg.valid_queries);
    let filter = cfg.filter.build(ds);

    let steps_with_facts: Vec<usize> = (0..mc.steps).filter(|&t| !trainer.context[t].is_empty()).collect();
    let mut chunks: Vec<Vec<usize>> = steps_with_facts.chunks(cfg.batch_snapshots).map(|c| c.to_vec()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a11);
    let mut adam = Adam::new(&model.store, cfg.lr);
    let mut best: Option<ParamStore> = None;
    let mut log = TrainingLog { best_valid_mrr: f64::NEG_INFINITY, ..Default::default() };
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        chunks.shuffle(&mut rng);
        let mut total = 0.0;
        for targets in &chunks {
            let Some((tape, loss)) = trainer.batch(&model, targets, &mut rng)? else {
                continue;
            };
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(ModelError::NonFinite { what: "training loss".into(), epoch });
            }
            total += value;
            let grads = tape.backward(loss)?.params();
            adam.step(&mut model.store, &grads)?;
        }
        let mrr = trainer.validate(&model, &valid, &filter)?;
        let improved = mrr > log.best_valid_mrr;
        if improved {
            log.best_valid_mrr = mrr;
            log.best_epoch = Some(epoch);
            best = Some(model.store.clone());
            stale = 0;
        } else {
            stale += 1;
        }
        let record = EpochRecord {
            epoch,
            loss: total,
            valid_mrr: mrr,
            wall_secs: start.elapsed().as_secs_f64(),
            improved,
            epochs_without_improvement: stale,
        };
        info!("epoch {epoch}: loss {total:.4} valid mrr {mrr:.4}");
        on_epoch(&record);
        log.epochs.push(record);
        if stale >= cfg.patience {
            log.stopped_early = true;
            break;
        }
    }
    if let Some(store) = best {
        model.store = store;
    }
    Ok(TrainOutcome { model, log })
}
