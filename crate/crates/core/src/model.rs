//! Full model: structural encoder, optional temporal encoder, imputation,
//! positional embeddings, gating and decoder.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tkgc_tensor::{ParamId, ParamStore, Tape, Tensor, Var};

use crate::data::{Quadruple, Snapshot};
use crate::decoder::{grouped_loss, score, score_rows, DecoderKind, LossMode, NegativeBatch};
use crate::error::{ModelError, Result};
use crate::heterogeneity::{gate_object_query, gate_subject_query, impute_window, mix_rows, FrequencyTransform, GatingParams};
use crate::structural::{encode_snapshot, xavier, RgcnParams};
use crate::temporal::{add_positional, encode_gru, encode_sa, ActivityMask, DecayParams, GruCell, SaParams, Window};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Variant {
    /// Structural encoder only.
    Srgcn,
    #[default]
    TempGru,
    TempSa,
}

impl Variant {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srgcn" => Some(Self::Srgcn),
            "temp-gru" | "temp_gru" | "gru" => Some(Self::TempGru),
            "temp-sa" | "temp_sa" | "sa" => Some(Self::TempSa),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Srgcn => "srgcn",
            Self::TempGru => "temp-gru",
            Self::TempSa => "temp-sa",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub entities: usize,
    pub relations: usize,
    pub steps: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub window: usize,
    pub bidirectional: bool,
    pub gating: bool,
    pub imputation: bool,
    pub positional: bool,
    pub decoder: DecoderKind,
    pub gate_hidden: usize,
    pub frequency_transform: FrequencyTransform,
}

impl ModelConfig {
    pub fn new(variant: Variant, entities: usize, relations: usize, steps: usize) -> Self {
        Self {
            variant,
            entities,
            relations,
            steps,
            dim: 128,
            layers: 2,
            heads: 8,
            window: 15,
            bidirectional: false,
            gating: false,
            imputation: false,
            positional: false,
            decoder: DecoderKind::ComplEx,
            gate_hidden: 64,
            frequency_transform: FrequencyTransform::Log1p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.entities == 0 || self.relations == 0 || self.steps == 0 {
            return bad("model needs at least one entity, relation and step".into());
        }
        if self.dim == 0 || self.layers == 0 {
            return bad("dim and layers must be positive".into());
        }
        self.decoder.check_dim(self.dim)?;
        if self.variant == Variant::TempSa && (self.heads == 0 || !self.dim.is_multiple_of(self.heads)) {
            return bad(format!("dim {} is not divisible by {} heads", self.dim, self.heads));
        }
        if self.variant == Variant::Srgcn && (self.gating || self.imputation || self.bidirectional) {
            return bad("gating, imputation and bidirectional need a temporal variant".into());
        }
        if self.gating && self.gate_hidden == 0 {
            return bad("gate_hidden must be positive".into());
        }
        Ok(())
    }

    /// Inclusive range of context steps used to encode step `t`.
    pub fn window_range(&self, t: usize) -> (usize, usize) {
        match (self.variant, self.bidirectional) {
            (Variant::Srgcn, _) => (t, t),
            (_, false) => (t.saturating_sub(self.window), t),
            (_, true) => {
                let half = self.window / 2;
                (t.saturating_sub(half), (t + half).min(self.steps - 1))
            }
        }
    }
}

/// Parameter handles into a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub rgcn: RgcnParams,
    pub relations: ParamId,
    pub gru_forward: Option<GruCell>,
    pub gru_backward: Option<GruCell>,
    pub sa: Option<SaParams>,
    pub decay: Option<DecayParams>,
    pub impute: Option<DecayParams>,
    pub gating: Option<GatingParams>,
    pub positions: Option<ParamId>,
}

/// Embeddings of every entity at one target step, on a tape.
#[derive(Clone, Copy, Debug)]
pub struct EncodedStep {
    pub time: usize,
    /// Structural embeddings, imputed when imputation is on.
    pub x: Var,
    /// Temporal embeddings (equal to `x` for the structural-only model).
    pub z: Var,
}

/// Positives of one target step with their negatives and gate inputs.
#[derive(Clone, Debug, Default)]
pub struct StepBatch {
    pub time: usize,
    pub positives: Vec<Quadruple>,
    pub negatives: Vec<NegativeBatch>,
    /// `[f_s, f_r, f_sr]` per positive; empty without gating.
    pub object_features: Vec<[u64; 3]>,
    /// `[f_o, f_r, f_ro]` per positive; empty without gating.
    pub subject_features: Vec<[u64; 3]>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub store: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let rgcn = RgcnParams::init(&mut store, &mut rng, c.entities, c.relations, c.dim, c.layers)?;
        let relations = store.insert("relation.emb", xavier(&mut rng, c.relations, c.dim))?;
        let (mut gru_forward, mut gru_backward, mut sa) = (None, None, None);
        match c.variant {
            Variant::Srgcn => {}
            Variant::TempGru => {
                gru_forward = Some(GruCell::init(&mut store, &mut rng, "gru_f", c.dim)?);
                if c.bidirectional {
                    gru_backward = Some(GruCell::init(&mut store, &mut rng, "gru_b", c.dim)?);
                }
            }
            Variant::TempSa => sa = Some(SaParams::init(&mut store, &mut rng, c.dim, c.heads)?),
        }
        let decay = match c.variant {
            Variant::Srgcn => None,
            _ => Some(DecayParams::init(&mut store, "decay")?),
        };
        let impute = if c.imputation { Some(DecayParams::init(&mut store, "impute")?) } else { None };
        let gating = if c.gating { Some(GatingParams::init(&mut store, &mut rng, c.gate_hidden, c.frequency_transform)?) } else { None };
        let positions = if c.positional { Some(store.insert("pos", xavier(&mut rng, c.steps, c.dim))?) } else { None };
        Ok(Self { params: ModelParams { rgcn, relations, gru_forward, gru_backward, sa, decay, impute, gating, positions }, config, store })
    }

    /// Encodes each step in `targets` with `context` (one snapshot per step
    /// of the time axis) as structural input.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, context: &[Snapshot], targets: &[usize]) -> Result<Vec<EncodedStep>> {
        let c = &self.config;
        let p = &self.params;
        let mut needed = BTreeSet::new();
        for &t in targets {
            let (lo, hi) = c.window_range(t);
            needed.extend(lo..=hi);
        }
        let base = tape.param(store, p.rgcn.base);
        let mut x = vec![None; c.steps];
        for &k in &needed {
            x[k] = Some(encode_snapshot(tape, store, &p.rgcn, &context[k], base)?);
        }
        let mut out = Vec::with_capacity(targets.len());
        for &t in targets {
            let (lo, hi) = c.window_range(t);
            let window = Window {
                times: (lo..=hi).collect(),
                target: t - lo,
                x: (lo..=hi).map(|k| x[k].expect("encoded above")).collect(),
                mask: ActivityMask::from_snapshots(&context[lo..=hi], c.entities),
            };
            let x_t = match &p.impute {
                Some(imp) => impute_window(tape, store, imp, &window, c.bidirectional)?,
                None => window.x[window.target],
            };
            let mut z = match c.variant {
                Variant::Srgcn => x_t,
                Variant::TempGru => {
                    let decay = p.decay.as_ref().expect("temporal variant");
                    let fwd = p.gru_forward.as_ref().expect("gru variant");
                    encode_gru(tape, store, fwd, p.gru_backward.as_ref(), decay, &window, x_t)?
                }
                Variant::TempSa => {
                    let decay = p.decay.as_ref().expect("temporal variant");
                    encode_sa(tape, store, p.sa.as_ref().expect("sa variant"), decay, &window, x_t)?.z
                }
            };
            if let Some(pos) = p.positions {
                let pos = tape.param(store, pos);
                z = add_positional(tape, z, pos, t)?;
            }
            out.push(EncodedStep { time: t, x: x_t, z });
        }
        Ok(out)
    }

    fn gate_column(&self, tape: &mut Tape, store: &ParamStore, gate: crate::heterogeneity::GateMlp, features: &[[u64; 3]]) -> Result<Var> {
        let g = self.params.gating.as_ref().expect("gating on");
        let rows: Vec<[f64; 3]> = features.iter().map(|f| g.transform.apply(*f)).collect();
        let feats = tape.constant(Tensor::from_rows(&rows)?);
        Ok(gate.forward(tape, store, feats)?)
    }

    /// Rows of entity embeddings, gated per query when gating is on.
    /// `owners[i]` is the query of row `i`.
    fn entity_rows(&self, tape: &mut Tape, enc: &EncodedStep, entities: &[usize], alpha: Option<Var>, owners: &[usize]) -> Result<Var> {
        let z = tape.gather_rows(enc.z, entities)?;
        match alpha {
            None => Ok(z),
            Some(a) => {
                let x = tape.gather_rows(enc.x, entities)?;
                let a = tape.gather_rows(a, owners)?;
                Ok(mix_rows(tape, a, x, z)?)
            }
        }
    }

    /// Summed object- and subject-query loss over `batches`, encoded from
    /// `context`.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        context: &[Snapshot],
        batches: &[StepBatch],
        mode: LossMode,
    ) -> Result<Var> {
        let targets: Vec<usize> = batches.iter().map(|b| b.time).collect();
        let encoded = self.encode(tape, store, context, &targets)?;
        let rel = tape.param(store, self.params.relations);
        let mut total: Option<Var> = None;
        for (b, enc) in batches.iter().zip(&encoded) {
            if b.positives.is_empty() {
                continue;
            }
            let k = b.negatives[0].objects.len();
            let group = k + 1;
            for object_query in [true, false] {
                let mut fixed = Vec::new();
                let mut cands = Vec::new();
                let mut rels = Vec::new();
                let mut owners = Vec::new();
                for (qi, (q, neg)) in b.positives.iter().zip(&b.negatives).enumerate() {
                    let (anchor, answer, others) =
                        if object_query { (q.subject, q.object, &neg.objects) } else { (q.object, q.subject, &neg.subjects) };
                    if others.len() != k {
                        return Err(ModelError::Config("ragged negative batch".into()));
                    }
                    for e in std::iter::once(answer).chain(others.iter().copied()) {
                        fixed.push(anchor);
                        cands.push(e);
                        rels.push(q.relation);
                        owners.push(qi);
                    }
                }
                let (fixed_alpha, cand_alpha) = match &self.params.gating {
                    None => (None, None),
                    Some(g) => {
                        let (feats, fixed_gate, cand_gate) =
                            if object_query { (&b.object_features, g.os, g.oo) } else { (&b.subject_features, g.so, g.ss) };
                        (Some(self.gate_column(tape, store, fixed_gate, feats)?), Some(self.gate_column(tape, store, cand_gate, feats)?))
                    }
                };
                let fixed_rows = self.entity_rows(tape, enc, &fixed, fixed_alpha, &owners)?;
                let cand_rows = self.entity_rows(tape, enc, &cands, cand_alpha, &owners)?;
                let r = tape.gather_rows(rel, &rels)?;
                let scores = if object_query {
                    score_rows(tape, self.config.decoder, fixed_rows, r, cand_rows)?
                } else {
                    score_rows(tape, self.config.decoder, cand_rows, r, fixed_rows)?
                };
                let loss = grouped_loss(tape, scores, group, mode)?;
                total = Some(match total {
                    None => loss,
                    Some(t) => tape.add(t, loss)?,
                });
            }
        }
        match total {
            Some(t) => Ok(t),
            None => Ok(tape.constant(Tensor::scalar(0.0))),
        }
    }

    /// Plain-value embeddings of step `t` for scoring.
    pub fn freeze_step(&self, context: &[Snapshot], t: usize) -> Result<FrozenStep> {
        let mut tape = Tape::new();
        let enc = self.encode(&mut tape, &self.store, context, &[t])?[0];
        Ok(FrozenStep { time: t, x: tape.value(enc.x).clone(), z: tape.value(enc.z).clone() })
    }

    /// Scores of every entity as the object of `(s, r, ?)` (`object_query`)
    /// or the subject of `(?, r, o)`. `features` are the gate inputs.
    pub fn score_candidates(&self, frozen: &FrozenStep, q: &Quadruple, object_query: bool, features: [u64; 3]) -> Result<Vec<f64>> {
        let rel = self.store.get(self.params.relations).row_slice(q.relation);
        let anchor = if object_query { q.subject } else { q.object };
        let (fixed, cands) = match &self.params.gating {
            None => (frozen.z.row_slice(anchor).to_vec(), frozen.z.clone()),
            Some(g) => {
                let (xa, za) = (frozen.x.row_slice(anchor), frozen.z.row_slice(anchor));
                if object_query {
                    gate_object_query(&self.store, g, xa, za, &frozen.x, &frozen.z, features)
                } else {
                    gate_subject_query(&self.store, g, xa, za, &frozen.x, &frozen.z, features)
                }
            }
        };
        (0..self.config.entities)
            .map(|e| {
                let c = cands.row_slice(e);
                if object_query {
                    score(self.config.decoder, &fixed, rel, c)
                } else {
                    score(self.config.decoder, c, rel, &fixed)
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrozenStep {
    pub time: usize,
    pub x: Tensor,
    pub z: Tensor,
}
