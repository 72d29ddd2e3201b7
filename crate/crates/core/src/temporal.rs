//! Temporal encoders over a window of structural embeddings.
//!
//! A [`Window`] holds, for consecutive time steps around a target `t`, the
//! structural embedding matrix of every entity and which entities were
//! active. The GRU encoder chains each entity's hidden state across its
//! active steps only, with the state decayed by the elapsed time; the
//! attention encoder pools over all active steps with a decay penalty and an
//! activity mask.

use rand::Rng;
use tkgc_tensor::{ParamId, ParamStore, Result, Tape, Tensor, Var};

use crate::data::Snapshot;
use crate::structural::xavier;

/// `exp(-max(0, lambda * delta + bias))`.
pub fn decay_weight(delta: f64, lambda: f64, bias: f64) -> f64 {
    (-(lambda * delta + bias).max(0.0)).exp()
}

/// Per step and entity: did the entity occur in that step's snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivityMask {
    entities: usize,
    flags: Vec<Vec<bool>>,
}

impl ActivityMask {
    pub fn from_snapshots(snapshots: &[Snapshot], entities: usize) -> Self {
        let flags = snapshots
            .iter()
            .map(|snap| {
                let mut row = vec![false; entities];
                for t in snap.triples() {
                    row[t.subject] = true;
                    row[t.object] = true;
                }
                row
            })
            .collect();
        Self { entities, flags }
    }

    pub fn entities(&self) -> usize {
        self.entities
    }

    pub fn steps(&self) -> usize {
        self.flags.len()
    }

    pub fn is_active(&self, step: usize, entity: usize) -> bool {
        self.flags[step][entity]
    }

    pub fn active_at(&self, step: usize) -> Vec<usize> {
        (0..self.entities).filter(|&i| self.flags[step][i]).collect()
    }

    /// Latest step index `< step` where `entity` is active.
    pub fn previous_active(&self, step: usize, entity: usize) -> Option<usize> {
        (0..step).rev().find(|&k| self.flags[k][entity])
    }

    /// Earliest step index `> step` where `entity` is active.
    pub fn next_active(&self, step: usize, entity: usize) -> Option<usize> {
        (step + 1..self.flags.len()).find(|&k| self.flags[k][entity])
    }
}

/// Structural embeddings over consecutive steps `times[0]..=times[last]`,
/// with `target` indexing the step being encoded.
#[derive(Clone, Debug)]
pub struct Window {
    pub times: Vec<usize>,
    pub target: usize,
    pub x: Vec<Var>,
    pub mask: ActivityMask,
}

impl Window {
    pub fn target_time(&self) -> usize {
        self.times[self.target]
    }
}

/// Learnable decay slope and offset, both `1 x 1`.
#[derive(Clone, Copy, Debug)]
pub struct DecayParams {
    pub lambda: ParamId,
    pub bias: ParamId,
}

impl DecayParams {
    pub fn init(store: &mut ParamStore, prefix: &str) -> Result<Self> {
        Ok(Self {
            lambda: store.insert(format!("{prefix}.lambda"), Tensor::scalar(0.1))?,
            bias: store.insert(format!("{prefix}.bias"), Tensor::scalar(0.0))?,
        })
    }

    pub fn values(&self, store: &ParamStore) -> (f64, f64) {
        (store.get(self.lambda).item(), store.get(self.bias).item())
    }

    /// Column of decay weights, one per entry of `deltas`.
    pub fn column(&self, tape: &mut Tape, store: &ParamStore, deltas: &[f64]) -> Result<Var> {
        let n = deltas.len();
        let lambda = tape.param(store, self.lambda);
        let bias = tape.param(store, self.bias);
        let d = tape.constant(Tensor::column(deltas.to_vec()));
        let ones = tape.constant(Tensor::full(n, 1, 1.0));
        let slope = tape.matmul(d, lambda)?;
        let offset = tape.matmul(ones, bias)?;
        let arg = tape.add(slope, offset)?;
        let arg = tape.max_const(arg, 0.0);
        let arg = tape.neg(arg);
        Ok(tape.exp(arg))
    }

    /// Row of additive attention penalties `-max(0, lambda * delta + bias)`.
    pub fn penalty_row(&self, tape: &mut Tape, store: &ParamStore, deltas: &[f64]) -> Result<Var> {
        let n = deltas.len();
        let lambda = tape.param(store, self.lambda);
        let bias = tape.param(store, self.bias);
        let d = tape.constant(Tensor::row(deltas.to_vec()));
        let ones = tape.constant(Tensor::full(1, n, 1.0));
        let slope = tape.matmul(lambda, d)?;
        let offset = tape.matmul(bias, ones)?;
        let arg = tape.add(slope, offset)?;
        let arg = tape.max_const(arg, 0.0);
        Ok(tape.neg(arg))
    }
}

/// Repeats an `n x 1` column across `cols` columns.
pub fn broadcast_column(tape: &mut Tape, column: Var, cols: usize) -> Result<Var> {
    let ones = tape.constant(Tensor::full(1, cols, 1.0));
    tape.matmul(column, ones)
}

/// Standard GRU cell on row vectors:
/// `r = sig(x W_ir + h W_hr + b_r)`, `u = sig(x W_iz + h W_hz + b_z)`,
/// `n = tanh(x W_in + b_in + r * (h W_hn + b_hn))`, `h' = n + u * (h - n)`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_ir: ParamId,
    pub w_iz: ParamId,
    pub w_in: ParamId,
    pub w_hr: ParamId,
    pub w_hz: ParamId,
    pub w_hn: ParamId,
    pub b_r: ParamId,
    pub b_z: ParamId,
    pub b_in: ParamId,
    pub b_hn: ParamId,
}

impl GruCell {
    pub fn init(store: &mut ParamStore, rng: &mut impl Rng, prefix: &str, dim: usize) -> Result<Self> {
        let mut w = |name: &str, store: &mut ParamStore| store.insert(format!("{prefix}.{name}"), xavier(rng, dim, dim));
        let w_ir = w("w_ir", store)?;
        let w_iz = w("w_iz", store)?;
        let w_in = w("w_in", store)?;
        let w_hr = w("w_hr", store)?;
        let w_hz = w("w_hz", store)?;
        let w_hn = w("w_hn", store)?;
        let b = |name: &str, store: &mut ParamStore| store.insert(format!("{prefix}.{name}"), Tensor::zeros(1, dim));
        Ok(Self {
            w_ir,
            w_iz,
            w_in,
            w_hr,
            w_hz,
            w_hn,
            b_r: b("b_r", store)?,
            b_z: b("b_z", store)?,
            b_in: b("b_in", store)?,
            b_hn: b("b_hn", store)?,
        })
    }

    pub fn step(&self, tape: &mut Tape, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let mut p = |id| tape.param(store, id);
        let (w_ir, w_iz, w_in, w_hr, w_hz, w_hn) = (p(self.w_ir), p(self.w_iz), p(self.w_in), p(self.w_hr), p(self.w_hz), p(self.w_hn));
        let (b_r, b_z, b_in, b_hn) = (p(self.b_r), p(self.b_z), p(self.b_in), p(self.b_hn));

        let xr = tape.matmul(x, w_ir)?;
        let hr = tape.matmul(h, w_hr)?;
        let r = tape.add(xr, hr)?;
        let r = tape.add_row(r, b_r)?;
        let r = tape.sigmoid(r);

        let xz = tape.matmul(x, w_iz)?;
        let hz = tape.matmul(h, w_hz)?;
        let u = tape.add(xz, hz)?;
        let u = tape.add_row(u, b_z)?;
        let u = tape.sigmoid(u);

        let xn = tape.matmul(x, w_in)?;
        let xn = tape.add_row(xn, b_in)?;
        let hn = tape.matmul(h, w_hn)?;
        let hn = tape.add_row(hn, b_hn)?;
        let gated = tape.mul(r, hn)?;
        let n = tape.add(xn, gated)?;
        let n = tape.tanh(n);

        let diff = tape.sub(h, n)?;
        let keep = tape.mul(u, diff)?;
        tape.add(n, keep)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Past,
    Bidirectional,
}

/// Runs `cell` over the active steps `order` of `window`, then once more at
/// the target for every entity with input `x_target`.
fn gru_chain(
    tape: &mut Tape,
    store: &ParamStore,
    cell: &GruCell,
    decay: &DecayParams,
    window: &Window,
    order: &[usize],
    x_target: Var,
) -> Result<Var> {
    let entities = window.mask.entities();
    let dim = tape.value(x_target).cols();
    let t = window.target_time() as f64;
    let mut h = tape.constant(Tensor::zeros(entities, dim));
    let mut last: Vec<Option<usize>> = vec![None; entities];
    for &k in order {
        let idx = window.mask.active_at(k);
        if idx.is_empty() {
            continue;
        }
        let time = window.times[k];
        let deltas: Vec<f64> = idx.iter().map(|&i| last[i].map_or(0.0, |l| time.abs_diff(l) as f64)).collect();
        let prev = tape.gather_rows(h, &idx)?;
        let gamma = decay.column(tape, store, &deltas)?;
        let gamma = broadcast_column(tape, gamma, dim)?;
        let decayed = tape.mul(prev, gamma)?;
        let x = tape.gather_rows(window.x[k], &idx)?;
        let next = cell.step(tape, store, x, decayed)?;
        let delta = tape.sub(next, prev)?;
        let delta = tape.scatter_add_rows(delta, &idx, entities)?;
        h = tape.add(h, delta)?;
        for &i in &idx {
            last[i] = Some(time);
        }
    }
    let deltas: Vec<f64> = last.iter().map(|l| l.map_or(0.0, |l| (t - l as f64).abs())).collect();
    let gamma = decay.column(tape, store, &deltas)?;
    let gamma = broadcast_column(tape, gamma, dim)?;
    let decayed = tape.mul(h, gamma)?;
    cell.step(tape, store, x_target, decayed)
}

/// Decayed recurrent encoding of the target step. `x_target` replaces the
/// target's structural embeddings (e.g. after imputation). The backward
/// cell is required for, and only used by, the bidirectional direction; its
/// output is added to the forward output.
pub fn encode_gru(
    tape: &mut Tape,
    store: &ParamStore,
    forward: &GruCell,
    backward: Option<&GruCell>,
    decay: &DecayParams,
    window: &Window,
    x_target: Var,
) -> Result<Var> {
    let past: Vec<usize> = (0..window.target).collect();
    let z = gru_chain(tape, store, forward, decay, window, &past, x_target)?;
    match backward {
        None => Ok(z),
        Some(cell) => {
            let future: Vec<usize> = (window.target + 1..window.times.len()).rev().collect();
            let zb = gru_chain(tape, store, cell, decay, window, &future, x_target)?;
            tape.add(z, zb)
        }
    }
}

/// Query/key/value projections for multi-head attention over time.
#[derive(Clone, Debug)]
pub struct SaParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub heads: usize,
}

impl SaParams {
    pub fn init(store: &mut ParamStore, rng: &mut impl Rng, dim: usize, heads: usize) -> Result<Self> {
        assert!(heads > 0 && dim.is_multiple_of(heads), "dimension {dim} not divisible by {heads} heads");
        Ok(Self {
            wq: store.insert("sa.wq", xavier(rng, dim, dim))?,
            wk: store.insert("sa.wk", xavier(rng, dim, dim))?,
            wv: store.insert("sa.wv", xavier(rng, dim, dim))?,
            heads,
        })
    }
}

/// `d x (d / heads)` matrix selecting the columns of head `h`.
fn head_selector(dim: usize, heads: usize, h: usize) -> Tensor {
    let dh = dim / heads;
    let mut sel = Tensor::zeros(dim, dh);
    for k in 0..dh {
        sel.set(h * dh + k, k, 1.0);
    }
    sel
}

/// Per-entity attention mask over window steps, row-major `entities x steps`.
/// Entities inactive everywhere attend to the target step alone.
pub fn attention_keep(mask: &ActivityMask, target: usize) -> Vec<bool> {
    let (n, steps) = (mask.entities(), mask.steps());
    let mut keep = vec![false; n * steps];
    for i in 0..n {
        let row = &mut keep[i * steps..(i + 1) * steps];
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = mask.is_active(k, i);
        }
        if !row.iter().any(|&b| b) {
            row[target] = true;
        }
    }
    keep
}

/// Attention weights and pooled output of one encoding.
pub struct SaOutput {
    pub z: Var,
    /// One `entities x steps` weight matrix per head.
    pub weights: Vec<Var>,
}

/// Masked multi-head attention pooling of the window into the target step.
/// Window steps on both sides of the target are used; pass a past-only
/// window for the unidirectional model.
pub fn encode_sa(
    tape: &mut Tape,
    store: &ParamStore,
    params: &SaParams,
    decay: &DecayParams,
    window: &Window,
    x_target: Var,
) -> Result<SaOutput> {
    let dim = tape.value(x_target).cols();
    let heads = params.heads;
    let dh = dim / heads;
    let t = window.target_time();
    let steps = window.times.len();
    let xs: Vec<Var> = (0..steps).map(|k| if k == window.target { x_target } else { window.x[k] }).collect();
    let wq = tape.param(store, params.wq);
    let wk = tape.param(store, params.wk);
    let wv = tape.param(store, params.wv);
    let q = tape.matmul(x_target, wq)?;
    let mut keys = Vec::with_capacity(steps);
    let mut values = Vec::with_capacity(steps);
    for &x in &xs {
        keys.push(tape.matmul(x, wk)?);
        values.push(tape.matmul(x, wv)?);
    }
    let deltas: Vec<f64> = window.times.iter().map(|&s| s.abs_diff(t) as f64).collect();
    let penalty = decay.penalty_row(tape, store, &deltas)?;
    let keep = attention_keep(&window.mask, window.target);
    let sum_cols = tape.constant(Tensor::full(dh, 1, 1.0));
    let scale = 1.0 / (dh as f64).sqrt();

    let mut outputs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let sel = tape.constant(head_selector(dim, heads, h));
        let qh = tape.matmul(q, sel)?;
        let mut cols = Vec::with_capacity(steps);
        for &k in &keys {
            let kh = tape.matmul(k, sel)?;
            let prod = tape.mul(qh, kh)?;
            let dot = tape.matmul(prod, sum_cols)?;
            cols.push(tape.scale(dot, scale));
        }
        let logits = tape.concat_cols(&cols)?;
        let logits = tape.add_row(logits, penalty)?;
        let beta = tape.masked_softmax(logits, &keep)?;
        let mut acc: Option<Var> = None;
        for (k, &v) in values.iter().enumerate() {
            let mut pick = Tensor::zeros(steps, 1);
            pick.set(k, 0, 1.0);
            let pick = tape.constant(pick);
            let col = tape.matmul(beta, pick)?;
            let col = broadcast_column(tape, col, dh)?;
            let vh = tape.matmul(v, sel)?;
            let term = tape.mul(col, vh)?;
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        outputs.push(acc.expect("window has the target step"));
        weights.push(beta);
    }
    let z = tape.concat_cols(&outputs)?;
    Ok(SaOutput { z, weights })
}

/// `z + p_t` for every row of `z`, with `positions` the `T x d` table.
pub fn add_positional(tape: &mut Tape, z: Var, positions: Var, t: usize) -> Result<Var> {
    let p = tape.gather_rows(positions, &[t])?;
    tape.add_row(z, p)
}
