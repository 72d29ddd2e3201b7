//! Per-snapshot relational message passing.
//!
//! Each layer computes, for every entity `i`,
//! `h_i' = act( sum_r sum_{j in N_i^r} h_j W_r / |N_i^r| + h_i W_s )`
//! with row-vector embeddings. Every relation `r` has an inverse `r + R`, so
//! a fact `(s, r, o)` sends `s -> o` under `r` and `o -> s` under `r + R`.
//! Hidden layers use ReLU, the last layer is linear.

use std::collections::HashMap;

use rand::Rng;
use tkgc_tensor::{ParamId, ParamStore, Result, Tape, Tensor, Var};

use crate::data::{Snapshot, Triple};

/// Uniform Xavier initialisation for a `rows x cols` matrix.
pub fn xavier(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

#[derive(Clone, Debug)]
pub struct RgcnLayer {
    /// One matrix per relation, inverses at `R..2R`.
    pub relations: Vec<ParamId>,
    pub self_loop: ParamId,
}

/// Parameter handles of the structural encoder. Shared across all steps.
#[derive(Clone, Debug)]
pub struct RgcnParams {
    pub base: ParamId,
    pub layers: Vec<RgcnLayer>,
    pub relation_count: usize,
    pub dim: usize,
}

impl RgcnParams {
    pub fn init(store: &mut ParamStore, rng: &mut impl Rng, entities: usize, relations: usize, dim: usize, layers: usize) -> Result<Self> {
        let base = store.insert("entity.base", xavier(rng, entities, dim))?;
        let mut out = Vec::with_capacity(layers);
        for l in 0..layers {
            let mut rel = Vec::with_capacity(2 * relations);
            for r in 0..2 * relations {
                rel.push(store.insert(format!("rgcn.{l}.rel.{r}"), xavier(rng, dim, dim))?);
            }
            let self_loop = store.insert(format!("rgcn.{l}.self"), xavier(rng, dim, dim))?;
            out.push(RgcnLayer { relations: rel, self_loop });
        }
        Ok(Self { base, layers: out, relation_count: relations, dim })
    }
}

type EdgeGroup = (usize, Vec<usize>, Vec<usize>, Vec<f64>);

/// Edges grouped by (inverse-augmented) relation with `1/|N_i^r|` weights.
#[derive(Clone, Debug, Default)]
pub struct EdgeGroups {
    /// `(relation, sources, destinations, weights)`.
    groups: Vec<EdgeGroup>,
}

impl EdgeGroups {
    pub fn new(triples: &[Triple], relations: usize) -> Self {
        let mut by_rel: HashMap<usize, (Vec<usize>, Vec<usize>)> = HashMap::new();
        for t in triples {
            let fwd = by_rel.entry(t.relation).or_default();
            fwd.0.push(t.subject);
            fwd.1.push(t.object);
            let inv = by_rel.entry(t.relation + relations).or_default();
            inv.0.push(t.object);
            inv.1.push(t.subject);
        }
        let mut groups: Vec<_> = by_rel
            .into_iter()
            .map(|(r, (src, dst))| {
                let mut deg: HashMap<usize, usize> = HashMap::new();
                for &d in &dst {
                    *deg.entry(d).or_default() += 1;
                }
                let w = dst.iter().map(|d| 1.0 / deg[d] as f64).collect();
                (r, src, dst, w)
            })
            .collect();
        groups.sort_by_key(|g| g.0);
        Self { groups }
    }
}

/// Runs all layers on one snapshot, starting from the base embedding matrix
/// `base` (`|E| x d`). Returns `x_t` for every entity.
pub fn encode_snapshot(tape: &mut Tape, store: &ParamStore, params: &RgcnParams, snapshot: &Snapshot, base: Var) -> Result<Var> {
    let edges = EdgeGroups::new(snapshot.triples(), params.relation_count);
    encode_edges(tape, store, params, &edges, base)
}

pub fn encode_edges(tape: &mut Tape, store: &ParamStore, params: &RgcnParams, edges: &EdgeGroups, base: Var) -> Result<Var> {
    let entities = tape.value(base).rows();
    let d = params.dim;
    let mut h = base;
    for (l, layer) in params.layers.iter().enumerate() {
        let ws = tape.param(store, layer.self_loop);
        let mut acc = tape.matmul(h, ws)?;
        for (r, src, dst, w) in &edges.groups {
            let wr = tape.param(store, layer.relations[*r]);
            let gathered = tape.gather_rows(h, src)?;
            let msg = tape.matmul(gathered, wr)?;
            let norm: Vec<f64> = w.iter().flat_map(|&v| std::iter::repeat_n(v, d)).collect();
            let norm = tape.constant(Tensor::matrix(src.len(), d, norm)?);
            let msg = tape.mul(msg, norm)?;
            let agg = tape.scatter_add_rows(msg, dst, entities)?;
            acc = tape.add(acc, agg)?;
        }
        h = if l + 1 < params.layers.len() { tape.relu(acc) } else { acc };
    }
    Ok(h)
}

/// Drops each triple independently: the snapshot at `current` with
/// probability `current_rate`, every other snapshot with `reference_rate`.
pub fn temporal_edge_dropout(
    window: &[Snapshot],
    current: usize,
    current_rate: f64,
    reference_rate: f64,
    rng: &mut impl Rng,
) -> Vec<Snapshot> {
    window
        .iter()
        .enumerate()
        .map(|(k, snap)| {
            let rate = if k == current { current_rate } else { reference_rate };
            if rate <= 0.0 {
                return snap.clone();
            }
            let kept = snap.triples().iter().filter(|_| rng.random::<f64>() >= rate).copied().collect();
            Snapshot::new(snap.time, kept)
        })
        .collect()
}
