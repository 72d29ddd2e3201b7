//! Triple scoring, negative sampling and the training objective.

use std::sync::atomic::{AtomicBool, Ordering};

use log::{debug, warn};
use rand::Rng;
use tkgc_tensor::{Tape, Tensor, Var};

use crate::data::{Quadruple, TrueTripleIndex};
use crate::error::{ModelError, Result};

static SMALL_POOL_WARNED: AtomicBool = AtomicBool::new(false);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DecoderKind {
    TransE,
    DistMult,
    #[default]
    ComplEx,
}

impl DecoderKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Some(Self::TransE),
            "distmult" => Some(Self::DistMult),
            "complex" => Some(Self::ComplEx),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::TransE => "transe",
            Self::DistMult => "distmult",
            Self::ComplEx => "complex",
        }
    }

    pub fn check_dim(self, dim: usize) -> Result<()> {
        if self == Self::ComplEx && !dim.is_multiple_of(2) {
            return Err(ModelError::OddDimension(dim));
        }
        Ok(())
    }
}

/// Plausibility of `(s, r, o)`; higher is better. ComplEx reads the first
/// half of each vector as the real part and the second half as imaginary.
pub fn score(kind: DecoderKind, s: &[f64], r: &[f64], o: &[f64]) -> Result<f64> {
    debug_assert!(s.len() == r.len() && r.len() == o.len());
    kind.check_dim(s.len())?;
    Ok(match kind {
        DecoderKind::TransE => -s.iter().zip(r).zip(o).map(|((a, b), c)| (a + b - c).abs()).sum::<f64>(),
        DecoderKind::DistMult => s.iter().zip(r).zip(o).map(|((a, b), c)| a * b * c).sum(),
        DecoderKind::ComplEx => {
            let h = s.len() / 2;
            (0..h)
                .map(|k| {
                    let (sr, si) = (s[k], s[h + k]);
                    let (rr, ri) = (r[k], r[h + k]);
                    let (or, oi) = (o[k], o[h + k]);
                    sr * rr * or + si * rr * oi + sr * ri * oi - si * ri * or
                })
                .sum()
        }
    })
}

fn half_selector(dim: usize, offset: usize) -> Tensor {
    let h = dim / 2;
    let mut sel = Tensor::zeros(dim, h);
    for k in 0..h {
        sel.set(offset + k, k, 1.0);
    }
    sel
}

/// Row-wise scores of `n x d` matrices as an `n x 1` column.
pub fn score_rows(tape: &mut Tape, kind: DecoderKind, s: Var, r: Var, o: Var) -> Result<Var> {
    let dim = tape.value(s).cols();
    kind.check_dim(dim)?;
    let out = match kind {
        DecoderKind::TransE => {
            let sum = tape.add(s, r)?;
            let diff = tape.sub(sum, o)?;
            let pos = tape.relu(diff);
            let neg = tape.neg(diff);
            let neg = tape.relu(neg);
            let abs = tape.add(pos, neg)?;
            let ones = tape.constant(Tensor::full(dim, 1, 1.0));
            let l1 = tape.matmul(abs, ones)?;
            tape.neg(l1)
        }
        DecoderKind::DistMult => {
            let sr = tape.mul(s, r)?;
            let sro = tape.mul(sr, o)?;
            let ones = tape.constant(Tensor::full(dim, 1, 1.0));
            tape.matmul(sro, ones)?
        }
        DecoderKind::ComplEx => {
            let re = tape.constant(half_selector(dim, 0));
            let im = tape.constant(half_selector(dim, dim / 2));
            let (sr, si) = (tape.matmul(s, re)?, tape.matmul(s, im)?);
            let (rr, ri) = (tape.matmul(r, re)?, tape.matmul(r, im)?);
            let (or, oi) = (tape.matmul(o, re)?, tape.matmul(o, im)?);
            let mut terms = Vec::with_capacity(4);
            for (a, b, c, sign) in [(sr, rr, or, 1.0), (si, rr, oi, 1.0), (sr, ri, oi, 1.0), (si, ri, or, -1.0)] {
                let ab = tape.mul(a, b)?;
                let abc = tape.mul(ab, c)?;
                terms.push(if sign < 0.0 { tape.neg(abc) } else { abc });
            }
            let mut acc = terms[0];
            for &t in &terms[1..] {
                acc = tape.add(acc, t)?;
            }
            let ones = tape.constant(Tensor::full(dim / 2, 1, 1.0));
            tape.matmul(acc, ones)?
        }
    };
    Ok(out)
}

/// Corrupted entities for one positive fact.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NegativeBatch {
    /// Replacements for the object slot.
    pub objects: Vec<usize>,
    /// Replacements for the subject slot.
    pub subjects: Vec<usize>,
}

/// Draws `k` entities uniformly with replacement from those not in `truths`
/// (sorted). Returns `None` when every entity is excluded.
fn draw_excluding(truths: &[usize], entities: usize, k: usize, rng: &mut impl Rng) -> Option<Vec<usize>> {
    let valid = entities - truths.len();
    if valid == 0 {
        return None;
    }
    if 2 * truths.len() > entities {
        let pool: Vec<usize> = (0..entities).filter(|e| truths.binary_search(e).is_err()).collect();
        return Some((0..k).map(|_| pool[rng.random_range(0..pool.len())]).collect());
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let e = rng.random_range(0..entities);
        if truths.binary_search(&e).is_err() {
            out.push(e);
        }
    }
    Some(out)
}

/// `k` object and `k` subject corruptions of `q`, none of which forms a fact
/// known to `index` at `q.time`.
pub fn sample_negatives(q: &Quadruple, index: &TrueTripleIndex, entities: usize, k: usize, rng: &mut impl Rng) -> Result<NegativeBatch> {
    if k == 0 {
        return Err(ModelError::Config("negative sample count must be at least 1".into()));
    }
    let true_objects = index.objects(q.subject, q.relation, q.time);
    let true_subjects = index.subjects(q.relation, q.object, q.time);
    for (slot, truths) in [("object", true_objects), ("subject", true_subjects)] {
        let valid = entities.saturating_sub(truths.len());
        if valid < k {
            if !SMALL_POOL_WARNED.swap(true, Ordering::Relaxed) {
                warn!("only {valid} valid {slot} corruptions for {q:?}; sampling {k} with replacement (reported once)");
            }
            debug!("only {valid} valid {slot} corruptions for {q:?}");
        }
    }
    let objects = draw_excluding(true_objects, entities, k, rng).ok_or(ModelError::NoNegatives)?;
    let subjects = draw_excluding(true_subjects, entities, k, rng).ok_or(ModelError::NoNegatives)?;
    Ok(NegativeBatch { objects, subjects })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossMode {
    /// `-log softmax` of the positive among positive and negatives.
    #[default]
    CrossEntropy,
    /// `-exp(pos) / sum(exp(neg))`, negatives only in the denominator.
    ProbSum,
}

impl LossMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cross_entropy" | "ce" => Some(Self::CrossEntropy),
            "prob_sum" => Some(Self::ProbSum),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::CrossEntropy => "cross_entropy",
            Self::ProbSum => "prob_sum",
        }
    }
}

/// Summed loss over `scores` (`n x 1`), laid out as consecutive groups of
/// `group` rows with the positive first.
pub fn grouped_loss(tape: &mut Tape, scores: Var, group: usize, mode: LossMode) -> Result<Var> {
    if group < 2 {
        return Err(ModelError::NoNegatives);
    }
    let n = tape.value(scores).rows();
    let queries = n / group;
    let mut shift = vec![0.0; n];
    for g in 0..queries {
        let rows = &tape.value(scores).data()[g * group..(g + 1) * group];
        let m = rows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        shift[g * group..(g + 1) * group].fill(m);
    }
    let shift = tape.constant(Tensor::column(shift));
    let shifted = tape.sub(scores, shift)?;
    let e = tape.exp(shifted);
    let positives: Vec<usize> = (0..queries).map(|g| g * group).collect();
    let pos = tape.gather_rows(shifted, &positives)?;
    Ok(match mode {
        LossMode::CrossEntropy => {
            let owner: Vec<usize> = (0..n).map(|i| i / group).collect();
            let denom = tape.scatter_add_rows(e, &owner, queries)?;
            let log_denom = tape.log(denom);
            let per_query = tape.sub(log_denom, pos)?;
            tape.sum(per_query)
        }
        LossMode::ProbSum => {
            let negatives: Vec<usize> = (0..n).filter(|i| i % group != 0).collect();
            let owner: Vec<usize> = negatives.iter().map(|i| i / group).collect();
            let neg = tape.gather_rows(e, &negatives)?;
            let denom = tape.scatter_add_rows(neg, &owner, queries)?;
            let log_denom = tape.log(denom);
            let log_ratio = tape.sub(pos, log_denom)?;
            let ratio = tape.exp(log_ratio);
            let total = tape.sum(ratio);
            tape.neg(total)
        }
    })
}
