//! Temporal pattern frequencies, imputation of inactive entities and
//! frequency-based gating between structural and temporal embeddings.

use std::collections::{BTreeSet, HashMap};
use std::io::{self, Write};

use rand::Rng;
use tkgc_tensor::{ParamId, ParamStore, Result, Tape, Tensor, Var};

use crate::data::{Quadruple, Split, TkgDataset, Triple};
use crate::structural::xavier;
use crate::temporal::{broadcast_column, decay_weight, DecayParams, Window};

/// Subsets of `(s, r, o)` whose occurrences are counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternKind {
    S,
    O,
    R,
    SR,
    RO,
    SO,
    SRO,
}

impl PatternKind {
    pub const ALL: [PatternKind; 7] = [Self::S, Self::O, Self::R, Self::SR, Self::RO, Self::SO, Self::SRO];

    pub fn name(self) -> &'static str {
        match self {
            Self::S => "s",
            Self::O => "o",
            Self::R => "r",
            Self::SR => "sr",
            Self::RO => "ro",
            Self::SO => "so",
            Self::SRO => "sro",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn arity(self) -> usize {
        match self {
            Self::S | Self::O | Self::R => 1,
            Self::SR | Self::RO | Self::SO => 2,
            Self::SRO => 3,
        }
    }

    /// Pattern key of `t`, unused slots zero.
    pub fn key(self, t: &Triple) -> [usize; 3] {
        let (s, r, o) = (t.subject, t.relation, t.object);
        match self {
            Self::S => [s, 0, 0],
            Self::O => [o, 0, 0],
            Self::R => [r, 0, 0],
            Self::SR => [s, r, 0],
            Self::RO => [r, o, 0],
            Self::SO => [s, o, 0],
            Self::SRO => [s, r, o],
        }
    }

    fn matches(self, pattern: &Triple, t: &Triple) -> bool {
        self.key(pattern) == self.key(t)
    }
}

/// Which training steps `t'` count towards the frequency at `t`.
/// The query step itself is never counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TpfWindow {
    /// `t' < t`.
    #[default]
    StrictPast,
    /// `t - w <= t' < t`.
    Trailing(usize),
    /// `0 < |t - t'| <= w`.
    Symmetric(usize),
    /// Every `t' != t`.
    All,
}

impl TpfWindow {
    pub fn contains(self, t: usize, other: usize) -> bool {
        other != t
            && match self {
                Self::StrictPast => other < t,
                Self::Trailing(w) => other < t && t - other <= w,
                Self::Symmetric(w) => t.abs_diff(other) <= w,
                Self::All => true,
            }
    }

    /// Half-open ranges of counted steps.
    fn ranges(self, t: usize) -> [(usize, usize); 2] {
        match self {
            Self::StrictPast => [(0, t), (0, 0)],
            Self::Trailing(w) => [(t.saturating_sub(w), t), (0, 0)],
            Self::Symmetric(w) => [(t.saturating_sub(w), t), (t + 1, t.saturating_add(w).saturating_add(1))],
            Self::All => [(0, t), (t + 1, usize::MAX)],
        }
    }

    pub fn name(self) -> String {
        match self {
            Self::StrictPast => "past".into(),
            Self::Trailing(w) => format!("trailing:{w}"),
            Self::Symmetric(w) => format!("symmetric:{w}"),
            Self::All => "all".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "past" | "strict_past" => Some(Self::StrictPast),
            "all" => Some(Self::All),
            _ => {
                let (kind, w) = s.split_once(':')?;
                let w = w.parse().ok()?;
                match kind {
                    "trailing" => Some(Self::Trailing(w)),
                    "symmetric" => Some(Self::Symmetric(w)),
                    _ => None,
                }
            }
        }
    }
}

/// All seven frequencies of one quadruple.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tpf {
    pub s: u64,
    pub o: u64,
    pub r: u64,
    pub sr: u64,
    pub ro: u64,
    pub so: u64,
    pub sro: u64,
}

impl Tpf {
    pub fn get(&self, kind: PatternKind) -> u64 {
        match kind {
            PatternKind::S => self.s,
            PatternKind::O => self.o,
            PatternKind::R => self.r,
            PatternKind::SR => self.sr,
            PatternKind::RO => self.ro,
            PatternKind::SO => self.so,
            PatternKind::SRO => self.sro,
        }
    }

    /// Gate input for an object query `(s, r, ?)`: `[f_s, f_r, f_sr]`.
    pub fn object_query(&self) -> [u64; 3] {
        [self.s, self.r, self.sr]
    }

    /// Gate input for a subject query `(?, r, o)`: `[f_o, f_r, f_ro]`.
    pub fn subject_query(&self) -> [u64; 3] {
        [self.o, self.r, self.ro]
    }
}

/// Training-split occurrence times per pattern key.
#[derive(Clone, Debug)]
pub struct TpfTable {
    window: TpfWindow,
    maps: Vec<HashMap<[usize; 3], Vec<usize>>>,
}

pub fn compute_tpf(ds: &TkgDataset, window: TpfWindow) -> TpfTable {
    let mut maps = vec![HashMap::<[usize; 3], Vec<usize>>::new(); PatternKind::ALL.len()];
    for q in ds.quadruples(Split::Train) {
        let t = q.triple();
        for (k, kind) in PatternKind::ALL.iter().enumerate() {
            maps[k].entry(kind.key(&t)).or_default().push(q.time);
        }
    }
    for map in &mut maps {
        for times in map.values_mut() {
            times.sort_unstable();
        }
    }
    TpfTable { window, maps }
}

impl TpfTable {
    pub fn window(&self) -> TpfWindow {
        self.window
    }

    pub fn count(&self, kind: PatternKind, triple: &Triple, t: usize) -> u64 {
        let Some(times) = self.maps[kind as usize].get(&kind.key(triple)) else {
            return 0;
        };
        self.window
            .ranges(t)
            .iter()
            .map(|&(lo, hi)| if lo >= hi { 0 } else { (times.partition_point(|&x| x < hi) - times.partition_point(|&x| x < lo)) as u64 })
            .sum()
    }

    pub fn frequencies(&self, q: &Quadruple) -> Tpf {
        let t = q.triple();
        let c = |k| self.count(k, &t, q.time);
        Tpf {
            s: c(PatternKind::S),
            o: c(PatternKind::O),
            r: c(PatternKind::R),
            sr: c(PatternKind::SR),
            ro: c(PatternKind::RO),
            so: c(PatternKind::SO),
            sro: c(PatternKind::SRO),
        }
    }

    /// Writes `pattern_kind,key,els,time,count` rows for every pattern of the
    /// given quadruples; `key` joins the pattern's ids with `:` and `els` is
    /// the pattern arity. Duplicate rows are written once.
    pub fn write_csv<W: Write>(&self, queries: &[Quadruple], mut out: W) -> io::Result<()> {
        writeln!(out, "pattern_kind,key,els,time,count")?;
        let mut rows = BTreeSet::new();
        for q in queries {
            let t = q.triple();
            for kind in PatternKind::ALL {
                rows.insert((kind, kind.key(&t), q.time));
            }
        }
        for (kind, key, time) in rows {
            let ids: Vec<String> = key[..kind.arity()].iter().map(ToString::to_string).collect();
            let count = self.count(kind, &key_triple(kind, key), time);
            writeln!(out, "{},{},{},{},{}", kind.name(), ids.join(":"), kind.arity(), time, count)?;
        }
        Ok(())
    }
}

fn key_triple(kind: PatternKind, key: [usize; 3]) -> Triple {
    match kind {
        PatternKind::S => Triple::new(key[0], 0, 0),
        PatternKind::O => Triple::new(0, 0, key[0]),
        PatternKind::R => Triple::new(0, key[0], 0),
        PatternKind::SR => Triple::new(key[0], key[1], 0),
        PatternKind::RO => Triple::new(0, key[0], key[1]),
        PatternKind::SO => Triple::new(key[0], 0, key[1]),
        PatternKind::SRO => Triple::new(key[0], key[1], key[2]),
    }
}

/// Reference count by scanning every training quadruple.
pub fn brute_force_count(ds: &TkgDataset, window: TpfWindow, kind: PatternKind, triple: &Triple, t: usize) -> u64 {
    ds.quadruples(Split::Train).filter(|q| window.contains(t, q.time) && kind.matches(triple, &q.triple())).count() as u64
}

/// Weights `(past, future, current)` of a (possibly bidirectional) imputation.
/// An absent neighbour contributes zero; in bidirectional mode each decay is
/// halved before the remainder goes to the current representation.
pub fn imputation_coefficients(
    past_delta: Option<f64>,
    future_delta: Option<f64>,
    lambda: f64,
    bias: f64,
    bidirectional: bool,
) -> (f64, f64, f64) {
    let share = if bidirectional { 0.5 } else { 1.0 };
    let p = past_delta.map_or(0.0, |d| share * decay_weight(d, lambda, bias));
    let f = if bidirectional { future_delta.map_or(0.0, |d| share * decay_weight(d, lambda, bias)) } else { 0.0 };
    (p, f, 1.0 - p - f)
}

/// `gamma x_prev + (1 - gamma) x_t`, or `x_t` when there is no earlier
/// active representation.
pub fn impute(x_t: &[f64], x_prev: Option<(&[f64], f64)>, lambda: f64, bias: f64) -> Vec<f64> {
    let (cp, _, cs) = imputation_coefficients(x_prev.map(|p| p.1), None, lambda, bias, false);
    x_t.iter().enumerate().map(|(k, &v)| cs * v + x_prev.map_or(0.0, |(p, _)| cp * p[k])).collect()
}

pub fn impute_bidirectional(x_t: &[f64], x_prev: Option<(&[f64], f64)>, x_next: Option<(&[f64], f64)>, lambda: f64, bias: f64) -> Vec<f64> {
    let (cp, cf, cs) = imputation_coefficients(x_prev.map(|p| p.1), x_next.map(|n| n.1), lambda, bias, true);
    x_t.iter().enumerate().map(|(k, &v)| cs * v + x_prev.map_or(0.0, |(p, _)| cp * p[k]) + x_next.map_or(0.0, |(n, _)| cf * n[k])).collect()
}

/// Imputed target-step embeddings on the tape. Entities active at the target
/// keep `x_t`; inactive ones blend in their nearest active representation(s)
/// within the window.
pub fn impute_window(tape: &mut Tape, store: &ParamStore, params: &DecayParams, window: &Window, bidirectional: bool) -> Result<Var> {
    let n = window.mask.entities();
    let k0 = window.target;
    let t = window.target_time();
    let x_t = window.x[k0];
    let dim = tape.value(x_t).cols();
    let stacked = tape.concat_rows(&window.x)?;
    let mut out = x_t;
    let mut sides: Vec<Box<dyn Fn(usize) -> Option<usize>>> = vec![Box::new(|i| window.mask.previous_active(k0, i))];
    if bidirectional {
        sides.push(Box::new(|i| window.mask.next_active(k0, i)));
    }
    for find in sides {
        let mut rows = Vec::with_capacity(n);
        let mut deltas = Vec::with_capacity(n);
        let mut on = Vec::with_capacity(n);
        for i in 0..n {
            match find(i).filter(|_| !window.mask.is_active(k0, i)) {
                Some(k) => {
                    rows.push(k * n + i);
                    deltas.push(window.times[k].abs_diff(t) as f64);
                    on.push(if bidirectional { 0.5 } else { 1.0 });
                }
                None => {
                    rows.push(k0 * n + i);
                    deltas.push(0.0);
                    on.push(0.0);
                }
            }
        }
        if on.iter().all(|&v| v == 0.0) {
            continue;
        }
        let other = tape.gather_rows(stacked, &rows)?;
        let gamma = params.column(tape, store, &deltas)?;
        let on = tape.constant(Tensor::column(on));
        let coef = tape.mul(gamma, on)?;
        let coef = broadcast_column(tape, coef, dim)?;
        let diff = tape.sub(other, x_t)?;
        let term = tape.mul(coef, diff)?;
        out = tape.add(out, term)?;
    }
    Ok(out)
}

/// How raw counts are fed to the gating networks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FrequencyTransform {
    #[default]
    Log1p,
    Raw,
}

impl FrequencyTransform {
    pub fn apply(self, f: [u64; 3]) -> [f64; 3] {
        f.map(|v| match self {
            Self::Log1p => (v as f64).ln_1p(),
            Self::Raw => v as f64,
        })
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "log1p" => Some(Self::Log1p),
            "raw" => Some(Self::Raw),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Log1p => "log1p",
            Self::Raw => "raw",
        }
    }
}

/// `sigmoid(relu(f W1 + b1) W2 + b2)` from a 3-vector to `[0, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct GateMlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl GateMlp {
    pub fn init(store: &mut ParamStore, rng: &mut impl Rng, prefix: &str, hidden: usize) -> Result<Self> {
        Ok(Self {
            w1: store.insert(format!("{prefix}.w1"), xavier(rng, 3, hidden))?,
            b1: store.insert(format!("{prefix}.b1"), Tensor::zeros(1, hidden))?,
            w2: store.insert(format!("{prefix}.w2"), xavier(rng, hidden, 1))?,
            b2: store.insert(format!("{prefix}.b2"), Tensor::zeros(1, 1))?,
        })
    }

    /// Gate values for a `B x 3` feature matrix, as a `B x 1` column.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, features: Var) -> Result<Var> {
        let (w1, b1, w2, b2) =
            (tape.param(store, self.w1), tape.param(store, self.b1), tape.param(store, self.w2), tape.param(store, self.b2));
        let h = tape.matmul(features, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.relu(h);
        let a = tape.matmul(h, w2)?;
        let a = tape.add_row(a, b2)?;
        Ok(tape.sigmoid(a))
    }

    pub fn eval(&self, store: &ParamStore, features: [f64; 3]) -> f64 {
        let (w1, b1, w2, b2) = (store.get(self.w1), store.get(self.b1), store.get(self.w2), store.get(self.b2));
        let mut a = b2.item();
        for j in 0..w1.cols() {
            let h: f64 = (0..3).map(|i| features[i] * w1.get(i, j)).sum::<f64>() + b1.get(0, j);
            a += h.max(0.0) * w2.get(j, 0);
        }
        sigmoid(a)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The four gates: object query on subject / object, subject query on
/// subject / object.
#[derive(Clone, Copy, Debug)]
pub struct GatingParams {
    pub os: GateMlp,
    pub oo: GateMlp,
    pub ss: GateMlp,
    pub so: GateMlp,
    pub transform: FrequencyTransform,
}

impl GatingParams {
    pub fn init(store: &mut ParamStore, rng: &mut impl Rng, hidden: usize, transform: FrequencyTransform) -> Result<Self> {
        Ok(Self {
            os: GateMlp::init(store, rng, "gate.os", hidden)?,
            oo: GateMlp::init(store, rng, "gate.oo", hidden)?,
            ss: GateMlp::init(store, rng, "gate.ss", hidden)?,
            so: GateMlp::init(store, rng, "gate.so", hidden)?,
            transform,
        })
    }
}

/// `alpha x + (1 - alpha) z` per component.
pub fn mix(alpha: f64, x: &[f64], z: &[f64]) -> Vec<f64> {
    x.iter().zip(z).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect()
}

/// Row-wise `z + alpha (x - z)` with `alpha` an `n x 1` column.
pub fn mix_rows(tape: &mut Tape, alpha: Var, x: Var, z: Var) -> Result<Var> {
    let dim = tape.value(x).cols();
    let a = broadcast_column(tape, alpha, dim)?;
    let diff = tape.sub(x, z)?;
    let term = tape.mul(a, diff)?;
    tape.add(z, term)
}

/// Gated embeddings for an object query: the subject row and every
/// candidate object row, each candidate with the same gate.
pub fn gate_object_query(
    store: &ParamStore,
    params: &GatingParams,
    x_s: &[f64],
    z_s: &[f64],
    x_all: &Tensor,
    z_all: &Tensor,
    f_s: [u64; 3],
) -> (Vec<f64>, Tensor) {
    let feats = params.transform.apply(f_s);
    gate_pair(store, params.os, params.oo, feats, x_s, z_s, x_all, z_all)
}

/// Mirror of [`gate_object_query`] for `(?, r, o)`: returns the gated object
/// row and every gated candidate subject row.
pub fn gate_subject_query(
    store: &ParamStore,
    params: &GatingParams,
    x_o: &[f64],
    z_o: &[f64],
    x_all: &Tensor,
    z_all: &Tensor,
    f_o: [u64; 3],
) -> (Vec<f64>, Tensor) {
    let feats = params.transform.apply(f_o);
    gate_pair(store, params.so, params.ss, feats, x_o, z_o, x_all, z_all)
}

#[allow(clippy::too_many_arguments)]
fn gate_pair(
    store: &ParamStore,
    fixed_gate: GateMlp,
    candidate_gate: GateMlp,
    feats: [f64; 3],
    x_fixed: &[f64],
    z_fixed: &[f64],
    x_all: &Tensor,
    z_all: &Tensor,
) -> (Vec<f64>, Tensor) {
    let a_fixed = fixed_gate.eval(store, feats);
    let a_cand = candidate_gate.eval(store, feats);
    let fixed = mix(a_fixed, x_fixed, z_fixed);
    let data = x_all.data().iter().zip(z_all.data()).map(|(x, z)| a_cand * x + (1.0 - a_cand) * z).collect();
    (fixed, Tensor::new(x_all.shape().to_vec(), data).expect("same shape"))
}
