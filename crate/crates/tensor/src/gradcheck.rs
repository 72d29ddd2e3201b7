//! Central finite-difference checks for tape gradients.
//!
//! The numeric side only ever reads forward values, so it stays independent
//! of every backward rule it is used to verify.

use crate::{ParamGrads, ParamStore, Result, Tape, Tensor, Var};

/// Step used by the acceptance checks.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor for relative error so that gradients that are zero up
/// to rounding are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(input, element)` of the worst relative error.
    pub worst: Option<(usize, usize)>,
}

impl GradCheckReport {
    fn record(&mut self, input: usize, elem: usize, analytic: f64, numeric: f64) {
        self.checked += 1;
        let rel = relative_error(analytic, numeric);
        self.max_abs_error = self.max_abs_error.max((analytic - numeric).abs());
        if rel > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(rel);
            self.worst = Some((input, elem));
        }
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

/// Compares gradients of the scalar `f(inputs)` against central differences
/// for every element of every input.
pub fn check_inputs<F>(inputs: &[Tensor], f: F, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        for k in 0..work[i].len() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + step;
            let plus = eval(&work)?;
            work[i].data_mut()[k] = orig - step;
            let minus = eval(&work)?;
            work[i].data_mut()[k] = orig;
            report.record(i, k, analytic.data()[k], (plus - minus) / (2.0 * step));
        }
    }
    Ok(report)
}

/// Same check for a loss built from a parameter store. `f` binds whatever
/// parameters it needs through [`Tape::param`].
pub fn check_params<F>(store: &ParamStore, f: F, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    tape.bind_all(store);
    let loss = f(&mut tape, store)?;
    let grads: ParamGrads = tape.backward(loss)?.params();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let out = f(&mut tape, s)?;
        Ok(tape.value(out).item())
    };

    let mut report = GradCheckReport::default();
    let mut work = store.clone();
    for id in store.ids() {
        let analytic = grads.get(id).cloned().unwrap_or_else(|| {
            let t = store.get(id);
            Tensor::new(t.shape().to_vec(), vec![0.0; t.len()]).expect("same shape")
        });
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + step;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig - step;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig;
            report.record(id.index(), k, analytic.data()[k], (plus - minus) / (2.0 * step));
        }
    }
    Ok(report)
}
