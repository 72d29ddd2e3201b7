//! Finite-difference checks of every differentiable tape operation.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkgc_tensor::gradcheck::{check_inputs, GradCheckReport, DEFAULT_STEP};
use tkgc_tensor::{Result, Tape, Tensor, Var};

pub fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Reduces any matrix to a scalar with a fixed, non-uniform weighting so
/// that every output element contributes a distinct upstream gradient.
pub fn weighted_sum(tape: &mut Tape, v: Var) -> Result<Var> {
    let shape = tape.shape(v).to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect())?;
    let w = tape.constant(w);
    let p = tape.mul(v, w)?;
    Ok(tape.sum(p))
}

fn check<F>(inputs: Vec<Tensor>, f: F) -> GradCheckReport
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    check_inputs(
        &inputs,
        |t, v| {
            let out = f(t, v)?;
            weighted_sum(t, out)
        },
        DEFAULT_STEP,
    )
    .unwrap()
}

/// One report per primitive, named after the tape method.
pub fn primitive_reports() -> Vec<(&'static str, GradCheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random(&mut rng, 3, 4);
    let b = random(&mut rng, 3, 4);
    let c = random(&mut rng, 4, 2);
    let narrow = random(&mut rng, 3, 2);
    let bias = random(&mut rng, 1, 4);
    let pos = a.map(|v| v.abs() + 0.2);
    // keep relu and max_const inputs away from their kinks
    let off_kink = a.map(|v| if v.abs() < 0.2 { v + 0.5 } else { v });

    vec![
        ("matmul", check(vec![a.clone(), c.clone()], |t, v| t.matmul(v[0], v[1]))),
        ("add", check(vec![a.clone(), b.clone()], |t, v| t.add(v[0], v[1]))),
        ("add_row", check(vec![a.clone(), bias.clone()], |t, v| t.add_row(v[0], v[1]))),
        ("sub", check(vec![a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]))),
        ("mul", check(vec![a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]))),
        ("scale", check(vec![a.clone()], |t, v| Ok(t.scale(v[0], -2.5)))),
        ("neg", check(vec![a.clone()], |t, v| Ok(t.neg(v[0])))),
        ("exp", check(vec![a.clone()], |t, v| Ok(t.exp(v[0])))),
        ("log", check(vec![pos.clone()], |t, v| Ok(t.log(v[0])))),
        ("sigmoid", check(vec![a.clone()], |t, v| Ok(t.sigmoid(v[0])))),
        ("tanh", check(vec![a.clone()], |t, v| Ok(t.tanh(v[0])))),
        ("relu", check(vec![off_kink.clone()], |t, v| Ok(t.relu(v[0])))),
        ("max_const", check(vec![off_kink.clone()], |t, v| Ok(t.max_const(v[0], 0.0)))),
        (
            "masked_softmax",
            check(vec![a.clone()], |t, v| {
                let keep = [true, false, true, true, true, true, false, false, false, true, true, true];
                t.masked_softmax(v[0], &keep)
            }),
        ),
        ("concat_cols", check(vec![a.clone(), narrow.clone()], |t, v| t.concat_cols(&[v[0], v[1]]))),
        ("concat_rows", check(vec![a.clone(), bias.clone()], |t, v| t.concat_rows(&[v[1], v[0]]))),
        ("gather_rows", check(vec![a.clone()], |t, v| t.gather_rows(v[0], &[2, 0, 2, 1, 2]))),
        ("scatter_add_rows", check(vec![a.clone()], |t, v| t.scatter_add_rows(v[0], &[1, 1, 3], 5))),
        ("sum", check(vec![a.clone()], |t, v| Ok(t.sum(v[0])))),
        ("mean", check(vec![a.clone()], |t, v| Ok(t.mean(v[0])))),
    ]
}
