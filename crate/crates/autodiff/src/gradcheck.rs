//! Central finite-difference verification of tape gradients (64-bit).

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Outcome of [`check_gradients`] for one input.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheck {
    /// `max |a - n| / max(max |a|, max |n|)`, or the absolute error when both
    /// gradients vanish.
    pub fn relative_error(&self) -> f64 {
        let diff = self
            .analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max);
        let scale = self
            .analytic
            .iter()
            .chain(&self.numeric)
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        if scale < 1e-12 {
            diff
        } else {
            diff / scale
        }
    }
}

/// Compares autodiff gradients of `sum(weights ⊙ f(inputs))` against central
/// differences with step `h`. `weights` must match the output size of `f`.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], weights: &[f64], h: f64, f: F) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let objective = |tape: &mut Tape<f64>, vars: &[Var]| -> Result<Var> {
        let out = f(tape, vars)?;
        let shape = tape.shape(out).to_vec();
        let w = tape.input(Tensor::new(shape, weights.to_vec())?);
        let prod = tape.mul(out, w)?;
        Ok(tape.sum(prod))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = objective(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            tape.grad(*v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::inference();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.input(t.clone())).collect();
        let l = objective(&mut tape, &vars)?;
        Ok(tape.value(l).data()[0])
    };

    let mut out = Vec::with_capacity(inputs.len());
    for (i, a) in analytic.into_iter().enumerate() {
        let mut numeric = vec![0.0; inputs[i].numel()];
        let mut work = inputs.to_vec();
        for (j, slot) in numeric.iter_mut().enumerate() {
            let x0 = inputs[i].data()[j];
            work[i].data_mut()[j] = x0 + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = x0 - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = x0;
            *slot = (up - down) / (2.0 * h);
        }
        out.push(GradCheck { analytic: a, numeric });
    }
    Ok(out)
}
