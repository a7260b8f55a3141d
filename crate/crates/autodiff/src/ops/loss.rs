use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

impl<T: Scalar> Tape<T> {
    /// Mean categorical cross-entropy of `logits: [R, C]` (softmax applied
    /// internally, log-sum-exp stabilised) against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != targets.len() || targets.iter().any(|&t| t >= s[1]) {
            return shape_err("cross_entropy", format!("logits {s:?}, {} targets", targets.len()));
        }
        let (r, c) = (s[0], s[1]);
        let lv = self.value(logits).data();
        let mut probs = vec![T::zero(); r * c];
        let mut loss = T::zero();
        for i in 0..r {
            let row = &lv[i * c..(i + 1) * c];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|v| (*v - m).exp()).sum();
            let lse = m + z.ln();
            loss += lse - row[targets[i]];
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
        }
        let inv_r = T::one() / T::of(r.max(1) as f64);
        let out = Tensor::scalar(loss * inv_r);
        let targets = targets.to_vec();
        Ok(self.push_op(
            out,
            vec![logits],
            Box::new(move |ctx| {
                let scale = ctx.grad[0] * inv_r;
                let mut g: Vec<T> = probs.iter().map(|p| *p * scale).collect();
                for (i, &t) in targets.iter().enumerate() {
                    g[i * c + t] -= scale;
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Mean squared error between two same-shaped tensors.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return shape_err("mse", format!("{:?} vs {:?}", self.shape(pred), self.shape(target)));
        }
        let (pv, tv) = (self.value(pred).data(), self.value(target).data());
        let n = pv.len().max(1);
        let inv = T::one() / T::of(n as f64);
        let loss: T = pv.iter().zip(tv).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>() * inv;
        Ok(self.push_op(
            Tensor::scalar(loss),
            vec![pred, target],
            Box::new(move |ctx| {
                let (pv, tv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let k = T::of(2.0) * inv * ctx.grad[0];
                let gp: Vec<T> = pv.iter().zip(tv).map(|(a, b)| (*a - *b) * k).collect();
                let gt = ctx.wants[1].then(|| gp.iter().map(|v| -*v).collect());
                vec![Some(gp), gt]
            }),
        ))
    }
}
