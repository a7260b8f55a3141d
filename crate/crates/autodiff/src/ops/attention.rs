use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which key positions each query position may attend to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionMask {
    Full,
    /// The first `prefix` tokens are visible to every query; the rest are
    /// causal (query `t` sees keys `<= t`). `prefix = 0` is a plain causal mask.
    PrefixCausal {
        prefix: usize,
    },
}

impl AttentionMask {
    pub fn allows(self, query: usize, key: usize) -> bool {
        match self {
            AttentionMask::Full => true,
            AttentionMask::PrefixCausal { prefix } => key < prefix || key <= query,
        }
    }
}

/// Attention probabilities of one (batch, head) slice, `t×t`, zero where masked.
#[allow(clippy::too_many_arguments)]
fn probs<T: Scalar>(
    q: &[T],
    k: &[T],
    base: usize,
    t: usize,
    d: usize,
    off: usize,
    dh: usize,
    scale: T,
    mask: AttentionMask,
) -> Vec<T> {
    let mut p = vec![T::zero(); t * t];
    for i in 0..t {
        let qi = &q[base + i * d + off..base + i * d + off + dh];
        let row = &mut p[i * t..(i + 1) * t];
        let mut m = T::neg_infinity();
        for j in (0..t).filter(|&j| mask.allows(i, j)) {
            let kj = &k[base + j * d + off..base + j * d + off + dh];
            let s = qi.iter().zip(kj).map(|(a, b)| *a * *b).sum::<T>() * scale;
            row[j] = s;
            m = m.max(s);
        }
        let mut z = T::zero();
        for j in (0..t).filter(|&j| mask.allows(i, j)) {
            row[j] = (row[j] - m).exp();
            z += row[j];
        }
        for j in (0..t).filter(|&j| mask.allows(i, j)) {
            row[j] = row[j] / z;
        }
    }
    p
}

impl<T: Scalar> Tape<T> {
    /// Scaled dot-product multi-head attention over already projected
    /// `q, k, v: [N, T, D]`; heads split `D` evenly.
    pub fn causal_mha(&mut self, q: Var, k: Var, v: Var, heads: usize, mask: AttentionMask) -> Result<Var> {
        let s = self.shape(q).to_vec();
        if s.len() != 3 || self.shape(k) != s || self.shape(v) != s {
            return shape_err(
                "causal_mha",
                format!("q {s:?}, k {:?}, v {:?}", self.shape(k), self.shape(v)),
            );
        }
        let (n, t, d) = (s[0], s[1], s[2]);
        if heads == 0 || d % heads != 0 {
            return shape_err("causal_mha", format!("width {d} not divisible by {heads} heads"));
        }
        if t == 0 {
            return shape_err("causal_mha", "empty sequence");
        }
        let dh = d / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut o = vec![T::zero(); n * t * d];
        for b in 0..n {
            let base = b * t * d;
            for h in 0..heads {
                let off = h * dh;
                let p = probs(qv, kv, base, t, d, off, dh, scale, mask);
                for i in 0..t {
                    let dst = base + i * d + off;
                    for j in (0..t).filter(|&j| mask.allows(i, j)) {
                        let pij = p[i * t + j];
                        let src = base + j * d + off;
                        for e in 0..dh {
                            o[dst + e] += pij * vv[src + e];
                        }
                    }
                }
            }
        }
        let out = Tensor::new(s, o)?;
        Ok(self.push_op(
            out,
            vec![q, k, v],
            Box::new(move |ctx| {
                let (qv, kv, vv) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.inputs[2].data());
                let g = ctx.grad;
                let mut gq = vec![T::zero(); qv.len()];
                let mut gk = vec![T::zero(); kv.len()];
                let mut gv = vec![T::zero(); vv.len()];
                let mut dp = vec![T::zero(); t * t];
                for b in 0..n {
                    let base = b * t * d;
                    for h in 0..heads {
                        let off = h * dh;
                        let p = probs(qv, kv, base, t, d, off, dh, scale, mask);
                        for i in 0..t {
                            let gi = &g[base + i * d + off..base + i * d + off + dh];
                            let mut dot = T::zero();
                            for j in (0..t).filter(|&j| mask.allows(i, j)) {
                                let vj = &vv[base + j * d + off..base + j * d + off + dh];
                                let x = gi.iter().zip(vj).map(|(a, b)| *a * *b).sum::<T>();
                                dp[i * t + j] = x;
                                dot += x * p[i * t + j];
                                let pij = p[i * t + j];
                                for e in 0..dh {
                                    gv[base + j * d + off + e] += pij * gi[e];
                                }
                            }
                            for j in (0..t).filter(|&j| mask.allows(i, j)) {
                                let ds = p[i * t + j] * (dp[i * t + j] - dot) * scale;
                                for e in 0..dh {
                                    gq[base + i * d + off + e] += ds * kv[base + j * d + off + e];
                                    gk[base + j * d + off + e] += ds * qv[base + i * d + off + e];
                                }
                            }
                        }
                    }
                }
                vec![Some(gq), Some(gk), Some(gv)]
            }),
        ))
    }
}
