use crate::error::{shape_err, Result};
use crate::scalar::{gemm, Scalar};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `rhs` broadcasts over `lhs` when its shape equals a suffix of `lhs`'s shape.
fn suffix_broadcast(lhs: &[usize], rhs: &[usize]) -> bool {
    rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs
}

fn reduce_to<T: Scalar>(g: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for chunk in g.chunks(n) {
        out.iter_mut().zip(chunk).for_each(|(o, v)| *o += *v);
    }
    out
}

/// (outer, axis, inner) split of `shape` around `axis`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Scalar> Tape<T> {
    /// Elementwise sum; `b` may broadcast over leading axes of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if !suffix_broadcast(&sa, &sb) {
            return shape_err("add", format!("{sa:?} + {sb:?}"));
        }
        let bv = self.value(b).data();
        let n = bv.len();
        let data: Vec<T> = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|c| c.iter().zip(bv).map(|(x, y)| *x + *y))
            .collect();
        let out = Tensor::new(sa, data)?;
        Ok(self.push_op(
            out,
            vec![a, b],
            Box::new(move |ctx| {
                let gb = ctx.wants[1].then(|| reduce_to(ctx.grad, n));
                vec![Some(ctx.grad.to_vec()), gb]
            }),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, T::of(-1.0));
        self.add(a, nb)
    }

    /// Elementwise product; `b` may broadcast over leading axes of `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if !suffix_broadcast(&sa, &sb) {
            return shape_err("mul", format!("{sa:?} * {sb:?}"));
        }
        let bv = self.value(b).data();
        let n = bv.len();
        let data: Vec<T> = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|c| c.iter().zip(bv).map(|(x, y)| *x * *y))
            .collect();
        let out = Tensor::new(sa, data)?;
        Ok(self.push_op(
            out,
            vec![a, b],
            Box::new(move |ctx| {
                let (av, bv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let ga = ctx.wants[0].then(|| {
                    ctx.grad
                        .chunks(n)
                        .flat_map(|c| c.iter().zip(bv).map(|(g, y)| *g * *y))
                        .collect()
                });
                let gb = ctx.wants[1].then(|| {
                    let mut out = vec![T::zero(); n];
                    for (gc, ac) in ctx.grad.chunks(n).zip(av.chunks(n)) {
                        for j in 0..n {
                            out[j] += gc[j] * ac[j];
                        }
                    }
                    out
                });
                vec![ga, gb]
            }),
        ))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a);
        let out = Tensor::from_fn(v.shape(), |i| v.data()[i] * c);
        self.push_op(
            out,
            vec![a],
            Box::new(move |ctx| vec![Some(ctx.grad.iter().map(|g| *g * c).collect())]),
        )
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push_op(
            Tensor::scalar(s),
            vec![a],
            Box::new(|ctx| vec![Some(vec![ctx.grad[0]; ctx.inputs[0].numel()])]),
        )
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel();
        let s = self.sum(a);
        self.scale(s, T::one() / T::of(n as f64))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        Ok(self.push_op(out, vec![a], Box::new(|ctx| vec![Some(ctx.grad.to_vec())])))
    }

    /// 2-D matrix product `[m,k]·[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err("matmul", format!("{sa:?} x {sb:?}"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut c = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut c,
            false,
        );
        let out = Tensor::new(vec![m, n], c)?;
        Ok(self.push_op(
            out,
            vec![a, b],
            Box::new(move |ctx| {
                let (av, bv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let ga = ctx.wants[0].then(|| {
                    let mut g = vec![T::zero(); m * k];
                    gemm(m, n, k, ctx.grad, false, bv, true, &mut g, false);
                    g
                });
                let gb = ctx.wants[1].then(|| {
                    let mut g = vec![T::zero(); k * n];
                    gemm(k, m, n, av, true, ctx.grad, false, &mut g, false);
                    g
                });
                vec![ga, gb]
            }),
        ))
    }

    /// Concatenation along `axis`; all other dims must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat", "no inputs");
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return shape_err("concat", format!("axis {axis} for rank {}", base.len()));
        }
        let mut lens = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !ok {
                return shape_err("concat", format!("{base:?} vs {s:?} on axis {axis}"));
            }
            lens.push(s[axis]);
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, &len) in parts.iter().zip(&lens) {
                let d = self.value(p).data();
                data.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let out = Tensor::new(shape, data)?;
        Ok(self.push_op(
            out,
            parts.to_vec(),
            Box::new(move |ctx| {
                let mut grads: Vec<Vec<T>> = lens.iter().map(|l| Vec::with_capacity(outer * l * inner)).collect();
                let mut off = 0;
                for _ in 0..outer {
                    for (g, &len) in grads.iter_mut().zip(&lens) {
                        g.extend_from_slice(&ctx.grad[off..off + len * inner]);
                        off += len * inner;
                    }
                }
                grads.into_iter().map(Some).collect()
            }),
        ))
    }

    /// `a[.., start..end, ..]` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start > end || end > shape[axis] {
            return shape_err("slice", format!("{shape:?} axis {axis} range {start}..{end}"));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let w = end - start;
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * w * inner);
        for o in 0..outer {
            let base = (o * len + start) * inner;
            data.extend_from_slice(&src[base..base + w * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = w;
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push_op(
            out,
            vec![a],
            Box::new(move |ctx| {
                let mut g = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    let dst = (o * len + start) * inner;
                    let src = o * w * inner;
                    g[dst..dst + w * inner].copy_from_slice(&ctx.grad[src..src + w * inner]);
                }
                vec![Some(g)]
            }),
        ))
    }
}
