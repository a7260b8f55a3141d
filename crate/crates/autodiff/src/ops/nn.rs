use std::f64::consts::PI;

use super::basic::axis_split;
use crate::error::{shape_err, AutodiffError, Result};
use crate::scalar::{gemm, Scalar};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    n: usize,
    l: usize,
    ci: usize,
    k: usize,
    stride: usize,
    pad: usize,
    lout: usize,
) -> Vec<T> {
    let row = k * ci;
    let mut col = vec![T::zero(); n * lout * row];
    for b in 0..n {
        for o in 0..lout {
            let dst = &mut col[(b * lout + o) * row..(b * lout + o + 1) * row];
            for kk in 0..k {
                let pos = (o * stride + kk) as isize - pad as isize;
                if pos < 0 || pos as usize >= l {
                    continue;
                }
                let src = (b * l + pos as usize) * ci;
                dst[kk * ci..(kk + 1) * ci].copy_from_slice(&x[src..src + ci]);
            }
        }
    }
    col
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    col: &[T],
    n: usize,
    l: usize,
    ci: usize,
    k: usize,
    stride: usize,
    pad: usize,
    lout: usize,
) -> Vec<T> {
    let row = k * ci;
    let mut x = vec![T::zero(); n * l * ci];
    for b in 0..n {
        for o in 0..lout {
            let src = &col[(b * lout + o) * row..(b * lout + o + 1) * row];
            for kk in 0..k {
                let pos = (o * stride + kk) as isize - pad as isize;
                if pos < 0 || pos as usize >= l {
                    continue;
                }
                let dst = (b * l + pos as usize) * ci;
                x[dst..dst + ci]
                    .iter_mut()
                    .zip(&src[kk * ci..(kk + 1) * ci])
                    .for_each(|(a, v)| *a += *v);
            }
        }
    }
    x
}

fn col_sums<T: Scalar>(g: &[T], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for r in g.chunks(cols) {
        out.iter_mut().zip(r).for_each(|(o, v)| *o += *v);
    }
    out
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Scalar> Tape<T> {
    /// `x·W + b` over the last axis of `x`; `W` is `[in, out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sw.len() != 2 || sx.last() != Some(&sw[0]) {
            return shape_err("dense", format!("x {sx:?}, W {sw:?}"));
        }
        let (din, dout) = (sw[0], sw[1]);
        if let Some(b) = b {
            if self.shape(b) != [dout] {
                return shape_err("dense", format!("bias {:?}, expected [{dout}]", self.shape(b)));
            }
        }
        let rows = self.value(x).numel() / din;
        let mut y = vec![T::zero(); rows * dout];
        if let Some(b) = b {
            let bv = self.value(b).data();
            y.chunks_mut(dout).for_each(|r| r.copy_from_slice(bv));
        }
        gemm(
            rows,
            din,
            dout,
            self.value(x).data(),
            false,
            self.value(w).data(),
            false,
            &mut y,
            b.is_some(),
        );
        let mut shape = sx;
        *shape.last_mut().unwrap() = dout;
        let out = Tensor::new(shape, y)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push_op(
            out,
            inputs,
            Box::new(move |ctx| {
                let (xv, wv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let gx = ctx.wants[0].then(|| {
                    let mut g = vec![T::zero(); rows * din];
                    gemm(rows, dout, din, ctx.grad, false, wv, true, &mut g, false);
                    g
                });
                let gw = ctx.wants[1].then(|| {
                    let mut g = vec![T::zero(); din * dout];
                    gemm(din, rows, dout, xv, true, ctx.grad, false, &mut g, false);
                    g
                });
                let mut out = vec![gx, gw];
                if ctx.inputs.len() == 3 {
                    out.push(ctx.wants[2].then(|| col_sums(ctx.grad, dout)));
                }
                out
            }),
        ))
    }

    /// 1-D convolution of `x: [N, L, Cin]` with `w: [K, Cin, Cout]`, zero padding
    /// `padding` on both sides.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 || sx[2] != sw[1] || stride == 0 {
            return shape_err("conv1d", format!("x {sx:?}, W {sw:?}, stride {stride}"));
        }
        let (n, l, ci) = (sx[0], sx[1], sx[2]);
        let (k, co) = (sw[0], sw[2]);
        if l + 2 * padding < k {
            return shape_err("conv1d", format!("length {l} + 2*{padding} < kernel {k}"));
        }
        if let Some(b) = b {
            if self.shape(b) != [co] {
                return shape_err("conv1d", format!("bias {:?}, expected [{co}]", self.shape(b)));
            }
        }
        let lout = (l + 2 * padding - k) / stride + 1;
        let col = im2col(self.value(x).data(), n, l, ci, k, stride, padding, lout);
        let rows = n * lout;
        let mut y = vec![T::zero(); rows * co];
        if let Some(b) = b {
            let bv = self.value(b).data();
            y.chunks_mut(co).for_each(|r| r.copy_from_slice(bv));
        }
        gemm(
            rows,
            k * ci,
            co,
            &col,
            false,
            self.value(w).data(),
            false,
            &mut y,
            b.is_some(),
        );
        drop(col);
        let out = Tensor::new(vec![n, lout, co], y)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push_op(
            out,
            inputs,
            Box::new(move |ctx| {
                let (xv, wv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let kc = k * ci;
                let gw = ctx.wants[1].then(|| {
                    let col = im2col(xv, n, l, ci, k, stride, padding, lout);
                    let mut g = vec![T::zero(); kc * co];
                    gemm(kc, rows, co, &col, true, ctx.grad, false, &mut g, false);
                    g
                });
                let gx = ctx.wants[0].then(|| {
                    let mut dcol = vec![T::zero(); rows * kc];
                    gemm(rows, co, kc, ctx.grad, false, wv, true, &mut dcol, false);
                    col2im(&dcol, n, l, ci, k, stride, padding, lout)
                });
                let mut out = vec![gx, gw];
                if ctx.inputs.len() == 3 {
                    out.push(ctx.wants[2].then(|| col_sums(ctx.grad, co)));
                }
                out
            }),
        ))
    }

    /// Stride-1 convolution with zero "same" padding (odd kernels only).
    pub fn conv1d_same(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let k = self.shape(w).first().copied().unwrap_or(0);
        if k % 2 == 0 {
            return Err(AutodiffError::Invalid {
                op: "conv1d_same",
                detail: format!("kernel {k} must be odd"),
            });
        }
        self.conv1d(x, w, b, 1, (k - 1) / 2)
    }

    /// Layer normalization over the last axis.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let c = *sx.last().unwrap_or(&0);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return shape_err(
                "layer_norm",
                format!("x {sx:?}, gamma {:?}, beta {:?}", self.shape(gamma), self.shape(beta)),
            );
        }
        let eps = T::of(eps);
        let inv_c = T::one() / T::of(c as f64);
        let stats = move |r: &[T]| {
            let mu = r.iter().copied().sum::<T>() * inv_c;
            let var = r.iter().map(|v| (*v - mu) * (*v - mu)).sum::<T>() * inv_c;
            (mu, T::one() / (var + eps).sqrt())
        };
        let (xv, gv, bv) = (self.value(x), self.value(gamma).data(), self.value(beta).data());
        let mut y = Vec::with_capacity(xv.numel());
        for r in xv.data().chunks(c) {
            let (mu, rstd) = stats(r);
            y.extend(r.iter().zip(gv).zip(bv).map(|((v, g), b)| (*v - mu) * rstd * *g + *b));
        }
        let out = Tensor::new(sx, y)?;
        Ok(self.push_op(
            out,
            vec![x, gamma, beta],
            Box::new(move |ctx| {
                let (xv, gv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let mut gx = vec![T::zero(); xv.len()];
                let mut gg = vec![T::zero(); c];
                let mut gb = vec![T::zero(); c];
                let mut xhat = vec![T::zero(); c];
                let mut dxhat = vec![T::zero(); c];
                for (ri, r) in xv.chunks(c).enumerate() {
                    let (mu, rstd) = stats(r);
                    let g = &ctx.grad[ri * c..(ri + 1) * c];
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for j in 0..c {
                        xhat[j] = (r[j] - mu) * rstd;
                        dxhat[j] = g[j] * gv[j];
                        gg[j] += g[j] * xhat[j];
                        gb[j] += g[j];
                        m1 += dxhat[j];
                        m2 += dxhat[j] * xhat[j];
                    }
                    m1 *= inv_c;
                    m2 *= inv_c;
                    let dst = &mut gx[ri * c..(ri + 1) * c];
                    for j in 0..c {
                        dst[j] = rstd * (dxhat[j] - m1 - xhat[j] * m2);
                    }
                }
                vec![Some(gx), Some(gg), Some(gb)]
            }),
        ))
    }

    fn unary(&mut self, x: Var, f: fn(T) -> T, df: fn(T) -> T) -> Var {
        let v = self.value(x);
        let out = Tensor::from_fn(v.shape(), |i| f(v.data()[i]));
        self.push_op(
            out,
            vec![x],
            Box::new(move |ctx| {
                vec![Some(
                    ctx.inputs[0]
                        .data()
                        .iter()
                        .zip(ctx.grad)
                        .map(|(x, g)| df(*x) * *g)
                        .collect(),
                )]
            }),
        )
    }

    /// Exact (erf-based) GeLU.
    pub fn gelu(&mut self, x: Var) -> Var {
        fn f<T: Scalar>(x: T) -> T {
            T::of(0.5) * x * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
        }
        fn df<T: Scalar>(x: T) -> T {
            let cdf = T::of(0.5) * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf());
            let pdf = (-(x * x) * T::of(0.5)).exp() * T::of(1.0 / (2.0 * PI).sqrt());
            cdf + x * pdf
        }
        self.unary(x, f::<T>, df::<T>)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        fn f<T: Scalar>(x: T) -> T {
            x * sigmoid(x)
        }
        fn df<T: Scalar>(x: T) -> T {
            let s = sigmoid(x);
            s * (T::one() + x * (T::one() - s))
        }
        self.unary(x, f::<T>, df::<T>)
    }

    /// Softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return shape_err("softmax", format!("axis {axis} for shape {shape:?}"));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let xv = self.value(x).data();
        let mut y = vec![T::zero(); xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let m = (0..len).map(|j| xv[idx(j)]).fold(T::neg_infinity(), T::max);
                let mut s = T::zero();
                for j in 0..len {
                    let e = (xv[idx(j)] - m).exp();
                    y[idx(j)] = e;
                    s += e;
                }
                for j in 0..len {
                    y[idx(j)] = y[idx(j)] / s;
                }
            }
        }
        let out = Tensor::new(shape, y)?;
        Ok(self.push_op(
            out,
            vec![x],
            Box::new(move |ctx| {
                let y = ctx.output.data();
                let g = ctx.grad;
                let mut gx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let dot: T = (0..len).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..len {
                            gx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Average pooling over the length axis of `[N, L, C]`. The output length is
    /// `ceil((L - kernel) / stride) + 1`; windows running past the end see zeros
    /// and still divide by `kernel`.
    pub fn avg_pool1d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || kernel == 0 || stride == 0 {
            return shape_err("avg_pool1d", format!("x {s:?}, kernel {kernel}, stride {stride}"));
        }
        let (n, l, c) = (s[0], s[1], s[2]);
        let lout = if l <= kernel {
            1
        } else {
            (l - kernel).div_ceil(stride) + 1
        };
        let inv = T::one() / T::of(kernel as f64);
        let xv = self.value(x).data();
        let mut y = vec![T::zero(); n * lout * c];
        for b in 0..n {
            for o in 0..lout {
                let dst = (b * lout + o) * c;
                for j in 0..kernel {
                    let pos = o * stride + j;
                    if pos >= l {
                        break;
                    }
                    let src = (b * l + pos) * c;
                    for ch in 0..c {
                        y[dst + ch] += xv[src + ch] * inv;
                    }
                }
            }
        }
        let out = Tensor::new(vec![n, lout, c], y)?;
        Ok(self.push_op(
            out,
            vec![x],
            Box::new(move |ctx| {
                let mut gx = vec![T::zero(); n * l * c];
                for b in 0..n {
                    for o in 0..lout {
                        let src = (b * lout + o) * c;
                        for j in 0..kernel {
                            let pos = o * stride + j;
                            if pos >= l {
                                break;
                            }
                            let dst = (b * l + pos) * c;
                            for ch in 0..c {
                                gx[dst + ch] += ctx.grad[src + ch] * inv;
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Mean over the length axis: `[N, L, C] -> [N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || s[1] == 0 {
            return shape_err("global_avg_pool", format!("x {s:?}"));
        }
        let (n, l, c) = (s[0], s[1], s[2]);
        let inv = T::one() / T::of(l as f64);
        let xv = self.value(x).data();
        let mut y = vec![T::zero(); n * c];
        for b in 0..n {
            for p in 0..l {
                let src = (b * l + p) * c;
                for ch in 0..c {
                    y[b * c + ch] += xv[src + ch];
                }
            }
        }
        y.iter_mut().for_each(|v| *v *= inv);
        let out = Tensor::new(vec![n, c], y)?;
        Ok(self.push_op(
            out,
            vec![x],
            Box::new(move |ctx| {
                let mut gx = vec![T::zero(); n * l * c];
                for b in 0..n {
                    for p in 0..l {
                        let dst = (b * l + p) * c;
                        for ch in 0..c {
                            gx[dst + ch] = ctx.grad[b * c + ch] * inv;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// `x / sqrt(max(sum(x^2), eps))` over the last axis.
    pub fn l2_normalize(&mut self, x: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let c = xv.last_dim();
        let eps = T::of(eps);
        let mut y = Vec::with_capacity(xv.numel());
        for r in xv.data().chunks(c) {
            let ss: T = r.iter().map(|v| *v * *v).sum();
            let inv = T::one() / ss.max(eps).sqrt();
            y.extend(r.iter().map(|v| *v * inv));
        }
        let out = Tensor::from_fn(xv.shape(), |i| y[i]);
        self.push_op(
            out,
            vec![x],
            Box::new(move |ctx| {
                let xv = ctx.inputs[0].data();
                let yv = ctx.output.data();
                let mut gx = vec![T::zero(); xv.len()];
                for (ri, r) in xv.chunks(c).enumerate() {
                    let sl = ri * c..(ri + 1) * c;
                    let ss: T = r.iter().map(|v| *v * *v).sum();
                    let g = &ctx.grad[sl.clone()];
                    if ss > eps {
                        let inv = T::one() / ss.sqrt();
                        let y = &yv[sl.clone()];
                        let dot: T = y.iter().zip(g).map(|(a, b)| *a * *b).sum();
                        for j in 0..c {
                            gx[ri * c + j] = (g[j] - y[j] * dot) * inv;
                        }
                    } else {
                        let inv = T::one() / eps.sqrt();
                        for j in 0..c {
                            gx[ri * c + j] = g[j] * inv;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Gathers rows of `table: [V, D]`, giving `[ids.len(), D]`.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return shape_err("embedding_lookup", format!("table {s:?}"));
        }
        let (vocab, d) = (s[0], s[1]);
        if let Some(bad) = ids.iter().find(|&&i| i >= vocab) {
            return shape_err("embedding_lookup", format!("id {bad} out of range for vocab {vocab}"));
        }
        let tv = self.value(table).data();
        let mut y = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            y.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let out = Tensor::new(vec![ids.len(), d], y)?;
        let ids = ids.to_vec();
        Ok(self.push_op(
            out,
            vec![table],
            Box::new(move |ctx| {
                let mut g = vec![T::zero(); vocab * d];
                for (r, &i) in ids.iter().enumerate() {
                    g[i * d..(i + 1) * d]
                        .iter_mut()
                        .zip(&ctx.grad[r * d..(r + 1) * d])
                        .for_each(|(a, b)| *a += *b);
                }
                vec![Some(g)]
            }),
        ))
    }
}
