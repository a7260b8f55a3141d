//! Position heads trained on frozen encoder representations: regression (MSE),
//! independent per-digit classification (CCE) and autoregressive digit
//! prediction with a one-block transformer (GPT).

use std::path::Path;

use kmerspace_autodiff::checkpoint::{self, NamedArray};
use kmerspace_autodiff::{AdamW, AdamWConfig, AttentionMask, ParamStore, Tape, Tensor, Var};
use rand::Rng;

use crate::codec::{self, DigitCode};
use crate::contrastive::{non_finite, step_lr, LossRecord};
use crate::encoder::Encoder;
use crate::error::{invalid, Error, Result};
use crate::nn::{self, Builder};
use crate::noise::{apply_noise, AugmentConfig};
use crate::rng;
use crate::seq::{Genome, OneHotKmer};

pub const CONFIG_ARRAY: &str = "meta/head";
const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Mse,
    Cce,
    Gpt,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Mse => "mse",
            HeadKind::Cce => "cce",
            HeadKind::Gpt => "gpt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(HeadKind::Mse),
            "cce" => Ok(HeadKind::Cce),
            "gpt" => Ok(HeadKind::Gpt),
            other => invalid(format!("unknown head kind {other:?} (expected mse, cce or gpt)")),
        }
    }

    fn code(self) -> u32 {
        self as u32
    }

    fn from_code(c: u32) -> Result<Self> {
        [HeadKind::Mse, HeadKind::Cce, HeadKind::Gpt]
            .get(c as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown head kind code {c}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GptConfig {
    pub blocks: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub token_dim: usize,
    pub mlp_out_tokens: usize,
}

impl Default for GptConfig {
    fn default() -> Self {
        Self {
            blocks: 1,
            heads: 2,
            ff_dim: 256,
            token_dim: 64,
            mlp_out_tokens: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub mlp_width: usize,
    pub mlp_layers: usize,
    pub base: u32,
    /// Size of the coordinate space.
    pub coord_len: u64,
    pub gpt: GptConfig,
}

impl HeadConfig {
    pub fn new(kind: HeadKind, coord_len: u64) -> Self {
        Self {
            kind,
            mlp_width: 2048,
            mlp_layers: 3,
            base: 3,
            coord_len,
            gpt: GptConfig::default(),
        }
    }

    pub fn num_digits(&self) -> Result<usize> {
        codec::num_digits(self.coord_len, self.base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mlp_width == 0 || self.mlp_layers == 0 {
            return invalid("mlp_width and mlp_layers must be at least 1");
        }
        self.num_digits()?;
        let g = &self.gpt;
        if self.kind == HeadKind::Gpt {
            if g.blocks == 0 || g.heads == 0 || g.ff_dim == 0 || g.mlp_out_tokens == 0 {
                return invalid("GPT blocks, heads, ff_dim and mlp_out_tokens must be at least 1");
            }
            if g.token_dim == 0 || g.token_dim % g.heads != 0 {
                return invalid(format!(
                    "token_dim {} must be a positive multiple of heads {}",
                    g.token_dim, g.heads
                ));
            }
        }
        Ok(())
    }

    /// Width of the trunk's final projection.
    pub fn out_width(&self) -> Result<usize> {
        Ok(match self.kind {
            HeadKind::Mse => 1,
            HeadKind::Cce => self.num_digits()? * self.base as usize,
            HeadKind::Gpt => self.gpt.mlp_out_tokens * self.gpt.token_dim,
        })
    }

    fn to_u32s(&self, rep_dim: usize) -> Vec<u32> {
        let g = &self.gpt;
        vec![
            CONFIG_VERSION,
            self.kind.code(),
            self.mlp_width as u32,
            self.mlp_layers as u32,
            self.base,
            self.coord_len as u32,
            (self.coord_len >> 32) as u32,
            rep_dim as u32,
            g.blocks as u32,
            g.heads as u32,
            g.ff_dim as u32,
            g.token_dim as u32,
            g.mlp_out_tokens as u32,
        ]
    }

    fn from_u32s(v: &[u32]) -> Result<(Self, usize)> {
        if v.len() != 13 || v[0] != CONFIG_VERSION {
            return Err(Error::Format(format!(
                "unsupported head config record (length {}, version {:?})",
                v.len(),
                v.first()
            )));
        }
        let us = |i: usize| v[i] as usize;
        let cfg = Self {
            kind: HeadKind::from_code(v[1])?,
            mlp_width: us(2),
            mlp_layers: us(3),
            base: v[4],
            coord_len: v[5] as u64 | (v[6] as u64) << 32,
            gpt: GptConfig {
                blocks: us(8),
                heads: us(9),
                ff_dim: us(10),
                token_dim: us(11),
                mlp_out_tokens: us(12),
            },
        };
        cfg.validate()?;
        Ok((cfg, us(7)))
    }
}

/// Head output for one input row.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionPrediction {
    /// Predicted coordinate, clamped into `[0, L)`.
    pub coordinate: u64,
    /// True when the raw prediction fell outside `[0, L)`.
    pub clamped: bool,
    /// Per-digit probability rows (empty for regression).
    pub digit_probs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Head {
    pub config: HeadConfig,
    pub rep_dim: usize,
    pub params: ParamStore<f32>,
}

fn softmax_rows(logits: &[f32], width: usize) -> Vec<Vec<f64>> {
    logits
        .chunks(width)
        .map(|r| {
            let m = r.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b as f64));
            let e: Vec<f64> = r.iter().map(|v| (*v as f64 - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// First index of the largest entry.
fn argmax(row: &[f64]) -> u32 {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best as u32
}

impl Head {
    pub fn build<R: Rng>(config: HeadConfig, rep_dim: usize, rng: &mut R) -> Result<Self> {
        Self::layout(config, rep_dim, Builder::new(rng))
    }

    fn layout(config: HeadConfig, rep_dim: usize, mut b: Builder<'_>) -> Result<Self> {
        config.validate()?;
        if rep_dim == 0 {
            return invalid("representation width must be at least 1");
        }
        let mut width = rep_dim;
        for i in 0..config.mlp_layers {
            b.layer_norm(&format!("trunk{i}.ln"), width)?;
            b.dense(&format!("trunk{i}.dense"), width, config.mlp_width)?;
            width = config.mlp_width;
        }
        b.dense("out", width, config.out_width()?)?;
        if config.kind == HeadKind::Gpt {
            let g = &config.gpt;
            let nb = config.num_digits()?;
            let td = g.token_dim;
            b.table("gpt.digits", config.base as usize, td)?;
            b.table("gpt.pos", g.mlp_out_tokens + nb - 1, td)?;
            for j in 0..g.blocks {
                for p in ["q", "k", "v", "o"] {
                    b.dense(&format!("gpt.block{j}.{p}"), td, td)?;
                }
                b.layer_norm(&format!("gpt.block{j}.ln1"), td)?;
                b.dense(&format!("gpt.block{j}.ff1"), td, g.ff_dim)?;
                b.dense(&format!("gpt.block{j}.ff2"), g.ff_dim, td)?;
                b.layer_norm(&format!("gpt.block{j}.ln2"), td)?;
            }
            b.dense("gpt.logits", td, config.base as usize)?;
        }
        Ok(Self {
            config,
            rep_dim,
            params: b.store,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    /// `mlp_layers × (LN → dense → SiLU)` then the output projection.
    pub fn trunk(&self, tape: &mut Tape<f32>, h: Var) -> Result<Var> {
        let s = tape.shape(h);
        if s.len() != 2 || s[1] != self.rep_dim {
            return invalid(format!("head expects [N, {}] representations, got {s:?}", self.rep_dim));
        }
        let p = &self.params;
        let mut y = h;
        for i in 0..self.config.mlp_layers {
            y = nn::layer_norm(tape, p, &format!("trunk{i}.ln"), y)?;
            y = nn::dense(tape, p, &format!("trunk{i}.dense"), y)?;
            y = tape.silu(y);
        }
        nn::dense(tape, p, "out", y)
    }

    /// Digit logits `[N, m + 1, b]` given the trunk output and an `m`-digit
    /// prefix per sample. Row `r` predicts digit `r` from digits `0..r`.
    pub fn gpt_logits(&self, tape: &mut Tape<f32>, trunk: Var, prefix: &[Vec<u32>]) -> Result<Var> {
        let g = &self.config.gpt;
        let (td, t8) = (g.token_dim, g.mlp_out_tokens);
        let n = tape.shape(trunk)[0];
        if prefix.len() != n {
            return invalid(format!("{} digit prefixes for {n} samples", prefix.len()));
        }
        let m = prefix.first().map_or(0, Vec::len);
        let nb = self.config.num_digits()?;
        if m >= nb || prefix.iter().any(|p| p.len() != m) {
            return invalid(format!("digit prefixes must share one length below {nb}"));
        }
        let p = &self.params;
        let tokens = tape.reshape(trunk, &[n, t8, td])?;
        let mut y = if m > 0 {
            let ids: Vec<usize> = prefix.iter().flatten().map(|d| *d as usize).collect();
            let table = tape.param_named(p, "gpt.digits")?;
            let e = tape.embedding_lookup(table, &ids)?;
            let e = tape.reshape(e, &[n, m, td])?;
            tape.concat(&[tokens, e], 1)?
        } else {
            tokens
        };
        let pos = tape.param_named(p, "gpt.pos")?;
        let pos = tape.slice(pos, 0, 0, t8 + m)?;
        y = tape.add(y, pos)?;
        for j in 0..g.blocks {
            let name = format!("gpt.block{j}");
            let q = nn::dense(tape, p, &format!("{name}.q"), y)?;
            let k = nn::dense(tape, p, &format!("{name}.k"), y)?;
            let v = nn::dense(tape, p, &format!("{name}.v"), y)?;
            let att = tape.causal_mha(q, k, v, g.heads, AttentionMask::PrefixCausal { prefix: t8 })?;
            let att = nn::dense(tape, p, &format!("{name}.o"), att)?;
            let a = tape.add(att, y)?;
            let a = nn::layer_norm(tape, p, &format!("{name}.ln1"), a)?;
            let f = nn::dense(tape, p, &format!("{name}.ff1"), a)?;
            let f = tape.gelu(f);
            let f = nn::dense(tape, p, &format!("{name}.ff2"), f)?;
            let f = tape.add(f, a)?;
            y = nn::layer_norm(tape, p, &format!("{name}.ln2"), f)?;
        }
        let logits = nn::dense(tape, p, "gpt.logits", y)?;
        Ok(tape.slice(logits, 1, t8 - 1, t8 + m)?)
    }

    fn digit_targets(&self, coords: &[u64]) -> Result<Vec<Vec<u32>>> {
        coords
            .iter()
            .map(|&c| Ok(codec::encode_coordinate(c, self.config.base, self.config.coord_len)?.digits))
            .collect()
    }

    /// Training loss on representations `h: [N, rep_dim]` with true coordinates.
    pub fn loss(&self, tape: &mut Tape<f32>, h: Var, coords: &[u64]) -> Result<Var> {
        let n = coords.len();
        let trunk = self.trunk(tape, h)?;
        let b = self.config.base as usize;
        match self.config.kind {
            HeadKind::Mse => {
                let l = self.config.coord_len as f64;
                let t = Tensor::new(vec![n, 1], coords.iter().map(|c| (*c as f64 / l) as f32).collect())?;
                let t = tape.input(t);
                Ok(tape.mse(trunk, t)?)
            }
            HeadKind::Cce => {
                let digits = self.digit_targets(coords)?;
                let nb = self.config.num_digits()?;
                let logits = tape.reshape(trunk, &[n * nb, b])?;
                let targets: Vec<usize> = digits.iter().flatten().map(|d| *d as usize).collect();
                Ok(tape.cross_entropy(logits, &targets)?)
            }
            HeadKind::Gpt => {
                let digits = self.digit_targets(coords)?;
                let nb = self.config.num_digits()?;
                let prefix: Vec<Vec<u32>> = digits.iter().map(|d| d[..nb - 1].to_vec()).collect();
                let logits = self.gpt_logits(tape, trunk, &prefix)?;
                let logits = tape.reshape(logits, &[n * nb, b])?;
                let targets: Vec<usize> = digits.iter().flatten().map(|d| *d as usize).collect();
                Ok(tape.cross_entropy(logits, &targets)?)
            }
        }
    }

    /// Teacher-forced digit logits `[N, N_b, b]` of the GPT head.
    pub fn gpt_teacher_logits(&self, h: &Tensor<f32>, digits: &[Vec<u32>]) -> Result<Tensor<f32>> {
        if self.config.kind != HeadKind::Gpt {
            return invalid("teacher-forced logits need a GPT head");
        }
        let nb = self.config.num_digits()?;
        if digits.iter().any(|d| d.len() != nb) {
            return invalid(format!("every digit code must have {nb} digits"));
        }
        let mut tape = Tape::inference();
        let hv = tape.input(h.clone());
        let trunk = self.trunk(&mut tape, hv)?;
        let prefix: Vec<Vec<u32>> = digits.iter().map(|d| d[..nb - 1].to_vec()).collect();
        let out = self.gpt_logits(&mut tape, trunk, &prefix)?;
        Ok(tape.value(out).clone())
    }

    fn finish(&self, digits: Vec<u32>, probs: Vec<Vec<f64>>) -> Result<PositionPrediction> {
        let raw = codec::decode_digits(&DigitCode::new(self.config.base, digits)?)?;
        let l = self.config.coord_len;
        Ok(PositionPrediction {
            coordinate: raw.min(l - 1),
            clamped: raw >= l,
            digit_probs: probs,
        })
    }

    /// Predictions for `h: [N, rep_dim]`. GPT heads decode greedily.
    pub fn predict(&self, h: &Tensor<f32>) -> Result<Vec<PositionPrediction>> {
        let mut tape = Tape::inference();
        let hv = tape.input(h.clone());
        let trunk = self.trunk(&mut tape, hv)?;
        let n = h.shape()[0];
        let b = self.config.base as usize;
        match self.config.kind {
            HeadKind::Mse => {
                let l = self.config.coord_len;
                Ok(tape
                    .value(trunk)
                    .data()
                    .iter()
                    .map(|v| {
                        let raw = (*v as f64 * l as f64).round();
                        PositionPrediction {
                            coordinate: raw.clamp(0.0, (l - 1) as f64) as u64,
                            clamped: !(0.0..l as f64).contains(&raw),
                            digit_probs: Vec::new(),
                        }
                    })
                    .collect())
            }
            HeadKind::Cce => {
                let nb = self.config.num_digits()?;
                let rows = softmax_rows(tape.value(trunk).data(), b);
                rows.chunks(nb)
                    .map(|r| self.finish(r.iter().map(|p| argmax(p)).collect(), r.to_vec()))
                    .collect()
            }
            HeadKind::Gpt => {
                let nb = self.config.num_digits()?;
                let mut digits: Vec<Vec<u32>> = vec![Vec::with_capacity(nb); n];
                let mut probs: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(nb); n];
                for m in 0..nb {
                    let logits = self.gpt_logits(&mut tape, trunk, &digits)?;
                    let rows = softmax_rows(tape.value(logits).data(), b);
                    for i in 0..n {
                        let last = rows[i * (m + 1) + m].clone();
                        digits[i].push(argmax(&last));
                        probs[i].push(last);
                    }
                }
                digits.into_iter().zip(probs).map(|(d, p)| self.finish(d, p)).collect()
            }
        }
    }

    pub fn param_prefix(&self) -> String {
        format!("head/{}/", self.config.kind.name())
    }

    pub fn to_arrays(&self) -> Vec<NamedArray> {
        let mut arrays = vec![NamedArray::from_u32s(CONFIG_ARRAY, &self.config.to_u32s(self.rep_dim))];
        arrays.extend(checkpoint::arrays_from_store(&self.params, &self.param_prefix()));
        arrays
    }

    pub fn from_arrays(arrays: &[NamedArray]) -> Result<Self> {
        let meta = arrays
            .iter()
            .find(|a| a.name == CONFIG_ARRAY)
            .ok_or_else(|| Error::Format("checkpoint has no head config".into()))?;
        let (config, rep_dim) = HeadConfig::from_u32s(&meta.as_u32s())?;
        let expected = Self::layout(config.clone(), rep_dim, Builder::zeroed())?;
        let params = checkpoint::store_from_arrays(arrays, &expected.param_prefix())?;
        nn::check_layout(&expected.params, &params, "head")?;
        Ok(Self {
            config,
            rep_dim,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(checkpoint::save(path, &self.to_arrays())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_arrays(&checkpoint::load(path)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadTrainConfig {
    pub batch: usize,
    pub iterations: u64,
    pub base_lr: f64,
    pub warmup: u64,
    pub seed: u64,
    pub adamw: AdamWConfig,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        Self {
            batch: 256,
            iterations: 2000,
            base_lr: 1e-3,
            warmup: 100,
            seed: 0,
            adamw: AdamWConfig::default(),
        }
    }
}

/// Generic head optimisation loop; `sample(step)` supplies `(h, coords)`.
pub fn fit_head<F>(head: &mut Head, train: &HeadTrainConfig, mut sample: F) -> Result<Vec<LossRecord>>
where
    F: FnMut(u64) -> Result<(Tensor<f32>, Vec<u64>)>,
{
    let mut opt = AdamW::new(train.adamw, &head.params);
    let mut history = Vec::with_capacity(train.iterations as usize);
    for step in 0..train.iterations {
        let (h, coords) = sample(step)?;
        let mut tape = Tape::new();
        let hv = tape.input(h);
        let loss = head.loss(&mut tape, hv, &coords)?;
        tape.backward(loss)?;
        let value = tape.value(loss).data()[0] as f64;
        let lr = step_lr(step, train.warmup, train.iterations, train.base_lr)?;
        let grads = tape.param_grads(head.params.len());
        if !value.is_finite() {
            let names = head.params.iter().map(|(n, _)| n.to_string()).collect();
            return Err(non_finite(step, lr, names, &grads));
        }
        opt.step(&mut head.params, &grads, lr);
        history.push(LossRecord { step, lr, loss: value });
        if step % 100 == 0 {
            log::info!("head step {step} lr {lr:.3e} loss {value:.5}");
        }
    }
    Ok(history)
}

/// Trains `head` on representations of augmented genome k-mers from the
/// frozen `encoder`. Batch `s` draws from stream `(seed, "head-batch", s)`.
pub fn train_head(
    encoder: &Encoder,
    head: &mut Head,
    genome: &Genome,
    aug: &AugmentConfig,
    train: &HeadTrainConfig,
) -> Result<Vec<LossRecord>> {
    let k = encoder.config.k;
    if aug.k != k || genome.len() < k {
        return invalid(format!(
            "augmentation k {} and genome length {} must fit encoder k {k}",
            aug.k,
            genome.len()
        ));
    }
    if head.rep_dim != encoder.config.rep_dim() {
        return invalid("head and encoder representation widths differ");
    }
    if head.config.coord_len != genome.len() as u64 {
        return invalid(format!(
            "head coordinate space {} differs from genome length {}",
            head.config.coord_len,
            genome.len()
        ));
    }
    let sample = |step: u64| -> Result<(Tensor<f32>, Vec<u64>)> {
        let mut rng = rng::stream(train.seed, "head-batch", step);
        let mut xs: Vec<OneHotKmer> = Vec::with_capacity(train.batch);
        let mut coords = Vec::with_capacity(train.batch);
        while xs.len() < train.batch {
            let c = rng.random_range(0..=genome.len() - k);
            if !genome.window_is_clean(c, k) {
                continue;
            }
            xs.push(apply_noise(&genome.kmer_at(c, k)?, aug, &mut rng));
            coords.push(c as u64);
        }
        Ok((encoder.encode(&xs)?.h, coords))
    };
    fit_head(head, train, sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(kind: HeadKind, len: u64) -> HeadConfig {
        HeadConfig {
            mlp_width: 32,
            gpt: GptConfig {
                ff_dim: 32,
                token_dim: 16,
                ..Default::default()
            },
            ..HeadConfig::new(kind, len)
        }
    }

    fn random_h(n: usize, d: usize, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f32> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        for r in v.chunks_mut(d) {
            let s = r.iter().map(|x| x * x).sum::<f32>().sqrt();
            r.iter_mut().for_each(|x| *x /= s);
        }
        Tensor::new(vec![n, d], v).unwrap()
    }

    #[test]
    fn output_widths() {
        assert_eq!(HeadConfig::new(HeadKind::Mse, 20000).out_width().unwrap(), 1);
        assert_eq!(HeadConfig::new(HeadKind::Cce, 20000).out_width().unwrap(), 30);
        assert_eq!(HeadConfig::new(HeadKind::Gpt, 20000).out_width().unwrap(), 512);
        assert!(HeadKind::parse("bins").is_err());
    }

    #[test]
    fn probability_rows_are_distributions() {
        for kind in [HeadKind::Cce, HeadKind::Gpt] {
            let head = Head::build(small(kind, 5000), 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let preds = head.predict(&random_h(4, 8, 2)).unwrap();
            for p in &preds {
                assert_eq!(p.digit_probs.len(), 8);
                for row in &p.digit_probs {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    assert!(row.iter().all(|v| *v >= 0.0));
                }
                assert!(p.coordinate < 5000);
            }
        }
    }

    #[test]
    fn untrained_regression_is_finite_and_in_range() {
        let head = Head::build(small(HeadKind::Mse, 1000), 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for p in head.predict(&random_h(5, 8, 3)).unwrap() {
            assert!(p.coordinate < 1000);
        }
    }

    #[test]
    fn regression_loss_vanishes_at_target() {
        let head = Head::build(small(HeadKind::Mse, 1000), 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let h = random_h(3, 8, 4);
        let mut tape = Tape::inference();
        let hv = tape.input(h.clone());
        let out = head.trunk(&mut tape, hv).unwrap();
        let target = tape.value(out).clone();
        let t = tape.input(target);
        let l = tape.mse(out, t).unwrap();
        assert_eq!(tape.value(l).data()[0], 0.0);
    }

    #[test]
    fn out_of_range_codes_are_clamped_and_flagged() {
        let head = Head::build(small(HeadKind::Cce, 20), 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let p = head.finish(vec![2, 2, 2], vec![]).unwrap();
        assert_eq!((p.coordinate, p.clamped), (19, true));
        let p = head.finish(vec![0, 1, 2], vec![]).unwrap();
        assert_eq!((p.coordinate, p.clamped), (5, false));
    }

    #[test]
    fn gpt_teacher_shape_and_length_check() {
        let head = Head::build(small(HeadKind::Gpt, 5000), 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let h = random_h(2, 8, 5);
        let t = head.gpt_teacher_logits(&h, &[vec![0; 8], vec![1; 8]]).unwrap();
        assert_eq!(t.shape(), &[2, 8, 3]);
        assert!(head.gpt_teacher_logits(&h, &[vec![0; 7], vec![1; 7]]).is_err());
    }

    #[test]
    fn single_digit_space_works() {
        let head = Head::build(small(HeadKind::Gpt, 2), 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let preds = head.predict(&random_h(2, 8, 6)).unwrap();
        assert!(preds.iter().all(|p| p.digit_probs.len() == 1 && p.coordinate < 2));
    }

    #[test]
    fn checkpoint_round_trip() {
        let head = Head::build(small(HeadKind::Gpt, 5000), 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let back = Head::from_arrays(&head.to_arrays()).unwrap();
        assert_eq!(back.config, head.config);
        let h = random_h(3, 8, 7);
        assert_eq!(head.predict(&h).unwrap(), back.predict(&h).unwrap());
    }
}
