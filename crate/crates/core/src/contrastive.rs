//! Coordinate-thresholded contrastive loss, batch assembly and the encoder
//! training loop.

use std::io::Write;
use std::path::PathBuf;

use kmerspace_autodiff::{cosine_warmup_lr, grad_norm, AdamW, AdamWConfig, Scalar, Tape, Tensor, Var};
use rand::Rng;

use crate::encoder::Encoder;
use crate::error::{invalid, Error, Result};
use crate::noise::{apply_noise, AugmentConfig};
use crate::rng;
use crate::seq::{Genome, Kmer, OneHotKmer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Supervised,
    SelfSupervised,
}

/// How positives are weighted in supervised mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Weighting {
    #[default]
    Off,
    /// `|c_i - c_p| / Γ`
    Proportional,
    /// `1 - |c_i - c_p| / Γ`
    Inverted,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Supervised => "supervised",
            Mode::SelfSupervised => "selfsup",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "supervised" => Ok(Mode::Supervised),
            "selfsup" | "self-supervised" => Ok(Mode::SelfSupervised),
            other => invalid(format!("unknown mode {other:?} (expected supervised or selfsup)")),
        }
    }
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Off => "off",
            Weighting::Proportional => "proportional",
            Weighting::Inverted => "inverted",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Weighting::Off),
            "proportional" => Ok(Weighting::Proportional),
            "inverted" => Ok(Weighting::Inverted),
            other => invalid(format!(
                "unknown weighting {other:?} (expected off, proportional or inverted)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub tau: f64,
    pub gamma: f64,
    pub mode: Mode,
    pub weighting: Weighting,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            gamma: 1000.0,
            mode: Mode::Supervised,
            weighting: Weighting::Off,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return invalid(format!("temperature {} must be positive", self.tau));
        }
        if self.mode == Mode::Supervised && !(self.gamma > 0.0) {
            return invalid(format!("coordinate threshold {} must be positive", self.gamma));
        }
        Ok(())
    }
}

/// `2N` samples; `partner[i]` is the other half of sample `i`'s augmentation pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveBatch {
    pub x: Vec<OneHotKmer>,
    pub coords: Option<Vec<usize>>,
    pub partner: Vec<usize>,
}

impl ContrastiveBatch {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Supervised: every other sample within `Γ` bp. Self-supervised: the partner.
pub fn positive_set(coords: Option<&[usize]>, partner: &[usize], cfg: &LossConfig) -> Result<Vec<Vec<usize>>> {
    match cfg.mode {
        Mode::SelfSupervised => Ok(partner.iter().map(|p| vec![*p]).collect()),
        Mode::Supervised => {
            let Some(c) = coords else {
                return invalid("supervised positives need coordinates");
            };
            if c.len() != partner.len() {
                return invalid(format!("{} coordinates for {} samples", c.len(), partner.len()));
            }
            Ok((0..c.len())
                .map(|i| {
                    (0..c.len())
                        .filter(|&p| p != i && (c[i].abs_diff(c[p]) as f64) <= cfg.gamma)
                        .collect()
                })
                .collect())
        }
    }
}

pub fn distance_weights(coords: Option<&[usize]>, positives: &[Vec<usize>], cfg: &LossConfig) -> Vec<Vec<f64>> {
    let w = |i: usize, p: usize| -> f64 {
        let Some(c) = coords else { return 1.0 };
        let r = c[i].abs_diff(c[p]) as f64 / cfg.gamma;
        match cfg.weighting {
            Weighting::Off => 1.0,
            Weighting::Proportional => r,
            Weighting::Inverted => 1.0 - r,
        }
    };
    positives
        .iter()
        .enumerate()
        .map(|(i, ps)| {
            if cfg.mode == Mode::SelfSupervised {
                vec![1.0; ps.len()]
            } else {
                ps.iter().map(|&p| w(i, p)).collect()
            }
        })
        .collect()
}

/// Mean over samples with a non-empty positive set of
/// `-1/|P(i)| Σ_p w_ip log softmax_{a≠i}(z_i·z_a/τ)_p`.
///
/// `z: [M, D]` with unit rows. The backward pass is exact:
/// `∂L/∂Z = (G + Gᵀ) Z` with `G_ia = ∂L/∂(z_i·z_a)`.
pub fn contrastive_loss<T: Scalar>(
    tape: &mut Tape<T>,
    z: Var,
    positives: &[Vec<usize>],
    weights: &[Vec<f64>],
    tau: f64,
) -> Result<Var> {
    if !(tau > 0.0) {
        return invalid(format!("temperature {tau} must be positive"));
    }
    let s = tape.shape(z).to_vec();
    if s.len() != 2 || s[0] != positives.len() || weights.len() != positives.len() {
        return invalid(format!("embeddings {s:?} for {} positive sets", positives.len()));
    }
    let (m, d) = (s[0], s[1]);
    if positives.iter().zip(weights).any(|(p, w)| p.len() != w.len()) {
        return invalid("positive sets and weights differ in length");
    }
    if positives
        .iter()
        .enumerate()
        .any(|(i, p)| p.iter().any(|&j| j >= m || j == i))
    {
        return invalid("positive index out of range or equal to its anchor");
    }
    let zv = tape.value(z).data();
    let mut sim = vec![T::zero(); m * m];
    kmerspace_autodiff::gemm(m, d, m, zv, false, zv, true, &mut sim, false);
    let inv_tau = T::of(1.0 / tau);

    let contributing = positives.iter().filter(|p| !p.is_empty()).count();
    if contributing == 0 {
        return invalid("no sample has a positive");
    }
    let norm = T::of(1.0 / contributing as f64);
    let mut loss = T::zero();
    // G holds ∂L/∂s_ia for the similarity matrix s = Z Zᵀ.
    let mut g = vec![T::zero(); m * m];
    for i in 0..m {
        if positives[i].is_empty() {
            continue;
        }
        let row = &sim[i * m..(i + 1) * m];
        let mx = (0..m)
            .filter(|&a| a != i)
            .map(|a| row[a] * inv_tau)
            .fold(T::neg_infinity(), T::max);
        let denom: T = (0..m).filter(|&a| a != i).map(|a| (row[a] * inv_tau - mx).exp()).sum();
        let lse = mx + denom.ln();
        let inv_p = T::of(1.0 / positives[i].len() as f64);
        let mut wsum = T::zero();
        for (&p, &w) in positives[i].iter().zip(&weights[i]) {
            let w = T::of(w);
            loss -= norm * inv_p * w * (row[p] * inv_tau - lse);
            g[i * m + p] -= norm * inv_p * w * inv_tau;
            wsum += w;
        }
        for a in (0..m).filter(|&a| a != i) {
            let sm = (row[a] * inv_tau - lse).exp();
            g[i * m + a] += norm * inv_p * wsum * sm * inv_tau;
        }
    }
    let out = Tensor::scalar(loss);
    Ok(tape.push_op(
        out,
        vec![z],
        Box::new(move |ctx| {
            let zv = ctx.inputs[0].data();
            let up = ctx.grad[0];
            let mut sym = vec![T::zero(); m * m];
            for i in 0..m {
                for a in 0..m {
                    sym[i * m + a] = (g[i * m + a] + g[a * m + i]) * up;
                }
            }
            let mut gz = vec![T::zero(); m * d];
            kmerspace_autodiff::gemm(m, m, d, &sym, false, zv, false, &mut gz, false);
            vec![Some(gz)]
        }),
    ))
}

/// Where positive pairs come from.
#[derive(Clone, Copy, Debug)]
pub enum PairSource<'a> {
    Genome(&'a Genome),
    /// Unlabelled sequences; both k-mers of a pair come from one sequence.
    Reads(&'a [Vec<u8>]),
}

fn pair_in<R: Rng + ?Sized>(bases: &[u8], k: usize, d: usize, rng: &mut R) -> (usize, usize) {
    let ci = rng.random_range(0..=bases.len() - k - d);
    (ci, rng.random_range(ci..=ci + d))
}

/// `2N` augmented samples, partners interleaved as `(2m, 2m + 1)`.
pub fn build_batch<R: Rng + ?Sized>(
    source: PairSource<'_>,
    aug: &AugmentConfig,
    n: usize,
    mode: Mode,
    rng: &mut R,
) -> Result<ContrastiveBatch> {
    aug.validate()?;
    if n == 0 {
        return invalid("batch must hold at least one pair");
    }
    let (k, d) = (aug.k, aug.d);
    let mut x = Vec::with_capacity(2 * n);
    let mut coords = Vec::with_capacity(2 * n);
    match source {
        PairSource::Genome(g) => {
            for _ in 0..n {
                let (a, b) = crate::noise::sample_positive_pair(g, aug, rng)?;
                for km in [&a, &b] {
                    coords.push(km.origin.as_ref().map_or(0, |o| o.coordinate));
                    x.push(apply_noise(km, aug, rng));
                }
            }
        }
        PairSource::Reads(reads) => {
            if mode == Mode::Supervised {
                return invalid("supervised training needs a reference genome");
            }
            let usable: Vec<&Vec<u8>> = reads.iter().filter(|r| r.len() >= k + d).collect();
            if usable.len() < reads.len() {
                log::warn!(
                    "skipping {} reads shorter than k + d = {}",
                    reads.len() - usable.len(),
                    k + d
                );
            }
            if usable.is_empty() {
                return invalid(format!("no read is at least k + d = {} bp long", k + d));
            }
            for _ in 0..n {
                let r = usable[rng.random_range(0..usable.len())];
                let (ci, cj) = pair_in(r, k, d, rng);
                for c in [ci, cj] {
                    let km = Kmer::new(r[c..c + k].to_vec())?;
                    coords.push(c);
                    x.push(apply_noise(&km, aug, rng));
                }
            }
        }
    }
    let partner = (0..2 * n).map(|i| i ^ 1).collect();
    let coords = matches!(source, PairSource::Genome(_)).then_some(coords);
    Ok(ContrastiveBatch { x, coords, partner })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Positive pairs per batch (`N`; the batch holds `2N` samples).
    pub batch_pairs: usize,
    pub iterations: u64,
    pub base_lr: f64,
    pub warmup: u64,
    pub seed: u64,
    pub adamw: AdamWConfig,
    pub checkpoint_every: Option<(u64, PathBuf)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_pairs: 64,
            iterations: 2000,
            base_lr: 0.5e-3,
            warmup: 2500,
            seed: 0,
            adamw: AdamWConfig::default(),
            checkpoint_every: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

pub fn write_loss_csv(w: &mut impl Write, history: &[LossRecord]) -> Result<()> {
    writeln!(w, "step,lr,loss")?;
    for r in history {
        writeln!(w, "{},{:.9e},{:.9e}", r.step, r.lr, r.loss)?;
    }
    Ok(())
}

/// Learning rate for 0-based `step` of `total`; warmup longer than the run is
/// shortened to the run length.
pub(crate) fn step_lr(step: u64, warmup: u64, total: u64, base_lr: f64) -> Result<f64> {
    Ok(cosine_warmup_lr(step + 1, warmup.min(total), total, base_lr)?)
}

pub(crate) fn non_finite(step: u64, lr: f64, names: Vec<String>, grads: &[Option<Vec<f32>>]) -> Error {
    let norms: Vec<String> = names
        .iter()
        .zip(grads)
        .map(|(n, g)| format!("{n}={:.3e}", g.as_ref().map_or(0.0, |g| grad_norm(&[Some(g.clone())]))))
        .collect();
    Error::NonFiniteLoss {
        step,
        lr,
        grad_norms: norms.join(", "),
    }
}

/// Trains `encoder` in place. Batch `s` draws from stream `(seed, "batch", s)`.
pub fn train_encoder(
    encoder: &mut Encoder,
    source: PairSource<'_>,
    loss_cfg: &LossConfig,
    aug: &AugmentConfig,
    train: &TrainConfig,
) -> Result<Vec<LossRecord>> {
    loss_cfg.validate()?;
    if aug.k != encoder.config.k {
        return invalid(format!(
            "augmentation k {} differs from encoder k {}",
            aug.k, encoder.config.k
        ));
    }
    let mut opt = AdamW::new(train.adamw, &encoder.params);
    let mut history = Vec::with_capacity(train.iterations as usize);
    for step in 0..train.iterations {
        let mut rng = rng::stream(train.seed, "batch", step);
        let batch = build_batch(source, aug, train.batch_pairs, loss_cfg.mode, &mut rng)?;
        let positives = positive_set(batch.coords.as_deref(), &batch.partner, loss_cfg)?;
        let weights = distance_weights(batch.coords.as_deref(), &positives, loss_cfg);

        let mut tape = Tape::new();
        let refs: Vec<&OneHotKmer> = batch.x.iter().collect();
        let x = tape.input(encoder.batch_tensor(&refs)?);
        let (_, z) = encoder.forward(&mut tape, x)?;
        let loss = contrastive_loss(&mut tape, z, &positives, &weights, loss_cfg.tau)?;
        tape.backward(loss)?;
        let value = tape.value(loss).data()[0] as f64;
        let lr = step_lr(step, train.warmup, train.iterations, train.base_lr)?;
        let grads = tape.param_grads(encoder.params.len());
        if !value.is_finite() {
            let names = encoder.params.iter().map(|(n, _)| n.to_string()).collect();
            return Err(non_finite(step, lr, names, &grads));
        }
        opt.step(&mut encoder.params, &grads, lr);
        history.push(LossRecord { step, lr, loss: value });
        if step % 100 == 0 {
            log::info!("step {step} lr {lr:.3e} loss {value:.5}");
        }
        if let Some((every, path)) = &train.checkpoint_every {
            if *every > 0 && (step + 1) % every == 0 {
                encoder.save(path)?;
            }
        }
    }
    Ok(history)
}
