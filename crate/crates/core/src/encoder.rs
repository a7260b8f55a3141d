//! Residual 1-D convolutional encoder mapping one-hot k-mers to unit-norm
//! representations `h` and embeddings `z`.

use std::path::Path;

use kmerspace_autodiff::checkpoint::{self, NamedArray};
use kmerspace_autodiff::{ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::nn::{self, Builder, L2_EPS};
use crate::seq::OneHotKmer;

pub const PARAM_PREFIX: &str = "encoder/";
pub const CONFIG_ARRAY: &str = "meta/encoder";
const CONFIG_VERSION: u32 = 1;
const INFERENCE_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub stage_channels: [usize; 4],
    pub stage_blocks: [usize; 4],
    pub embed_dim: usize,
    pub k: usize,
    /// Normalize the block input before its first convolution instead of
    /// normalizing the convolution output.
    pub norm_before_conv: bool,
}

impl EncoderConfig {
    pub fn tiny() -> Self {
        Self::with_stages([64, 128, 256, 512], [3, 3, 9, 3])
    }

    pub fn small() -> Self {
        Self::with_stages([64, 128, 256, 512], [3, 3, 27, 3])
    }

    pub fn base() -> Self {
        Self::with_stages([96, 192, 384, 768], [3, 3, 27, 3])
    }

    /// Desk-scale preset for CPU training.
    pub fn nano() -> Self {
        Self::with_stages([16, 32, 64, 128], [1, 1, 2, 1])
    }

    fn with_stages(stage_channels: [usize; 4], stage_blocks: [usize; 4]) -> Self {
        Self {
            stage_channels,
            stage_blocks,
            embed_dim: 256,
            k: 30,
            norm_before_conv: false,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "t" | "tiny" => Ok(Self::tiny()),
            "s" | "small" => Ok(Self::small()),
            "b" | "base" => Ok(Self::base()),
            "nano" => Ok(Self::nano()),
            other => invalid(format!("unknown encoder preset {other:?} (expected T, S, B or nano)")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.iter().chain(&self.stage_blocks).any(|v| *v == 0) {
            return invalid("stage channels and block counts must be at least 1");
        }
        if self.embed_dim == 0 || self.k == 0 {
            return invalid("embed_dim and k must be at least 1");
        }
        Ok(())
    }

    pub fn rep_dim(&self) -> usize {
        self.stage_channels[3]
    }

    /// Sequence length entering each stage.
    pub fn stage_lengths(&self) -> [usize; 4] {
        let mut l = [self.k; 4];
        for s in 1..4 {
            l[s] = l[s - 1].div_ceil(2);
        }
        l
    }

    fn to_u32s(&self) -> Vec<u32> {
        let mut v = vec![CONFIG_VERSION];
        v.extend(self.stage_channels.iter().map(|c| *c as u32));
        v.extend(self.stage_blocks.iter().map(|c| *c as u32));
        v.extend([self.embed_dim as u32, self.k as u32, self.norm_before_conv as u32]);
        v
    }

    fn from_u32s(v: &[u32]) -> Result<Self> {
        if v.len() != 12 || v[0] != CONFIG_VERSION {
            return Err(Error::Format(format!(
                "unsupported encoder config record (length {}, version {:?})",
                v.len(),
                v.first()
            )));
        }
        let us = |i: usize| v[i] as usize;
        let cfg = Self {
            stage_channels: [us(1), us(2), us(3), us(4)],
            stage_blocks: [us(5), us(6), us(7), us(8)],
            embed_dim: us(9),
            k: us(10),
            norm_before_conv: v[11] != 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub params: ParamStore<f32>,
}

/// Outputs of [`Encoder::encode`], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub h: Tensor<f32>,
    pub z: Tensor<f32>,
}

impl Encoder {
    pub fn build<R: Rng>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        Self::layout(config, Builder::new(rng))
    }

    fn layout(config: EncoderConfig, mut b: Builder<'_>) -> Result<Self> {
        config.validate()?;
        let [c0, ..] = config.stage_channels;
        b.conv("stem.conv", 3, 4, c0)?;
        b.layer_norm("stem.ln", c0)?;
        for s in 0..4 {
            let c = config.stage_channels[s];
            if s > 0 {
                b.conv(&format!("down{s}.conv"), 3, config.stage_channels[s - 1], c)?;
            }
            for j in 0..config.stage_blocks[s] {
                let p = format!("stage{s}.block{j}");
                b.conv(&format!("{p}.conv"), 3, c, c)?;
                b.layer_norm(&format!("{p}.ln"), c)?;
                b.dense(&format!("{p}.expand"), c, 4 * c)?;
                b.dense(&format!("{p}.project"), 4 * c, c)?;
            }
        }
        let r = config.rep_dim();
        b.dense("rep", r, r)?;
        b.dense("embed", r, config.embed_dim)?;
        Ok(Self {
            config,
            params: b.store,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    /// Forward pass of `x: [N, k, 4]`, returning `(h, z)`.
    pub fn forward(&self, tape: &mut Tape<f32>, x: Var) -> Result<(Var, Var)> {
        let cfg = &self.config;
        let p = &self.params;
        let s = tape.shape(x);
        if s.len() != 3 || s[1] != cfg.k || s[2] != 4 {
            return invalid(format!("encoder expects [N, {}, 4] input, got {s:?}", cfg.k));
        }
        let mut y = nn::conv_same(tape, p, "stem.conv", x)?;
        y = nn::layer_norm(tape, p, "stem.ln", y)?;
        y = tape.gelu(y);
        for st in 0..4 {
            if st > 0 {
                y = tape.avg_pool1d(y, 2, 2)?;
                y = nn::conv_same(tape, p, &format!("down{st}.conv"), y)?;
                y = tape.gelu(y);
            }
            for j in 0..cfg.stage_blocks[st] {
                y = self.block(tape, &format!("stage{st}.block{j}"), y)?;
            }
        }
        let pooled = tape.global_avg_pool(y)?;
        let rep = nn::dense(tape, p, "rep", pooled)?;
        let rep = tape.gelu(rep);
        let h = tape.l2_normalize(rep, L2_EPS);
        let e = nn::dense(tape, p, "embed", h)?;
        let z = tape.l2_normalize(e, L2_EPS);
        Ok((h, z))
    }

    fn block(&self, tape: &mut Tape<f32>, name: &str, x: Var) -> Result<Var> {
        let p = &self.params;
        let y = if self.config.norm_before_conv {
            let n = nn::layer_norm(tape, p, &format!("{name}.ln"), x)?;
            nn::conv_same(tape, p, &format!("{name}.conv"), n)?
        } else {
            let c = nn::conv_same(tape, p, &format!("{name}.conv"), x)?;
            nn::layer_norm(tape, p, &format!("{name}.ln"), c)?
        };
        let y = nn::dense(tape, p, &format!("{name}.expand"), y)?;
        let y = tape.gelu(y);
        let y = nn::dense(tape, p, &format!("{name}.project"), y)?;
        Ok(tape.add(y, x)?)
    }

    /// Packs k-mers into an `[N, k, 4]` tensor.
    pub fn batch_tensor(&self, batch: &[&OneHotKmer]) -> Result<Tensor<f32>> {
        let k = self.config.k;
        let mut data = Vec::with_capacity(batch.len() * k * 4);
        for (i, x) in batch.iter().enumerate() {
            if x.k() != k {
                return invalid(format!("k-mer {i} has length {}, encoder expects {k}", x.k()));
            }
            x.extend_f32(&mut data);
        }
        Ok(Tensor::new(vec![batch.len(), k, 4], data)?)
    }

    /// Inference over any number of k-mers, in fixed chunks run in parallel.
    pub fn encode(&self, batch: &[OneHotKmer]) -> Result<Encoded> {
        let (r, e) = (self.config.rep_dim(), self.config.embed_dim);
        let parts = batch
            .par_chunks(INFERENCE_CHUNK)
            .map(|chunk| {
                let refs: Vec<&OneHotKmer> = chunk.iter().collect();
                let mut tape = Tape::inference();
                let x = tape.input(self.batch_tensor(&refs)?);
                let (h, z) = self.forward(&mut tape, x)?;
                Ok((tape.value(h).data().to_vec(), tape.value(z).data().to_vec()))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mut h, mut z) = (Vec::with_capacity(batch.len() * r), Vec::with_capacity(batch.len() * e));
        for (ph, pz) in parts {
            h.extend(ph);
            z.extend(pz);
        }
        Ok(Encoded {
            h: Tensor::new(vec![batch.len(), r], h)?,
            z: Tensor::new(vec![batch.len(), e], z)?,
        })
    }

    pub fn to_arrays(&self) -> Vec<NamedArray> {
        let mut arrays = vec![NamedArray::from_u32s(CONFIG_ARRAY, &self.config.to_u32s())];
        arrays.extend(checkpoint::arrays_from_store(&self.params, PARAM_PREFIX));
        arrays
    }

    pub fn from_arrays(arrays: &[NamedArray]) -> Result<Self> {
        let meta = arrays
            .iter()
            .find(|a| a.name == CONFIG_ARRAY)
            .ok_or_else(|| Error::Format("checkpoint has no encoder config".into()))?;
        let config = EncoderConfig::from_u32s(&meta.as_u32s())?;
        let params = checkpoint::store_from_arrays(arrays, PARAM_PREFIX)?;
        let expected = Self::layout(config.clone(), Builder::zeroed())?;
        nn::check_layout(&expected.params, &params, "encoder")?;
        Ok(Self { config, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(checkpoint::save(path, &self.to_arrays())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_arrays(&checkpoint::load(path)?)
    }

    /// SHA-256 over parameter names, shapes and values.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, t) in self.params.iter() {
            hasher.update(name.as_bytes());
            for d in t.shape() {
                hasher.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
