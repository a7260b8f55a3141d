//! Run configuration: every module config in one INI file with a section per
//! module. Unknown sections or keys are rejected.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use ini::{Ini, Properties};
use kmerspace_core::analysis::InversionConfig;
use kmerspace_core::contrastive::{LossConfig, Mode, TrainConfig, Weighting};
use kmerspace_core::encoder::EncoderConfig;
use kmerspace_core::heads::{HeadConfig, HeadKind, HeadTrainConfig};
use kmerspace_core::noise::{AugmentConfig, DamageConfig};
use kmerspace_core::seq::NPolicy;

use crate::error::{usage, CliError};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub window: usize,
    pub n_policy: NPolicy,
    pub encoder: EncoderConfig,
    pub augment: AugmentConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub head: HeadConfig,
    pub head_train: HeadTrainConfig,
    pub damage: DamageConfig,
    pub inversion: InversionConfig,
    pub background_reads: usize,
    pub stride: usize,
    pub knn_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            window: kmerspace_core::mapper::DEFAULT_WINDOW,
            n_policy: NPolicy::Reject,
            encoder: EncoderConfig::nano(),
            augment: AugmentConfig::default(),
            loss: LossConfig::default(),
            train: TrainConfig {
                base_lr: 1e-4,
                warmup: 200,
                ..TrainConfig::default()
            },
            head: HeadConfig {
                mlp_width: 512,
                ..HeadConfig::new(HeadKind::Cce, 1)
            },
            head_train: HeadTrainConfig::default(),
            damage: DamageConfig::default(),
            inversion: InversionConfig::default(),
            background_reads: 5000,
            stride: 1,
            knn_k: 10,
        }
    }
}

struct Section<'a> {
    name: &'static str,
    props: Option<&'a Properties>,
    used: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(ini: &'a Ini, name: &'static str) -> Self {
        Self {
            name,
            props: ini.section(Some(name)),
            used: BTreeSet::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a str> {
        self.used.insert(key.to_string());
        self.props.and_then(|p| p.get(key))
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<(), CliError> {
        if let Some(v) = self.raw(key) {
            *slot = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("[{}] {key}: cannot parse {v:?}", self.name)))?;
        }
        Ok(())
    }

    fn set_with<T>(
        &mut self,
        key: &str,
        slot: &mut T,
        parse: impl Fn(&str) -> kmerspace_core::Result<T>,
    ) -> Result<(), CliError> {
        if let Some(v) = self.raw(key) {
            *slot = parse(v.trim()).map_err(|e| CliError::Usage(format!("[{}] {key}: {e}", self.name)))?;
        }
        Ok(())
    }

    fn set_list(&mut self, key: &str, slot: &mut [usize; 4]) -> Result<(), CliError> {
        if let Some(v) = self.raw(key) {
            let parts: Vec<usize> = v
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("[{}] {key}: expected 4 comma-separated integers", self.name)))?;
            *slot = parts
                .try_into()
                .map_err(|_| CliError::Usage(format!("[{}] {key}: expected 4 values", self.name)))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some(p) = self.props {
            if let Some((k, _)) = p.iter().find(|(k, _)| !self.used.contains(*k)) {
                return usage(format!("unknown key {k:?} in section [{}]", self.name));
            }
        }
        Ok(())
    }
}

const SECTIONS: [&str; 10] = [
    "run",
    "encoder",
    "augment",
    "loss",
    "train",
    "head",
    "head_train",
    "damage",
    "inversion",
    "analysis",
];

fn n_policy_name(p: NPolicy) -> &'static str {
    match p {
        NPolicy::Reject => "reject",
        NPolicy::Mask => "mask",
    }
}

fn parse_n_policy(s: &str) -> kmerspace_core::Result<NPolicy> {
    match s {
        "reject" => Ok(NPolicy::Reject),
        "mask" => Ok(NPolicy::Mask),
        other => Err(kmerspace_core::Error::InvalidArgument(format!(
            "unknown N policy {other:?} (expected reject or mask)"
        ))),
    }
}

impl RunConfig {
    pub fn from_ini_str(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        for (name, props) in ini.iter() {
            match name {
                Some(n) if SECTIONS.contains(&n) => {}
                None if props.is_empty() => {}
                Some(n) => return usage(format!("unknown config section [{n}]")),
                None => return usage("config keys must appear under a section header"),
            }
        }
        let mut c = RunConfig::default();

        let mut s = Section::new(&ini, "run");
        s.set("seed", &mut c.seed)?;
        s.set("window", &mut c.window)?;
        s.set_with("n_policy", &mut c.n_policy, parse_n_policy)?;
        s.finish()?;

        let mut s = Section::new(&ini, "encoder");
        s.set_with("preset", &mut c.encoder, EncoderConfig::preset)?;
        s.set_list("stage_channels", &mut c.encoder.stage_channels)?;
        s.set_list("stage_blocks", &mut c.encoder.stage_blocks)?;
        s.set("embed_dim", &mut c.encoder.embed_dim)?;
        s.set("k", &mut c.encoder.k)?;
        s.set("norm_before_conv", &mut c.encoder.norm_before_conv)?;
        s.finish()?;

        let a = &mut c.augment;
        let mut s = Section::new(&ini, "augment");
        s.set("k", &mut a.k)?;
        s.set("d", &mut a.d)?;
        s.set("flat_sub_rate", &mut a.flat_sub_rate)?;
        s.set("deam_rate", &mut a.deam_rate)?;
        s.set("deam_end_len", &mut a.deam_end_len)?;
        s.set("revcomp_prob", &mut a.revcomp_prob)?;
        s.set("damage_after_revcomp", &mut a.damage_after_revcomp)?;
        s.finish()?;

        let mut s = Section::new(&ini, "loss");
        s.set("tau", &mut c.loss.tau)?;
        s.set("gamma", &mut c.loss.gamma)?;
        s.set_with("mode", &mut c.loss.mode, Mode::parse)?;
        s.set_with("weighting", &mut c.loss.weighting, Weighting::parse)?;
        s.finish()?;

        let t = &mut c.train;
        let mut s = Section::new(&ini, "train");
        s.set("batch_pairs", &mut t.batch_pairs)?;
        s.set("iterations", &mut t.iterations)?;
        s.set("base_lr", &mut t.base_lr)?;
        s.set("warmup", &mut t.warmup)?;
        s.set("beta1", &mut t.adamw.beta1)?;
        s.set("beta2", &mut t.adamw.beta2)?;
        s.set("eps", &mut t.adamw.eps)?;
        s.set("weight_decay", &mut t.adamw.weight_decay)?;
        s.finish()?;

        let h = &mut c.head;
        let mut s = Section::new(&ini, "head");
        s.set_with("kind", &mut h.kind, HeadKind::parse)?;
        s.set("mlp_width", &mut h.mlp_width)?;
        s.set("mlp_layers", &mut h.mlp_layers)?;
        s.set("base", &mut h.base)?;
        s.set("gpt_blocks", &mut h.gpt.blocks)?;
        s.set("gpt_heads", &mut h.gpt.heads)?;
        s.set("gpt_ff_dim", &mut h.gpt.ff_dim)?;
        s.set("gpt_token_dim", &mut h.gpt.token_dim)?;
        s.set("gpt_mlp_out_tokens", &mut h.gpt.mlp_out_tokens)?;
        s.finish()?;

        let t = &mut c.head_train;
        let mut s = Section::new(&ini, "head_train");
        s.set("batch", &mut t.batch)?;
        s.set("iterations", &mut t.iterations)?;
        s.set("base_lr", &mut t.base_lr)?;
        s.set("warmup", &mut t.warmup)?;
        s.set("beta1", &mut t.adamw.beta1)?;
        s.set("beta2", &mut t.adamw.beta2)?;
        s.set("eps", &mut t.adamw.eps)?;
        s.set("weight_decay", &mut t.adamw.weight_decay)?;
        s.finish()?;

        let d = &mut c.damage;
        let mut s = Section::new(&ini, "damage");
        s.set("fragment_len", &mut d.fragment_len)?;
        s.set("overhang_geom_p", &mut d.overhang_geom_p)?;
        s.set("deam_ss", &mut d.deam_ss)?;
        s.set("deam_ds", &mut d.deam_ds)?;
        s.set("seq_error_rate", &mut d.seq_error_rate)?;
        s.finish()?;

        let mut s = Section::new(&ini, "inversion");
        s.set("quantile", &mut c.inversion.quantile)?;
        s.set("merge_gap", &mut c.inversion.merge_gap)?;
        s.set("min_support", &mut c.inversion.min_support)?;
        s.set("background_reads", &mut c.background_reads)?;
        s.finish()?;

        let mut s = Section::new(&ini, "analysis");
        s.set("stride", &mut c.stride)?;
        s.set("knn_k", &mut c.knn_k)?;
        s.finish()?;

        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    /// Copies values shared between module configs and validates the result.
    pub fn resolve(&mut self) -> Result<(), CliError> {
        self.inversion.k = self.encoder.k;
        self.inversion.window = self.window;
        self.train.seed = self.seed;
        self.head_train.seed = self.seed;
        if self.augment.k != self.encoder.k {
            return usage(format!(
                "[augment] k = {} differs from [encoder] k = {}",
                self.augment.k, self.encoder.k
            ));
        }
        if self.window == 0 {
            return usage("[run] window must be positive");
        }
        if self.stride == 0 || self.knn_k == 0 {
            return usage("[analysis] stride and knn_k must be positive");
        }
        let bad = |e: kmerspace_core::Error| CliError::Usage(e.to_string());
        self.encoder.validate().map_err(bad)?;
        self.augment.validate().map_err(bad)?;
        self.loss.validate().map_err(bad)?;
        self.damage.validate().map_err(bad)?;
        Ok(())
    }

    pub fn to_ini_string(&self) -> String {
        fn put(ini: &mut Ini, section: &str, pairs: &[(&str, &dyn Display)]) {
            let mut s = ini.with_section(Some(section));
            for (k, v) in pairs {
                s.set(*k, v.to_string());
            }
        }
        let list = |v: &[usize; 4]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut ini = Ini::new();
        put(
            &mut ini,
            "run",
            &[
                ("seed", &self.seed),
                ("window", &self.window),
                ("n_policy", &n_policy_name(self.n_policy)),
            ],
        );
        let e = &self.encoder;
        put(
            &mut ini,
            "encoder",
            &[
                ("stage_channels", &list(&e.stage_channels)),
                ("stage_blocks", &list(&e.stage_blocks)),
                ("embed_dim", &e.embed_dim),
                ("k", &e.k),
                ("norm_before_conv", &e.norm_before_conv),
            ],
        );
        let a = &self.augment;
        put(
            &mut ini,
            "augment",
            &[
                ("k", &a.k),
                ("d", &a.d),
                ("flat_sub_rate", &a.flat_sub_rate),
                ("deam_rate", &a.deam_rate),
                ("deam_end_len", &a.deam_end_len),
                ("revcomp_prob", &a.revcomp_prob),
                ("damage_after_revcomp", &a.damage_after_revcomp),
            ],
        );
        let l = &self.loss;
        put(
            &mut ini,
            "loss",
            &[
                ("tau", &l.tau),
                ("gamma", &l.gamma),
                ("mode", &l.mode.name()),
                ("weighting", &l.weighting.name()),
            ],
        );
        let t = &self.train;
        put(
            &mut ini,
            "train",
            &[
                ("batch_pairs", &t.batch_pairs),
                ("iterations", &t.iterations),
                ("base_lr", &t.base_lr),
                ("warmup", &t.warmup),
                ("beta1", &t.adamw.beta1),
                ("beta2", &t.adamw.beta2),
                ("eps", &t.adamw.eps),
                ("weight_decay", &t.adamw.weight_decay),
            ],
        );
        let h = &self.head;
        put(
            &mut ini,
            "head",
            &[
                ("kind", &h.kind.name()),
                ("mlp_width", &h.mlp_width),
                ("mlp_layers", &h.mlp_layers),
                ("base", &h.base),
                ("gpt_blocks", &h.gpt.blocks),
                ("gpt_heads", &h.gpt.heads),
                ("gpt_ff_dim", &h.gpt.ff_dim),
                ("gpt_token_dim", &h.gpt.token_dim),
                ("gpt_mlp_out_tokens", &h.gpt.mlp_out_tokens),
            ],
        );
        let t = &self.head_train;
        put(
            &mut ini,
            "head_train",
            &[
                ("batch", &t.batch),
                ("iterations", &t.iterations),
                ("base_lr", &t.base_lr),
                ("warmup", &t.warmup),
                ("beta1", &t.adamw.beta1),
                ("beta2", &t.adamw.beta2),
                ("eps", &t.adamw.eps),
                ("weight_decay", &t.adamw.weight_decay),
            ],
        );
        let d = &self.damage;
        put(
            &mut ini,
            "damage",
            &[
                ("fragment_len", &d.fragment_len),
                ("overhang_geom_p", &d.overhang_geom_p),
                ("deam_ss", &d.deam_ss),
                ("deam_ds", &d.deam_ds),
                ("seq_error_rate", &d.seq_error_rate),
            ],
        );
        let i = &self.inversion;
        put(
            &mut ini,
            "inversion",
            &[
                ("quantile", &i.quantile),
                ("merge_gap", &i.merge_gap),
                ("min_support", &i.min_support),
                ("background_reads", &self.background_reads),
            ],
        );
        put(
            &mut ini,
            "analysis",
            &[("stride", &self.stride), ("knn_k", &self.knn_k)],
        );
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("config text is UTF-8")
    }
}
