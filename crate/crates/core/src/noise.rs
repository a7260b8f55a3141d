//! Augmentation of positive k-mer pairs and a simplified ancient-DNA read simulator.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::seq::{one_hot_bases, reverse_complement_bases, Genome, Kmer, OneHotKmer, Strand, BASES};

const MAX_RESAMPLE: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub k: usize,
    /// Maximum offset between the two k-mers of a positive pair.
    pub d: usize,
    pub flat_sub_rate: f64,
    pub deam_rate: f64,
    pub deam_end_len: usize,
    pub revcomp_prob: f64,
    /// Apply damage after the reverse-complement coin flip instead of before.
    pub damage_after_revcomp: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            k: 30,
            d: 50,
            flat_sub_rate: 0.01,
            deam_rate: 0.10,
            deam_end_len: 10,
            revcomp_prob: 0.5,
            damage_after_revcomp: false,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        invalid(format!("{name} = {p} is not a probability"))
    }
}

impl AugmentConfig {
    /// Same k and d with every noise source switched off.
    pub fn noiseless(&self) -> Self {
        Self {
            flat_sub_rate: 0.0,
            deam_rate: 0.0,
            revcomp_prob: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return invalid("k must be at least 1");
        }
        if self.deam_end_len > self.k {
            return invalid(format!("deam_end_len {} exceeds k {}", self.deam_end_len, self.k));
        }
        check_prob("flat_sub_rate", self.flat_sub_rate)?;
        check_prob("deam_rate", self.deam_rate)?;
        check_prob("revcomp_prob", self.revcomp_prob)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DamageConfig {
    pub fragment_len: usize,
    pub overhang_geom_p: f64,
    pub deam_ss: f64,
    pub deam_ds: f64,
    pub seq_error_rate: f64,
}

impl Default for DamageConfig {
    fn default() -> Self {
        Self {
            fragment_len: 30,
            overhang_geom_p: 0.4,
            deam_ss: 0.7,
            deam_ds: 0.01,
            seq_error_rate: 0.01,
        }
    }
}

impl DamageConfig {
    pub fn noiseless(fragment_len: usize) -> Self {
        Self {
            fragment_len,
            overhang_geom_p: 1.0,
            deam_ss: 0.0,
            deam_ds: 0.0,
            seq_error_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fragment_len == 0 {
            return invalid("fragment_len must be at least 1");
        }
        if !(self.overhang_geom_p > 0.0 && self.overhang_geom_p <= 1.0) {
            return invalid(format!("overhang_geom_p = {} must be in (0, 1]", self.overhang_geom_p));
        }
        check_prob("deam_ss", self.deam_ss)?;
        check_prob("deam_ds", self.deam_ds)?;
        check_prob("seq_error_rate", self.seq_error_rate)
    }
}

/// Uniformly chosen base other than `b`.
fn substitute<R: Rng + ?Sized>(b: u8, rng: &mut R) -> u8 {
    let others: Vec<u8> = BASES.iter().copied().filter(|x| *x != b).collect();
    others[rng.random_range(0..3)]
}

fn draw_start<R: Rng + ?Sized>(g: &Genome, hi: usize, span: usize, rng: &mut R) -> Result<usize> {
    for _ in 0..MAX_RESAMPLE {
        let c = rng.random_range(0..=hi);
        if g.window_is_clean(c, span) {
            return Ok(c);
        }
    }
    invalid("could not draw an unmasked window; too many masked positions")
}

/// Two un-noised k-mers with `c_i ~ U[0, L-k-d]` and `c_j ~ U[c_i, c_i+d]`.
pub fn sample_positive_pair<R: Rng + ?Sized>(g: &Genome, cfg: &AugmentConfig, rng: &mut R) -> Result<(Kmer, Kmer)> {
    let (k, d) = (cfg.k, cfg.d);
    if g.len() <= k + d {
        return invalid(format!("genome length {} must exceed k + d = {}", g.len(), k + d));
    }
    let ci = draw_start(g, g.len() - k - d, k + d, rng)?;
    let cj = rng.random_range(ci..=ci + d);
    Ok((g.kmer_at(ci, k)?, g.kmer_at(cj, k)?))
}

/// Flat substitutions everywhere plus elevated C→T near the 5' end and G→A
/// near the 3' end, in the orientation given.
fn damage_bases<R: Rng + ?Sized>(bases: &mut [u8], cfg: &AugmentConfig, rng: &mut R) {
    let k = bases.len();
    let end = cfg.deam_end_len.min(k);
    for (i, b) in bases.iter_mut().enumerate() {
        let deaminate = match *b {
            b'C' if i < end => Some(b'T'),
            b'G' if i >= k - end => Some(b'A'),
            _ => None,
        };
        let draw: f64 = rng.random();
        if let Some(to) = deaminate {
            if draw < cfg.deam_rate {
                *b = to;
                continue;
            }
        }
        if rng.random::<f64>() < cfg.flat_sub_rate {
            *b = substitute(*b, rng);
        }
    }
}

/// Noised bases of `km`, possibly reverse-complemented.
pub fn apply_noise_bases<R: Rng + ?Sized>(km: &Kmer, cfg: &AugmentConfig, rng: &mut R) -> Vec<u8> {
    let flip = rng.random::<f64>() < cfg.revcomp_prob;
    let mut bases = km.bases.clone();
    if cfg.damage_after_revcomp && flip {
        bases = reverse_complement_bases(&bases);
    }
    damage_bases(&mut bases, cfg, rng);
    if !cfg.damage_after_revcomp && flip {
        bases = reverse_complement_bases(&bases);
    }
    bases
}

pub fn apply_noise<R: Rng + ?Sized>(km: &Kmer, cfg: &AugmentConfig, rng: &mut R) -> OneHotKmer {
    one_hot_bases(&apply_noise_bases(km, cfg, rng))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedPair {
    pub x_i: OneHotKmer,
    pub x_j: OneHotKmer,
    pub c_i: usize,
    pub c_j: usize,
}

pub fn augment_pair<R: Rng + ?Sized>(g: &Genome, cfg: &AugmentConfig, rng: &mut R) -> Result<AugmentedPair> {
    let (a, b) = sample_positive_pair(g, cfg, rng)?;
    let coord = |km: &Kmer| km.origin.as_ref().map_or(0, |o| o.coordinate);
    Ok(AugmentedPair {
        x_i: apply_noise(&a, cfg, rng),
        x_j: apply_noise(&b, cfg, rng),
        c_i: coord(&a),
        c_j: coord(&b),
    })
}

/// A simulated or loaded read. `coordinate` is the forward-strand start of the
/// locus; `bases` are in read orientation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Read {
    pub id: String,
    pub bases: Vec<u8>,
    pub coordinate: usize,
    pub strand: Strand,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReadSet {
    pub genome: String,
    pub reads: Vec<Read>,
}

impl ReadSet {
    pub fn len(&self) -> usize {
        self.reads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reads.is_empty()
    }

    pub fn write_tsv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "read_id\tsequence\ttrue_coordinate\tstrand")?;
        for r in &self.reads {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                r.id,
                String::from_utf8_lossy(&r.bases),
                r.coordinate,
                r.strand.symbol()
            )?;
        }
        Ok(())
    }

    pub fn read_tsv(r: impl BufRead, genome: impl Into<String>) -> Result<Self> {
        let mut reads = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 && line.starts_with("read_id") || line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("reads line {}: {what}", i + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(&format!("expected 4 columns, found {}", f.len())));
            }
            let km = Kmer::new(f[1].to_ascii_uppercase()).map_err(|e| bad(&e.to_string()))?;
            reads.push(Read {
                id: f[0].to_string(),
                bases: km.bases,
                coordinate: f[2].parse().map_err(|_| bad("bad coordinate"))?,
                strand: Strand::from_symbol(f[3]).ok_or_else(|| bad("strand must be + or -"))?,
            });
        }
        Ok(Self {
            genome: genome.into(),
            reads,
        })
    }
}

fn overhang<R: Rng + ?Sized>(geom: &Option<Geometric>, max: usize, rng: &mut R) -> usize {
    geom.as_ref().map_or(0, |g| (g.sample(rng) as usize).min(max))
}

/// One read from the fragment `[c, c + len)` on `strand`.
fn simulate_one<R: Rng + ?Sized>(g: &Genome, c: usize, strand: Strand, cfg: &DamageConfig, rng: &mut R) -> Vec<u8> {
    let len = cfg.fragment_len;
    let mut bases = g.bases()[c..c + len].to_vec();
    if strand == Strand::Revcomp {
        bases = reverse_complement_bases(&bases);
    }
    let geom = (cfg.overhang_geom_p < 1.0)
        .then(|| Geometric::new(cfg.overhang_geom_p).expect("validated geometric parameter"));
    let five = overhang(&geom, len, rng);
    let three = overhang(&geom, len, rng);
    for (i, b) in bases.iter_mut().enumerate() {
        // Single-stranded overhangs deaminate C on the 5' side and show G→A on
        // the 3' side; the double-stranded interior shows both at a low rate.
        let (ct, ga) = if i < five {
            (cfg.deam_ss, 0.0)
        } else if i >= len - three {
            (0.0, cfg.deam_ss)
        } else {
            (cfg.deam_ds, cfg.deam_ds)
        };
        let u: f64 = rng.random();
        match *b {
            b'C' if u < ct => *b = b'T',
            b'G' if u < ga => *b = b'A',
            _ => {}
        }
    }
    for b in bases.iter_mut() {
        if rng.random::<f64>() < cfg.seq_error_rate {
            *b = substitute(*b, rng);
        }
    }
    bases
}

/// `n` reads with uniform start and strand. Read `i` draws from its own stream
/// derived from `seed`, so the output does not depend on thread count.
pub fn simulate_reads(g: &Genome, n: usize, cfg: &DamageConfig, seed: u64) -> Result<ReadSet> {
    cfg.validate()?;
    if n == 0 {
        return invalid("read count must be positive");
    }
    let len = cfg.fragment_len;
    if g.len() < len {
        return invalid(format!("genome length {} is shorter than fragment_len {len}", g.len()));
    }
    let reads = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "reads", i as u64);
            let c = draw_start(g, g.len() - len, len, &mut rng)?;
            let strand = if rng.random::<bool>() {
                Strand::Forward
            } else {
                Strand::Revcomp
            };
            let bases = simulate_one(g, c, strand, cfg, &mut rng);
            Ok(Read {
                id: format!("read{i}"),
                bases,
                coordinate: c,
                strand,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReadSet {
        genome: g.name.to_string(),
        reads,
    })
}
