//! Embedding diagnostics: nearest-neighbour statistics, PCA export, mapping
//! error eCDF, inversion scanning and neighbour-coordinate modality.

use std::cmp::Ordering;
use std::io::Write;

use kmerspace_autodiff::{gemm, Tensor};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::encoder::Encoder;
use crate::error::{invalid, Result};
use crate::heads::Head;
use crate::mapper::{align_predictions, DEFAULT_WINDOW};
use crate::noise::{Read, ReadSet};
use crate::rng::stream;
use crate::seq::{one_hot_bases, Genome, OneHotKmer};

/// Unit-norm embeddings with the genome coordinate of each row.
#[derive(Clone, Debug)]
pub struct EmbeddingIndex {
    pub genome: String,
    pub dim: usize,
    /// Row-major `N x dim`.
    pub z: Vec<f32>,
    pub coords: Vec<usize>,
}

impl EmbeddingIndex {
    pub fn new(genome: impl Into<String>, z: Tensor<f32>, coords: Vec<usize>) -> Result<Self> {
        if z.rank() != 2 || z.shape()[0] != coords.len() {
            return invalid(format!(
                "embedding shape {:?} does not match {} coordinates",
                z.shape(),
                coords.len()
            ));
        }
        let dim = z.shape()[1];
        Ok(Self {
            genome: genome.into(),
            dim,
            z: z.into_data(),
            coords,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.z[i * self.dim..(i + 1) * self.dim]
    }
}

/// Embeds every `stride`-th clean k-mer of `g` on the forward strand.
pub fn build_index(encoder: &Encoder, g: &Genome, stride: usize) -> Result<EmbeddingIndex> {
    let k = encoder.config.k;
    if stride == 0 {
        return invalid("stride must be positive");
    }
    if g.len() < k {
        return invalid(format!("genome of length {} is shorter than k = {k}", g.len()));
    }
    let coords: Vec<usize> = (0..=g.len() - k)
        .step_by(stride)
        .filter(|&c| g.window_is_clean(c, k))
        .collect();
    let xs: Vec<OneHotKmer> = coords.iter().map(|&c| one_hot_bases(&g.bases()[c..c + k])).collect();
    let z = if xs.is_empty() {
        Tensor::zeros(&[0, encoder.config.embed_dim])
    } else {
        encoder.encode(&xs)?.z
    };
    EmbeddingIndex::new(g.name.to_string(), z, coords)
}

/// Index with i.i.d. Gaussian directions in place of learned embeddings.
pub fn random_index(coords: Vec<usize>, dim: usize, seed: u64) -> EmbeddingIndex {
    let mut rng = stream(seed, "random-index", 0);
    let mut z = Vec::with_capacity(coords.len() * dim);
    for _ in 0..coords.len() {
        let row: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-12);
        z.extend(row.iter().map(|v| v / norm));
    }
    EmbeddingIndex {
        genome: "random".into(),
        dim,
        z,
        coords,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

fn by_distance(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index))
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Exact `K` nearest rows to `query`, ascending by distance, ties by row.
pub fn knn(index: &EmbeddingIndex, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
    if k > index.len() {
        return invalid(format!("K = {k} exceeds index size {}", index.len()));
    }
    if query.len() != index.dim {
        return invalid(format!("query has dimension {}, index has {}", query.len(), index.dim));
    }
    let mut all: Vec<Neighbor> = (0..index.len())
        .map(|i| Neighbor {
            index: i,
            distance: euclidean(query, index.row(i)),
        })
        .collect();
    select_smallest(&mut all, k);
    Ok(all)
}

fn select_smallest(v: &mut Vec<Neighbor>, k: usize) {
    if k == 0 {
        v.clear();
        return;
    }
    if k < v.len() {
        v.select_nth_unstable_by(k - 1, by_distance);
        v.truncate(k);
    }
    v.sort_by(by_distance);
}

#[derive(Clone, Debug)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct KnnDistanceStats {
    /// Mean genomic distance to the K nearest embedding neighbours, per row.
    pub per_row: Vec<f64>,
    pub median: f64,
    pub histogram: Vec<HistogramBin>,
}

const HISTOGRAM_BINS: usize = 50;
const GRAM_BLOCK: usize = 256;

/// For each row, the mean `|c_i - c_j|` over its `K` nearest neighbours,
/// excluding the row itself. Rows are assumed unit-norm.
pub fn mean_knn_genomic_distance(index: &EmbeddingIndex, k: usize) -> Result<KnnDistanceStats> {
    let n = index.len();
    if k == 0 || k >= n {
        return invalid(format!("K = {k} needs 1 <= K < index size {n}"));
    }
    let dim = index.dim;
    let blocks: Vec<Vec<f64>> = (0..n)
        .step_by(GRAM_BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let rows = GRAM_BLOCK.min(n - start);
            let mut dots = vec![0f32; rows * n];
            gemm(
                rows,
                dim,
                n,
                &index.z[start * dim..(start + rows) * dim],
                false,
                &index.z,
                true,
                &mut dots,
                false,
            );
            (0..rows)
                .map(|r| {
                    let i = start + r;
                    let mut cand: Vec<Neighbor> = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| Neighbor {
                            index: j,
                            distance: (2.0 - 2.0 * f64::from(dots[r * n + j])).max(0.0),
                        })
                        .collect();
                    select_smallest(&mut cand, k);
                    let ci = index.coords[i];
                    cand.iter()
                        .map(|nb| ci.abs_diff(index.coords[nb.index]) as f64)
                        .sum::<f64>()
                        / k as f64
                })
                .collect()
        })
        .collect();
    let per_row: Vec<f64> = blocks.into_iter().flatten().collect();
    Ok(KnnDistanceStats {
        median: median(&per_row),
        histogram: histogram(&per_row, HISTOGRAM_BINS),
        per_row,
    })
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile (`(n - 1) q` position on sorted values).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let max = values.iter().cloned().fold(0.0, f64::max);
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: b as f64 * width,
            hi: (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let b = ((v / width) as usize).min(bins - 1);
        out[b].count += 1;
    }
    out
}

#[derive(Clone, Debug)]
pub struct Pca2 {
    /// Row-major `N x 2` projection.
    pub points: Vec<[f64; 2]>,
    pub components: [Vec<f64>; 2],
    pub explained: [f64; 2],
}

const PCA_MAX_ITERS: usize = 20_000;
const PCA_TOL: f64 = 1e-10;

/// Top two principal components by power iteration with deflation.
pub fn pca2(z: &[f32], dim: usize) -> Result<Pca2> {
    if dim == 0 || z.len() % dim != 0 {
        return invalid("embedding buffer does not divide into rows");
    }
    let n = z.len() / dim;
    if n < 3 {
        return invalid(format!("PCA needs at least 3 rows, got {n}"));
    }
    let mut mean = vec![0f64; dim];
    for row in z.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += f64::from(*v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<f64> = z
        .chunks_exact(dim)
        .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| f64::from(*v) - m))
        .collect();
    let mut cov = vec![0f64; dim * dim];
    gemm(dim, n, dim, &centered, true, &centered, false, &mut cov, false);
    cov.iter_mut().for_each(|c| *c /= (n - 1) as f64);
    let total: f64 = (0..dim).map(|i| cov[i * dim + i]).sum();
    if total <= f64::EPSILON * dim as f64 {
        return invalid("input has zero variance");
    }
    let (l1, v1) = top_eigen(&cov, dim, 0);
    for i in 0..dim {
        for j in 0..dim {
            cov[i * dim + j] -= l1 * v1[i] * v1[j];
        }
    }
    let (l2, mut v2) = top_eigen(&cov, dim, 1);
    if l2 <= 0.0 {
        v2 = orthogonal_unit(&v1);
        sign_convention(&mut v2);
    }
    let points = centered.chunks_exact(dim).map(|r| [dot(r, &v1), dot(r, &v2)]).collect();
    Ok(Pca2 {
        points,
        explained: [l1 / total, l2.max(0.0) / total],
        components: [v1, v2],
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn sign_convention(v: &mut [f64]) {
    let lead = v
        .iter()
        .cloned()
        .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn orthogonal_unit(v: &[f64]) -> Vec<f64> {
    let j = (0..v.len())
        .min_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .unwrap_or(0);
    let mut e = vec![0.0; v.len()];
    e[j] = 1.0;
    let p = dot(&e, v);
    e.iter_mut().zip(v).for_each(|(x, y)| *x -= p * y);
    normalize(&mut e);
    e
}

/// Dominant eigenpair of a symmetric positive semi-definite matrix.
fn top_eigen(m: &[f64], dim: usize, salt: u64) -> (f64, Vec<f64>) {
    let mut rng = stream(0x5eed, "pca-start", salt);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..PCA_MAX_ITERS {
        let mut w = vec![0f64; dim];
        gemm(dim, dim, 1, m, false, &v, false, &mut w, false);
        let norm = normalize(&mut w);
        if norm <= f64::MIN_POSITIVE {
            return (0.0, v);
        }
        let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        lambda = norm;
        if delta < PCA_TOL {
            break;
        }
    }
    let mut mv = vec![0f64; dim];
    gemm(dim, dim, 1, m, false, &v, false, &mut mv, false);
    let rayleigh = dot(&v, &mv);
    sign_convention(&mut v);
    (if rayleigh.is_finite() { rayleigh } else { lambda }, v)
}

/// `(1/N) #{ e_i < t }`.
pub fn ecdf_at(errors: &[u64], t: f64) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    errors.iter().filter(|&&e| (e as f64) < t).count() as f64 / errors.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcdfRow {
    pub t: f64,
    pub ecdf: f64,
    pub complement: f64,
}

pub fn ecdf(errors: &[u64], thresholds: &[f64]) -> Result<Vec<EcdfRow>> {
    if errors.is_empty() {
        return invalid("eCDF needs at least one error value");
    }
    let mut sorted = errors.to_vec();
    sorted.sort_unstable();
    Ok(thresholds
        .iter()
        .map(|&t| {
            let below = sorted.partition_point(|&e| (e as f64) < t);
            let ecdf = below as f64 / sorted.len() as f64;
            EcdfRow {
                t,
                ecdf,
                complement: 1.0 - ecdf,
            }
        })
        .collect())
}

/// `1, 2, 5, 10, 20, 50, ...` up to the first value exceeding every error.
pub fn log_thresholds(errors: &[u64]) -> Vec<f64> {
    let max = errors.iter().copied().max().unwrap_or(0) as f64;
    let mut out = Vec::new();
    let mut decade = 1.0;
    loop {
        for m in [1.0, 2.0, 5.0] {
            let t = m * decade;
            out.push(t);
            if t > max {
                return out;
            }
        }
        decade *= 10.0;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InversionConfig {
    pub k: usize,
    pub quantile: f64,
    /// Flagged reads closer than this are merged into one interval.
    pub merge_gap: usize,
    pub min_support: usize,
    pub window: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            k: 30,
            quantile: 0.99,
            merge_gap: 300,
            min_support: 3,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairDistance {
    pub read_id: String,
    pub coordinate: usize,
    pub distance: f64,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlaggedInterval {
    pub start: usize,
    pub end: usize,
    pub support: usize,
}

#[derive(Clone, Debug)]
pub struct InversionReport {
    pub reads: Vec<PairDistance>,
    pub flagged: Vec<bool>,
    pub threshold: f64,
    /// `(q, distance)` pairs of the background distribution.
    pub background_quantiles: Vec<(f64, f64)>,
    pub intervals: Vec<FlaggedInterval>,
}

/// Embedding distance between the first and last `k`-mer of each read, with
/// the read placed by the head and refined by local alignment. Reads shorter
/// than `2k` are skipped.
pub fn read_pair_distances(
    reads: &ReadSet,
    g: &Genome,
    encoder: &Encoder,
    head: &Head,
    cfg: &InversionConfig,
) -> Result<Vec<PairDistance>> {
    let k = cfg.k;
    if k != encoder.config.k {
        return invalid(format!("scan k = {k} differs from encoder k = {}", encoder.config.k));
    }
    let usable: Vec<&Read> = reads
        .reads
        .iter()
        .filter(|r| {
            let ok = r.bases.len() >= 2 * k;
            if !ok {
                log::warn!("skipping read {} of length {} (< {})", r.id, r.bases.len(), 2 * k);
            }
            ok
        })
        .collect();
    if usable.is_empty() {
        return Ok(Vec::new());
    }
    let mut xs = Vec::with_capacity(2 * usable.len());
    for r in &usable {
        xs.push(one_hot_bases(&r.bases[..k]));
        xs.push(one_hot_bases(&r.bases[r.bases.len() - k..]));
    }
    let enc = encoder.encode(&xs)?;
    let d = enc.z.last_dim();
    let z = enc.z.data();
    let first_h = {
        let hd = enc.h.last_dim();
        let data: Vec<f32> = (0..usable.len())
            .flat_map(|i| enc.h.row(2 * i).iter().copied())
            .collect();
        Tensor::new(vec![usable.len(), hd], data)?
    };
    let predicted: Vec<u64> = head.predict(&first_h)?.into_iter().map(|p| p.coordinate).collect();
    let subset = ReadSet {
        genome: reads.genome.clone(),
        reads: usable.iter().map(|r| (*r).clone()).collect(),
    };
    let placed = align_predictions(&subset, g, &predicted, cfg.window)?;
    Ok(usable
        .iter()
        .zip(placed)
        .enumerate()
        .map(|(i, (r, m))| PairDistance {
            read_id: r.id.clone(),
            coordinate: m.refined,
            distance: euclidean(&z[2 * i * d..(2 * i + 1) * d], &z[(2 * i + 1) * d..(2 * i + 2) * d]),
            len: r.bases.len(),
        })
        .collect())
}

const REPORTED_QUANTILES: [f64; 5] = [0.5, 0.9, 0.99, 0.999, 1.0];

/// Flags reads whose pair distance exceeds the background `q`-quantile and
/// clusters them into intervals on the reference.
pub fn inversion_scan(
    reads: &ReadSet,
    background: &ReadSet,
    g: &Genome,
    encoder: &Encoder,
    head: &Head,
    cfg: &InversionConfig,
) -> Result<InversionReport> {
    if !(0.0..=1.0).contains(&cfg.quantile) {
        return invalid(format!("quantile {} outside [0, 1]", cfg.quantile));
    }
    let bg: Vec<f64> = read_pair_distances(background, g, encoder, head, cfg)?
        .into_iter()
        .map(|p| p.distance)
        .collect();
    if bg.is_empty() {
        return invalid("background read set has no usable reads");
    }
    let threshold = quantile(&bg, cfg.quantile);
    let mut qs: Vec<f64> = REPORTED_QUANTILES.to_vec();
    if !qs.contains(&cfg.quantile) {
        qs.push(cfg.quantile);
        qs.sort_by(f64::total_cmp);
    }
    let background_quantiles = qs.iter().map(|&q| (q, quantile(&bg, q))).collect();
    let pairs = read_pair_distances(reads, g, encoder, head, cfg)?;
    let flagged: Vec<bool> = pairs.iter().map(|p| p.distance > threshold).collect();
    let hits: Vec<&PairDistance> = pairs
        .iter()
        .zip(&flagged)
        .filter(|(_, f)| **f)
        .map(|(p, _)| p)
        .collect();
    Ok(InversionReport {
        intervals: cluster_intervals(&hits, cfg.merge_gap, cfg.min_support, g.len()),
        reads: pairs,
        flagged,
        threshold,
        background_quantiles,
    })
}

/// Single-linkage clustering of read start coordinates. A cluster with at
/// least `min_support` reads becomes `[min start, max start + len)`.
pub fn cluster_intervals(
    hits: &[&PairDistance],
    merge_gap: usize,
    min_support: usize,
    genome_len: usize,
) -> Vec<FlaggedInterval> {
    let mut sorted: Vec<&PairDistance> = hits.to_vec();
    sorted.sort_by_key(|p| p.coordinate);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].coordinate - sorted[j - 1].coordinate <= merge_gap {
            j += 1;
        }
        let cluster = &sorted[i..j];
        if cluster.len() >= min_support {
            let start = cluster[0].coordinate;
            let end = cluster.iter().map(|p| p.coordinate + p.len).max().unwrap_or(start);
            out.push(FlaggedInterval {
                start,
                end: end.min(genome_len),
                support: cluster.len(),
            });
        }
        i = j;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Unimodal,
    Multimodal,
}

#[derive(Clone, Debug)]
pub struct NeighborCoordinates {
    /// Sorted ascending.
    pub coords: Vec<usize>,
    pub modality: Modality,
}

pub const DEFAULT_MIN_MODE_SEPARATION: usize = 100;

/// Largest-gap modality test: multimodal when the widest gap between sorted
/// coordinates exceeds both `5 x max(median gap, 1)` and `min_separation`.
pub fn modality(coords: &[usize], min_separation: usize) -> Modality {
    let mut c = coords.to_vec();
    c.sort_unstable();
    let gaps: Vec<f64> = c.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    if gaps.is_empty() {
        return Modality::Unimodal;
    }
    let largest = gaps.iter().cloned().fold(0.0, f64::max);
    if largest > 5.0 * median(&gaps).max(1.0) && largest > min_separation as f64 {
        Modality::Multimodal
    } else {
        Modality::Unimodal
    }
}

/// Coordinates of the `K` nearest index rows to `query`.
pub fn neighbor_coordinate_distribution(
    index: &EmbeddingIndex,
    query: &[f32],
    k: usize,
    min_separation: usize,
) -> Result<NeighborCoordinates> {
    let mut coords: Vec<usize> = knn(index, query, k)?.iter().map(|n| index.coords[n.index]).collect();
    coords.sort_unstable();
    Ok(NeighborCoordinates {
        modality: modality(&coords, min_separation),
        coords,
    })
}

pub fn write_pca_csv(w: &mut impl Write, pca: &Pca2, coords: &[usize]) -> Result<()> {
    writeln!(w, "pc1,pc2,coordinate")?;
    for (p, c) in pca.points.iter().zip(coords) {
        writeln!(w, "{:.6},{:.6},{c}", p[0], p[1])?;
    }
    Ok(())
}

pub fn write_embedding_csv(w: &mut impl Write, index: &EmbeddingIndex) -> Result<()> {
    write!(w, "coordinate")?;
    for j in 0..index.dim {
        write!(w, ",z{j}")?;
    }
    writeln!(w)?;
    for (i, c) in index.coords.iter().enumerate() {
        write!(w, "{c}")?;
        for v in index.row(i) {
            write!(w, ",{v:.6}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_knn_stats_csv(w: &mut impl Write, stats: &KnnDistanceStats, coords: &[usize]) -> Result<()> {
    writeln!(w, "coordinate,mean_knn_distance")?;
    for (c, d) in coords.iter().zip(&stats.per_row) {
        writeln!(w, "{c},{d:.4}")?;
    }
    Ok(())
}

pub fn write_ecdf_csv(w: &mut impl Write, rows: &[EcdfRow]) -> Result<()> {
    writeln!(w, "t,ecdf,one_minus_ecdf")?;
    for r in rows {
        writeln!(w, "{},{:.6},{:.6}", r.t, r.ecdf, r.complement)?;
    }
    Ok(())
}

pub fn write_inversion_reads_csv(w: &mut impl Write, report: &InversionReport) -> Result<()> {
    writeln!(w, "read_id,coordinate,distance,flagged")?;
    for (p, f) in report.reads.iter().zip(&report.flagged) {
        writeln!(w, "{},{},{:.6},{}", p.read_id, p.coordinate, p.distance, u8::from(*f))?;
    }
    Ok(())
}

/// Background quantiles followed by flagged intervals.
pub fn write_inversion_summary_csv(w: &mut impl Write, report: &InversionReport) -> Result<()> {
    writeln!(w, "kind,a,b,value")?;
    for (q, d) in &report.background_quantiles {
        writeln!(w, "background_quantile,{q},,{d:.6}")?;
    }
    writeln!(w, "threshold,,,{:.6}", report.threshold)?;
    for iv in &report.intervals {
        writeln!(w, "interval,{},{},{}", iv.start, iv.end, iv.support)?;
    }
    Ok(())
}
