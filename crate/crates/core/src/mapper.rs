//! Read mapping: head prediction refined by an exhaustive match-count scan of
//! both strands over a window around the prediction.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::encoder::Encoder;
use crate::error::{invalid, Error, Result};
use crate::heads::Head;
use crate::noise::ReadSet;
use crate::seq::{one_hot_bases, reverse_complement_bases, Genome, OneHotKmer, Strand};

pub const DEFAULT_WINDOW: usize = 5000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub coordinate: usize,
    pub strand: Strand,
    /// Number of matching positions.
    pub score: usize,
    /// More than one offset reaches the best score.
    pub ambiguous: bool,
}

pub fn match_count(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// Best placement of `read` (either strand) with start in
/// `[c̃ - W/2, c̃ + W/2] ∩ [0, L - len]`. Ties prefer the offset closest to
/// `c̃`, then the forward strand, then the smaller coordinate.
pub fn local_align(read: &[u8], g: &Genome, predicted: usize, window: usize) -> Result<Alignment> {
    let len = read.len();
    if len == 0 || len > g.len() {
        return invalid(format!(
            "read of length {len} cannot align to genome of length {}",
            g.len()
        ));
    }
    if window < len {
        return invalid(format!("window {window} is shorter than the read ({len})"));
    }
    let last = g.len() - len;
    let center = predicted.min(last);
    let lo = center.saturating_sub(window / 2);
    let hi = (center + window / 2).min(last);
    let rc = reverse_complement_bases(read);
    let bases = g.bases();
    // Key ordering: higher score, then smaller distance, forward first, smaller offset.
    let mut best: Option<(usize, usize, u8, usize, Strand)> = None;
    for off in lo..=hi {
        let locus = &bases[off..off + len];
        let fwd = match_count(read, locus);
        let rev = match_count(&rc, locus);
        let dist = off.abs_diff(center);
        for (score, strand, rank) in [(fwd, Strand::Forward, 0u8), (rev, Strand::Revcomp, 1u8)] {
            let better = match best {
                None => true,
                Some((s, d, r, o, _)) => score > s || (score == s && (dist, rank, off) < (d, r, o)),
            };
            if better {
                best = Some((score, dist, rank, off, strand));
            }
        }
    }
    let (score, _, _, coordinate, strand) = best.expect("window holds at least one offset");
    // Recount offsets reaching the final maximum.
    let ties = (lo..=hi)
        .filter(|&off| {
            let locus = &bases[off..off + len];
            match_count(read, locus).max(match_count(&rc, locus)) == score
        })
        .count();
    Ok(Alignment {
        coordinate,
        strand,
        score,
        ambiguous: ties >= 2,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MappingRecord {
    pub read_id: String,
    pub predicted: u64,
    pub refined: usize,
    pub strand: Strand,
    pub score: usize,
    pub ambiguous: bool,
}

const TSV_HEADER: &str = "read_id\tpred_coord\trefined_coord\tstrand\tscore\tambiguous";

pub fn write_mapping_tsv(w: &mut impl Write, records: &[MappingRecord]) -> Result<()> {
    writeln!(w, "{TSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.read_id,
            r.predicted,
            r.refined,
            r.strand.symbol(),
            r.score,
            u8::from(r.ambiguous)
        )?;
    }
    Ok(())
}

pub fn read_mapping_tsv(r: impl BufRead) -> Result<Vec<MappingRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if (i == 0 && line.starts_with("read_id")) || line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("mapping line {}: {what}", i + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad(&format!("expected 6 columns, found {}", f.len())));
        }
        out.push(MappingRecord {
            read_id: f[0].to_string(),
            predicted: f[1].parse().map_err(|_| bad("bad pred_coord"))?,
            refined: f[2].parse().map_err(|_| bad("bad refined_coord"))?,
            strand: Strand::from_symbol(f[3]).ok_or_else(|| bad("strand must be + or -"))?,
            score: f[4].parse().map_err(|_| bad("bad score"))?,
            ambiguous: match f[5] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("ambiguous must be 0 or 1")),
            },
        });
    }
    Ok(out)
}

/// Head predictions for the first `k` bases of each read.
pub fn predict_reads(reads: &ReadSet, encoder: &Encoder, head: &Head) -> Result<Vec<u64>> {
    let k = encoder.config.k;
    let xs: Vec<OneHotKmer> = reads
        .reads
        .iter()
        .map(|r| {
            if r.bases.len() < k {
                invalid(format!("read {} is shorter than k = {k}", r.id))
            } else {
                Ok(one_hot_bases(&r.bases[..k]))
            }
        })
        .collect::<Result<_>>()?;
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    let h = encoder.encode(&xs)?.h;
    Ok(head.predict(&h)?.into_iter().map(|p| p.coordinate).collect())
}

/// Maps every read: head prediction, then [`local_align`] within `window`.
pub fn map_reads(
    reads: &ReadSet,
    g: &Genome,
    encoder: &Encoder,
    head: &Head,
    window: usize,
) -> Result<Vec<MappingRecord>> {
    let predicted = predict_reads(reads, encoder, head)?;
    align_predictions(reads, g, &predicted, window)
}

pub fn align_predictions(reads: &ReadSet, g: &Genome, predicted: &[u64], window: usize) -> Result<Vec<MappingRecord>> {
    if predicted.len() != reads.len() {
        return invalid(format!("{} predictions for {} reads", predicted.len(), reads.len()));
    }
    reads
        .reads
        .par_iter()
        .zip(predicted)
        .map(|(r, &p)| {
            let a = local_align(&r.bases, g, p as usize, window)?;
            Ok(MappingRecord {
                read_id: r.id.clone(),
                predicted: p,
                refined: a.coordinate,
                strand: a.strand,
                score: a.score,
                ambiguous: a.ambiguous,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MappingEvaluation {
    /// Fraction mapped to the exact start; `None` for an empty set.
    pub accuracy: Option<f64>,
    pub errors: Vec<u64>,
}

/// Exact-start accuracy of `records` against `truth`, matched by position and id.
pub fn evaluate_mapping(records: &[MappingRecord], truth: &ReadSet) -> Result<MappingEvaluation> {
    if records.len() != truth.len() {
        return invalid(format!("{} mapping records for {} reads", records.len(), truth.len()));
    }
    let mut errors = Vec::with_capacity(records.len());
    for (rec, t) in records.iter().zip(&truth.reads) {
        if rec.read_id != t.id {
            return invalid(format!(
                "read id mismatch: mapping has {:?}, truth has {:?}",
                rec.read_id, t.id
            ));
        }
        errors.push(rec.refined.abs_diff(t.coordinate) as u64);
    }
    let exact = errors.iter().filter(|e| **e == 0).count();
    Ok(MappingEvaluation {
        accuracy: (!errors.is_empty()).then(|| exact as f64 / errors.len() as f64),
        errors,
    })
}
