//! Genome ingestion, k-mer extraction and one-hot / reverse-complement transforms.
//!
//! Bases are stored as uppercase ASCII. One-hot columns follow the ordering
//! A, C, G, T, so complementing a base maps column `j` to `3 - j` and the
//! reverse complement of a one-hot matrix is both axes flipped.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

pub const BASES: [u8; 4] = *b"ACGT";

/// Column of `base` in a one-hot row, if it is one of A, C, G, T.
pub fn base_index(base: u8) -> Option<usize> {
    match base {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

pub fn complement(base: u8) -> u8 {
    match base {
        b'A' => b'T',
        b'C' => b'G',
        b'G' => b'C',
        b'T' => b'A',
        other => other,
    }
}

pub fn reverse_complement_bases(seq: &[u8]) -> Vec<u8> {
    seq.iter().rev().map(|b| complement(*b)).collect()
}

/// What to do with `N` while parsing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NPolicy {
    #[default]
    Reject,
    /// Record N positions; k-mers overlapping them are excluded.
    Mask,
}

/// One coordinate space: a named sequence over {A, C, G, T}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Genome {
    pub name: Arc<str>,
    bases: Vec<u8>,
    /// Sorted positions that held `N` in the input (stored as `A`).
    masked: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strand {
    Forward,
    Revcomp,
}

impl Strand {
    pub fn flip(self) -> Self {
        match self {
            Strand::Forward => Strand::Revcomp,
            Strand::Revcomp => Strand::Forward,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Strand::Forward => '+',
            Strand::Revcomp => '-',
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "+" => Some(Strand::Forward),
            "-" => Some(Strand::Revcomp),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KmerOrigin {
    pub genome: Arc<str>,
    /// Forward-strand position of the first covered nucleotide.
    pub coordinate: usize,
    pub strand: Strand,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Kmer {
    pub bases: Vec<u8>,
    pub origin: Option<KmerOrigin>,
}

impl Kmer {
    pub fn new(bases: impl Into<Vec<u8>>) -> Result<Self> {
        let bases = bases.into();
        if bases.is_empty() {
            return invalid("k-mer must contain at least one base");
        }
        if let Some(pos) = bases.iter().position(|b| base_index(*b).is_none()) {
            return Err(Error::InvalidSymbol {
                record: "k-mer".into(),
                symbol: bases[pos] as char,
                position: pos,
            });
        }
        Ok(Self { bases, origin: None })
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    /// Biological reverse complement. The origin keeps its forward coordinate
    /// and flips strand.
    pub fn reverse_complement(&self) -> Self {
        Self {
            bases: reverse_complement_bases(&self.bases),
            origin: self.origin.as_ref().map(|o| KmerOrigin {
                strand: o.strand.flip(),
                ..o.clone()
            }),
        }
    }
}

impl fmt::Display for Kmer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.bases))
    }
}

impl Genome {
    pub fn new(name: impl Into<Arc<str>>, bases: impl Into<Vec<u8>>) -> Result<Self> {
        let name = name.into();
        let mut bases = bases.into();
        bases.make_ascii_uppercase();
        if bases.is_empty() {
            return Err(Error::Fasta(format!("record {name:?} has no sequence")));
        }
        if let Some(pos) = bases.iter().position(|b| base_index(*b).is_none()) {
            return Err(Error::InvalidSymbol {
                record: name.to_string(),
                symbol: bases[pos] as char,
                position: pos,
            });
        }
        Ok(Self {
            name,
            bases,
            masked: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn bases(&self) -> &[u8] {
        &self.bases
    }

    pub fn masked_positions(&self) -> &[usize] {
        &self.masked
    }

    /// True when `[c, c + k)` lies inside the genome and avoids masked positions.
    pub fn window_is_clean(&self, c: usize, k: usize) -> bool {
        if c + k > self.len() {
            return false;
        }
        let i = self.masked.partition_point(|&p| p < c);
        self.masked.get(i).is_none_or(|&p| p >= c + k)
    }

    /// The forward-strand k-mer starting at `c`.
    pub fn kmer_at(&self, c: usize, k: usize) -> Result<Kmer> {
        if k == 0 || c + k > self.len() {
            return invalid(format!(
                "k-mer [{c}, {}) outside genome of length {}",
                c + k,
                self.len()
            ));
        }
        Ok(Kmer {
            bases: self.bases[c..c + k].to_vec(),
            origin: Some(KmerOrigin {
                genome: self.name.clone(),
                coordinate: c,
                strand: Strand::Forward,
            }),
        })
    }

    /// Reverse complement of `[start, end)` spliced in place.
    pub fn with_inversion(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return invalid(format!("inversion [{start}, {end}) outside genome"));
        }
        let mut bases = self.bases.clone();
        let rc = reverse_complement_bases(&bases[start..end]);
        bases[start..end].copy_from_slice(&rc);
        Ok(Self {
            name: self.name.clone(),
            bases,
            masked: self.masked.clone(),
        })
    }
}

/// Parses FASTA text. Sequence lines are concatenated and uppercased.
pub fn parse_fasta(text: &str, policy: NPolicy) -> Result<Vec<Genome>> {
    let mut records: Vec<(String, Vec<u8>)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            let name = header.split_whitespace().next().unwrap_or("").to_string();
            records.push((name, Vec::new()));
        } else {
            let Some((_, seq)) = records.last_mut() else {
                return Err(Error::Fasta(format!(
                    "line {} has sequence data before the first '>' header",
                    lineno + 1
                )));
            };
            seq.extend(line.bytes().map(|b| b.to_ascii_uppercase()));
        }
    }
    if records.is_empty() {
        return Err(Error::Fasta("input contains no records".into()));
    }
    records
        .into_iter()
        .map(|(name, mut seq)| {
            if seq.is_empty() {
                return Err(Error::Fasta(format!("record {name:?} has no sequence")));
            }
            let mut masked = Vec::new();
            for (i, b) in seq.iter_mut().enumerate() {
                match *b {
                    b'A' | b'C' | b'G' | b'T' => {}
                    b'N' if policy == NPolicy::Mask => {
                        masked.push(i);
                        *b = b'A';
                    }
                    other => {
                        return Err(Error::InvalidSymbol {
                            record: name.clone(),
                            symbol: other as char,
                            position: i,
                        })
                    }
                }
            }
            Ok(Genome {
                name: name.into(),
                bases: seq,
                masked,
            })
        })
        .collect()
}

pub fn format_fasta(g: &Genome, width: usize) -> String {
    let mut out = format!(">{}\n", g.name);
    for chunk in g.bases.chunks(width.max(1)) {
        out.push_str(&String::from_utf8_lossy(chunk));
        out.push('\n');
    }
    out
}

/// All forward k-mers in coordinate order, skipping any that overlap a masked
/// position.
pub fn extract_kmers(g: &Genome, k: usize) -> Result<Vec<Kmer>> {
    if k == 0 || k > g.len() {
        return invalid(format!("k = {k} must be in 1..={}", g.len()));
    }
    (0..=g.len() - k)
        .filter(|&c| g.window_is_clean(c, k))
        .map(|c| g.kmer_at(c, k))
        .collect()
}

/// `k × 4` one-hot matrix, row-major, columns A, C, G, T.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OneHotKmer {
    data: Vec<u8>,
}

impl OneHotKmer {
    pub fn from_rows(rows: &[[u8; 4]]) -> Self {
        Self {
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.data.len() / 4
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[4 * i..4 * i + 4]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    /// Appends the matrix as `f32` values (for encoder input).
    pub fn extend_f32(&self, out: &mut Vec<f32>) {
        out.extend(self.data.iter().map(|v| *v as f32));
    }
}

pub fn one_hot(km: &Kmer) -> OneHotKmer {
    one_hot_bases(&km.bases)
}

/// One-hot of raw bases; bases outside ACGT panic (callers validate first).
pub fn one_hot_bases(bases: &[u8]) -> OneHotKmer {
    let mut data = vec![0u8; bases.len() * 4];
    for (i, b) in bases.iter().enumerate() {
        let j = base_index(*b).unwrap_or_else(|| panic!("non-ACGT base {:?}", *b as char));
        data[4 * i + j] = 1;
    }
    OneHotKmer { data }
}

/// Flips both axes. With columns A, C, G, T that is the flat buffer reversed.
pub fn reverse_complement(x: &OneHotKmer) -> OneHotKmer {
    OneHotKmer {
        data: x.data.iter().rev().copied().collect(),
    }
}

pub fn decode_one_hot(x: &OneHotKmer) -> Result<Kmer> {
    let mut bases = Vec::with_capacity(x.k());
    for i in 0..x.k() {
        let row = x.row(i);
        let ones: Vec<usize> = (0..4).filter(|&j| row[j] == 1).collect();
        if ones.len() != 1 || row.iter().any(|v| *v > 1) {
            return invalid(format!("row {i} is not one-hot: {row:?}"));
        }
        bases.push(BASES[ones[0]]);
    }
    if bases.is_empty() {
        return invalid("empty one-hot matrix");
    }
    Ok(Kmer { bases, origin: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn genome(s: &str) -> Genome {
        Genome::new("s", s.as_bytes()).unwrap()
    }

    fn strs(ks: &[Kmer]) -> Vec<String> {
        ks.iter().map(Kmer::to_string).collect()
    }

    #[test]
    fn parses_minimal_and_wrapped_records() {
        let a = parse_fasta(">s\nACGT", NPolicy::Reject).unwrap();
        let b = parse_fasta(">s\nAC\nGT\n", NPolicy::Reject).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
        assert_eq!(&*a[0].name, "s");
        assert_eq!(a[0].len(), 4);
        assert_eq!(a[0].bases(), b"ACGT");
    }

    #[test]
    fn lowercase_is_normalized_and_records_split() {
        let gs = parse_fasta(">one desc\nacgt\n>two\nTTAA\r\n", NPolicy::Reject).unwrap();
        assert_eq!(gs.len(), 2);
        assert_eq!(gs[0].bases(), b"ACGT");
        assert_eq!(&*gs[1].name, "two");
    }

    #[test]
    fn n_is_rejected_with_its_position() {
        match parse_fasta(">s\nACNT", NPolicy::Reject) {
            Err(Error::InvalidSymbol { symbol, position, .. }) => {
                assert_eq!(symbol, 'N');
                assert_eq!(position, 2);
            }
            other => panic!("expected invalid symbol, got {other:?}"),
        }
    }

    #[test]
    fn masked_n_excludes_overlapping_kmers() {
        let g = &parse_fasta(">s\nACGTNACGT", NPolicy::Mask).unwrap()[0];
        assert_eq!(g.masked_positions(), &[4]);
        let ks = extract_kmers(g, 3).unwrap();
        let coords: Vec<usize> = ks.iter().map(|k| k.origin.as_ref().unwrap().coordinate).collect();
        assert_eq!(coords, vec![0, 1, 5, 6]);
    }

    #[test]
    fn parse_errors() {
        assert!(parse_fasta("", NPolicy::Reject).is_err());
        assert!(parse_fasta(">empty\n>s\nAC", NPolicy::Reject).is_err());
        assert!(parse_fasta("ACGT\n", NPolicy::Reject).is_err());
        assert!(parse_fasta(">s\nACXT", NPolicy::Mask).is_err());
    }

    #[test]
    fn kmer_examples() {
        let g = genome("TGCGTGG");
        assert_eq!(
            strs(&extract_kmers(&g, 3).unwrap()),
            ["TGC", "GCG", "CGT", "GTG", "TGG"]
        );
        assert_eq!(strs(&extract_kmers(&g, 4).unwrap()), ["TGCG", "GCGT", "CGTG", "GTGG"]);
        assert_eq!(strs(&extract_kmers(&g, 5).unwrap()), ["TGCGT", "GCGTG", "CGTGG"]);
        let one = extract_kmers(&genome("ACGT"), 4).unwrap();
        assert_eq!(strs(&one), ["ACGT"]);
        assert_eq!(one[0].origin.as_ref().unwrap().coordinate, 0);
        assert!(extract_kmers(&genome("ACGT"), 5).is_err());
        assert!(extract_kmers(&genome("ACGT"), 0).is_err());
    }

    fn eq1_left() -> OneHotKmer {
        OneHotKmer::from_rows(&[
            [0, 0, 0, 1],
            [0, 0, 1, 0],
            [0, 1, 0, 0],
            [0, 0, 1, 0],
            [0, 0, 0, 1],
            [0, 0, 1, 0],
            [0, 0, 1, 0],
        ])
    }

    fn eq1_right() -> OneHotKmer {
        OneHotKmer::from_rows(&[
            [0, 1, 0, 0],
            [0, 1, 0, 0],
            [1, 0, 0, 0],
            [0, 1, 0, 0],
            [0, 0, 1, 0],
            [0, 1, 0, 0],
            [1, 0, 0, 0],
        ])
    }

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot(&Kmer::new("A").unwrap()).row(0), &[1, 0, 0, 0]);
        assert_eq!(one_hot(&Kmer::new("T").unwrap()).row(0), &[0, 0, 0, 1]);
        assert_eq!(one_hot(&Kmer::new("TGCGTGG").unwrap()), eq1_left());
    }

    #[test]
    fn reverse_complement_examples() {
        let x = one_hot(&Kmer::new("TGCGTGG").unwrap());
        assert_eq!(reverse_complement(&x), eq1_right());
        assert_eq!(reverse_complement(&x), one_hot(&Kmer::new("CCACGCA").unwrap()));
        let at = one_hot(&Kmer::new("AT").unwrap());
        assert_eq!(reverse_complement(&at), at);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            decode_one_hot(&one_hot(&Kmer::new("ACGT").unwrap()))
                .unwrap()
                .to_string(),
            "ACGT"
        );
        assert_eq!(decode_one_hot(&eq1_right()).unwrap().to_string(), "CCACGCA");
        assert!(decode_one_hot(&OneHotKmer::from_rows(&[[0, 0, 0, 0]])).is_err());
        assert!(decode_one_hot(&OneHotKmer::from_rows(&[[1, 1, 0, 0]])).is_err());
    }

    #[test]
    fn revcomp_kmer_keeps_forward_coordinate() {
        let g = genome("AATGCGTGGAA");
        let km = g.kmer_at(2, 7).unwrap();
        let rc = km.reverse_complement();
        assert_eq!(rc.to_string(), "CCACGCA");
        let o = rc.origin.unwrap();
        assert_eq!((o.coordinate, o.strand), (2, Strand::Revcomp));
    }

    #[test]
    fn inversion_splices_reverse_complement() {
        let g = genome("TGCAAGTGG");
        let inv = g.with_inversion(2, 7).unwrap();
        assert_eq!(inv.bases(), b"TGACTTGGG");
    }

    fn kmer_strategy() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(proptest::sample::select(BASES.to_vec()), 1..64)
    }

    proptest! {
        #[test]
        fn one_hot_rows_sum_to_one(bases in kmer_strategy()) {
            let x = one_hot_bases(&bases);
            for i in 0..x.k() {
                prop_assert_eq!(x.row(i).iter().map(|v| *v as u32).sum::<u32>(), 1);
            }
        }

        #[test]
        fn revcomp_is_an_involution_and_commutes(bases in kmer_strategy()) {
            let x = one_hot_bases(&bases);
            prop_assert_eq!(reverse_complement(&reverse_complement(&x)), x.clone());
            prop_assert_eq!(reverse_complement(&x), one_hot_bases(&reverse_complement_bases(&bases)));
            prop_assert_eq!(decode_one_hot(&x).unwrap().bases, bases);
        }

        #[test]
        fn extraction_count_and_order(bases in proptest::collection::vec(proptest::sample::select(BASES.to_vec()), 1..80), k in 1usize..20) {
            prop_assume!(k <= bases.len());
            let g = Genome::new("g", bases.clone()).unwrap();
            let ks = extract_kmers(&g, k).unwrap();
            prop_assert_eq!(ks.len(), bases.len() - k + 1);
            let coords: Vec<usize> = ks.iter().map(|km| km.origin.as_ref().unwrap().coordinate).collect();
            prop_assert!(coords.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
