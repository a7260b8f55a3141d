use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use kmerspace_autodiff::checkpoint::{self, NamedArray};
use kmerspace_core::analysis::{
    build_index, ecdf, inversion_scan, log_thresholds, mean_knn_genomic_distance, pca2, random_index, write_ecdf_csv,
    write_embedding_csv, write_inversion_reads_csv, write_inversion_summary_csv, write_knn_stats_csv, write_pca_csv,
};
use kmerspace_core::contrastive::{train_encoder, write_loss_csv, Mode, PairSource};
use kmerspace_core::encoder::Encoder;
use kmerspace_core::heads::{train_head, Head, HeadConfig};
use kmerspace_core::mapper::{evaluate_mapping, map_reads, read_mapping_tsv, write_mapping_tsv};
use kmerspace_core::noise::{simulate_reads, DamageConfig, ReadSet};
use kmerspace_core::rng::{derive_seed, stream};
use kmerspace_core::seq::{parse_fasta, Genome};

use crate::config::RunConfig;
use crate::error::{runtime, usage, CliError};

type Result<T> = std::result::Result<T, CliError>;

/// Path next to `out` with its extension replaced by `suffix`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

pub fn write_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::write(sibling(out, "config.ini"), cfg.to_ini_string())?;
    Ok(())
}

fn require_file(path: &Path, flag: &str) -> Result<()> {
    if !path.is_file() {
        return usage(format!("{flag} {}: no such file", path.display()));
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn load_genome(path: &Path, cfg: &RunConfig) -> Result<Genome> {
    require_file(path, "--fasta")?;
    let text = std::fs::read_to_string(path)?;
    let mut records = parse_fasta(&text, cfg.n_policy)?;
    if records.is_empty() {
        return runtime(format!("{}: no FASTA records", path.display()));
    }
    if records.len() > 1 {
        log::warn!("{}: using the first of {} records", path.display(), records.len());
    }
    Ok(records.swap_remove(0))
}

pub fn load_reads(path: &Path, genome: &str) -> Result<ReadSet> {
    require_file(path, "--reads")?;
    Ok(ReadSet::read_tsv(BufReader::new(File::open(path)?), genome)?)
}

fn load_arrays(path: &Path) -> Result<Vec<NamedArray>> {
    require_file(path, "--checkpoint")?;
    Ok(checkpoint::load(path)?)
}

fn load_encoder(path: &Path) -> Result<Encoder> {
    Ok(Encoder::from_arrays(&load_arrays(path)?)?)
}

fn load_pipeline(path: &Path, genome: &Genome) -> Result<(Encoder, Head)> {
    let arrays = load_arrays(path)?;
    let encoder = Encoder::from_arrays(&arrays)?;
    let head = Head::from_arrays(&arrays)
        .map_err(|e| CliError::Runtime(format!("{}: {e} (train a head with train-head first)", path.display())))?;
    if head.config.coord_len != genome.len() as u64 {
        return runtime(format!(
            "head was trained for a genome of length {}, reference has length {}",
            head.config.coord_len,
            genome.len()
        ));
    }
    Ok((encoder, head))
}

pub fn train_encoder_cmd(cfg: &RunConfig, fasta: &Path, reads: Option<&Path>, out: &Path) -> Result<()> {
    let genome = load_genome(fasta, cfg)?;
    let mut encoder = Encoder::build(cfg.encoder.clone(), &mut stream(cfg.seed, "encoder-init", 0))?;
    let read_bases: Option<Vec<Vec<u8>>> = match reads {
        Some(p) => {
            if cfg.loss.mode != Mode::SelfSupervised {
                return usage("--reads requires --mode selfsup");
            }
            Some(
                load_reads(p, &genome.name)?
                    .reads
                    .into_iter()
                    .map(|r| r.bases)
                    .collect(),
            )
        }
        None => None,
    };
    let source = match &read_bases {
        Some(r) => PairSource::Reads(r),
        None => PairSource::Genome(&genome),
    };
    let history = if cfg.train.iterations > 0 {
        train_encoder(&mut encoder, source, &cfg.loss, &cfg.augment, &cfg.train)?
    } else {
        Vec::new()
    };
    encoder.save(out)?;
    let mut w = create(&sibling(out, "loss.csv"))?;
    write_loss_csv(&mut w, &history)?;
    w.flush()?;
    write_config(cfg, out)?;
    println!(
        "encoder {} parameters, sha256 {}",
        encoder.num_params(),
        encoder.fingerprint()
    );
    Ok(())
}

pub fn train_head_cmd(cfg: &RunConfig, fasta: &Path, checkpoint_path: &Path, out: &Path) -> Result<()> {
    let genome = load_genome(fasta, cfg)?;
    let encoder = load_encoder(checkpoint_path)?;
    if encoder.config.k != cfg.augment.k {
        return usage(format!(
            "checkpoint encoder has k = {}, config has k = {}",
            encoder.config.k, cfg.augment.k
        ));
    }
    let before = encoder.fingerprint();
    let head_cfg = HeadConfig {
        coord_len: genome.len() as u64,
        ..cfg.head.clone()
    };
    head_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut head = Head::build(
        head_cfg,
        encoder.config.rep_dim(),
        &mut stream(cfg.seed, "head-init", 0),
    )?;
    let history = train_head(&encoder, &mut head, &genome, &cfg.augment, &cfg.head_train)?;
    if encoder.fingerprint() != before {
        return runtime("encoder weights changed during head training");
    }
    let mut arrays = encoder.to_arrays();
    arrays.extend(head.to_arrays());
    checkpoint::save(out, &arrays)?;
    let mut w = create(&sibling(out, "loss.csv"))?;
    write_loss_csv(&mut w, &history)?;
    w.flush()?;
    write_config(cfg, out)?;
    println!(
        "{} head {} parameters, encoder sha256 {before}",
        head.config.kind.name(),
        head.num_params()
    );
    Ok(())
}

pub fn simulate_reads_cmd(
    cfg: &RunConfig,
    fasta: &Path,
    n: usize,
    noiseless: bool,
    invert: Option<(usize, usize)>,
    out: &Path,
) -> Result<()> {
    let mut genome = load_genome(fasta, cfg)?;
    if let Some((start, end)) = invert {
        genome = genome
            .with_inversion(start, end)
            .map_err(|e| CliError::Usage(format!("--invert: {e}")))?;
    }
    let damage = if noiseless {
        DamageConfig::noiseless(cfg.damage.fragment_len)
    } else {
        cfg.damage.clone()
    };
    let reads = simulate_reads(&genome, n, &damage, cfg.seed)?;
    let mut w = create(out)?;
    reads.write_tsv(&mut w)?;
    w.flush()?;
    write_config(cfg, out)?;
    println!("{} reads of length {}", reads.len(), damage.fragment_len);
    Ok(())
}

pub fn map_cmd(cfg: &RunConfig, fasta: &Path, checkpoint_path: &Path, reads: &Path, out: &Path) -> Result<()> {
    let genome = load_genome(fasta, cfg)?;
    let (encoder, head) = load_pipeline(checkpoint_path, &genome)?;
    let reads = load_reads(reads, &genome.name)?;
    let records = map_reads(&reads, &genome, &encoder, &head, cfg.window)?;
    let mut w = create(out)?;
    write_mapping_tsv(&mut w, &records)?;
    w.flush()?;
    write_config(cfg, out)?;
    println!("mapped {} reads", records.len());
    Ok(())
}

pub fn eval_cmd(cfg: &RunConfig, mapping: &Path, truth: &Path, out: &Path) -> Result<()> {
    require_file(mapping, "--mapping")?;
    let records = read_mapping_tsv(BufReader::new(File::open(mapping)?))?;
    let truth = load_reads(truth, "")?;
    let eval = evaluate_mapping(&records, &truth)?;
    let mut w = create(out)?;
    match eval.accuracy {
        Some(acc) => {
            write_ecdf_csv(&mut w, &ecdf(&eval.errors, &log_thresholds(&eval.errors))?)?;
            println!("accuracy={acc:.4}");
        }
        None => {
            write_ecdf_csv(&mut w, &[])?;
            println!("accuracy=undefined (no reads)");
        }
    }
    w.flush()?;
    write_config(cfg, out)?;
    Ok(())
}

pub fn embed_cmd(cfg: &RunConfig, fasta: &Path, checkpoint_path: &Path, out: &Path) -> Result<()> {
    let genome = load_genome(fasta, cfg)?;
    let index = build_index(&load_encoder(checkpoint_path)?, &genome, cfg.stride)?;
    let mut w = create(out)?;
    write_embedding_csv(&mut w, &index)?;
    w.flush()?;
    write_config(cfg, out)?;
    println!("embedded {} k-mers", index.len());
    Ok(())
}

pub fn pca_cmd(cfg: &RunConfig, fasta: &Path, checkpoint_path: &Path, out: &Path) -> Result<()> {
    let genome = load_genome(fasta, cfg)?;
    let index = build_index(&load_encoder(checkpoint_path)?, &genome, cfg.stride)?;
    let pca = pca2(&index.z, index.dim)?;
    let mut w = create(out)?;
    write_pca_csv(&mut w, &pca, &index.coords)?;
    w.flush()?;
    write_config(cfg, out)?;
    println!("explained_variance={:.6},{:.6}", pca.explained[0], pca.explained[1]);
    Ok(())
}

pub fn knn_stats_cmd(cfg: &RunConfig, fasta: &Path, checkpoint_path: &Path, out: &Path) -> Result<()> {
    let genome = load_genome(fasta, cfg)?;
    let index = build_index(&load_encoder(checkpoint_path)?, &genome, cfg.stride)?;
    let stats = mean_knn_genomic_distance(&index, cfg.knn_k)?;
    let baseline = random_index(
        index.coords.clone(),
        index.dim,
        derive_seed(cfg.seed, "knn-baseline", 0),
    );
    let base_stats = mean_knn_genomic_distance(&baseline, cfg.knn_k)?;
    let mut w = create(out)?;
    write_knn_stats_csv(&mut w, &stats, &index.coords)?;
    w.flush()?;
    write_config(cfg, out)?;
    println!(
        "median={:.2} random_baseline_median={:.2}",
        stats.median, base_stats.median
    );
    Ok(())
}

fn most_common_length(reads: &ReadSet) -> Option<usize> {
    let mut lens: Vec<usize> = reads.reads.iter().map(|r| r.bases.len()).collect();
    lens.sort_unstable();
    let mut best: Option<(usize, usize)> = None;
    for chunk in lens.chunk_by(|a, b| a == b) {
        if best.is_none_or(|(_, n)| chunk.len() > n) {
            best = Some((chunk[0], chunk.len()));
        }
    }
    best.map(|(len, _)| len)
}

pub fn detect_inversions_cmd(
    cfg: &RunConfig,
    fasta: &Path,
    checkpoint_path: &Path,
    reads: &Path,
    out: &Path,
) -> Result<()> {
    let genome = load_genome(fasta, cfg)?;
    let (encoder, head) = load_pipeline(checkpoint_path, &genome)?;
    let reads = load_reads(reads, &genome.name)?;
    let Some(len) = most_common_length(&reads) else {
        return runtime("read set is empty");
    };
    if cfg.background_reads == 0 {
        return usage("[inversion] background_reads must be positive");
    }
    let damage = DamageConfig {
        fragment_len: len,
        ..cfg.damage.clone()
    };
    let background = simulate_reads(
        &genome,
        cfg.background_reads,
        &damage,
        derive_seed(cfg.seed, "background", 0),
    )?;
    let report = inversion_scan(&reads, &background, &genome, &encoder, &head, &cfg.inversion)?;
    let mut w = create(out)?;
    write_inversion_reads_csv(&mut w, &report)?;
    w.flush()?;
    let mut w = create(&sibling(out, "summary.csv"))?;
    write_inversion_summary_csv(&mut w, &report)?;
    w.flush()?;
    write_config(cfg, out)?;
    println!(
        "flagged {} of {} reads, {} intervals",
        report.flagged.iter().filter(|f| **f).count(),
        report.reads.len(),
        report.intervals.len()
    );
    for iv in &report.intervals {
        println!("interval {}..{} support {}", iv.start, iv.end, iv.support);
    }
    Ok(())
}
