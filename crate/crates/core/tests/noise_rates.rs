use kmerspace_core::noise::{apply_noise_bases, simulate_reads, AugmentConfig, DamageConfig};
use kmerspace_core::seq::{reverse_complement_bases, Genome, Kmer, Strand, BASES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 100_000;

fn random_genome(len: usize, seed: u64) -> Genome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases: Vec<u8> = (0..len).map(|_| BASES[rng.random_range(0..4)]).collect();
    Genome::new("mc", bases).unwrap()
}

#[test]
fn augmentation_substitution_rates() {
    let cfg = AugmentConfig {
        revcomp_prob: 0.0,
        ..AugmentConfig::default()
    };
    let km = Kmer::new("C".repeat(30)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut to_t = [0usize; 30];
    let mut changed = [0usize; 30];
    for _ in 0..SAMPLES {
        let out = apply_noise_bases(&km, &cfg, &mut rng);
        assert_eq!(out.len(), 30);
        for (i, b) in out.iter().enumerate() {
            to_t[i] += usize::from(*b == b'T');
            changed[i] += usize::from(*b != b'C');
        }
    }
    let freq = |n: usize| n as f64 / SAMPLES as f64;
    let flat_third = cfg.flat_sub_rate / 3.0;
    for i in 0..30 {
        let f = freq(to_t[i]);
        if i < cfg.deam_end_len {
            assert!((f - (cfg.deam_rate + flat_third)).abs() < 0.01, "pos {i}: {f}");
        } else {
            assert!((f - flat_third).abs() < 0.005, "pos {i}: {f}");
            assert!((freq(changed[i]) - cfg.flat_sub_rate).abs() < 0.005, "pos {i}");
        }
    }
}

#[test]
fn augmentation_g_to_a_at_three_prime_end() {
    let cfg = AugmentConfig {
        revcomp_prob: 0.0,
        flat_sub_rate: 0.0,
        ..AugmentConfig::default()
    };
    let km = Kmer::new("G".repeat(30)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut to_a = [0usize; 30];
    for _ in 0..SAMPLES {
        for (i, b) in apply_noise_bases(&km, &cfg, &mut rng).iter().enumerate() {
            to_a[i] += usize::from(*b == b'A');
        }
    }
    for (i, n) in to_a.iter().enumerate() {
        let f = *n as f64 / SAMPLES as f64;
        let expect = if i >= 20 { cfg.deam_rate } else { 0.0 };
        assert!((f - expect).abs() < 0.01, "pos {i}: {f}");
    }
}

/// Per-position counts of reference C read as T, in read orientation.
fn c_to_t_profile(g: &Genome, cfg: &DamageConfig, n: usize, seed: u64) -> Vec<f64> {
    let reads = simulate_reads(g, n, cfg, seed).unwrap();
    let len = cfg.fragment_len;
    let mut cs = vec![0usize; len];
    let mut ts = vec![0usize; len];
    for r in &reads.reads {
        let locus = &g.bases()[r.coordinate..r.coordinate + len];
        let reference = match r.strand {
            Strand::Forward => locus.to_vec(),
            Strand::Revcomp => reverse_complement_bases(locus),
        };
        for i in 0..len {
            if reference[i] == b'C' {
                cs[i] += 1;
                ts[i] += usize::from(r.bases[i] == b'T');
            }
        }
    }
    cs.iter()
        .zip(&ts)
        .map(|(c, t)| *t as f64 / (*c).max(1) as f64)
        .collect()
}

#[test]
fn damage_concentrates_at_read_ends() {
    let g = random_genome(20_000, 1);
    let cfg = DamageConfig::default();
    let profile = c_to_t_profile(&g, &cfg, SAMPLES, 7);
    assert!(
        profile[0] >= 10.0 * profile[15],
        "end {} interior {}",
        profile[0],
        profile[15]
    );
    // Interior: double-stranded deamination plus a third of sequencing errors.
    let interior = cfg.deam_ds + cfg.seq_error_rate / 3.0;
    assert!((profile[15] - interior).abs() < 0.01, "{}", profile[15]);
    // Position 0 is in the 5' overhang with probability 1 - p.
    let end = (1.0 - cfg.overhang_geom_p) * cfg.deam_ss;
    assert!((profile[0] - end).abs() < 0.02, "{}", profile[0]);
}

#[test]
fn unit_geometric_parameter_removes_overhangs() {
    let g = random_genome(20_000, 2);
    let cfg = DamageConfig {
        overhang_geom_p: 1.0,
        deam_ss: 1.0,
        deam_ds: 0.05,
        seq_error_rate: 0.0,
        ..DamageConfig::default()
    };
    let profile = c_to_t_profile(&g, &cfg, 20_000, 3);
    for (i, f) in profile.iter().enumerate() {
        assert!((f - cfg.deam_ds).abs() < 0.02, "pos {i}: {f}");
    }
}

#[test]
fn noiseless_reads_match_their_locus() {
    let g = random_genome(5_000, 3);
    let reads = simulate_reads(&g, 2_000, &DamageConfig::noiseless(30), 5).unwrap();
    for r in &reads.reads {
        let locus = &g.bases()[r.coordinate..r.coordinate + 30];
        let expect = match r.strand {
            Strand::Forward => locus.to_vec(),
            Strand::Revcomp => reverse_complement_bases(locus),
        };
        assert_eq!(r.bases, expect);
    }
}

#[test]
fn read_starts_are_uniform() {
    let g = random_genome(10_030, 4);
    let reads = simulate_reads(&g, SAMPLES, &DamageConfig::default(), 99).unwrap();
    let span = (g.len() - 30 + 1) as f64;
    let mut bins = [0f64; 20];
    for r in &reads.reads {
        assert!(r.coordinate + 30 <= g.len());
        bins[((r.coordinate as f64 / span) * 20.0) as usize] += 1.0;
    }
    let expected = SAMPLES as f64 / 20.0;
    let chi2: f64 = bins.iter().map(|o| (o - expected).powi(2) / expected).sum();
    // Upper 0.001 critical value of chi-square with 19 degrees of freedom.
    assert!(chi2 < 43.82, "chi2 = {chi2}");
}

#[test]
fn seeded_simulation_is_reproducible() {
    let g = random_genome(3_000, 5);
    let cfg = DamageConfig::default();
    assert_eq!(
        simulate_reads(&g, 500, &cfg, 1).unwrap(),
        simulate_reads(&g, 500, &cfg, 1).unwrap()
    );
    assert_ne!(
        simulate_reads(&g, 500, &cfg, 1).unwrap(),
        simulate_reads(&g, 500, &cfg, 2).unwrap()
    );
}
