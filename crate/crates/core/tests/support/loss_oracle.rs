//! Brute-force oracles for the contrastive loss.

#![allow(dead_code)]

use kmerspace_autodiff::{Tape, Tensor};
use kmerspace_core::contrastive::{contrastive_loss, distance_weights, positive_set, LossConfig, Mode, Weighting};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_rows(m: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut z: Vec<f64> = (0..m * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    for r in z.chunks_mut(d) {
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        r.iter_mut().for_each(|v| *v /= n);
    }
    z
}

/// Literal double loop over anchors, positives and the denominator set.
pub fn brute_force(z: &[f64], d: usize, p: &[Vec<usize>], w: &[Vec<f64>], tau: f64) -> f64 {
    let m = p.len();
    let dot = |i: usize, j: usize| (0..d).map(|e| z[i * d + e] * z[j * d + e]).sum::<f64>();
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..m {
        if p[i].is_empty() {
            continue;
        }
        count += 1;
        let mut denom = 0.0;
        for a in 0..m {
            if a != i {
                denom += (dot(i, a) / tau).exp();
            }
        }
        let mut term = 0.0;
        for (k, &pp) in p[i].iter().enumerate() {
            term += w[i][k] * ((dot(i, pp) / tau).exp() / denom).ln();
        }
        total += -term / p[i].len() as f64;
    }
    total / count as f64
}

/// Standard pairwise InfoNCE: each sample's partner against all others.
pub fn info_nce(z: &[f64], d: usize, partner: &[usize], tau: f64) -> f64 {
    let m = partner.len();
    let dot = |i: usize, j: usize| (0..d).map(|e| z[i * d + e] * z[j * d + e]).sum::<f64>();
    (0..m)
        .map(|i| {
            let logits: Vec<f64> = (0..m).filter(|&a| a != i).map(|a| dot(i, a) / tau).collect();
            let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
            lse - dot(i, partner[i]) / tau
        })
        .sum::<f64>()
        / m as f64
}

pub fn loss_value(z: &[f64], d: usize, p: &[Vec<usize>], w: &[Vec<f64>], tau: f64) -> f64 {
    let mut tape: Tape<f64> = Tape::new();
    let v = tape.leaf(Tensor::new(vec![p.len(), d], z.to_vec()).unwrap());
    let l = contrastive_loss(&mut tape, v, p, w, tau).unwrap();
    tape.value(l).data()[0]
}

pub fn random_coords(m: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut coords = Vec::new();
    for _ in 0..m / 2 {
        let c = rng.random_range(0..3000);
        coords.push(c);
        coords.push(c + rng.random_range(0..=50));
    }
    (coords, (0..m).map(|i| i ^ 1).collect())
}

/// Largest |vectorized - brute force| over `trials` random supervised batches
/// of `pairs` positive pairs with mixed thresholds and weightings.
pub fn max_brute_force_deviation(trials: usize, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let (m, d) = (2 * pairs, 8);
        let z = unit_rows(m, d, &mut rng);
        let (coords, partner) = random_coords(m, &mut rng);
        let cfg = LossConfig {
            gamma: [25.0, 200.0, 1000.0, 5000.0][trial % 4],
            weighting: [Weighting::Off, Weighting::Proportional, Weighting::Inverted][trial % 3],
            ..Default::default()
        };
        let p = positive_set(Some(&coords), &partner, &cfg).unwrap();
        let w = distance_weights(Some(&coords), &p, &cfg);
        if p.iter().all(Vec::is_empty) {
            continue;
        }
        let got = loss_value(&z, d, &p, &w, cfg.tau);
        worst = worst.max((got - brute_force(&z, d, &p, &w, cfg.tau)).abs());
    }
    worst
}

/// |self-supervised loss - pairwise InfoNCE| on one random batch.
pub fn self_supervised_deviation(pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, d) = (2 * pairs, 8);
    let z = unit_rows(m, d, &mut rng);
    let partner: Vec<usize> = (0..m).map(|i| i ^ 1).collect();
    let cfg = LossConfig {
        mode: Mode::SelfSupervised,
        ..Default::default()
    };
    let p = positive_set(None, &partner, &cfg).unwrap();
    let w = distance_weights(None, &p, &cfg);
    (loss_value(&z, d, &p, &w, cfg.tau) - info_nce(&z, d, &partner, cfg.tau)).abs()
}

/// Loss of a batch of two samples that are each other's only positive.
pub fn two_sample_loss(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = unit_rows(2, 8, &mut rng);
    let cfg = LossConfig {
        gamma: 100.0,
        ..Default::default()
    };
    let coords = [500, 530];
    let p = positive_set(Some(&coords), &[1, 0], &cfg).unwrap();
    let w = distance_weights(Some(&coords), &p, &cfg);
    loss_value(&z, 8, &p, &w, cfg.tau)
}
