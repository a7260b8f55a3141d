mod support;

use kmerspace_autodiff::gradcheck::check_gradients;
use kmerspace_autodiff::Tensor;
use kmerspace_core::contrastive::{contrastive_loss, distance_weights, positive_set, LossConfig, Mode, Weighting};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::loss_oracle::*;

#[test]
fn matches_brute_force_on_random_batches() {
    let worst = max_brute_force_deviation(50, 8, 10);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn self_supervised_equals_info_nce() {
    assert!(self_supervised_deviation(8, 11) < 1e-6);
}

#[test]
fn mutual_positive_pair_has_zero_loss() {
    assert!(two_sample_loss(17).abs() < 1e-6);
}

#[test]
fn supervised_collapses_to_self_supervised_for_small_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (m, d) = (16, 8);
    let z = unit_rows(m, d, &mut rng);
    // Pairs 1000 bp apart, partners 10 bp apart, threshold 20.
    let coords: Vec<usize> = (0..m).map(|i| (i / 2) * 1000 + (i % 2) * 10).collect();
    let partner: Vec<usize> = (0..m).map(|i| i ^ 1).collect();
    let sup = LossConfig {
        gamma: 20.0,
        ..Default::default()
    };
    let selfsup = LossConfig {
        mode: Mode::SelfSupervised,
        ..Default::default()
    };
    let ps = positive_set(Some(&coords), &partner, &sup).unwrap();
    let pu = positive_set(None, &partner, &selfsup).unwrap();
    let a = loss_value(&z, d, &ps, &distance_weights(Some(&coords), &ps, &sup), 0.1);
    let b = loss_value(&z, d, &pu, &distance_weights(None, &pu, &selfsup), 0.1);
    assert!((a - b).abs() < 1e-6);
}

#[test]
fn permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (m, d) = (16, 8);
    let z = unit_rows(m, d, &mut rng);
    let (coords, partner) = random_coords(m, &mut rng);
    let cfg = LossConfig {
        gamma: 500.0,
        ..Default::default()
    };
    let p = positive_set(Some(&coords), &partner, &cfg).unwrap();
    let base = loss_value(&z, d, &p, &distance_weights(Some(&coords), &p, &cfg), 0.1);

    let mut perm: Vec<usize> = (0..m).collect();
    perm.reverse();
    perm.swap(0, 5);
    let mut inv = vec![0; m];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let zp: Vec<f64> = perm.iter().flat_map(|&o| z[o * d..(o + 1) * d].to_vec()).collect();
    let cp: Vec<usize> = perm.iter().map(|&o| coords[o]).collect();
    let pp: Vec<usize> = perm.iter().map(|&o| inv[partner[o]]).collect();
    let p2 = positive_set(Some(&cp), &pp, &cfg).unwrap();
    let got = loss_value(&zp, d, &p2, &distance_weights(Some(&cp), &p2, &cfg), 0.1);
    assert!((got - base).abs() < 1e-6);
}

#[test]
fn empty_positive_sets_are_skipped() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let d = 4;
    let z = unit_rows(4, d, &mut rng);
    let p = vec![vec![1], vec![0], vec![], vec![]];
    let w = vec![vec![1.0], vec![1.0], vec![], vec![]];
    let got = loss_value(&z, d, &p, &w, 0.1);
    assert!((got - brute_force(&z, d, &p, &w, 0.1)).abs() < 1e-9);
}

#[test]
fn finite_for_unit_inputs_at_low_temperature() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let z = unit_rows(32, 8, &mut rng);
    let partner: Vec<usize> = (0..32).map(|i| i ^ 1).collect();
    let p: Vec<Vec<usize>> = partner.iter().map(|&q| vec![q]).collect();
    let w = vec![vec![1.0]; 32];
    assert!(loss_value(&z, 8, &p, &w, 0.01).is_finite());
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for trial in 0..10 {
        let (m, d) = (8, 5);
        let z = unit_rows(m, d, &mut rng);
        let (coords, partner) = random_coords(m, &mut rng);
        let cfg = LossConfig {
            gamma: 400.0,
            weighting: [Weighting::Off, Weighting::Inverted][trial % 2],
            ..Default::default()
        };
        let p = positive_set(Some(&coords), &partner, &cfg).unwrap();
        let w = distance_weights(Some(&coords), &p, &cfg);
        let input = Tensor::new(vec![m, d], z).unwrap();
        let checks = check_gradients(&[input], &[1.0], 1e-3, |tape, v| {
            Ok(contrastive_loss(tape, v[0], &p, &w, cfg.tau).map_err(|e| {
                kmerspace_autodiff::AutodiffError::Invalid {
                    op: "contrastive",
                    detail: e.to_string(),
                }
            })?)
        })
        .unwrap();
        let err = checks[0].relative_error();
        assert!(err < 1e-4, "trial {trial}: relative error {err}");
    }
}
