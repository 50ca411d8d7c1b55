use proptest::prelude::*;

use drfit::data::noise::{inject_label_noise, NoiseSpec};
use drfit::data::LabeledDataset;
use drfit::drfit::{analytic_weights, full_objective, objective_constant, reduced_loss, ClassPartition, DrFitConfig};
use drfit::eval::{detection_auc, separation_curve};
use drfit::tensor_nn::Matrix;
use drfit::trainer::numeric_weight_update;

fn scored(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2..max).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![0.0..3.0, Just(1.0), Just(0.5)], n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

fn labelled(max: usize, classes: usize) -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
    (1..max).prop_flat_map(move |n| {
        (
            prop::collection::vec(0.0..8.0, n),
            prop::collection::vec(0..classes, n),
        )
    })
    .prop_map(move |(mut losses, mut labels)| {
        // every class needs at least one member
        for c in 0..classes {
            labels.push(c);
            losses.push(c as f64);
        }
        (losses, labels)
    })
}

proptest! {
    #[test]
    fn auc_matches_pairwise_count((omega, mask) in scored(40)) {
        let bad: Vec<f64> = omega.iter().zip(&mask).filter(|p| *p.1).map(|p| *p.0).collect();
        let good: Vec<f64> = omega.iter().zip(&mask).filter(|p| !*p.1).map(|p| *p.0).collect();
        let result = detection_auc(&omega, &mask);
        if bad.is_empty() || good.is_empty() {
            prop_assert!(result.is_err());
        } else {
            let mut wins = 0.0;
            for g in &good {
                for b in &bad {
                    wins += if g > b { 1.0 } else if g == b { 0.5 } else { 0.0 };
                }
            }
            let brute = wins / (good.len() * bad.len()) as f64;
            prop_assert!((result.unwrap() - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn separation_curve_is_monotone((omega, mask) in scored(40), ts in prop::collection::vec(-0.5..3.5f64, 1..30)) {
        let curve = separation_curve(&omega, &mask, &ts).unwrap();
        for w in curve.points.windows(2) {
            prop_assert!(w[0].threshold <= w[1].threshold);
            prop_assert!(w[1].correct_kept <= w[0].correct_kept);
            prop_assert!(w[1].mislabelled_caught >= w[0].mislabelled_caught);
        }
    }

    #[test]
    fn noise_flips_exact_counts(labels in prop::collection::vec(0..2usize, 1..200), q0 in 0.0..0.5f64, q1 in 0.0..0.5f64, seed in any::<u64>()) {
        let n = labels.len();
        let data = LabeledDataset::new(Matrix::zeros(n, 1), labels.clone(), 2).unwrap();
        let noisy = inject_label_noise(&data, &NoiseSpec { rates: vec![q0, q1], seed }).unwrap();
        let mask = noisy.mislabel_mask.as_ref().unwrap();
        for (c, q) in [q0, q1].into_iter().enumerate() {
            let size = labels.iter().filter(|&&l| l == c).count();
            let flipped = (0..n).filter(|&i| labels[i] == c && mask[i]).count();
            prop_assert_eq!(flipped, (q * size as f64).round() as usize);
        }
        for i in 0..n {
            prop_assert_eq!(mask[i], noisy.labels[i] != labels[i]);
        }
    }

    #[test]
    fn analytic_weights_are_feasible((losses, labels) in labelled(60, 3), alpha in 0.01..5.0f64, rho in prop::collection::vec(0.5..2.0f64, 3)) {
        let cfg = DrFitConfig::with_rho(alpha, 0.0, rho.clone()).unwrap();
        let part = ClassPartition::from_labels(&labels, 3).unwrap();
        let w = analytic_weights(&losses, &part, &cfg).unwrap();
        prop_assert!(w.omega.iter().all(|&v| v > 0.0 && v.is_finite()));
        for (c, members) in part.present() {
            let target = rho[c] * members.len() as f64;
            prop_assert!((w.class_sum(members) - target).abs() <= 1e-9 * target);
            for &i in members {
                for &j in members {
                    if losses[i] < losses[j] {
                        prop_assert!(w.omega[i] >= w.omega[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn reduced_loss_matches_objective_at_optimum((losses, labels) in labelled(60, 2), alpha in 0.05..3.0f64, lambda in 0.0..1.0f64, theta_sq in 0.0..10.0f64) {
        let cfg = DrFitConfig::new(alpha, lambda, 2).unwrap();
        let part = ClassPartition::from_labels(&labels, 2).unwrap();
        let w = analytic_weights(&losses, &part, &cfg).unwrap();
        let full = full_objective(&losses, &w.omega, theta_sq, &cfg).unwrap();
        let reduced = reduced_loss(&losses, theta_sq, &part, &cfg).unwrap() + objective_constant(&part, &cfg).unwrap();
        prop_assert!((full - reduced).abs() <= 1e-9 * (1.0 + full.abs()));
    }

    #[test]
    fn numeric_step_keeps_class_means((losses, labels) in labelled(40, 2), beta in 0.001..0.1f64) {
        let cfg = DrFitConfig::new(0.5, 0.0, 2).unwrap();
        let mut omega = vec![1.0; losses.len()];
        numeric_weight_update(&mut omega, &losses, &labels, &cfg, beta).unwrap();
        prop_assert!(omega.iter().all(|&v| v >= 0.0));
        let part = ClassPartition::from_labels(&labels, 2).unwrap();
        for (_, members) in part.present() {
            let sum: f64 = members.iter().map(|&i| omega[i]).sum();
            prop_assert!((sum - members.len() as f64).abs() < 1e-9 * members.len() as f64);
        }
    }
}

#[test]
fn numeric_step_rejects_a_class_clipped_to_zero() {
    let cfg = DrFitConfig::new(0.5, 0.0, 2).unwrap();
    let mut omega = vec![1.0; 3];
    let err = numeric_weight_update(&mut omega, &[5.0, 6.0, 0.1], &[0, 0, 1], &cfg, 0.5).unwrap_err();
    assert!(matches!(err, drfit::Error::Renormalisation { class: 0 }));
}
