//! Seeded label contamination and per-class weight-budget estimates.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Per-class flip rates. Binary labels flip to the other class; with more
/// classes the new label is uniform over the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub rates: Vec<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.rates.iter().find(|q| !(**q >= 0.0 && **q < 0.5)) {
            return Err(Error::Input(format!("flip rate {q} outside [0, 0.5)")));
        }
        Ok(())
    }
}

/// Flip exactly `round(q_c · |class c|)` labels per class, chosen uniformly
/// without replacement. Classes are processed in index order from one seeded
/// stream, so the flip set depends only on the labels, rates and seed.
pub fn inject_label_noise(dataset: &LabeledDataset, spec: &NoiseSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let k = dataset.num_classes;
    if spec.rates.len() != k {
        return Err(Error::Input(format!("{} flip rates for {k} classes", spec.rates.len())));
    }
    let truth = dataset
        .true_labels
        .clone()
        .unwrap_or_else(|| dataset.labels.clone());
    let mut labels = truth.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for (c, &q) in spec.rates.iter().enumerate() {
        let members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == c).collect();
        let flips = (q * members.len() as f64).round() as usize;
        if flips == 0 {
            continue;
        }
        for j in sample(&mut rng, members.len(), flips).into_vec() {
            let i = members[j];
            labels[i] = if k == 2 {
                1 - c
            } else {
                let other = rng.gen_range(0..k - 1);
                if other >= c {
                    other + 1
                } else {
                    other
                }
            };
        }
    }
    let mask = labels.iter().zip(&truth).map(|(a, b)| a != b).collect();
    Ok(LabeledDataset {
        features: dataset.features.clone(),
        labels,
        true_labels: Some(truth),
        mislabel_mask: Some(mask),
        num_classes: k,
    })
}

/// `ρ_c = p(c) / (1 - q(c))` from a contingency table `counts[true][observed]`.
///
/// `p(c)` is the fraction of examples labelled `c` whose true class is `c`;
/// `q(c)` is the fraction of true-class-`c` examples labelled otherwise.
pub fn rho_from_counts(counts: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = counts.len();
    if counts.iter().any(|r| r.len() != k) {
        return Err(Error::Shape("contingency table must be square".into()));
    }
    (0..k)
        .map(|c| {
            let labelled_c: f64 = (0..k).map(|t| counts[t][c]).sum();
            let true_c: f64 = counts[c].iter().sum();
            if labelled_c <= 0.0 || true_c <= 0.0 {
                return Err(Error::Input(format!("class {c} has no examples")));
            }
            let p = counts[c][c] / labelled_c;
            let q = 1.0 - counts[c][c] / true_c;
            if q >= 1.0 {
                return Err(Error::Input(format!(
                    "class {c} is never labelled correctly, rho undefined"
                )));
            }
            Ok(p / (1.0 - q))
        })
        .collect()
}

/// `ρ` from true class sizes and exact flip rates (binary or uniform-other flips).
pub fn rho_from_rates(class_sizes: &[f64], rates: &[f64]) -> Result<Vec<f64>> {
    let k = class_sizes.len();
    if rates.len() != k {
        return Err(Error::Shape(format!("{} rates for {k} classes", rates.len())));
    }
    if let Some(q) = rates.iter().find(|q| **q >= 1.0 || **q < 0.0) {
        return Err(Error::Input(format!("flip rate {q} outside [0, 1)")));
    }
    let mut counts = vec![vec![0.0; k]; k];
    for t in 0..k {
        for c in 0..k {
            counts[t][c] = if c == t {
                class_sizes[t] * (1.0 - rates[t])
            } else if k > 1 {
                class_sizes[t] * rates[t] / (k - 1) as f64
            } else {
                0.0
            };
        }
    }
    rho_from_counts(&counts)
}

/// Contingency counts `[true][observed]` of a contaminated dataset.
pub fn contingency(dataset: &LabeledDataset) -> Result<Vec<Vec<f64>>> {
    let truth = dataset
        .true_labels
        .as_ref()
        .ok_or_else(|| Error::Input("dataset has no true labels".into()))?;
    let k = dataset.num_classes;
    let mut counts = vec![vec![0.0; k]; k];
    for (&t, &c) in truth.iter().zip(&dataset.labels) {
        counts[t][c] += 1.0;
    }
    Ok(counts)
}

/// How the per-class budgets are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoMode {
    /// `ρ_c = p(c)/(1-q(c))` from the known simulation rates.
    Rates,
    /// `ρ_c` estimated from a doubly labelled validation sample.
    Validation,
    /// `ρ_c = 1` for every class.
    Unit,
}
