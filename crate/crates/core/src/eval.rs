//! Post-training analysis of observation weights: histograms split by label
//! correctness, threshold separation curves, detection AUC and crash detection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::TrainTrace;

pub const DEFAULT_BINS: usize = 50;

/// Two histograms over shared edges, one per label-correctness group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHistogram {
    /// `bins + 1` increasing edges from 0 to the largest weight.
    pub edges: Vec<f64>,
    pub correct: Vec<usize>,
    pub mislabelled: Vec<usize>,
}

impl WeightHistogram {
    pub fn correct_is_empty(&self) -> bool {
        self.correct.iter().all(|&c| c == 0)
    }

    pub fn mislabelled_is_empty(&self) -> bool {
        self.mislabelled.iter().all(|&c| c == 0)
    }

    /// Columns `bin_lo,bin_hi,correct,mislabelled`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bin_lo", "bin_hi", "correct", "mislabelled"])?;
        for i in 0..self.correct.len() {
            w.write_record([
                self.edges[i].to_string(),
                self.edges[i + 1].to_string(),
                self.correct[i].to_string(),
                self.mislabelled[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationPoint {
    pub threshold: f64,
    /// Fraction of correctly labelled points with `ω ≥ t`.
    pub correct_kept: f64,
    /// Fraction of mislabelled points with `ω < t`.
    pub mislabelled_caught: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationCurve {
    pub points: Vec<SeparationPoint>,
}

impl SeparationCurve {
    /// Best threshold by the smaller of the two fractions.
    pub fn best_balanced(&self) -> Option<SeparationPoint> {
        self.points.iter().copied().fold(None, |best, p| {
            let score = p.correct_kept.min(p.mislabelled_caught);
            match best {
                Some(b) if b.correct_kept.min(b.mislabelled_caught) >= score => Some(b),
                _ => Some(p),
            }
        })
    }

    /// Whether one threshold reaches both fractions at once.
    pub fn achieves(&self, kept: f64, caught: f64) -> bool {
        self.points
            .iter()
            .any(|p| p.correct_kept >= kept && p.mislabelled_caught >= caught)
    }

    /// Columns `threshold,correct_kept,mislabelled_caught`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["threshold", "correct_kept", "mislabelled_caught"])?;
        for p in &self.points {
            w.write_record([
                p.threshold.to_string(),
                p.correct_kept.to_string(),
                p.mislabelled_caught.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn check_lengths(omega: &[f64], mask: &[bool]) -> Result<()> {
    if omega.len() != mask.len() {
        return Err(Error::Shape(format!(
            "{} weights but {} mask entries",
            omega.len(),
            mask.len()
        )));
    }
    if let Some(w) = omega.iter().find(|w| !w.is_finite()) {
        return Err(Error::Input(format!("non-finite weight {w}")));
    }
    Ok(())
}

/// Histogram of weights on `[0, max ω]`, split by `mask` (`true` = mislabelled).
pub fn weight_histogram(omega: &[f64], mask: &[bool], bins: usize) -> Result<WeightHistogram> {
    check_lengths(omega, mask)?;
    if bins < 2 {
        return Err(Error::Input(format!("need at least 2 bins, got {bins}")));
    }
    let top = omega.iter().cloned().fold(0.0f64, f64::max);
    let width = if top > 0.0 { top / bins as f64 } else { 1.0 / bins as f64 };
    let edges = (0..=bins).map(|i| i as f64 * width).collect();
    let mut correct = vec![0; bins];
    let mut mislabelled = vec![0; bins];
    for (&w, &bad) in omega.iter().zip(mask) {
        let bin = ((w.max(0.0) / width) as usize).min(bins - 1);
        if bad {
            mislabelled[bin] += 1;
        } else {
            correct[bin] += 1;
        }
    }
    Ok(WeightHistogram {
        edges,
        correct,
        mislabelled,
    })
}

/// Evenly spaced thresholds from 0 to just past the largest weight.
pub fn default_thresholds(omega: &[f64], points: usize) -> Vec<f64> {
    let top = omega.iter().cloned().fold(0.0f64, f64::max) * 1.001 + 1e-12;
    let n = points.max(2);
    (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect()
}

/// Flag `ω < t` as mislabelled at each threshold; empty groups report 0 for
/// their fraction.
pub fn separation_curve(omega: &[f64], mask: &[bool], thresholds: &[f64]) -> Result<SeparationCurve> {
    check_lengths(omega, mask)?;
    let n_bad = mask.iter().filter(|&&m| m).count();
    let n_good = mask.len() - n_bad;
    let frac = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    let points = ts
        .into_iter()
        .map(|t| {
            let mut kept = 0;
            let mut caught = 0;
            for (&w, &bad) in omega.iter().zip(mask) {
                match (bad, w < t) {
                    (false, false) => kept += 1,
                    (true, true) => caught += 1,
                    _ => {}
                }
            }
            SeparationPoint {
                threshold: t,
                correct_kept: frac(kept, n_good),
                mislabelled_caught: frac(caught, n_bad),
            }
        })
        .collect();
    Ok(SeparationCurve { points })
}

/// Element-wise mean of weight vectors from several runs.
pub fn mean_weights(runs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Input("no runs to average".into()))?;
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Shape("weight vectors differ in length".into()));
    }
    let mut mean = vec![0.0; first.len()];
    for r in runs {
        for (m, w) in mean.iter_mut().zip(r) {
            *m += w;
        }
    }
    let k = runs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    Ok(mean)
}

/// Probability that a random mislabelled point has a lower weight than a
/// random correct one, ties counting one half.
pub fn detection_auc(omega: &[f64], mask: &[bool]) -> Result<f64> {
    check_lengths(omega, mask)?;
    let n_bad = mask.iter().filter(|&&m| m).count();
    let n_good = mask.len() - n_bad;
    if n_bad == 0 || n_good == 0 {
        return Err(Error::UndefinedAuc(format!(
            "{n_good} correct and {n_bad} mislabelled points"
        )));
    }
    let mut order: Vec<usize> = (0..omega.len()).collect();
    order.sort_by(|&a, &b| omega[a].total_cmp(&omega[b]));
    // Sweep tie groups in increasing weight, counting correct points above.
    let mut good_below = 0usize;
    let mut wins = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && omega[order[j]] == omega[order[i]] {
            j += 1;
        }
        let bad_here = order[i..j].iter().filter(|&&k| mask[k]).count();
        let good_here = (j - i) - bad_here;
        let good_above = n_good - good_below - good_here;
        wins += bad_here as f64 * (good_above as f64 + 0.5 * good_here as f64);
        good_below += good_here;
        i = j;
    }
    Ok(wins / (n_bad as f64 * n_good as f64))
}

/// True when the tracked accuracy stays within `±0.02` of `chance` over the
/// final half of the epochs. Validation accuracy is used when recorded,
/// otherwise training accuracy.
pub fn crash_detector(trace: &TrainTrace, chance: f64) -> Result<bool> {
    if trace.records.is_empty() {
        return Err(Error::Input("empty training trace".into()));
    }
    let acc: Vec<f64> = trace
        .records
        .iter()
        .map(|r| r.validation_accuracy.unwrap_or(r.train_accuracy))
        .collect();
    let start = acc.len() / 2;
    Ok(acc[start..].iter().all(|a| (a - chance).abs() <= 0.02 + 1e-12))
}

/// Indices of the `k` lowest and `k` highest weights, ties broken by index.
pub fn extreme_indices(omega: &[f64], k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..omega.len()).collect();
    order.sort_by(|&a, &b| omega[a].total_cmp(&omega[b]).then(a.cmp(&b)));
    let k = k.min(order.len());
    let lowest = order[..k].to_vec();
    let mut by_desc = order.clone();
    by_desc.sort_by(|&a, &b| omega[b].total_cmp(&omega[a]).then(a.cmp(&b)));
    (lowest, by_desc[..k].to_vec())
}

/// Columns `rank,end,index,weight,label,mislabelled`.
pub fn write_extremes_csv(
    path: &Path,
    omega: &[f64],
    labels: &[usize],
    mask: Option<&[bool]>,
    k: usize,
) -> Result<()> {
    let (lo, hi) = extreme_indices(omega, k);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "end", "index", "weight", "label", "mislabelled"])?;
    for (end, idx) in [("lowest", &lo), ("highest", &hi)] {
        for (rank, &i) in idx.iter().enumerate() {
            let flag = mask.map(|m| (m[i] as u8).to_string()).unwrap_or_default();
            w.write_record([
                rank.to_string(),
                end.to_string(),
                i.to_string(),
                omega[i].to_string(),
                labels[i].to_string(),
                flag,
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
