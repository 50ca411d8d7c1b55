//! Dataset construction: IDX ingestion, the ones-versus-sevens task,
//! Gaussian generators, label contamination and CSV snapshots.

pub mod idx;
pub mod noise;

use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::tensor_nn::Matrix;

pub use idx::{load_mnist_idx, RawDataset};
pub use noise::{contingency, inject_label_noise, rho_from_counts, rho_from_rates, NoiseSpec, RhoMode};

/// Examples with observed (possibly contaminated) labels.
///
/// When `true_labels` is present `mislabel_mask[i] == (labels[i] != true_labels[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub true_labels: Option<Vec<usize>>,
    pub mislabel_mask: Option<Vec<bool>>,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let d = LabeledDataset {
            features,
            labels,
            true_labels: None,
            mislabel_mask: None,
            num_classes,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if self.labels.len() != n {
            return Err(Error::Shape(format!("{n} rows but {} labels", self.labels.len())));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::Input(format!("label {y} with {} classes", self.num_classes)));
        }
        match (&self.true_labels, &self.mislabel_mask) {
            (Some(t), Some(m)) => {
                if t.len() != n || m.len() != n {
                    return Err(Error::Shape("true labels or mask length differs from rows".into()));
                }
                if (0..n).any(|i| m[i] != (self.labels[i] != t[i])) {
                    return Err(Error::Input("mislabel mask disagrees with labels".into()));
                }
            }
            (Some(t), None) if t.len() != n => {
                return Err(Error::Shape("true label length differs from rows".into()))
            }
            (None, Some(_)) => return Err(Error::Input("mask without true labels".into())),
            _ => {}
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// Rows `idx` in the given order, with every per-example field carried along.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        let pick = |v: &Vec<usize>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        LabeledDataset {
            features: self.features.select_rows(idx),
            labels: pick(&self.labels),
            true_labels: self.true_labels.as_ref().map(pick),
            mislabel_mask: self
                .mislabel_mask
                .as_ref()
                .map(|m| idx.iter().map(|&i| m[i]).collect()),
            num_classes: self.num_classes,
        }
    }

    /// Seeded split preserving class proportions: the first part receives
    /// `round(fraction · |class c|)` examples of each class.
    pub fn stratified_split(&self, fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Input(format!("split fraction {fraction} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for c in 0..self.num_classes {
            let mut members: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == c).collect();
            members.shuffle(&mut rng);
            let take = (fraction * members.len() as f64).round() as usize;
            a.extend_from_slice(&members[..take]);
            b.extend_from_slice(&members[take..]);
        }
        a.sort_unstable();
        b.sort_unstable();
        Ok((self.subset(&a), self.subset(&b)))
    }

    /// Seeded subsample of `n` examples, stratified by label.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<LabeledDataset> {
        if n > self.len() {
            return Err(Error::Input(format!("cannot take {n} of {} examples", self.len())));
        }
        if n == self.len() {
            return Ok(self.clone());
        }
        Ok(self.stratified_split(n as f64 / self.len() as f64, seed)?.0)
    }

    /// Writes a CSV with header `x0,…,x{d-1},label,true_label,mislabelled`.
    /// Missing truth is written as empty fields.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        header.extend(["label", "true_label", "mislabelled"].map(String::from));
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            rec.push(self.true_labels.as_ref().map_or(String::new(), |t| t[i].to_string()));
            rec.push(
                self.mislabel_mask
                    .as_ref()
                    .map_or(String::new(), |m| (m[i] as u8).to_string()),
            );
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, num_classes: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file, num_classes)
    }

    pub fn read_csv_from<R: std::io::Read>(r: R, num_classes: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let width = header.len();
        if width < 3 || &header[width - 3] != "label" {
            return Err(Error::Input("snapshot header must end with label,true_label,mislabelled".into()));
        }
        let d = width - 3;
        let parse_int = |s: &str, what: &str| -> Result<usize> {
            s.trim()
                .parse()
                .map_err(|_| Error::Input(format!("bad {what} field {s:?}")))
        };
        let (mut data, mut labels, mut truth, mut mask) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut has_truth = true;
        for rec in rdr.records() {
            let rec = rec?;
            for j in 0..d {
                let v: f64 = rec[j]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Input(format!("bad feature field {:?}", &rec[j])))?;
                data.push(v);
            }
            labels.push(parse_int(&rec[d], "label")?);
            if rec[d + 1].is_empty() {
                has_truth = false;
            } else {
                truth.push(parse_int(&rec[d + 1], "true_label")?);
                mask.push(parse_int(&rec[d + 2], "mislabelled")? == 1);
            }
        }
        let n = labels.len();
        let ds = LabeledDataset {
            features: Matrix::new(n, d, data)?,
            labels,
            true_labels: has_truth.then_some(truth),
            mislabel_mask: has_truth.then_some(mask),
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// 2×2 mean pooling of a `height × width` image stored row-major.
pub fn mean_pool_2x2(pixels: &[f64], height: usize, width: usize) -> Vec<f64> {
    let (h, w) = (height / 2, width / 2);
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let at = |dr: usize, dc: usize| pixels[(2 * r + dr) * width + 2 * c + dc];
            out.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0);
        }
    }
    out
}

/// Keep digits 1 and 7 (relabelled 0 and 1) and halve the resolution.
pub fn prepare_ones_vs_sevens(raw: &RawDataset) -> Result<LabeledDataset> {
    let keep: Vec<usize> = (0..raw.labels.len())
        .filter(|&i| raw.labels[i] == 1 || raw.labels[i] == 7)
        .collect();
    for digit in [1u8, 7] {
        if !keep.iter().any(|&i| raw.labels[i] == digit) {
            return Err(Error::Input(format!("no images of digit {digit}")));
        }
    }
    if !raw.height.is_multiple_of(2) || !raw.width.is_multiple_of(2) {
        return Err(Error::Shape(format!("cannot pool a {}x{} image", raw.height, raw.width)));
    }
    let d = (raw.height / 2) * (raw.width / 2);
    let mut data = Vec::with_capacity(keep.len() * d);
    for &i in &keep {
        data.extend(mean_pool_2x2(raw.images.row(i), raw.height, raw.width));
    }
    let labels = keep.iter().map(|&i| usize::from(raw.labels[i] == 7)).collect();
    LabeledDataset::new(Matrix::new(keep.len(), d, data)?, labels, 2)
}

/// `n/2` draws from `N(μ, Σ)` labelled 1 followed by `n/2` from `N(−μ, Σ)` labelled 0.
///
/// Class 0 reuses the standard-normal draws of class 1 with flipped sign, so
/// the two sample means are exact negatives of each other.
pub fn synthetic_gaussian_2class(n: usize, mu: &[f64], sigma: &[Vec<f64>], seed: u64) -> Result<LabeledDataset> {
    let d = mu.len();
    if sigma.len() != d {
        return Err(Error::Shape(format!("mean of length {d}, covariance {}x{0}", sigma.len())));
    }
    let l = cholesky(sigma)?;
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ones = Vec::with_capacity(half * d);
    for _ in 0..half {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        for j in 0..d {
            ones.push(mu[j] + (0..=j).map(|k| l[j][k] * z[k]).sum::<f64>());
        }
    }
    let zeros: Vec<f64> = ones.iter().map(|v| -v).collect();
    let mut data = ones;
    data.extend(zeros);
    let labels = (0..2 * half).map(|i| usize::from(i < half)).collect();
    LabeledDataset::new(Matrix::new(2 * half, d, data)?, labels, 2)
}

/// Apply a class-conditional budget rule, returning one `ρ_c` per class.
pub fn budgets(mode: RhoMode, clean: &LabeledDataset, noisy: &LabeledDataset, rates: &[f64]) -> Result<Vec<f64>> {
    match mode {
        RhoMode::Unit => Ok(vec![1.0; noisy.num_classes]),
        RhoMode::Rates => {
            let sizes: Vec<f64> = clean.class_counts().iter().map(|&c| c as f64).collect();
            rho_from_rates(&sizes, rates)
        }
        RhoMode::Validation => rho_from_counts(&contingency(noisy)?),
    }
}
