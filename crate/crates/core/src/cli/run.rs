//! Training replications, hyperparameter sweeps and weight re-analysis.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::data::idx::load_mnist_idx;
use crate::data::noise::{inject_label_noise, NoiseSpec};
use crate::data::{budgets, prepare_ones_vs_sevens, synthetic_gaussian_2class, LabeledDataset};
use crate::drfit::DrFitConfig;
use crate::error::{Error, Result};
use crate::eval::{
    crash_detector, default_thresholds, detection_auc, mean_weights, separation_curve, weight_histogram,
    write_extremes_csv, DEFAULT_BINS,
};
use crate::tensor_nn::{mlp_forward, per_example_loss, MlpParams, OutputKind};
use crate::trainer::{evaluate, train, EpochRecord, EvalSets, TrainTrace};

/// Thresholds in every separation-curve CSV.
const CURVE_POINTS: usize = 201;
/// Examples listed at each end of the weight ranking.
const EXTREME_COUNT: usize = 10;

/// The four sets every training run sees. `train` and `validation` carry
/// the injected noise; `test` keeps the true labels.
#[derive(Debug, Clone)]
pub struct Splits {
    pub clean_train: LabeledDataset,
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Splits {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            train: self.train.len(),
            validation: self.validation.len(),
            test: self.test.len(),
        }
    }
}

/// The training data source behind a config: sweeps reuse the MNIST or
/// synthetic pipeline named in their sweep section.
fn data_kind(cfg: &ExperimentConfig) -> Result<ExperimentKind> {
    let kind = match cfg.kind {
        ExperimentKind::HyperSweep => cfg.sweep.source,
        k => k,
    };
    match kind {
        ExperimentKind::Mnist1v7 | ExperimentKind::SyntheticTrain => Ok(kind),
        other => Err(Error::Config(format!("{other:?} is not a training experiment"))),
    }
}

fn validation_noise(spec: &NoiseSpec) -> NoiseSpec {
    NoiseSpec {
        rates: spec.rates.clone(),
        seed: spec.seed.wrapping_add(1),
    }
}

/// Load, split and contaminate the data named by `cfg`.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    match data_kind(cfg)? {
        ExperimentKind::Mnist1v7 => {
            let d = &cfg.data;
            let root = d.resolved_root();
            let images = root.join(&d.images);
            let labels = root.join(&d.labels);
            for p in [&images, &labels] {
                if !p.is_file() {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found"),
                    ));
                }
            }
            let all = prepare_ones_vs_sevens(&load_mnist_idx(&images, &labels)?)?;
            if d.test_size >= all.len() {
                return Err(Error::Config(format!(
                    "test size {} leaves no training data out of {}",
                    d.test_size,
                    all.len()
                )));
            }
            let (test, rest) = all.stratified_split(d.test_size as f64 / all.len() as f64, d.split_seed)?;
            let (validation, mut train) = rest.stratified_split(d.validation_fraction, d.split_seed.wrapping_add(1))?;
            if let Some(n) = d.train_size {
                if n < train.len() {
                    train = train.subsample(n, d.split_seed.wrapping_add(2))?;
                }
            }
            Ok(Splits {
                train: inject_label_noise(&train, &cfg.noise)?,
                validation: inject_label_noise(&validation, &validation_noise(&cfg.noise))?,
                clean_train: train,
                test,
            })
        }
        _ => {
            let s = &cfg.synthetic;
            let clean = synthetic_gaussian_2class(s.n, &s.mean, &s.cov, s.seed)?;
            let validation = synthetic_gaussian_2class(s.holdout, &s.mean, &s.cov, s.seed.wrapping_add(1))?;
            let test = synthetic_gaussian_2class(s.holdout, &s.mean, &s.cov, s.seed.wrapping_add(2))?;
            Ok(Splits {
                train: inject_label_noise(&clean, &cfg.noise)?,
                validation: inject_label_noise(&validation, &validation_noise(&cfg.noise))?,
                clean_train: clean,
                test,
            })
        }
    }
}

/// Objective hyperparameters with the budgets resolved against the data.
pub fn objective(cfg: &ExperimentConfig, splits: &Splits) -> Result<DrFitConfig> {
    let rho = budgets(cfg.objective.rho_mode, &splits.clean_train, &splits.train, &cfg.noise.rates)?;
    DrFitConfig::with_rho(cfg.objective.alpha, cfg.objective.lambda, rho)
}

pub fn initial_params(cfg: &ExperimentConfig, input_dim: usize, replication: usize) -> Result<MlpParams> {
    let mut sizes = vec![input_dim];
    sizes.extend(&cfg.model.hidden);
    sizes.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.model.init_seed.wrapping_add(replication as u64));
    MlpParams::init_he(&sizes, cfg.model.activation, OutputKind::Logistic2, &mut rng)
}

/// Everything kept from one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub digest: String,
    pub seed: u64,
    pub replication: usize,
    pub split: SplitSizes,
    /// Epoch 0 holds the metrics of the initial network.
    pub epochs: Vec<EpochRecord>,
    pub weights_file: String,
    pub crashed: bool,
    pub detection_auc: Option<f64>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|r| r.test_accuracy)
    }

    pub fn peak_test_accuracy(&self) -> Option<f64> {
        self.epochs
            .iter()
            .filter_map(|r| r.test_accuracy)
            .fold(None, |m, a| Some(m.map_or(a, |m: f64| m.max(a))))
    }

    pub fn final_validation_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|r| r.validation_accuracy)
    }
}

/// A finished replication: its record and final observation weights.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub weights: Vec<f64>,
    pub dir: PathBuf,
}

fn initial_record(params: &MlpParams, splits: &Splits) -> Result<EpochRecord> {
    let losses = per_example_loss(&mlp_forward(params, &splits.train.features)?, &splits.train.labels)?;
    Ok(EpochRecord {
        epoch: 0,
        train_loss: losses.iter().sum::<f64>() / losses.len() as f64,
        train_accuracy: evaluate(params, &splits.train)?,
        validation_accuracy: if splits.validation.is_empty() {
            None
        } else {
            Some(evaluate(params, &splits.validation)?)
        },
        test_accuracy: Some(evaluate(params, &splits.test)?),
    })
}

fn short(digest: &str) -> &str {
    &digest[..16]
}

pub fn run_dir(cfg: &ExperimentConfig, digest: &str, seed: u64) -> PathBuf {
    cfg.output_dir.join(format!("{}-seed{seed}", short(digest)))
}

pub fn summary_dir(cfg: &ExperimentConfig, digest: &str) -> PathBuf {
    cfg.output_dir.join(format!("{}-summary", short(digest)))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_metrics(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "train_accuracy", "validation_accuracy", "test_accuracy"])?;
    for r in records {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.train_accuracy.to_string(),
            opt(r.validation_accuracy),
            opt(r.test_accuracy),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Columns `index,label,true_label,mislabelled,weight`.
pub fn write_weights(path: &Path, data: &LabeledDataset, omega: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "label", "true_label", "mislabelled", "weight"])?;
    for (i, &om) in omega.iter().enumerate() {
        w.write_record([
            i.to_string(),
            data.labels[i].to_string(),
            data.true_labels.as_ref().map(|t| t[i].to_string()).unwrap_or_default(),
            data.mislabel_mask
                .as_ref()
                .map(|m| u8::from(m[i]).to_string())
                .unwrap_or_default(),
            om.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Histogram, separation curve and extreme examples for one weight vector.
fn write_weight_analysis(dir: &Path, data: &LabeledDataset, omega: &[f64]) -> Result<Option<f64>> {
    write_extremes_csv(
        &dir.join("extremes.csv"),
        omega,
        &data.labels,
        data.mislabel_mask.as_deref(),
        EXTREME_COUNT,
    )?;
    let Some(mask) = data.mislabel_mask.as_deref() else {
        return Ok(None);
    };
    weight_histogram(omega, mask, DEFAULT_BINS)?.write_csv(&dir.join("histogram.csv"))?;
    separation_curve(omega, mask, &default_thresholds(omega, CURVE_POINTS))?
        .write_csv(&dir.join("separation.csv"))?;
    Ok(detection_auc(omega, mask).ok())
}

fn chance_level(data: &LabeledDataset) -> f64 {
    1.0 / data.num_classes as f64
}

/// Train replication `rep` of `cfg` in memory.
pub fn run_replication(
    cfg: &ExperimentConfig,
    splits: &Splits,
    dr: &DrFitConfig,
    digest: &str,
    rep: usize,
) -> Result<(RunRecord, Vec<f64>)> {
    let started = Instant::now();
    let seed = cfg.train.seed.wrapping_add(rep as u64);
    let init = initial_params(cfg, splits.train.dim(), rep)?;
    let first = initial_record(&init, splits)?;
    let train_cfg = crate::trainer::TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let eval = EvalSets {
        validation: (!splits.validation.is_empty()).then_some(&splits.validation),
        test: Some(&splits.test),
    };
    let out = train(&splits.train, dr, &train_cfg, init, eval)?;
    let mut epochs = vec![first];
    epochs.extend(out.trace.records);
    let crashed = crash_detector(
        &TrainTrace {
            records: epochs.clone(),
        },
        chance_level(&splits.train),
    )?;
    let auc = splits
        .train
        .mislabel_mask
        .as_deref()
        .and_then(|m| detection_auc(&out.weights.omega, m).ok());
    let record = RunRecord {
        digest: digest.to_string(),
        seed,
        replication: rep,
        split: splits.sizes(),
        epochs,
        weights_file: "weights.csv".into(),
        crashed,
        detection_auc: auc,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((record, out.weights.omega))
}

fn write_run(cfg: &ExperimentConfig, dir: &Path, splits: &Splits, record: &RunRecord, omega: &[f64]) -> Result<()> {
    create_dir(dir)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml()?)?;
    write_metrics(&dir.join("metrics.csv"), &record.epochs)?;
    write_weights(&dir.join(&record.weights_file), &splits.train, omega)?;
    write_weight_analysis(dir, &splits.train, omega)?;
    let json = serde_json::to_string_pretty(record).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&dir.join("record.json"), &json)
}

/// Outcome of one replication inside a batch of runs.
#[derive(Debug, Clone)]
pub struct Replication {
    pub replication: usize,
    pub seed: u64,
    pub result: std::result::Result<RunOutput, String>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub digest: String,
    pub split: SplitSizes,
    pub replications: Vec<Replication>,
    pub summary_dir: PathBuf,
}

impl TrainReport {
    pub fn successful(&self) -> impl Iterator<Item = &RunOutput> {
        self.replications.iter().filter_map(|r| r.result.as_ref().ok())
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Mean of each metric column over the runs, epoch by epoch.
fn mean_curve(runs: &[&RunRecord]) -> Vec<EpochRecord> {
    let len = runs.iter().map(|r| r.epochs.len()).min().unwrap_or(0);
    let k = runs.len() as f64;
    let mean_opt = |f: &dyn Fn(&EpochRecord) -> Option<f64>, e: usize| -> Option<f64> {
        runs.iter()
            .map(|r| f(&r.epochs[e]))
            .sum::<Option<f64>>()
            .map(|s| s / k)
    };
    (0..len)
        .map(|e| EpochRecord {
            epoch: runs[0].epochs[e].epoch,
            train_loss: runs.iter().map(|r| r.epochs[e].train_loss).sum::<f64>() / k,
            train_accuracy: runs.iter().map(|r| r.epochs[e].train_accuracy).sum::<f64>() / k,
            validation_accuracy: mean_opt(&|r| r.validation_accuracy, e),
            test_accuracy: mean_opt(&|r| r.test_accuracy, e),
        })
        .collect()
}

fn write_summary(dir: &Path, splits: &Splits, reps: &[Replication]) -> Result<()> {
    create_dir(dir)?;
    let path = dir.join("replications.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "replication",
        "seed",
        "status",
        "peak_test_accuracy",
        "final_test_accuracy",
        "final_validation_accuracy",
        "detection_auc",
        "crashed",
    ])?;
    for r in reps {
        match &r.result {
            Ok(run) => {
                let rec = &run.record;
                w.write_record([
                    r.replication.to_string(),
                    r.seed.to_string(),
                    "ok".into(),
                    opt(rec.peak_test_accuracy()),
                    opt(rec.final_test_accuracy()),
                    opt(rec.final_validation_accuracy()),
                    opt(rec.detection_auc),
                    u8::from(rec.crashed).to_string(),
                ])?;
            }
            Err(msg) => {
                w.write_record([
                    r.replication.to_string(),
                    r.seed.to_string(),
                    format!("error: {msg}"),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let ok: Vec<&RunOutput> = reps.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    if ok.is_empty() {
        return Ok(());
    }
    let records: Vec<&RunRecord> = ok.iter().map(|r| &r.record).collect();
    write_metrics(&dir.join("mean_accuracy.csv"), &mean_curve(&records))?;
    let weights: Vec<Vec<f64>> = ok.iter().map(|r| r.weights.clone()).collect();
    let mean = mean_weights(&weights)?;
    write_weights(&dir.join("mean_weights.csv"), &splits.train, &mean)?;
    write_weight_analysis(dir, &splits.train, &mean)?;
    Ok(())
}

/// Run every replication of a training config on `workers` threads and
/// write one directory per run plus an aggregate summary directory.
pub fn cmd_train(cfg: &ExperimentConfig, workers: usize) -> Result<TrainReport> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let dr = objective(cfg, &splits)?;
    let digest = cfg.digest()?;
    let reps: Vec<Replication> = pool(workers)?.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let seed = cfg.train.seed.wrapping_add(rep as u64);
                let dir = run_dir(cfg, &digest, seed);
                let result = run_replication(cfg, &splits, &dr, &digest, rep).and_then(|(record, weights)| {
                    write_run(cfg, &dir, &splits, &record, &weights)?;
                    Ok(RunOutput { record, weights, dir })
                });
                Replication {
                    replication: rep,
                    seed,
                    result: result.map_err(|e| e.to_string()),
                }
            })
            .collect()
    });
    let summary = summary_dir(cfg, &digest);
    write_summary(&summary, &splits, &reps)?;
    Ok(TrainReport {
        digest,
        split: splits.sizes(),
        replications: reps,
        summary_dir: summary,
    })
}

/// One `(α, λ)` grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub lambda: f64,
    /// Mean final validation accuracy over replications that neither failed nor crashed.
    pub mean_validation_accuracy: Option<f64>,
    pub mean_test_accuracy: Option<f64>,
    pub crashed: usize,
    pub failed: usize,
}

impl GridPoint {
    pub fn excluded(&self) -> bool {
        self.mean_validation_accuracy.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub grid: Vec<GridPoint>,
    pub best: Option<GridPoint>,
}

/// Highest validation accuracy; ties go to the larger `α`, then the larger `λ`.
pub fn select_best(grid: &[GridPoint]) -> Option<GridPoint> {
    grid.iter()
        .filter(|g| !g.excluded())
        .max_by(|a, b| {
            let va = a.mean_validation_accuracy.unwrap_or(f64::NEG_INFINITY);
            let vb = b.mean_validation_accuracy.unwrap_or(f64::NEG_INFINITY);
            va.total_cmp(&vb)
                .then(a.alpha.total_cmp(&b.alpha))
                .then(a.lambda.total_cmp(&b.lambda))
        })
        .cloned()
}

/// Evaluate every `(α, λ)` pair with the config's replications. Grid points
/// share nothing but the read-only data splits.
pub fn cmd_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<SweepReport> {
    cfg.validate()?;
    if cfg.sweep.alphas.is_empty() || cfg.sweep.lambdas.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let splits = load_splits(cfg)?;
    let digest = cfg.digest()?;
    let points: Vec<(f64, f64)> = cfg
        .sweep
        .alphas
        .iter()
        .flat_map(|&a| cfg.sweep.lambdas.iter().map(move |&l| (a, l)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.replications).map(move |r| (p, r)))
        .collect();
    let results: Vec<Result<RunRecord>> = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(p, rep)| {
                let (alpha, lambda) = points[p];
                let mut local = cfg.clone();
                local.objective.alpha = alpha;
                local.objective.lambda = lambda;
                let dr = objective(&local, &splits)?;
                run_replication(&local, &splits, &dr, &digest, rep).map(|(r, _)| r)
            })
            .collect()
    });
    let mut grid = Vec::with_capacity(points.len());
    for (p, &(alpha, lambda)) in points.iter().enumerate() {
        let runs = &results[p * cfg.replications..(p + 1) * cfg.replications];
        let failed = runs.iter().filter(|r| r.is_err()).count();
        let ok: Vec<&RunRecord> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
        let crashed = ok.iter().filter(|r| r.crashed).count();
        let healthy: Vec<&&RunRecord> = ok.iter().filter(|r| !r.crashed).collect();
        let mean = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Option<f64> {
            if healthy.is_empty() {
                return None;
            }
            healthy
                .iter()
                .map(|r| f(r))
                .sum::<Option<f64>>()
                .map(|s| s / healthy.len() as f64)
        };
        grid.push(GridPoint {
            alpha,
            lambda,
            mean_validation_accuracy: mean(&|r| r.final_validation_accuracy()),
            mean_test_accuracy: mean(&|r| r.final_test_accuracy()),
            crashed,
            failed,
        });
    }
    let report = SweepReport {
        best: select_best(&grid),
        grid,
    };
    let dir = cfg.output_dir.join(format!("{}-sweep", short(&digest)));
    create_dir(&dir)?;
    write_grid(&dir.join("grid.csv"), &report.grid)?;
    let json = serde_json::to_string_pretty(&report.best).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&dir.join("best.json"), &json)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml()?)?;
    Ok(report)
}

fn write_grid(path: &Path, grid: &[GridPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "alpha",
        "lambda",
        "mean_validation_accuracy",
        "mean_test_accuracy",
        "crashed",
        "failed",
        "excluded",
    ])?;
    for g in grid {
        w.write_record([
            g.alpha.to_string(),
            g.lambda.to_string(),
            opt(g.mean_validation_accuracy),
            opt(g.mean_test_accuracy),
            g.crashed.to_string(),
            g.failed.to_string(),
            u8::from(g.excluded()).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Weights, labels and mask as read back from a `weights.csv` file.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredWeights {
    pub labels: Vec<usize>,
    pub mask: Option<Vec<bool>>,
    pub omega: Vec<f64>,
}

pub fn read_weights(path: &Path) -> Result<StoredWeights> {
    let mut r = csv::Reader::from_path(path)?;
    let mut labels = Vec::new();
    let mut mask = Vec::new();
    let mut omega = Vec::new();
    let parse_err = |what: &str, v: &str| Error::Input(format!("bad {what} '{v}' in {}", path.display()));
    for row in r.records() {
        let row = row?;
        if row.len() != 5 {
            return Err(Error::Input(format!("expected 5 columns in {}", path.display())));
        }
        labels.push(row[1].parse::<usize>().map_err(|_| parse_err("label", &row[1]))?);
        mask.push(match &row[3] {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            v => return Err(parse_err("mislabelled flag", v)),
        });
        omega.push(row[4].parse::<f64>().map_err(|_| parse_err("weight", &row[4]))?);
    }
    let mask = mask.into_iter().collect::<Option<Vec<bool>>>();
    Ok(StoredWeights { labels, mask, omega })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectReport {
    pub examples: usize,
    pub mislabelled: Option<usize>,
    pub detection_auc: Option<f64>,
    pub best_threshold: Option<f64>,
    pub correct_kept: Option<f64>,
    pub mislabelled_caught: Option<f64>,
}

/// Recompute the weight analysis for a stored `weights.csv` into `out`.
pub fn cmd_detect(weights: &Path, out: &Path) -> Result<DetectReport> {
    let stored = read_weights(weights)?;
    create_dir(out)?;
    let data_mask = stored.mask.clone();
    write_extremes_csv(
        &out.join("extremes.csv"),
        &stored.omega,
        &stored.labels,
        data_mask.as_deref(),
        EXTREME_COUNT,
    )?;
    let mut report = DetectReport {
        examples: stored.omega.len(),
        mislabelled: None,
        detection_auc: None,
        best_threshold: None,
        correct_kept: None,
        mislabelled_caught: None,
    };
    if let Some(mask) = data_mask.as_deref() {
        weight_histogram(&stored.omega, mask, DEFAULT_BINS)?.write_csv(&out.join("histogram.csv"))?;
        let curve = separation_curve(&stored.omega, mask, &default_thresholds(&stored.omega, CURVE_POINTS))?;
        curve.write_csv(&out.join("separation.csv"))?;
        let best = curve.best_balanced();
        report.mislabelled = Some(mask.iter().filter(|&&m| m).count());
        report.detection_auc = detection_auc(&stored.omega, mask).ok();
        report.best_threshold = best.map(|b| b.threshold);
        report.correct_kept = best.map(|b| b.correct_kept);
        report.mislabelled_caught = best.map(|b| b.mislabelled_caught);
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&out.join("detect.json"), &json)?;
    Ok(report)
}

/// Write the prepared splits of an MNIST config as CSV snapshots.
pub fn cmd_mnist_prep(cfg: &ExperimentConfig, out: &Path) -> Result<SplitSizes> {
    let mut cfg = cfg.clone();
    cfg.kind = ExperimentKind::Mnist1v7;
    cfg.validate()?;
    let splits = load_splits(&cfg)?;
    create_dir(out)?;
    splits.train.write_csv(out.join("train.csv"))?;
    splits.validation.write_csv(out.join("validation.csv"))?;
    splits.test.write_csv(out.join("test.csv"))?;
    write_text(&out.join("config.toml"), &cfg.to_toml()?)?;
    let sizes = splits.sizes();
    let json = serde_json::to_string_pretty(&sizes).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&out.join("split.json"), &json)?;
    Ok(sizes)
}
