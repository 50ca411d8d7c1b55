//! Training drivers: minibatch descent on the reduced loss, the alternating
//! weight/parameter solver, and a fixed-weight baseline.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::drfit::{analytic_weights, present_class_weights, ClassPartition, DrFitConfig, ObservationWeights};
use crate::error::{Error, Result};
use crate::tensor_nn::{mlp_forward, per_example_loss, weighted_backward, MlpParams};

/// Floor applied inside `log ω` during weight updates.
pub const LOG_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    /// Gradient steps on the reduced loss with closed-form weights per batch.
    Analytic,
    /// Alternating updates of parameters and explicit weights.
    Numeric,
    /// Fixed weights `ω_i = ρ_{y_i}`.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub theta_lr: f64,
    /// Step `β` of the explicit weight update.
    pub omega_lr: f64,
    /// Weights stay fixed through this epoch (epochs count from 1).
    pub burn_in: usize,
    pub update_frequency: usize,
    pub seed: u64,
    pub solver: Solver,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            theta_lr: 0.05,
            omega_lr: 0.1,
            burn_in: 3,
            update_frequency: 1,
            seed: 0,
            solver: Solver::Analytic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.update_frequency == 0 {
            return Err(Error::Config("update_frequency must be at least 1".into()));
        }
        if !(self.theta_lr > 0.0) || !self.theta_lr.is_finite() {
            return Err(Error::Config(format!("theta_lr must be positive, got {}", self.theta_lr)));
        }
        if !(self.omega_lr >= 0.0) || !self.omega_lr.is_finite() {
            return Err(Error::Config(format!("omega_lr must be nonnegative, got {}", self.omega_lr)));
        }
        Ok(())
    }

    fn updates_weights(&self, epoch: usize) -> bool {
        epoch > self.burn_in && epoch.is_multiple_of(self.update_frequency)
    }
}

/// Metrics after one completed epoch. Accuracies are measured against the
/// observed labels of each set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean unweighted cross-entropy over the epoch's batches, before each step.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    /// Highest and last test accuracy, if any test set was tracked.
    pub fn test_peak_and_final(&self) -> Option<(f64, f64)> {
        let acc: Vec<f64> = self.records.iter().filter_map(|r| r.test_accuracy).collect();
        let last = *acc.last()?;
        Some((acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max), last))
    }
}

/// Held-out sets evaluated after every epoch.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalSets<'a> {
    pub validation: Option<&'a LabeledDataset>,
    pub test: Option<&'a LabeledDataset>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub weights: ObservationWeights,
    pub trace: TrainTrace,
}

/// Fraction of examples whose argmax prediction equals the label.
pub fn evaluate(params: &MlpParams, dataset: &LabeledDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty dataset".into()));
    }
    let preds = mlp_forward(params, &dataset.features)?.predictions();
    let hits = preds.iter().zip(&dataset.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / dataset.len() as f64)
}

/// One explicit weight step on a batch, in place:
/// `ω ← ω - β(ℓ + α log max(ω, 1e-8))`, clip at zero, then rescale each
/// class present in the batch to mean `ρ_c`.
pub fn numeric_weight_update(
    omega: &mut [f64],
    losses: &[f64],
    labels: &[usize],
    cfg: &DrFitConfig,
    beta: f64,
) -> Result<()> {
    if omega.len() != losses.len() || omega.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} weights, {} losses, {} labels",
            omega.len(),
            losses.len(),
            labels.len()
        )));
    }
    for (w, &l) in omega.iter_mut().zip(losses) {
        *w = (*w - beta * (l + cfg.alpha * w.max(LOG_FLOOR).ln())).max(0.0);
    }
    let part = ClassPartition::from_labels(labels, cfg.rho.len())?;
    for (k, members) in part.present() {
        let sum: f64 = members.iter().map(|&i| omega[i]).sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::Renormalisation { class: k });
        }
        let scale = cfg.rho(k)? * members.len() as f64 / sum;
        for &i in members {
            omega[i] *= scale;
        }
    }
    Ok(())
}

/// Split `0..n` into `ceil(n / batch_size)` batches. Each class's shuffled
/// members are dealt round-robin, continuing where the previous class stopped,
/// so batch sizes differ by at most one and class shares are even.
pub fn stratified_batches(part: &ClassPartition, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let n = part.len();
    let count = n.div_ceil(batch_size).max(1);
    let mut batches = vec![Vec::with_capacity(batch_size); count];
    let mut slot = 0;
    for k in 0..part.num_classes() {
        let mut members = part.members(k).to_vec();
        members.shuffle(rng);
        for i in members {
            batches[slot % count].push(i);
            slot += 1;
        }
    }
    batches.retain(|b| !b.is_empty());
    batches
}

fn training_error(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric { .. } | Error::Input(_) => Error::Training {
            epoch,
            reason: e.to_string(),
        },
        other => other,
    }
}

fn finite_losses(losses: &[f64], epoch: usize) -> Result<()> {
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::Training {
            epoch,
            reason: "loss is not finite".into(),
        });
    }
    Ok(())
}

fn full_losses(params: &MlpParams, data: &LabeledDataset) -> Result<Vec<f64>> {
    per_example_loss(&mlp_forward(params, &data.features)?, &data.labels)
}

/// Train with the solver named in `train_cfg`, reporting each epoch to `on_epoch`.
pub fn train_with_sink(
    data: &LabeledDataset,
    dr: &DrFitConfig,
    train_cfg: &TrainConfig,
    init: MlpParams,
    eval: EvalSets<'_>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    dr.validate()?;
    train_cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if dr.rho.len() != data.num_classes {
        return Err(Error::Config(format!(
            "{} rho values for {} classes",
            dr.rho.len(),
            data.num_classes
        )));
    }
    if init.num_classes() != data.num_classes {
        return Err(Error::Shape(format!(
            "network predicts {} classes, data has {}",
            init.num_classes(),
            data.num_classes
        )));
    }
    let part = ClassPartition::from_labels(&data.labels, data.num_classes)?;
    let n = data.len() as f64;
    let mut params = init;
    let mut omega = ObservationWeights::uniform(&part, dr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut trace = TrainTrace::default();

    for epoch in 1..=train_cfg.epochs {
        let mut loss_sum = 0.0;
        let update_now = train_cfg.solver == Solver::Numeric && train_cfg.updates_weights(epoch);
        for batch in stratified_batches(&part, train_cfg.batch_size, &mut rng) {
            let x = data.features.select_rows(&batch);
            let y: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let cache = mlp_forward(&params, &x).map_err(|e| training_error(epoch, e))?;
            let losses = per_example_loss(&cache, &y)?;
            finite_losses(&losses, epoch)?;
            loss_sum += losses.iter().sum::<f64>();

            let w: Vec<f64> = match train_cfg.solver {
                Solver::Analytic => {
                    let local = ClassPartition::from_labels(&y, data.num_classes)?;
                    present_class_weights(&losses, &local, dr)?.omega
                }
                Solver::Numeric | Solver::Plain => batch.iter().map(|&i| omega.omega[i]).collect(),
            };
            let size = batch.len() as f64;
            let grad = weighted_backward(&params, &cache, &y, &w, dr.lambda * size / n)
                .map_err(|e| training_error(epoch, e))?;
            params.step(&grad, train_cfg.theta_lr / size);

            if update_now {
                let after = per_example_loss(&mlp_forward(&params, &x)?, &y)?;
                finite_losses(&after, epoch)?;
                let mut w_s: Vec<f64> = batch.iter().map(|&i| omega.omega[i]).collect();
                numeric_weight_update(&mut w_s, &after, &y, dr, train_cfg.omega_lr)?;
                for (&i, v) in batch.iter().zip(w_s) {
                    omega.omega[i] = v;
                }
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: evaluate(&params, data)?,
            validation_accuracy: eval.validation.map(|v| evaluate(&params, v)).transpose()?,
            test_accuracy: eval.test.map(|t| evaluate(&params, t)).transpose()?,
        };
        on_epoch(&record);
        trace.records.push(record);
    }

    let weights = match train_cfg.solver {
        Solver::Analytic => {
            let losses = full_losses(&params, data)?;
            finite_losses(&losses, train_cfg.epochs)?;
            analytic_weights(&losses, &part, dr)?
        }
        Solver::Numeric | Solver::Plain => omega,
    };
    Ok(TrainOutcome {
        params,
        weights,
        trace,
    })
}

pub fn train(
    data: &LabeledDataset,
    dr: &DrFitConfig,
    train_cfg: &TrainConfig,
    init: MlpParams,
    eval: EvalSets<'_>,
) -> Result<TrainOutcome> {
    train_with_sink(data, dr, train_cfg, init, eval, |_| {})
}

pub fn train_analytic(
    data: &LabeledDataset,
    dr: &DrFitConfig,
    train_cfg: &TrainConfig,
    init: MlpParams,
    eval: EvalSets<'_>,
) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        solver: Solver::Analytic,
        ..train_cfg.clone()
    };
    train(data, dr, &cfg, init, eval)
}

pub fn train_numeric(
    data: &LabeledDataset,
    dr: &DrFitConfig,
    train_cfg: &TrainConfig,
    init: MlpParams,
    eval: EvalSets<'_>,
) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        solver: Solver::Numeric,
        ..train_cfg.clone()
    };
    train(data, dr, &cfg, init, eval)
}

pub fn train_plain(
    data: &LabeledDataset,
    dr: &DrFitConfig,
    train_cfg: &TrainConfig,
    init: MlpParams,
    eval: EvalSets<'_>,
) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        solver: Solver::Plain,
        ..train_cfg.clone()
    };
    train(data, dr, &cfg, init, eval)
}

/// Fraction of same-class pairs `(i, j)` ordered identically by `a` and `b`.
/// Pairs tied in either vector are skipped.
pub fn ranking_agreement(a: &[f64], b: &[f64], labels: &[usize]) -> f64 {
    let (mut agree, mut total) = (0usize, 0usize);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if labels[i] != labels[j] || a[i] == a[j] || b[i] == b[j] {
                continue;
            }
            total += 1;
            if (a[i] < a[j]) == (b[i] < b[j]) {
                agree += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        agree as f64 / total as f64
    }
}
