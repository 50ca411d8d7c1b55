//! The doubly regularised objective with entropy-penalised observation weights.
//!
//! With `g(ω) = ω log ω - ω` and the per-class budget `Σ_{i∈C_k} ω_i = ρ_k |C_k|`,
//! the optimal weights for fixed losses are a per-class softmax of `-ℓ/α`, and
//! eliminating them leaves the reduced loss
//!
//! ```text
//! h(θ) = -α Σ_k n_k log Σ_{i∈C_k} exp(-ℓ_i / α) + (λ/2) ||θ||²,   n_k = ρ_k |C_k|
//! ```
//!
//! Every log-sum-exp subtracts the per-class minimum loss first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrFitConfig {
    /// Weight-penalty strength `α > 0`.
    pub alpha: f64,
    /// Ridge strength `λ ≥ 0`.
    pub lambda: f64,
    /// Per-class budget scale `ρ_k > 0`, indexed by class.
    pub rho: Vec<f64>,
}

impl DrFitConfig {
    /// `ρ_k = 1` for every class.
    pub fn new(alpha: f64, lambda: f64, classes: usize) -> Result<Self> {
        Self::with_rho(alpha, lambda, vec![1.0; classes])
    }

    pub fn with_rho(alpha: f64, lambda: f64, rho: Vec<f64>) -> Result<Self> {
        let cfg = Self { alpha, lambda, rho };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if let Some(r) = self.rho.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return Err(Error::Config(format!("every rho must be positive, got {r}")));
        }
        Ok(())
    }

    pub fn rho(&self, class: usize) -> Result<f64> {
        self.rho
            .get(class)
            .copied()
            .ok_or_else(|| Error::Config(format!("no rho for class {class}")))
    }
}

/// Index sets `C_k` of the examples carrying label `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    classes: Vec<Vec<usize>>,
    len: usize,
}

impl ClassPartition {
    /// Partition positions `0..labels.len()` by label. Classes with no members
    /// are kept as empty sets.
    pub fn from_labels(labels: &[usize], num_classes: usize) -> Result<Self> {
        let mut classes = vec![Vec::new(); num_classes];
        for (i, &y) in labels.iter().enumerate() {
            classes
                .get_mut(y)
                .ok_or_else(|| Error::Input(format!("label {y} at {i} outside 0..{num_classes}")))?
                .push(i);
        }
        Ok(Self {
            classes,
            len: labels.len(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.classes[class]
    }

    /// Nonempty classes with their members.
    pub fn present(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_empty())
            .map(|(k, m)| (k, m.as_slice()))
    }

    /// `n_k = ρ_k |C_k|`.
    pub fn budget(&self, class: usize, cfg: &DrFitConfig) -> Result<f64> {
        Ok(cfg.rho(class)? * self.classes[class].len() as f64)
    }

    fn check_covers(&self, n: usize) -> Result<()> {
        if n != self.len {
            return Err(Error::Shape(format!(
                "partition covers {} examples, got {n} values",
                self.len
            )));
        }
        Ok(())
    }
}

/// Trust weight `ω_i ≥ 0` per training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationWeights {
    pub omega: Vec<f64>,
}

impl ObservationWeights {
    /// `ω_i = ρ_{y_i}` for every example.
    pub fn uniform(part: &ClassPartition, cfg: &DrFitConfig) -> Result<Self> {
        let mut omega = vec![0.0; part.len()];
        for (k, members) in part.present() {
            let r = cfg.rho(k)?;
            for &i in members {
                omega[i] = r;
            }
        }
        Ok(Self { omega })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn class_sum(&self, members: &[usize]) -> f64 {
        members.iter().map(|&i| self.omega[i]).sum()
    }
}

fn check_finite(losses: &[f64]) -> Result<()> {
    if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
        return Err(Error::Input(format!("loss {} at index {i} is not finite", losses[i])));
    }
    Ok(())
}

fn check_nonempty(part: &ClassPartition) -> Result<()> {
    if let Some(k) = (0..part.num_classes()).find(|&k| part.members(k).is_empty()) {
        return Err(Error::Config(format!("class {k} has no examples")));
    }
    Ok(())
}

/// `(min_i ℓ_i, Σ_i exp(-(ℓ_i - min)/α))` over one class.
fn shifted_partition_sum(losses: &[f64], members: &[usize], alpha: f64) -> (f64, f64) {
    let min = members
        .iter()
        .map(|&i| losses[i])
        .fold(f64::INFINITY, f64::min);
    let sum = members
        .iter()
        .map(|&i| (-(losses[i] - min) / alpha).exp())
        .sum();
    (min, sum)
}

/// Closed-form optimal weights: `ω_i = n_k · softmax_{C_k}(-ℓ/α)_i`.
pub fn analytic_weights(
    losses: &[f64],
    part: &ClassPartition,
    cfg: &DrFitConfig,
) -> Result<ObservationWeights> {
    check_nonempty(part)?;
    present_class_weights(losses, part, cfg)
}

/// [`analytic_weights`] over the classes that have members; examples of
/// absent classes do not exist, so empty classes are simply skipped.
pub fn present_class_weights(
    losses: &[f64],
    part: &ClassPartition,
    cfg: &DrFitConfig,
) -> Result<ObservationWeights> {
    check_finite(losses)?;
    part.check_covers(losses.len())?;
    let mut omega = vec![0.0; losses.len()];
    for (k, members) in part.present() {
        let n_k = part.budget(k, cfg)?;
        let (min, sum) = shifted_partition_sum(losses, members, cfg.alpha);
        for &i in members {
            omega[i] = n_k * (-(losses[i] - min) / cfg.alpha).exp() / sum;
        }
    }
    Ok(ObservationWeights { omega })
}

/// Reduced loss `h(θ)`; the constant `Σ_k α(n_k log n_k - n_k)` is not included.
pub fn reduced_loss(
    losses: &[f64],
    theta_norm_sq: f64,
    part: &ClassPartition,
    cfg: &DrFitConfig,
) -> Result<f64> {
    check_finite(losses)?;
    part.check_covers(losses.len())?;
    check_nonempty(part)?;
    let mut h = 0.0;
    for (k, members) in part.present() {
        let n_k = part.budget(k, cfg)?;
        let (min, sum) = shifted_partition_sum(losses, members, cfg.alpha);
        // -α log Σ exp(-ℓ/α) = min - α log Σ exp(-(ℓ - min)/α)
        h += n_k * (min - cfg.alpha * sum.ln());
    }
    Ok(h + 0.5 * cfg.lambda * theta_norm_sq)
}

/// `∇h = Σ_i ω_i ∇ℓ_i + λθ` with `ω` from [`analytic_weights`].
pub fn reduced_loss_grad(
    losses: &[f64],
    per_example_grads: &[Vec<f64>],
    theta: &[f64],
    part: &ClassPartition,
    cfg: &DrFitConfig,
) -> Result<Vec<f64>> {
    if per_example_grads.len() != losses.len() {
        return Err(Error::Shape(format!(
            "{} gradients for {} losses",
            per_example_grads.len(),
            losses.len()
        )));
    }
    if let Some(g) = per_example_grads.iter().find(|g| g.len() != theta.len()) {
        return Err(Error::Shape(format!(
            "gradient of length {} for {} parameters",
            g.len(),
            theta.len()
        )));
    }
    let w = analytic_weights(losses, part, cfg)?;
    let mut grad: Vec<f64> = theta.iter().map(|t| cfg.lambda * t).collect();
    for (wi, gi) in w.omega.iter().zip(per_example_grads) {
        for (acc, g) in grad.iter_mut().zip(gi) {
            *acc += wi * g;
        }
    }
    Ok(grad)
}

/// `Σ_i (ω_i log ω_i - ω_i)` with `0 log 0 = 0`.
pub fn entropy_penalty(omega: &[f64]) -> Result<f64> {
    omega.iter().try_fold(0.0, |acc, &w| {
        if !(w >= 0.0) {
            return Err(Error::Input(format!("weight {w} is negative or NaN")));
        }
        let wlogw = if w == 0.0 { 0.0 } else { w * w.ln() };
        Ok(acc + wlogw - w)
    })
}

/// `Σ ω_i ℓ_i + α g(ω) + (λ/2)||θ||²`. The per-class budget is not enforced here.
pub fn full_objective(
    losses: &[f64],
    omega: &[f64],
    theta_norm_sq: f64,
    cfg: &DrFitConfig,
) -> Result<f64> {
    if losses.len() != omega.len() {
        return Err(Error::Shape(format!(
            "{} losses vs {} weights",
            losses.len(),
            omega.len()
        )));
    }
    check_finite(losses)?;
    let data: f64 = losses.iter().zip(omega).map(|(l, w)| l * w).sum();
    Ok(data + cfg.alpha * entropy_penalty(omega)? + 0.5 * cfg.lambda * theta_norm_sq)
}

/// `α Σ_k (n_k log n_k - n_k)`: the gap between [`full_objective`] at the
/// analytic weights and [`reduced_loss`].
pub fn objective_constant(part: &ClassPartition, cfg: &DrFitConfig) -> Result<f64> {
    part.present().try_fold(0.0, |acc, (k, _)| {
        let n = part.budget(k, cfg)?;
        Ok(acc + cfg.alpha * (n * n.ln() - n))
    })
}
