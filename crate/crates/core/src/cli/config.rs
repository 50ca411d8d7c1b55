//! TOML experiment configuration and its content digest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::noise::{NoiseSpec, RhoMode};
use crate::error::{Error, Result};
use crate::tensor_nn::Activation;
use crate::theory::{CovariateDist, QuadratureRule};
use crate::trainer::TrainConfig;

/// Environment variable naming the directory that holds the MNIST IDX files.
pub const DATA_ROOT_VAR: &str = "DRFIT_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[serde(rename = "mnist-1v7")]
    Mnist1v7,
    SyntheticTrain,
    #[serde(rename = "theory-1d")]
    Theory1d,
    TheoryMv,
    TheoryCounterexample,
    HyperSweep,
}

impl ExperimentKind {
    pub fn is_theory(self) -> bool {
        matches!(
            self,
            ExperimentKind::Theory1d | ExperimentKind::TheoryMv | ExperimentKind::TheoryCounterexample
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    pub alpha: f64,
    pub lambda: f64,
    pub rho_mode: RhoMode,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 0.0,
            rho_mode: RhoMode::Rates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Hidden layer widths; empty gives a linear model.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![8],
            activation: Activation::Relu,
            init_seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory with the IDX files; falls back to `$DRFIT_DATA_ROOT`, then `data/mnist`.
    pub root: Option<PathBuf>,
    pub images: String,
    pub labels: String,
    pub test_size: usize,
    pub validation_fraction: f64,
    /// Cap on the training set after the test and validation carve-outs.
    pub train_size: Option<usize>,
    pub split_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            root: None,
            images: "images-idx3-ubyte".into(),
            labels: "labels-idx1-ubyte".into(),
            test_size: 500,
            validation_fraction: 0.1,
            train_size: None,
            split_seed: 1,
        }
    }
}

impl DataSection {
    pub fn resolved_root(&self) -> PathBuf {
        self.root
            .clone()
            .or_else(|| std::env::var_os(DATA_ROOT_VAR).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data/mnist"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    /// Training-set size; half per class.
    pub n: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub seed: u64,
    /// Size of each clean held-out set.
    pub holdout: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            n: 400,
            mean: vec![1.0, 1.0],
            cov: vec![vec![1.0, 0.3], vec![0.3, 1.0]],
            seed: 7,
            holdout: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySection {
    /// Law of the class-1 covariates. When absent each scenario uses its
    /// standard example: `N(1, 1)`, the box `[-1,3]×[-2,4]`, or the
    /// two-branch discrete law.
    pub dist: Option<CovariateDist>,
    /// Law of the class-0 covariates; absent means the mirror image of `dist`.
    pub dist0: Option<CovariateDist>,
    pub p_star_1: f64,
    pub q: f64,
    /// Rule for one-dimensional laws.
    pub rule: QuadratureRule,
    /// Per-coordinate rule for multivariate laws.
    pub mv_rule: QuadratureRule,
    /// Values of `b` at which weighted estimates are reported.
    pub b_grid: Vec<f64>,
    /// Step of the coarse `b` grid in the ratio search.
    pub ratio_step: f64,
    pub ratio_b_max: f64,
    pub alphas: Vec<f64>,
    pub scan_points: usize,
    /// Optional reference values checked in the report, keyed by entry name.
    pub expect: Vec<Expectation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub key: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            dist: None,
            dist0: None,
            p_star_1: 0.5,
            q: 0.2,
            rule: QuadratureRule::graded(),
            mv_rule: QuadratureRule::tensor(),
            b_grid: (0..20).map(|j| j as f64 / 20.0).collect(),
            ratio_step: 0.05,
            ratio_b_max: 0.95,
            alphas: (150..=170).map(|j| j as f64 / 100.0).collect(),
            scan_points: 20_000,
            expect: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Training pipeline evaluated at each grid point: `mnist-1v7` or `synthetic-train`.
    pub source: ExperimentKind,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            source: ExperimentKind::Mnist1v7,
            alphas: vec![0.1, 0.25, 0.5, 1.0, 2.0],
            lambdas: vec![0.0],
        }
    }
}

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub synthetic: SyntheticSection,
    #[serde(default)]
    pub theory: TheorySection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_noise() -> NoiseSpec {
    NoiseSpec {
        rates: vec![0.3, 0.1],
        seed: 100,
    }
}

impl ExperimentConfig {
    /// Defaults for `kind`; every other field takes its documented default.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            replications: 1,
            output_dir: default_output(),
            objective: ObjectiveSection::default(),
            train: TrainConfig::default(),
            noise: default_noise(),
            model: ModelSection::default(),
            data: DataSection::default(),
            synthetic: SyntheticSection::default(),
            theory: TheorySection::default(),
            sweep: SweepSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.kind.is_theory() {
            let t = &self.theory;
            t.rule.validate()?;
            t.mv_rule.validate()?;
            if !(0.0..0.5).contains(&t.q) {
                return Err(Error::Config(format!("theory flip rate {} outside [0, 0.5)", t.q)));
            }
            if self.kind == ExperimentKind::TheoryCounterexample && t.alphas.is_empty() {
                return Err(Error::Config("the counterexample scan needs at least one alpha".into()));
            }
            return Ok(());
        }
        self.train.validate()?;
        self.noise.validate()?;
        if !(self.objective.alpha > 0.0) || !(self.objective.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "need alpha > 0 and lambda >= 0, got {} and {}",
                self.objective.alpha, self.objective.lambda
            )));
        }
        if self.noise.rates.len() != 2 {
            return Err(Error::Config(format!(
                "two-class experiments need 2 flip rates, got {}",
                self.noise.rates.len()
            )));
        }
        if !(0.0..1.0).contains(&self.data.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction {} outside [0, 1)",
                self.data.validation_fraction
            )));
        }
        if self.kind == ExperimentKind::HyperSweep {
            if self.sweep.alphas.is_empty() || self.sweep.lambdas.is_empty() {
                return Err(Error::Config("sweep grids must be nonempty".into()));
            }
            if !matches!(self.sweep.source, ExperimentKind::Mnist1v7 | ExperimentKind::SyntheticTrain) {
                return Err(Error::Config("a sweep must run a training experiment".into()));
            }
        }
        let source = if self.kind == ExperimentKind::HyperSweep { self.sweep.source } else { self.kind };
        if source == ExperimentKind::SyntheticTrain {
            let s = &self.synthetic;
            if s.mean.is_empty() || s.cov.len() != s.mean.len() || s.n < 4 {
                return Err(Error::Config("synthetic data needs n >= 4 and a matching mean and covariance".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form with sorted keys. The output
    /// directory is excluded, so moving a run does not change its identity.
    pub fn digest(&self) -> Result<String> {
        let mut value = serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?;
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("output_dir");
        }
        let canonical = serde_json::to_string(&value).map_err(|e| Error::Config(e.to_string()))?;
        let hash = Sha256::digest(canonical.as_bytes());
        Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
    }
}
