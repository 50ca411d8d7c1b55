//! Covariate distributions and the weighted point clouds that stand in for them.
//!
//! Every expectation in the theory module is a finite weighted sum over a
//! [`Cloud`]. Discrete laws give their atoms exactly; continuous laws are
//! discretised by a [`QuadratureRule`].

use gauss_quad::{GaussHermite, GaussLegendre};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky;

/// Gaussian tails are cut at this many standard deviations past the mean.
const GAUSS_TAIL: f64 = 12.0;
/// Smallest panel edge of a graded grid, relative to the half-width.
const GRADE_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovariateDist {
    Discrete { atoms: Vec<(f64, f64)> },
    Uniform { a: f64, b: f64 },
    Gaussian { mean: f64, variance: f64 },
    MvGaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    MvUniformBox { intervals: Vec<(f64, f64)> },
}

/// How continuous laws are discretised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// Gauss-Hermite; only valid for Gaussian laws.
    GaussHermite { nodes: usize },
    /// One Gauss-Legendre panel over the (truncated) support.
    GaussLegendre { nodes: usize },
    /// Gauss-Legendre on many panels. With `graded`, panels shrink
    /// geometrically towards 0, where `σ(2sx)` turns over sharply for large `s`.
    Composite { nodes: usize, panels: usize, graded: bool },
}

impl QuadratureRule {
    /// Default for one-dimensional estimators.
    pub fn graded() -> Self {
        QuadratureRule::Composite {
            nodes: 16,
            panels: 48,
            graded: true,
        }
    }

    /// Default per-coordinate rule for two-dimensional tensor products.
    pub fn tensor() -> Self {
        QuadratureRule::Composite {
            nodes: 8,
            panels: 48,
            graded: false,
        }
    }

    /// The same rule with twice the nodes per panel.
    pub fn refined(self) -> Self {
        match self {
            QuadratureRule::GaussHermite { nodes } => QuadratureRule::GaussHermite { nodes: 2 * nodes },
            QuadratureRule::GaussLegendre { nodes } => QuadratureRule::GaussLegendre { nodes: 2 * nodes },
            QuadratureRule::Composite { nodes, panels, graded } => QuadratureRule::Composite {
                nodes: 2 * nodes,
                panels,
                graded,
            },
        }
    }

    fn total_nodes(self) -> usize {
        match self {
            QuadratureRule::GaussHermite { nodes } | QuadratureRule::GaussLegendre { nodes } => nodes,
            QuadratureRule::Composite { nodes, panels, .. } => nodes * panels,
        }
    }

    pub fn validate(self) -> Result<()> {
        if self.total_nodes() < 32 {
            return Err(Error::Config(format!(
                "quadrature needs at least 32 nodes per dimension, got {}",
                self.total_nodes()
            )));
        }
        Ok(())
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::graded()
    }
}

/// Points with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloud {
    pub dim: usize,
    /// Row-major, `dim` coordinates per point.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Cloud {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn negated(&self) -> Cloud {
        Cloud {
            dim: self.dim,
            points: self.points.iter().map(|v| -v).collect(),
            weights: self.weights.clone(),
        }
    }

    /// `a·self + (1-a)·other` as a single cloud.
    pub fn mix(&self, a: f64, other: &Cloud) -> Cloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut weights: Vec<f64> = self.weights.iter().map(|w| a * w).collect();
        weights.extend(other.weights.iter().map(|w| (1.0 - a) * w));
        let mut out = Cloud {
            dim: self.dim,
            points,
            weights,
        };
        out.drop_empty();
        out
    }

    /// Projection `x ↦ dir·x` onto one dimension.
    pub fn project(&self, dir: &[f64]) -> Cloud {
        Cloud {
            dim: 1,
            points: (0..self.len())
                .map(|i| self.point(i).iter().zip(dir).map(|(x, d)| x * d).sum())
                .collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (acc, x) in m.iter_mut().zip(self.point(i)) {
                *acc += self.weights[i] * x;
            }
        }
        m
    }

    fn drop_empty(&mut self) {
        if self.weights.iter().all(|&w| w > 0.0) {
            return;
        }
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect();
        self.points = keep.iter().flat_map(|&i| self.point(i).to_vec()).collect();
        self.weights = keep.iter().map(|&i| self.weights[i]).collect();
    }

    fn normalise(&mut self) {
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
    }

    fn tensor(a: &Cloud, b: &Cloud) -> Cloud {
        let mut points = Vec::with_capacity(2 * a.len() * b.len());
        let mut weights = Vec::with_capacity(a.len() * b.len());
        for i in 0..a.len() {
            for j in 0..b.len() {
                points.extend_from_slice(a.point(i));
                points.extend_from_slice(b.point(j));
                weights.push(a.weights[i] * b.weights[j]);
            }
        }
        Cloud {
            dim: a.dim + b.dim,
            points,
            weights,
        }
    }
}

fn legendre(nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let rule = GaussLegendre::new(nodes).map_err(|e| Error::Config(e.to_string()))?;
    Ok(rule.into_iter().unzip())
}

/// Panel edges over `[lo, hi]`. Graded grids put a breakpoint at 0 (when
/// inside) and shrink panels geometrically towards it.
fn panel_edges(lo: f64, hi: f64, panels: usize, graded: bool) -> Vec<f64> {
    let uniform = |a: f64, b: f64, m: usize| -> Vec<f64> {
        (0..=m).map(|j| a + (b - a) * j as f64 / m as f64).collect()
    };
    if !graded {
        return uniform(lo, hi, panels);
    }
    // geometric edges on [0, r]: 0, r·γ^(m-1), …, r·γ, r with r·γ^(m-1) = r·floor
    let towards_zero = |r: f64, m: usize| -> Vec<f64> {
        let m = m.max(2);
        let gamma = GRADE_FLOOR.powf(1.0 / (m - 1) as f64);
        let mut e = vec![0.0];
        e.extend((0..m).rev().map(|j| r * gamma.powi(j as i32)));
        e
    };
    if lo < 0.0 && hi > 0.0 {
        let left_share = (-lo / (hi - lo) * panels as f64).round().clamp(1.0, panels as f64 - 1.0) as usize;
        let mut edges: Vec<f64> = towards_zero(-lo, left_share).iter().rev().map(|v| -v).collect();
        edges.extend(towards_zero(hi, panels - left_share).into_iter().skip(1));
        edges
    } else if lo == 0.0 {
        towards_zero(hi, panels)
    } else if hi == 0.0 {
        towards_zero(-lo, panels).iter().rev().map(|v| -v).collect()
    } else {
        uniform(lo, hi, panels)
    }
}

/// Composite Legendre nodes and raw weights over `[lo, hi]`.
fn composite(lo: f64, hi: f64, rule: QuadratureRule) -> Result<(Vec<f64>, Vec<f64>)> {
    let (nodes, panels, graded) = match rule {
        QuadratureRule::GaussLegendre { nodes } => (nodes, 1, false),
        QuadratureRule::Composite { nodes, panels, graded } => (nodes, panels, graded),
        QuadratureRule::GaussHermite { .. } => {
            return Err(Error::Config("Gauss-Hermite applies only to Gaussian laws".into()))
        }
    };
    let (x, w) = legendre(nodes)?;
    let edges = panel_edges(lo, hi, panels, graded);
    let mut xs = Vec::with_capacity(x.len() * panels);
    let mut ws = Vec::with_capacity(x.len() * panels);
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (half, mid) = ((b - a) / 2.0, (a + b) / 2.0);
        for (xi, wi) in x.iter().zip(&w) {
            xs.push(mid + half * xi);
            ws.push(half * wi);
        }
    }
    Ok((xs, ws))
}

fn normal_cloud(mean: f64, sd: f64, rule: QuadratureRule) -> Result<Cloud> {
    let mut cloud = match rule {
        QuadratureRule::GaussHermite { nodes } => {
            let gh = GaussHermite::new(nodes).map_err(|e| Error::Config(e.to_string()))?;
            let (x, w): (Vec<f64>, Vec<f64>) = gh.into_iter().unzip();
            Cloud {
                dim: 1,
                points: x.iter().map(|z| mean + std::f64::consts::SQRT_2 * sd * z).collect(),
                weights: w,
            }
        }
        _ => {
            let r = mean.abs() + GAUSS_TAIL * sd;
            let (x, w) = composite(-r, r, rule)?;
            let weights = x
                .iter()
                .zip(&w)
                .map(|(xi, wi)| wi * (-0.5 * ((xi - mean) / sd).powi(2)).exp())
                .collect();
            Cloud {
                dim: 1,
                points: x,
                weights,
            }
        }
    };
    cloud.normalise();
    Ok(cloud)
}

fn uniform_cloud(a: f64, b: f64, rule: QuadratureRule) -> Result<Cloud> {
    let (x, w) = composite(a, b, rule)?;
    let mut cloud = Cloud {
        dim: 1,
        points: x,
        weights: w,
    };
    cloud.normalise();
    Ok(cloud)
}

impl CovariateDist {
    pub fn gaussian(mean: f64, variance: f64) -> Self {
        CovariateDist::Gaussian { mean, variance }
    }

    pub fn uniform(a: f64, b: f64) -> Self {
        CovariateDist::Uniform { a, b }
    }

    pub fn discrete(atoms: Vec<(f64, f64)>) -> Self {
        CovariateDist::Discrete { atoms }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovariateDist::Discrete { .. } | CovariateDist::Uniform { .. } | CovariateDist::Gaussian { .. } => 1,
            CovariateDist::MvGaussian { mean, .. } => mean.len(),
            CovariateDist::MvUniformBox { intervals } => intervals.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(m));
        match self {
            CovariateDist::Discrete { atoms } => {
                if atoms.is_empty() || atoms.iter().any(|(x, p)| !(*p >= 0.0) || !x.is_finite()) {
                    return bad("discrete atoms need finite values and nonnegative mass".into());
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("atom probabilities sum to {total}"));
                }
            }
            CovariateDist::Uniform { a, b } => {
                if !(a < b) || !a.is_finite() || !b.is_finite() {
                    return bad(format!("uniform needs a < b, got [{a}, {b}]"));
                }
            }
            CovariateDist::Gaussian { mean, variance } => {
                if !(*variance > 0.0) || !mean.is_finite() || !variance.is_finite() {
                    return bad(format!("gaussian needs positive variance, got {variance}"));
                }
            }
            CovariateDist::MvGaussian { mean, cov } => {
                if cov.len() != mean.len() {
                    return Err(Error::Shape("mean and covariance sizes differ".into()));
                }
                cholesky(cov)?;
            }
            CovariateDist::MvUniformBox { intervals } => {
                if intervals.is_empty() {
                    return bad("box needs at least one interval".into());
                }
                for &(a, b) in intervals {
                    CovariateDist::Uniform { a, b }.validate()?;
                }
            }
        }
        if self.dim() > 2 {
            return Err(Error::Config(format!(
                "tensor quadrature is limited to 2 dimensions, got {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Discretise into a weighted point cloud.
    pub fn cloud(&self, rule: QuadratureRule) -> Result<Cloud> {
        self.validate()?;
        if let CovariateDist::Discrete { atoms } = self {
            let mut c = Cloud {
                dim: 1,
                points: atoms.iter().map(|a| a.0).collect(),
                weights: atoms.iter().map(|a| a.1).collect(),
            };
            c.drop_empty();
            return Ok(c);
        }
        rule.validate()?;
        match self {
            CovariateDist::Uniform { a, b } => uniform_cloud(*a, *b, rule),
            CovariateDist::Gaussian { mean, variance } => normal_cloud(*mean, variance.sqrt(), rule),
            CovariateDist::MvUniformBox { intervals } => {
                let mut clouds = intervals.iter().map(|&(a, b)| uniform_cloud(a, b, rule));
                let first = clouds.next().expect("validated nonempty")?;
                clouds.try_fold(first, |acc, c| Ok(Cloud::tensor(&acc, &c?)))
            }
            CovariateDist::MvGaussian { mean, cov } => {
                let l = cholesky(cov)?;
                let z = normal_cloud(0.0, 1.0, rule)?;
                let mut grid = z.clone();
                for _ in 1..mean.len() {
                    grid = Cloud::tensor(&grid, &z);
                }
                let d = mean.len();
                let mut points = Vec::with_capacity(grid.points.len());
                for i in 0..grid.len() {
                    let zi = grid.point(i);
                    for r in 0..d {
                        points.push(mean[r] + (0..=r).map(|k| l[r][k] * zi[k]).sum::<f64>());
                    }
                }
                Ok(Cloud {
                    dim: d,
                    points,
                    weights: grid.weights,
                })
            }
            CovariateDist::Discrete { .. } => unreachable!("handled above"),
        }
    }
}

/// `E[f(X)]` for a one-dimensional law.
pub fn expect(dist: &CovariateDist, f: impl Fn(f64) -> f64, rule: QuadratureRule) -> Result<f64> {
    if dist.dim() != 1 {
        return Err(Error::Shape(format!("expect needs a 1-D law, got dimension {}", dist.dim())));
    }
    let cloud = dist.cloud(rule)?;
    let mut total = 0.0;
    for (&x, &w) in cloud.points.iter().zip(&cloud.weights) {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::Quadrature(format!("integrand is {v} at x = {x}")));
        }
        total += w * v;
    }
    Ok(total)
}
