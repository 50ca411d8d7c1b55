//! Tracking the global maximiser of `O_{1/α}` across a grid of `α`.

use serde::{Deserialize, Serialize};

use super::estimators::{Landscape, PopulationProblem};
use super::quadrature::{CovariateDist, QuadratureRule};
use crate::error::{Error, Result};

/// Log-spaced slope grid used to locate local maxima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
}

impl Default for ScanGrid {
    fn default() -> Self {
        Self {
            s_min: 1e-3,
            s_max: 1e2,
            points: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMax {
    pub s: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub alpha: f64,
    /// Interior local maxima in increasing `s`.
    pub maxima: Vec<LocalMax>,
    /// Global maximiser over the grid (refined when interior).
    pub argmax: f64,
}

/// A switch of the global maximiser between two branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    /// Located by bisection between neighbouring grid values.
    pub alpha: f64,
    pub s_before: f64,
    pub s_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub points: Vec<ScanPoint>,
    pub jumps: Vec<Jump>,
}

impl ScanReport {
    /// Grid values of `α` at which two or more interior maxima coexist.
    pub fn bistable_alphas(&self) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.maxima.len() >= 2)
            .map(|p| p.alpha)
            .collect()
    }
}

/// The discrete example with `P(X*₀ = ±1) = 1/2`, `P(X*₁ = ±1) = 1/10`,
/// `P(X*₁ = 10) = 4/5`, equal priors and 20% flips in both classes.
pub fn two_branch_example() -> PopulationProblem {
    PopulationProblem {
        dist1: CovariateDist::discrete(vec![(-1.0, 0.1), (1.0, 0.1), (10.0, 0.8)]),
        dist0: Some(CovariateDist::discrete(vec![(-1.0, 0.5), (1.0, 0.5)])),
        p_star_1: 0.5,
        q1: 0.2,
        q0: 0.2,
    }
}

fn golden_max(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<LocalMax> {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while hi - lo > 1e-10 * (1.0 + hi.abs()) {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let s = 0.5 * (lo + hi);
    Ok(LocalMax { s, value: f(s)? })
}

fn scan_alpha(land: &Landscape, alpha: f64, grid: &[f64]) -> Result<ScanPoint> {
    let b = 1.0 / alpha;
    let f = |s: f64| land.value(b, &[s]);
    let values = grid.iter().map(|&s| f(s)).collect::<Result<Vec<_>>>()?;
    let mut maxima = Vec::new();
    for i in significant_peaks(&values) {
        maxima.push(golden_max(f, grid[i - 1], grid[i + 1])?);
    }
    let edge = if values[0] >= *values.last().expect("grid nonempty") {
        LocalMax { s: grid[0], value: values[0] }
    } else {
        LocalMax {
            s: grid[grid.len() - 1],
            value: values[grid.len() - 1],
        }
    };
    let best = maxima
        .iter()
        .copied()
        .chain(std::iter::once(edge))
        .fold(edge, |a, m| if m.value > a.value { m } else { a });
    Ok(ScanPoint {
        alpha,
        maxima,
        argmax: best.s,
    })
}

/// Interior grid peaks that rise above the surrounding valleys by more than
/// the summation noise. Flat saturated stretches produce spurious ripples
/// that this filters out.
fn significant_peaks(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * (1.0 + scale);
    let candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .collect();
    // merge candidates not separated by a real valley, keeping the higher one
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if let Some(&prev) = kept.last() {
            let valley = values[prev..=c].iter().cloned().fold(f64::INFINITY, f64::min);
            if valley > values[prev].min(values[c]) - tol {
                if values[c] > values[prev] {
                    *kept.last_mut().expect("nonempty") = c;
                }
                continue;
            }
        }
        kept.push(c);
    }
    let bounds: Vec<usize> = std::iter::once(0)
        .chain(kept.iter().copied())
        .chain(std::iter::once(n - 1))
        .collect();
    kept.iter()
        .enumerate()
        .filter(|&(j, &c)| {
            let left = values[bounds[j]..c].iter().cloned().fold(f64::INFINITY, f64::min);
            let right = values[c + 1..=bounds[j + 2]].iter().cloned().fold(f64::INFINITY, f64::min);
            values[c] - left > tol && values[c] - right > tol
        })
        .map(|(_, &c)| c)
        .collect()
}

fn log_grid(g: ScanGrid) -> Result<Vec<f64>> {
    if !(g.s_min > 0.0 && g.s_max > g.s_min) || g.points < 3 {
        return Err(Error::Config(format!("bad scan grid {g:?}")));
    }
    let (a, b) = (g.s_min.ln(), g.s_max.ln());
    Ok((0..g.points)
        .map(|j| (a + (b - a) * j as f64 / (g.points - 1) as f64).exp())
        .collect())
}

/// Branches differ when their maximisers are more than a factor of 1.5 apart.
fn same_branch(a: f64, b: f64) -> bool {
    (a.ln() - b.ln()).abs() < 1.5f64.ln()
}

/// Scan the global maximiser of `O_{1/α}(s)` over `alphas` and report every
/// jump between branches.
pub fn discontinuity_scan(
    prob: &PopulationProblem,
    alphas: &[f64],
    grid: ScanGrid,
    rule: QuadratureRule,
) -> Result<ScanReport> {
    if prob.dim() != 1 {
        return Err(Error::Shape("the scan works on one-dimensional problems".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Input(format!("alpha must be positive, got {a}")));
    }
    let land = prob.landscape(rule)?;
    let s_grid = log_grid(grid)?;
    let points = alphas
        .iter()
        .map(|&a| scan_alpha(&land, a, &s_grid))
        .collect::<Result<Vec<_>>>()?;
    let mut jumps = Vec::new();
    for pair in points.windows(2) {
        let (p, n) = (&pair[0], &pair[1]);
        if same_branch(p.argmax, n.argmax) {
            continue;
        }
        let (mut lo, mut hi) = (p.alpha, n.alpha);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let m = scan_alpha(&land, mid, &s_grid)?.argmax;
            if (m.ln() - p.argmax.ln()).abs() <= (m.ln() - n.argmax.ln()).abs() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        jumps.push(Jump {
            alpha: 0.5 * (lo + hi),
            s_before: p.argmax,
            s_after: n.argmax,
        });
    }
    Ok(ScanReport { points, jumps })
}
