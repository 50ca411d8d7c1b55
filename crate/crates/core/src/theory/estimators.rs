//! Population-level logistic estimators under label noise.
//!
//! The model is `P(Y = 1 | x) = σ(2 sᵀx)`. With noisy pools `X₁` (examples
//! labelled 1) and `X₀`, and `b ≥ 0`, the weighted objective is
//!
//! ```text
//! O_b(s) = p₁ (1/b) log E[σ(2sᵀX₁)^b] + p₀ (1/b) log E[σ(-2sᵀX₀)^b]
//! ```
//!
//! and at `b = 0` it is the log-likelihood `p₁ E log σ(2sᵀX₁) + p₀ E log σ(-2sᵀX₀)`,
//! the `b → 0` limit. Writing `Z₀ = -X₀` both terms share one form, which is
//! what [`Pool`] evaluates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::quadrature::{Cloud, CovariateDist, QuadratureRule};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, spd_solve};

/// Root searches start here and stop at [`S_CAP`].
pub const S_FLOOR: f64 = 1e-6;
pub const S_CAP: f64 = 1e4;
const ROOT_TOL: f64 = 1e-10;

/// Covariates, priors and flip probabilities of a two-class problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationProblem {
    /// Law of `X*₁`.
    pub dist1: CovariateDist,
    /// Law of `X*₀`; `None` means `X*₀ =_d -X*₁`.
    pub dist0: Option<CovariateDist>,
    pub p_star_1: f64,
    /// Flip probability of a true class-1 example.
    pub q1: f64,
    /// Flip probability of a true class-0 example.
    pub q0: f64,
}

/// A slope estimate, or the report that the objective has no finite maximiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimate {
    Finite(f64),
    Divergent,
}

impl Estimate {
    pub fn finite(self) -> Option<f64> {
        match self {
            Estimate::Finite(s) => Some(s),
            Estimate::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        self == Estimate::Divergent
    }
}

impl PopulationProblem {
    /// `X*₀ =_d -X*₁`, equal priors and a common flip probability.
    pub fn symmetric(dist1: CovariateDist, q: f64) -> Self {
        Self {
            dist1,
            dist0: None,
            p_star_1: 0.5,
            q1: q,
            q0: q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dist1.validate()?;
        if let Some(d0) = &self.dist0 {
            d0.validate()?;
            if d0.dim() != self.dist1.dim() {
                return Err(Error::Shape("class laws differ in dimension".into()));
            }
        }
        if !(self.p_star_1 > 0.0 && self.p_star_1 < 1.0) {
            return Err(Error::Input(format!("prior {} outside (0, 1)", self.p_star_1)));
        }
        for q in [self.q1, self.q0] {
            if !(0.0..0.5).contains(&q) {
                return Err(Error::Input(format!("flip probability {q} outside [0, 0.5)")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dist1.dim()
    }

    /// The same problem without label noise.
    pub fn clean(&self) -> Self {
        Self {
            q1: 0.0,
            q0: 0.0,
            ..self.clone()
        }
    }

    pub fn with_noise(&self, q: f64) -> Self {
        Self {
            q1: q,
            q0: q,
            ..self.clone()
        }
    }

    /// Symmetric covariates, equal priors and one flip probability.
    pub fn is_symmetric(&self) -> bool {
        self.dist0.is_none() && self.p_star_1 == 0.5 && self.q1 == self.q0
    }

    fn require_symmetric(&self, what: &str) -> Result<()> {
        if !self.is_symmetric() {
            return Err(Error::Hypothesis(format!(
                "{what} needs X*0 = -X*1 in law, equal priors and class-independent flips"
            )));
        }
        Ok(())
    }

    /// Noisy pools on quadrature clouds.
    pub fn landscape(&self, rule: QuadratureRule) -> Result<Landscape> {
        self.validate()?;
        let c1 = self.dist1.cloud(rule)?;
        let c0 = match &self.dist0 {
            Some(d) => d.cloud(rule)?,
            None => c1.negated(),
        };
        let (ps1, ps0) = (self.p_star_1, 1.0 - self.p_star_1);
        let p1 = ps1 * (1.0 - self.q1) + ps0 * self.q0;
        let p0 = 1.0 - p1;
        let x1 = c1.mix(ps1 * (1.0 - self.q1) / p1, &c0);
        if self.is_symmetric() {
            // the negated labelled-0 pool has the same law as the labelled-1 pool
            return Ok(Landscape {
                pools: vec![Pool { prior: 1.0, cloud: x1 }],
                dim: self.dim(),
            });
        }
        let x0 = c0.mix(ps0 * (1.0 - self.q0) / p0, &c1);
        Ok(Landscape {
            pools: vec![
                Pool { prior: p1, cloud: x1 },
                Pool {
                    prior: p0,
                    cloud: x0.negated(),
                },
            ],
            dim: self.dim(),
        })
    }
}

/// One term `prior · (1/b) log E[σ(2sᵀZ)^b]`.
#[derive(Debug, Clone)]
struct Pool {
    prior: f64,
    cloud: Cloud,
}

/// `log σ(2t)` without overflow.
fn log_sigmoid2(t: f64) -> f64 {
    let x = -2.0 * t;
    if x > 0.0 {
        -(x + (-x).exp().ln_1p())
    } else {
        -x.exp().ln_1p()
    }
}

/// `g(t, b) = σ(2t)^b (1 - σ(2t)) = e^{-2t} / (1 + e^{-2t})^{b+1}`.
pub fn g(t: f64, b: f64) -> f64 {
    (b * log_sigmoid2(t) + log_sigmoid2(-t)).exp()
}

/// Value, gradient and (optionally) Hessian of the objective at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Option<Vec<Vec<f64>>>,
}

impl Pool {
    fn eval(&self, s: &[f64], b: f64, want_hessian: bool, out: &mut Evaluation) -> Result<()> {
        let c = &self.cloud;
        let d = c.dim;
        // per point: (log σ(2t), σ(2t), 1 - σ(2t)) from one exponential
        let terms: Vec<(f64, f64, f64)> = (0..c.len())
            .map(|i| {
                let t = dot(s, c.point(i));
                let e = (-2.0 * t.abs()).exp();
                let (big, small) = (1.0 / (1.0 + e), e / (1.0 + e));
                if t >= 0.0 {
                    (-e.ln_1p(), big, small)
                } else {
                    (2.0 * t - e.ln_1p(), small, big)
                }
            })
            .collect();
        let m = terms.iter().map(|x| b * x.0).fold(f64::NEG_INFINITY, f64::max);
        let (mut a, mut plain) = (0.0, 0.0);
        let mut grad = vec![0.0; d];
        let mut hess = vec![vec![0.0; d]; d];
        for (i, &(log_sig, sig, one_minus)) in terms.iter().enumerate() {
            let w = if b == 0.0 {
                c.weights[i]
            } else {
                c.weights[i] * (b * log_sig - m).exp()
            };
            a += w;
            plain += c.weights[i] * log_sig;
            let phi = 2.0 * one_minus;
            let z = c.point(i);
            for r in 0..d {
                grad[r] += w * phi * z[r];
            }
            if want_hessian {
                let dphi = 4.0 * one_minus * (b * one_minus - sig);
                for r in 0..d {
                    for k in 0..=r {
                        hess[r][k] += w * dphi * z[r] * z[k];
                    }
                }
            }
        }
        let value = if b == 0.0 { plain } else { (m + a.ln()) / b };
        if !value.is_finite() || !(a > 0.0) {
            return Err(Error::Quadrature(format!("objective not finite at s = {s:?}, b = {b}")));
        }
        for r in 0..d {
            grad[r] /= a;
        }
        out.value += self.prior * value;
        for r in 0..d {
            out.gradient[r] += self.prior * grad[r];
        }
        if let Some(h) = out.hessian.as_mut() {
            for r in 0..d {
                for k in 0..=r {
                    let v = hess[r][k] / a - b * grad[r] * grad[k];
                    h[r][k] += self.prior * v;
                    if k != r {
                        h[k][r] += self.prior * v;
                    }
                }
            }
        }
        Ok(())
    }
}

/// A problem discretised once and evaluated at many `(b, s)`.
#[derive(Debug, Clone)]
pub struct Landscape {
    pools: Vec<Pool>,
    dim: usize,
}

impl Landscape {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn evaluate(&self, b: f64, s: &[f64], want_hessian: bool) -> Result<Evaluation> {
        if s.len() != self.dim {
            return Err(Error::Shape(format!("slope of length {} for dimension {}", s.len(), self.dim)));
        }
        if !(b >= 0.0) {
            return Err(Error::Input(format!("b must be nonnegative, got {b}")));
        }
        let mut out = Evaluation {
            value: 0.0,
            gradient: vec![0.0; self.dim],
            hessian: want_hessian.then(|| vec![vec![0.0; self.dim]; self.dim]),
        };
        for pool in &self.pools {
            pool.eval(s, b, want_hessian, &mut out)?;
        }
        Ok(out)
    }

    pub fn value(&self, b: f64, s: &[f64]) -> Result<f64> {
        Ok(self.evaluate(b, s, false)?.value)
    }

    /// Gradient at `s = 0`, the direction of steepest ascent from the origin.
    pub fn origin_direction(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for pool in &self.pools {
            for (acc, m) in d.iter_mut().zip(pool.cloud.mean()) {
                *acc += pool.prior * m;
            }
        }
        d
    }

    /// `dO_b/ds` for a scalar slope.
    pub fn score_1d(&self, b: f64, s: f64) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::Shape(format!("scalar score needs dimension 1, got {}", self.dim)));
        }
        Ok(self.evaluate(b, &[s], false)?.gradient[0])
    }

    /// Smallest positive root of the scalar score, or `Divergent` when the
    /// score keeps its sign up to [`S_CAP`].
    pub fn root_1d(&self, b: f64) -> Result<Estimate> {
        let f = |s: f64| self.score_1d(b, s);
        if self.origin_direction()[0] <= 0.0 {
            return Err(Error::Hypothesis(
                "the score at s = 0 is not positive; the labelled-1 pool must lean positive".into(),
            ));
        }
        let (mut lo, mut hi) = (0.0, S_FLOOR);
        let mut f_hi = f(hi)?;
        while f_hi > 0.0 {
            if hi >= S_CAP {
                return Ok(Estimate::Divergent);
            }
            lo = hi;
            hi = (2.0 * hi).min(S_CAP);
            f_hi = f(hi)?;
        }
        if f_hi == 0.0 {
            return Ok(Estimate::Finite(hi));
        }
        while hi - lo > ROOT_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = f(mid)?;
            if v == 0.0 {
                return Ok(Estimate::Finite(mid));
            }
            if v > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Estimate::Finite(0.5 * (lo + hi)))
    }

    /// Maximise `O_b` from each start by damped Newton ascent; return the best
    /// stationary point.
    pub fn maximise(&self, b: f64, starts: &[Vec<f64>], max_iter: usize) -> Result<Vec<f64>> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut best_any: Option<(f64, Vec<f64>)> = None;
        for start in starts {
            let (s, value, converged) = self.ascend(b, start.clone(), max_iter)?;
            let slot = if converged { &mut best } else { &mut best_any };
            if slot.as_ref().is_none_or(|(v, _)| value > *v) {
                *slot = Some((value, s));
            }
        }
        match best {
            Some((_, s)) => Ok(s),
            None => Err(Error::Optimisation {
                iterations: max_iter,
                best: best_any.map(|(_, s)| s).unwrap_or_default(),
            }),
        }
    }

    fn ascend(&self, b: f64, mut s: Vec<f64>, max_iter: usize) -> Result<(Vec<f64>, f64, bool)> {
        let mut e = self.evaluate(b, &s, true)?;
        for _ in 0..max_iter {
            if norm(&e.gradient) < 1e-10 {
                return Ok((s, e.value, true));
            }
            let h = e.hessian.as_ref().expect("requested");
            let scale = 1.0 + h.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut mu = 0.0;
            let mut dir = loop {
                let damped: Vec<Vec<f64>> = (0..h.len())
                    .map(|r| (0..h.len()).map(|k| -h[r][k] + if r == k { mu } else { 0.0 }).collect())
                    .collect();
                if let Ok(d) = spd_solve(&damped, &e.gradient) {
                    break d;
                }
                mu = if mu == 0.0 { 1e-8 * scale } else { 4.0 * mu };
            };
            let scale_s = 1.0 + norm(&s);
            if mu == 0.0 && norm(&dir) < 1e-6 * scale_s {
                // inside the quadratic basin the objective is flatter than its
                // summation noise, so take the Newton step without a line search
                s = s.iter().zip(&dir).map(|(a, d)| a + d).collect();
                let small = norm(&dir) < 1e-12 * scale_s;
                e = self.evaluate(b, &s, true)?;
                if small {
                    return Ok((s, e.value, true));
                }
                continue;
            }
            let limit = 1.0f64.max(norm(&s));
            let len = norm(&dir);
            if len > limit {
                for v in &mut dir {
                    *v *= limit / len;
                }
            }
            let slope = dot(&dir, &e.gradient);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                let cand: Vec<f64> = s.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                if self.value(b, &cand)? >= e.value + 1e-4 * step * slope - 1e-13 * (1.0 + e.value.abs()) {
                    accepted = Some(cand);
                    break;
                }
                step *= 0.5;
            }
            let Some(next) = accepted else {
                // no ascent left at working precision
                return Ok((s, e.value, norm(&e.gradient) < 1e-7));
            };
            if norm(&next) > S_CAP {
                return Ok((next, f64::INFINITY, false));
            }
            s = next;
            e = self.evaluate(b, &s, true)?;
        }
        let ok = norm(&e.gradient) < 1e-10;
        Ok((s, e.value, ok))
    }
}

/// `ŝ*`: the unweighted estimator on clean labels.
pub fn clean_estimator_1d(prob: &PopulationProblem, rule: QuadratureRule) -> Result<f64> {
    finite_or_divergence(prob.clean().landscape(rule)?.root_1d(0.0)?)
}

/// `ŝ`: the unweighted estimator on noisy labels.
pub fn noisy_estimator_1d(prob: &PopulationProblem, rule: QuadratureRule) -> Result<f64> {
    finite_or_divergence(prob.landscape(rule)?.root_1d(0.0)?)
}

/// `ŝ_w(b)`, the maximiser of `O_b` on noisy labels.
pub fn weighted_estimator_1d(prob: &PopulationProblem, b: f64, rule: QuadratureRule) -> Result<Estimate> {
    if !(b >= 0.0) {
        return Err(Error::Input(format!("b must be nonnegative, got {b}")));
    }
    prob.landscape(rule)?.root_1d(b)
}

fn finite_or_divergence(e: Estimate) -> Result<f64> {
    e.finite().ok_or(Error::Divergence { lo: S_FLOOR, hi: S_CAP })
}

/// `M(b, s) = E[X₁ g(sX₁, b)]` over the noisy labelled-1 pool of a symmetric
/// problem; it has the sign of the score.
pub fn m_function(prob: &PopulationProblem, b: f64, s: f64, rule: QuadratureRule) -> Result<f64> {
    prob.require_symmetric("M(b, s)")?;
    let land = prob.landscape(rule)?;
    let c = &land.pools[0].cloud;
    Ok((0..c.len()).map(|i| c.weights[i] * c.points[i] * g(s * c.points[i], b)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BStar {
    pub b: f64,
    pub s_weighted: f64,
    pub s_clean: f64,
    pub s_unweighted: f64,
    pub residual: f64,
}

/// `b* ∈ [0, 1)` with `ŝ_w(b*) = ŝ*`, by bisection on the increasing map `b ↦ ŝ_w(b)`.
pub fn find_bstar_1d(prob: &PopulationProblem, rule: QuadratureRule) -> Result<BStar> {
    prob.require_symmetric("b* search")?;
    let land = prob.landscape(rule)?;
    let s_clean = clean_estimator_1d(prob, rule)?;
    let s0 = finite_or_divergence(land.root_1d(0.0)?)?;
    let at = |b: f64, s: f64| BStar {
        b,
        s_weighted: s,
        s_clean,
        s_unweighted: s0,
        residual: (s - s_clean).abs(),
    };
    if s0 > s_clean + 1e-9 {
        return Err(Error::Hypothesis(format!(
            "unweighted estimate {s0} already exceeds the clean one {s_clean}"
        )));
    }
    if (s0 - s_clean).abs() < 1e-9 {
        return Ok(at(0.0, s0));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = at(0.0, s0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match land.root_1d(mid)? {
            Estimate::Finite(s) => {
                let cand = at(mid, s);
                if cand.residual < best.residual {
                    best = cand;
                }
                if cand.residual < 1e-9 {
                    break;
                }
                if s < s_clean {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Estimate::Divergent => hi = mid,
        }
    }
    Ok(best)
}

/// The multivariate Gaussian case reduced to one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvGaussianCase {
    /// Unit direction of `Σ⁻¹μ`.
    pub u: Vec<f64>,
    /// `ŝ* = Σ⁻¹μ`.
    pub s_clean: Vec<f64>,
    /// The law of `U = uᵀX*₁`, symmetric with the original noise.
    pub reduction: PopulationProblem,
    /// `(b, ĉ(b))`; the full estimate is `ĉ(b) u`.
    pub curve: Vec<(f64, Estimate)>,
}

pub fn mv_gaussian_case(
    mean: &[f64],
    cov: &[Vec<f64>],
    q: f64,
    bs: &[f64],
    rule: QuadratureRule,
) -> Result<MvGaussianCase> {
    if cov.len() != mean.len() {
        return Err(Error::Shape("mean and covariance sizes differ".into()));
    }
    let s_clean = spd_solve(cov, mean)?;
    let r = norm(&s_clean);
    if !(r > 0.0) {
        return Err(Error::Input("Σ⁻¹μ vanishes; the classes are not separated in mean".into()));
    }
    let u: Vec<f64> = s_clean.iter().map(|v| v / r).collect();
    let sigma_u: f64 = (0..u.len()).map(|i| u[i] * dot(&cov[i], &u)).sum();
    let reduction = PopulationProblem::symmetric(CovariateDist::gaussian(dot(&u, mean), sigma_u), q);
    let land = reduction.landscape(rule)?;
    let curve = bs
        .iter()
        .map(|&b| Ok((b, land.root_1d(b)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MvGaussianCase {
        u,
        s_clean,
        reduction,
        curve,
    })
}

/// Seeded starting points: the ascent direction at the origin at two
/// scales plus `extra` random points in `[-2, 2]^d`.
pub fn default_starts(land: &Landscape, extra: usize, seed: u64) -> Vec<Vec<f64>> {
    let dir = land.origin_direction();
    let n = norm(&dir).max(f64::MIN_POSITIVE);
    let mut starts: Vec<Vec<f64>> = [0.5, 2.0]
        .iter()
        .map(|k| dir.iter().map(|v| k * v / n).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        starts.push((0..land.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect());
    }
    starts
}

/// `ŝ(b)` for a multivariate problem by multi-start Newton ascent on `O_b`.
pub fn general_mv_estimator(prob: &PopulationProblem, b: f64, rule: QuadratureRule) -> Result<Vec<f64>> {
    let land = prob.landscape(rule)?;
    land.maximise(b, &default_starts(&land, 1, 0), 200)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub b_star: f64,
    /// `‖ŝ(b*) - ŝ*‖ / ‖ŝ(0) - ŝ*‖`.
    pub ratio: f64,
    pub s_clean: Vec<f64>,
    pub s_unweighted: Vec<f64>,
    pub s_at_bstar: Vec<f64>,
}

/// Minimise `‖ŝ(b) - ŝ*‖` over `b ∈ [0, b_max]`: a grid of step `grid_step`,
/// then golden-section search around the best grid point.
pub fn bstar_ratio(
    prob: &PopulationProblem,
    rule: QuadratureRule,
    grid_step: f64,
    b_max: f64,
) -> Result<RatioReport> {
    let clean = prob.clean().landscape(rule)?;
    let s_clean = clean.maximise(0.0, &default_starts(&clean, 2, 0), 200)?;
    let land = prob.landscape(rule)?;
    let mut starts = default_starts(&land, 0, 0);
    starts.insert(0, s_clean.clone());
    let s_unweighted = land.maximise(0.0, &starts, 200)?;
    let solve = |b: f64| land.maximise(b, std::slice::from_ref(&s_clean), 200);
    let dist = |s: &[f64]| norm(&s.iter().zip(&s_clean).map(|(a, c)| a - c).collect::<Vec<_>>());

    let steps = (b_max / grid_step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|j| j as f64 * grid_step).collect();
    let mut best = (f64::INFINITY, 0usize);
    for (j, &b) in grid.iter().enumerate() {
        let d = dist(&solve(b)?);
        if d < best.0 {
            best = (d, j);
        }
    }
    let mut lo = grid[best.1.saturating_sub(1)];
    let mut hi = grid[(best.1 + 1).min(steps)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = dist(&solve(x1)?);
    let mut f2 = dist(&solve(x2)?);
    while hi - lo > 1e-7 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = dist(&solve(x1)?);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = dist(&solve(x2)?);
        }
    }
    let b_star = 0.5 * (lo + hi);
    let s_at_bstar = solve(b_star)?;
    let denom = dist(&s_unweighted);
    if !(denom > 0.0) {
        return Err(Error::Hypothesis("unweighted estimate equals the clean one; ratio undefined".into()));
    }
    Ok(RatioReport {
        b_star,
        ratio: dist(&s_at_bstar) / denom,
        s_clean,
        s_unweighted,
        s_at_bstar,
    })
}
