//! Population-level scenario reports: named values with optional checks.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::theory::{
    bstar_ratio, clean_estimator_1d, discontinuity_scan, find_bstar_1d, mv_gaussian_case, noisy_estimator_1d,
    two_branch_example, weighted_estimator_1d, CovariateDist, Estimate, PopulationProblem, ScanGrid, ScanReport,
};

/// One named value. `pass` is set only for entries that carry a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub key: String,
    pub value: String,
    pub expected: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

impl ReportEntry {
    fn value(key: impl Into<String>, v: f64) -> Self {
        Self {
            key: key.into(),
            value: v.to_string(),
            expected: None,
            tolerance: None,
            pass: None,
        }
    }

    fn text(key: impl Into<String>, v: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            value: v.into(),
            expected: None,
            tolerance: None,
            pass: None,
        }
    }

    fn flag(key: impl Into<String>, ok: bool) -> Self {
        Self {
            pass: Some(ok),
            ..Self::text(key, ok.to_string())
        }
    }

    fn failure(key: impl Into<String>, err: &Error) -> Self {
        Self {
            pass: Some(false),
            ..Self::text(key, format!("error: {err}"))
        }
    }

    pub fn numeric(&self) -> Option<f64> {
        self.value.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub kind: ExperimentKind,
    pub entries: Vec<ReportEntry>,
    /// Present for the counterexample scan.
    pub scan: Option<ScanReport>,
}

impl TheoryReport {
    pub fn get(&self, key: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(ReportEntry::numeric)
    }

    /// False if any checked entry failed.
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass != Some(false))
    }

    /// Columns `key,value,expected,tolerance,pass`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["key", "value", "expected", "tolerance", "pass"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.entries {
            w.write_record([
                e.key.clone(),
                e.value.clone(),
                opt(e.expected),
                opt(e.tolerance),
                e.pass.map(|p| p.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn estimate_entry(key: String, est: Estimate) -> ReportEntry {
    match est {
        Estimate::Finite(s) => ReportEntry::value(key, s),
        Estimate::Divergent => ReportEntry::text(key, "divergent"),
    }
}

fn problem(cfg: &ExperimentConfig, default: CovariateDist) -> PopulationProblem {
    let t = &cfg.theory;
    PopulationProblem {
        dist1: t.dist.clone().unwrap_or(default),
        dist0: t.dist0.clone(),
        p_star_1: t.p_star_1,
        q1: t.q,
        q0: t.q,
    }
}

fn theory_1d(cfg: &ExperimentConfig, out: &mut Vec<ReportEntry>) -> Result<()> {
    let t = &cfg.theory;
    let prob = problem(cfg, CovariateDist::gaussian(1.0, 1.0));
    prob.validate()?;
    if prob.dim() != 1 {
        return Err(Error::Config("theory-1d needs a one-dimensional law".into()));
    }
    let clean = clean_estimator_1d(&prob, t.rule)?;
    let noisy = noisy_estimator_1d(&prob, t.rule)?;
    out.push(ReportEntry::value("s_clean", clean));
    out.push(ReportEntry::value("s_unweighted", noisy));
    out.push(ReportEntry::flag("unweighted_below_clean", t.q == 0.0 || noisy < clean));

    let mut finite = Vec::new();
    for &b in &t.b_grid {
        match weighted_estimator_1d(&prob, b, t.rule) {
            Ok(est) => {
                if let Estimate::Finite(s) = est {
                    finite.push(s);
                }
                out.push(estimate_entry(format!("s_weighted[b={b}]"), est));
            }
            Err(e) => out.push(ReportEntry::failure(format!("s_weighted[b={b}]"), &e)),
        }
    }
    if t.q > 0.0 {
        out.push(ReportEntry::flag(
            "s_weighted_increasing",
            finite.windows(2).all(|w| w[1] > w[0]),
        ));
    }
    for b in [1.0, 1.5] {
        let key = format!("divergent[b={b}]");
        match weighted_estimator_1d(&prob, b, t.rule) {
            Ok(est) => out.push(ReportEntry::flag(key, est.is_divergent())),
            Err(e) => out.push(ReportEntry::failure(key, &e)),
        }
    }
    match find_bstar_1d(&prob, t.rule) {
        Ok(bs) => {
            out.push(ReportEntry::value("b_star", bs.b));
            out.push(ReportEntry {
                expected: Some(0.0),
                tolerance: Some(1e-6),
                pass: Some(bs.residual < 1e-6),
                ..ReportEntry::value("b_star_residual", bs.residual)
            });
        }
        Err(e) => out.push(ReportEntry::failure("b_star", &e)),
    }
    Ok(())
}

fn theory_mv(cfg: &ExperimentConfig, out: &mut Vec<ReportEntry>) -> Result<()> {
    let t = &cfg.theory;
    let prob = problem(
        cfg,
        CovariateDist::MvUniformBox {
            intervals: vec![(-1.0, 3.0), (-2.0, 4.0)],
        },
    );
    prob.validate()?;
    if let (CovariateDist::MvGaussian { mean, cov }, true) = (&prob.dist1, prob.is_symmetric()) {
        match mv_gaussian_case(mean, cov, t.q, &t.b_grid, t.rule) {
            Ok(case) => {
                for (i, v) in case.u.iter().enumerate() {
                    out.push(ReportEntry::value(format!("u[{i}]"), *v));
                }
                for (i, v) in case.s_clean.iter().enumerate() {
                    out.push(ReportEntry::value(format!("gaussian_s_clean[{i}]"), *v));
                }
                for (b, est) in case.curve {
                    out.push(estimate_entry(format!("c[b={b}]"), est));
                }
            }
            Err(e) => out.push(ReportEntry::failure("gaussian_reduction", &e)),
        }
    }
    match bstar_ratio(&prob, t.mv_rule, t.ratio_step, t.ratio_b_max) {
        Ok(r) => {
            out.push(ReportEntry::value("b_star", r.b_star));
            out.push(ReportEntry::value("ratio", r.ratio));
            for (name, v) in [
                ("s_clean", &r.s_clean),
                ("s_unweighted", &r.s_unweighted),
                ("s_at_bstar", &r.s_at_bstar),
            ] {
                for (i, x) in v.iter().enumerate() {
                    out.push(ReportEntry::value(format!("{name}[{i}]"), *x));
                }
            }
        }
        Err(e) => out.push(ReportEntry::failure("ratio", &e)),
    }
    Ok(())
}

fn counterexample(cfg: &ExperimentConfig, out: &mut Vec<ReportEntry>) -> Result<ScanReport> {
    let t = &cfg.theory;
    let prob = match &t.dist {
        Some(_) => problem(cfg, CovariateDist::gaussian(1.0, 1.0)),
        None => two_branch_example(),
    };
    prob.validate()?;
    let grid = ScanGrid {
        points: t.scan_points,
        ..ScanGrid::default()
    };
    let scan = discontinuity_scan(&prob, &t.alphas, grid, t.rule)?;
    out.push(ReportEntry::value("jumps", scan.jumps.len() as f64));
    for (i, j) in scan.jumps.iter().enumerate() {
        out.push(ReportEntry::value(format!("jump_alpha[{i}]"), j.alpha));
        out.push(ReportEntry::value(format!("jump_s_before[{i}]"), j.s_before));
        out.push(ReportEntry::value(format!("jump_s_after[{i}]"), j.s_after));
    }
    let bistable = scan.bistable_alphas();
    out.push(ReportEntry::value("bistable_alphas", bistable.len() as f64));
    if let (Some(lo), Some(hi)) = (bistable.first(), bistable.last()) {
        out.push(ReportEntry::value("bistable_alpha_min", *lo));
        out.push(ReportEntry::value("bistable_alpha_max", *hi));
    }
    Ok(scan)
}

fn apply_expectations(cfg: &ExperimentConfig, entries: &mut Vec<ReportEntry>) {
    for exp in &cfg.theory.expect {
        match entries.iter_mut().find(|e| e.key == exp.key) {
            Some(e) => {
                e.expected = Some(exp.value);
                e.tolerance = Some(exp.tolerance);
                e.pass = Some(e.numeric().is_some_and(|v| (v - exp.value).abs() <= exp.tolerance));
            }
            None => entries.push(ReportEntry {
                expected: Some(exp.value),
                tolerance: Some(exp.tolerance),
                pass: Some(false),
                ..ReportEntry::text(exp.key.clone(), "missing")
            }),
        }
    }
}

/// Compute the report for a theory scenario without touching the disk.
pub fn theory_report(cfg: &ExperimentConfig) -> Result<TheoryReport> {
    cfg.validate()?;
    let mut entries = Vec::new();
    let mut scan = None;
    match cfg.kind {
        ExperimentKind::Theory1d => theory_1d(cfg, &mut entries)?,
        ExperimentKind::TheoryMv => theory_mv(cfg, &mut entries)?,
        ExperimentKind::TheoryCounterexample => scan = Some(counterexample(cfg, &mut entries)?),
        other => return Err(Error::Config(format!("{other:?} is not a theory scenario"))),
    }
    apply_expectations(cfg, &mut entries);
    Ok(TheoryReport {
        kind: cfg.kind,
        entries,
        scan,
    })
}

fn write_scan(path: &Path, scan: &ScanReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "maxima", "argmax", "maximisers"])?;
    for p in &scan.points {
        let list: Vec<String> = p.maxima.iter().map(|m| m.s.to_string()).collect();
        w.write_record([
            p.alpha.to_string(),
            p.maxima.len().to_string(),
            p.argmax.to_string(),
            list.join(" "),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Run a theory scenario and write `report.csv`, `report.json` and, for the
/// scan, `scan.csv` into a directory named by the config digest.
pub fn cmd_theory(cfg: &ExperimentConfig) -> Result<(TheoryReport, PathBuf)> {
    let report = theory_report(cfg)?;
    let dir = cfg.output_dir.join(format!("{}-theory", &cfg.digest()?[..16]));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    report.write_csv(&dir.join("report.csv"))?;
    if let Some(scan) = &report.scan {
        write_scan(&dir.join("scan.csv"), scan)?;
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join("report.json"), json).map_err(|e| Error::io(&dir, e))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?).map_err(|e| Error::io(&dir, e))?;
    Ok((report, dir))
}
