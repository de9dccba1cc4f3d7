//! Simulation benchmark: fit every method on many replicates, score test
//! error relative to the oracle and selection against the planted features,
//! and write CSV/SVG reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{enet_cv, lasso_cv, oracle_predict, quantile_sorted, spca_cv, supervised_pca, Method, ENET_MIX};
use crate::cv::{sfm_cv, sfm_multi_cv, CvSettings};
use crate::dataset::{AssayMatrix, MultiAssaySet, Response};
use crate::error::{Error, Result};
use crate::lasso::{path_with, CovarianceLasso};
use crate::multi::{MultiProblem, MultiSfmConfig};
use crate::simgen::{generate, SimData, SimSpec, SimTruth};
use crate::single::{SfmConfig, SingleProblem};

pub const SVG_WIDTH: u32 = 640;
pub const SVG_HEIGHT: u32 = 480;

/// `MSE(predictions) / MSE(oracle)` against the observed test responses.
pub fn normalized_test_mse(
    predictions: ArrayView1<'_, f64>,
    y_test: ArrayView1<'_, f64>,
    oracle: ArrayView1<'_, f64>,
) -> Result<f64> {
    if predictions.len() != y_test.len() || oracle.len() != y_test.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions, {} oracle values, {} responses",
            predictions.len(),
            oracle.len(),
            y_test.len()
        )));
    }
    let mse = |p: ArrayView1<'_, f64>| {
        let r = &y_test - &p;
        r.dot(&r) / r.len() as f64
    };
    let denom = mse(oracle);
    if !(denom > 0.0) {
        return Err(Error::ZeroOracleMse);
    }
    Ok(mse(predictions) / denom)
}

/// True and false positive rates of a selected set of concatenated column
/// indices against the planted non-null features.
pub fn selection_rates(selected: &[usize], truth: &SimTruth) -> (f64, f64) {
    let p: usize = truth.widths().iter().sum();
    let mut is_nonnull = vec![false; p];
    for j in truth.nonnull_concatenated() {
        is_nonnull[j] = true;
    }
    let positives = is_nonnull.iter().filter(|b| **b).count();
    let mut tp = 0;
    let mut fp = 0;
    let mut seen = vec![false; p];
    for &j in selected {
        if j >= p || seen[j] {
            continue;
        }
        seen[j] = true;
        if is_nonnull[j] {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    (rate(tp, positives), rate(fp, p - positives))
}

/// Tuning shared by every replicate of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodOptions {
    /// Reconstruction weight for the factor fit (every assay).
    pub w: f64,
    /// Supervised PCA components; by default 1 for one assay, 4 for several.
    #[serde(default)]
    pub spca_components: Option<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_grid_len")]
    pub grid_len: usize,
}

fn default_folds() -> usize {
    crate::cv::DEFAULT_FOLDS
}

fn default_grid_len() -> usize {
    crate::cv::DEFAULT_GRID_LEN
}

impl Default for MethodOptions {
    fn default() -> Self {
        MethodOptions {
            w: 0.2,
            spca_components: None,
            folds: default_folds(),
            grid_len: default_grid_len(),
        }
    }
}

impl MethodOptions {
    pub fn components_for(&self, assays: usize) -> usize {
        self.spca_components.unwrap_or(if assays > 1 { 4 } else { 1 })
    }

    fn cv(&self, seed: u64) -> CvSettings {
        CvSettings {
            folds: self.folds,
            grid_len: self.grid_len,
            seed,
        }
    }
}

/// Standardized training data plus the test rows mapped the same way.
#[derive(Debug, Clone)]
pub struct PreparedReplicate {
    pub set: MultiAssaySet,
    pub y: Response,
    /// Test features on the training standardization, concatenated.
    pub x_test: ndarray::Array2<f64>,
}

impl PreparedReplicate {
    pub fn new(train: &SimData, test: &SimData) -> Result<Self> {
        let set = MultiAssaySet::standardized(&train.assays)?;
        let y = Response::standardize(train.y.view())?;
        let x_test = set.concatenated().transform(test.concatenated().view())?;
        Ok(PreparedReplicate { set, y, x_test })
    }

    pub fn x(&self) -> &AssayMatrix {
        self.set.concatenated()
    }
}

/// One method fitted on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    /// Coefficients on the concatenated standardized features.
    pub coefficients: Array1<f64>,
    pub selected: Vec<usize>,
    pub hyperparams: Vec<(String, f64)>,
}

fn format_hyperparams(h: &[(String, f64)]) -> String {
    h.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

/// Cross-validated fit of a non-oracle method.
pub fn fit_method(method: Method, data: &PreparedReplicate, options: &MethodOptions, cv_seed: u64) -> Result<MethodOutcome> {
    let settings = options.cv(cv_seed);
    let x = data.x();
    let k = data.set.len();
    match method {
        Method::Sfm if k == 1 => {
            let base = SfmConfig {
                w: options.w,
                seed: cv_seed,
                ..SfmConfig::default()
            };
            let sel = sfm_cv(x, &data.y, &base, &settings)?;
            Ok(MethodOutcome {
                coefficients: sel.fit.coefficients(),
                selected: sel.fit.v.support().to_vec(),
                hyperparams: vec![("c".into(), sel.curve.best_value())],
            })
        }
        Method::Sfm => {
            let base = MultiSfmConfig::uniform(k, options.w, 1.0);
            let sel = sfm_multi_cv(&data.set, &data.y, &base, &settings)?;
            let selected = multi_selection(&sel.fit.v.iter().map(|v| v.values().to_owned()).collect::<Vec<_>>(), &data.set.widths());
            Ok(MethodOutcome {
                coefficients: sel.fit.coefficients(),
                selected,
                hyperparams: vec![("scale".into(), sel.curve.best_value())],
            })
        }
        Method::Lasso | Method::Enet => {
            let fit = if method == Method::Lasso {
                lasso_cv(x, &data.y, &settings, None)?
            } else {
                enet_cv(x, &data.y, &settings, None)?
            };
            Ok(MethodOutcome {
                coefficients: fit.coefficients,
                selected: fit.selected_features,
                hyperparams: fit.cv_choice,
            })
        }
        Method::Spca => {
            let fit = spca_cv(x, &data.y, options.components_for(k), &settings)?;
            Ok(MethodOutcome {
                coefficients: fit.coefficients,
                selected: fit.selected_features,
                hyperparams: fit.cv_choice,
            })
        }
        Method::Oracle => Err(Error::InvalidArgument("the oracle is not fitted".into())),
    }
}

/// Concatenated indices selected by a multi-assay fit: feature `j` of assay
/// `k` counts if it is nonzero in `v_k` or in its block of the common vector.
pub fn multi_selection(v: &[Array1<f64>], widths: &[usize]) -> Vec<usize> {
    let k = widths.len();
    let mut out = Vec::new();
    let mut offset = 0;
    for (block, &width) in widths.iter().enumerate() {
        for j in 0..width {
            if v[block][j] != 0.0 || v[k][offset + j] != 0.0 {
                out.push(offset + j);
            }
        }
        offset += width;
    }
    out
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub replicate: usize,
    pub method: Method,
    pub normalized_test_mse: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub hyperparams: String,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replicate: usize,
    /// `None` when the replicate failed before any method ran.
    pub method: Option<Method>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: SimSpec,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub base_seed: u64,
    pub options: MethodOptions,
    /// Fill the `seconds` column; off by default so reruns are byte-identical.
    pub record_timings: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub config: ExperimentConfig,
    /// Replicate-major, methods in configuration order.
    pub rows: Vec<ReportRow>,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    pub mse_q1: f64,
    pub mse_median: f64,
    pub mse_q3: f64,
    pub tpr_median: f64,
    pub fpr_median: f64,
}

fn quantiles(mut values: Vec<f64>, qs: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return vec![f64::NAN; qs.len()];
    }
    values.sort_by(f64::total_cmp);
    qs.iter().map(|&q| quantile_sorted(&values, q)).collect()
}

impl BenchmarkReport {
    pub fn failure_count(&self) -> usize {
        self.failures.len()
    }

    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Per-method quartiles (type 7) in configuration order.
    pub fn summary(&self) -> Vec<MethodSummary> {
        self.config
            .methods
            .iter()
            .map(|&method| {
                let rows: Vec<&ReportRow> = self.rows_for(method).collect();
                let mse = quantiles(rows.iter().map(|r| r.normalized_test_mse).collect(), &[0.25, 0.5, 0.75]);
                let tpr = quantiles(rows.iter().map(|r| r.tpr).collect(), &[0.5]);
                let fpr = quantiles(rows.iter().map(|r| r.fpr).collect(), &[0.5]);
                MethodSummary {
                    method,
                    runs: rows.len(),
                    failures: self
                        .failures
                        .iter()
                        .filter(|f| f.method.is_none_or(|m| m == method))
                        .count(),
                    mse_q1: mse[0],
                    mse_median: mse[1],
                    mse_q3: mse[2],
                    tpr_median: tpr[0],
                    fpr_median: fpr[0],
                }
            })
            .collect()
    }

    pub fn median_mse(&self, method: Method) -> Option<f64> {
        self.summary().into_iter().find(|s| s.method == method).map(|s| s.mse_median)
    }
}

enum ReplicateResult {
    Row(ReportRow),
    Failed(FailureRecord),
}

fn run_replicate(config: &ExperimentConfig, replicate: usize) -> Vec<ReplicateResult> {
    let seed = config.base_seed.wrapping_add(replicate as u64);
    let fail_all = |reason: String| {
        vec![ReplicateResult::Failed(FailureRecord {
            replicate,
            method: None,
            reason,
        })]
    };
    let sim = match generate(&config.spec.with_seed(seed)) {
        Ok(s) => s,
        Err(e) => return fail_all(e.to_string()),
    };
    let oracle = match oracle_predict(&sim.truth, &sim.test) {
        Ok(o) => o,
        Err(e) => return fail_all(e.to_string()),
    };
    let data = match PreparedReplicate::new(&sim.train, &sim.test) {
        Ok(d) => d,
        Err(e) => return fail_all(e.to_string()),
    };
    let y_test = sim.test.y.view();
    config
        .methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let scored = if method == Method::Oracle {
                Ok((1.0, sim.truth.nonnull_concatenated(), Vec::new()))
            } else {
                fit_method(method, &data, &config.options, seed).and_then(|out| {
                    let pred = data.y.inverse_transform(data.x_test.dot(&out.coefficients).view());
                    normalized_test_mse(pred.view(), y_test, oracle.view()).map(|m| (m, out.selected, out.hyperparams))
                })
            };
            let seconds = start.elapsed().as_secs_f64();
            match scored {
                Ok((mse, selected, hyper)) => {
                    let (tpr, fpr) = selection_rates(&selected, &sim.truth);
                    ReplicateResult::Row(ReportRow {
                        replicate,
                        method,
                        normalized_test_mse: mse,
                        tpr,
                        fpr,
                        hyperparams: format_hyperparams(&hyper),
                        seconds: config.record_timings.then_some(seconds),
                    })
                }
                Err(e) => ReplicateResult::Failed(FailureRecord {
                    replicate,
                    method: Some(method),
                    reason: e.to_string(),
                }),
            }
        })
        .collect()
}

/// Run every method on `replicates` datasets with seeds `base_seed + r`.
///
/// Replicates run in parallel; the report depends only on the configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<BenchmarkReport> {
    config.spec.validate()?;
    if config.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to benchmark".into()));
    }
    if !(config.options.w > 0.0 && config.options.w.is_finite()) {
        return Err(Error::InvalidArgument(format!("w must be positive, got {}", config.options.w)));
    }
    let per_rep: Vec<Vec<ReplicateResult>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, r))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for result in per_rep.into_iter().flatten() {
        match result {
            ReplicateResult::Row(r) => rows.push(r),
            ReplicateResult::Failed(f) => failures.push(f),
        }
    }
    Ok(BenchmarkReport {
        config: config.clone(),
        rows,
        failures,
    })
}

/// One `(fpr, tpr)` point per hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub value: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RocSweep {
    pub points: Vec<RocPoint>,
    /// Grid values whose fit failed, with the reason.
    pub skipped: Vec<(f64, String)>,
    /// Steps along an ascending grid where the support shrank.
    pub support_decreases: usize,
}

/// Fit `method` on the full training rows at each grid value, without CV.
///
/// The grid holds `c` (one assay) or the common scale of `c_max` (several)
/// for the factor fit, `λ` for LASSO and elastic net, `θ` for supervised PCA.
pub fn roc_sweep(
    method: Method,
    data: &PreparedReplicate,
    truth: &SimTruth,
    grid: &[f64],
    options: &MethodOptions,
) -> Result<RocSweep> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("ROC grid is empty".into()));
    }
    let x = data.x();
    let k = data.set.len();
    let fits: Vec<Result<Vec<usize>>> = match method {
        Method::Sfm if k == 1 => {
            let problem = SingleProblem::new(x.values(), data.y.values())?;
            let init = problem.initial_loadings(1);
            grid.iter()
                .map(|&c| {
                    let cfg = SfmConfig {
                        w: options.w,
                        c,
                        ..SfmConfig::default()
                    };
                    problem.fit_from(init.column(0), &cfg).map(|f| f.v.support().to_vec())
                })
                .collect()
        }
        Method::Sfm => {
            let problem = MultiProblem::from_set(&data.set, &data.y)?;
            let w = vec![options.w; k];
            let c_max = problem.unconstrained_l1(&w)?;
            let init = problem.initial_state()?;
            grid.iter()
                .map(|&s| {
                    let cfg = MultiSfmConfig {
                        c: c_max.iter().map(|c| c * s).collect(),
                        ..MultiSfmConfig::uniform(k, options.w, 1.0)
                    };
                    problem.fit_from(init.clone(), &cfg).map(|f| {
                        multi_selection(&f.v.iter().map(|v| v.values().to_owned()).collect::<Vec<_>>(), &data.set.widths())
                    })
                })
                .collect()
        }
        Method::Lasso | Method::Enet => {
            let mix = if method == Method::Lasso { 1.0 } else { ENET_MIX };
            let solver = CovarianceLasso::new(x.values());
            let xty = x.values().t().dot(&data.y.values());
            grid.iter()
                .map(|&lam| {
                    path_with(&solver, xty.view(), mix, &[lam])
                        .map(|p| p.into_iter().next().expect("one point").support().to_vec())
                })
                .collect()
        }
        Method::Spca => grid
            .iter()
            .map(|&theta| supervised_pca(x, &data.y, theta, options.components_for(k)).map(|f| f.selected_features))
            .collect(),
        Method::Oracle => return Err(Error::InvalidArgument("the oracle has no hyperparameter".into())),
    };
    let mut out = RocSweep::default();
    let mut last_support: Option<usize> = None;
    for (&value, fit) in grid.iter().zip(fits) {
        match fit {
            Ok(selected) => {
                let (tpr, fpr) = selection_rates(&selected, truth);
                if method == Method::Sfm && last_support.is_some_and(|s| selected.len() < s) {
                    out.support_decreases += 1;
                }
                last_support = Some(selected.len());
                out.points.push(RocPoint {
                    value,
                    fpr,
                    tpr,
                    support: selected.len(),
                });
            }
            Err(e) => out.skipped.push((value, e.to_string())),
        }
    }
    Ok(out)
}

/// Write `results.csv` and `summary.csv`, plus `mse.svg` and `roc.svg` when
/// `figures` is set. Output depends only on the report.
pub fn emit_report(report: &BenchmarkReport, out_dir: &Path, figures: bool) -> Result<()> {
    let results = out_dir.join("results.csv");
    let mut w = headerless(&results)?;
    w.write_record(["replicate", "method", "normalized_test_mse", "tpr", "fpr", "hyperparams", "seconds"])
        .map_err(|e| csv_error(&results, e))?;
    for row in &report.rows {
        w.serialize(row).map_err(|e| csv_error(&results, e))?;
    }
    w.flush().map_err(|e| Error::io(&results, e))?;

    let summary = out_dir.join("summary.csv");
    let mut w = headerless(&summary)?;
    w.write_record([
        "method",
        "runs",
        "failures",
        "mse_q1",
        "mse_median",
        "mse_q3",
        "tpr_median",
        "fpr_median",
    ])
    .map_err(|e| csv_error(&summary, e))?;
    for s in report.summary() {
        w.serialize(&s).map_err(|e| csv_error(&summary, e))?;
    }
    w.flush().map_err(|e| Error::io(&summary, e))?;

    if figures {
        let path = out_dir.join("mse.svg");
        fs::write(&path, mse_svg(report)).map_err(|e| Error::io(&path, e))?;
        let path = out_dir.join("roc.svg");
        fs::write(&path, roc_svg(report)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn headerless(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serialization(format!("{}: {other:?}", path.display())),
    }
}

/// Read back a `results.csv` written by [`emit_report`].
pub fn read_results_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

const PALETTE: [&str; 5] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#666666"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#,
        SVG_WIDTH / 2
    );
    s
}

const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 35.0;
const BOTTOM: f64 = 50.0;

/// Per-method strip plot of normalized test MSE with quartile boxes.
/// Points above the axis are dropped and counted at the top of their column.
pub fn mse_svg(report: &BenchmarkReport) -> String {
    let methods = &report.config.methods;
    let summary = report.summary();
    let all: Vec<f64> = report.rows.iter().map(|r| r.normalized_test_mse).filter(|v| v.is_finite()).collect();
    // axis top: largest upper fence, so a few wild runs do not flatten the rest
    let fence = summary
        .iter()
        .filter(|s| s.runs > 0)
        .map(|s| s.mse_q3 + 1.5 * (s.mse_q3 - s.mse_q1))
        .fold(f64::NEG_INFINITY, f64::max);
    let data_max = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let y_max = if fence.is_finite() { data_max.min(fence).max(1.0) * 1.05 } else { 2.0 };
    let y_min = all.iter().copied().fold(f64::INFINITY, f64::min).clamp(0.0, 1.0) * 0.95;
    let plot_w = SVG_WIDTH as f64 - LEFT - RIGHT;
    let plot_h = SVG_HEIGHT as f64 - TOP - BOTTOM;
    let sy = |v: f64| TOP + plot_h * (1.0 - (v - y_min) / (y_max - y_min));
    let slot = plot_w / methods.len().max(1) as f64;

    let mut s = svg_open("Test MSE / oracle test MSE");
    axes(&mut s, plot_w, plot_h);
    for i in 0..=4 {
        let v = y_min + (y_max - y_min) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            LEFT - 6.0,
            sy(v) + 4.0
        );
    }
    if y_min <= 1.0 && 1.0 <= y_max {
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#bbbbbb" stroke-dasharray="4 3"/>"##,
            LEFT + plot_w,
            y = sy(1.0)
        );
    }
    for (i, &method) in methods.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let col = color(i);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 20.0,
            method.name()
        );
        let sm = &summary[i];
        if sm.runs > 0 {
            let half = slot * 0.25;
            let top = sy(sm.mse_q3.min(y_max));
            let bottom = sy(sm.mse_q1.max(y_min));
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="{col}"/>"#,
                cx - half,
                2.0 * half,
                (bottom - top).max(0.0)
            );
            if sm.mse_median <= y_max {
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{col}" stroke-width="2"/>"#,
                    cx - half,
                    cx + half,
                    y = sy(sm.mse_median)
                );
            }
        }
        let mut clipped = 0;
        for row in report.rows_for(method) {
            let v = row.normalized_test_mse;
            if !(v <= y_max) {
                clipped += 1;
                continue;
            }
            // deterministic jitter from the replicate index
            let jitter = ((row.replicate * 37 % 101) as f64 / 100.0 - 0.5) * slot * 0.4;
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{col}" fill-opacity="0.6"/>"#,
                cx + jitter,
                sy(v)
            );
        }
        if clipped > 0 {
            let _ = writeln!(
                s,
                r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle" fill="{col}">{clipped}</text>"#,
                TOP + 12.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn axes(s: &mut String, plot_w: f64, plot_h: f64) {
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="black"/>"#
    );
}

/// Scatter of per-replicate `(FPR, TPR)` at the chosen hyperparameters.
pub fn roc_svg(report: &BenchmarkReport) -> String {
    let plot_w = SVG_WIDTH as f64 - LEFT - RIGHT - 90.0;
    let plot_h = SVG_HEIGHT as f64 - TOP - BOTTOM;
    let sx = |v: f64| LEFT + plot_w * v;
    let sy = |v: f64| TOP + plot_h * (1.0 - v);
    let mut s = svg_open("Selection at the cross-validated hyperparameters");
    axes(&mut s, plot_w, plot_h);
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#,
            sx(v),
            TOP + plot_h + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            LEFT - 6.0,
            sy(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">false positive rate</text>"#,
        sx(0.5),
        TOP + plot_h + 36.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">true positive rate</text>"#,
        sy(0.5),
        sy(0.5)
    );
    for (i, &method) in report.config.methods.iter().enumerate() {
        let col = color(i);
        for row in report.rows_for(method) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{col}" fill-opacity="0.6"/>"#,
                sx(row.fpr),
                sy(row.tpr)
            );
        }
        let ly = TOP + 20.0 * i as f64 + 10.0;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(s, r#"<circle cx="{lx:.1}" cy="{ly:.1}" r="4" fill="{col}"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 10.0, ly + 4.0, method.name());
    }
    s.push_str("</svg>\n");
    s
}
