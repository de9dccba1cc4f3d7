use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use sfm::bench::{emit_report, run_experiment, ExperimentConfig, MethodOptions};
use sfm::cv::{sfm_cv, sfm_multi_cv, CvSettings};
use sfm::dataset::{load_csv, read_feature_csv, ColumnRef, MultiAssaySet, Response};
use sfm::multi::{fit_multi, fit_multi_general, MultiSfmConfig};
use sfm::simgen::generate;
use sfm::single::{fit, fit_rank_r, SfmConfig};

use crate::config::{parse_methods, preset, BenchmarkArgs, ConfigError, FitArgs, PredictArgs, SimulateArgs};

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Fit(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Fit(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Fit(m) => write!(f, "fit failed: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(m) => CliError::Config(m),
            ConfigError::Io(m) => CliError::Io(m),
        }
    }
}

impl From<sfm::Error> for CliError {
    fn from(e: sfm::Error) -> Self {
        use sfm::Error as E;
        match e {
            E::Io { .. } | E::Parse { .. } | E::Serialization(_) => CliError::Io(e.to_string()),
            E::InvalidArgument(_) | E::BoundaryMismatch { .. } | E::MissingResponse(_) => CliError::Config(e.to_string()),
            _ => CliError::Fit(e.to_string()),
        }
    }
}

fn out_dir(dir: &Option<PathBuf>) -> Result<&Path, CliError> {
    let dir = dir
        .as_deref()
        .ok_or_else(|| CliError::Config("out_dir: no output directory given".into()))?;
    if !dir.is_dir() {
        return Err(CliError::Io(format!("output directory {} does not exist", dir.display())));
    }
    Ok(dir)
}

pub fn simulate(args: &SimulateArgs) -> Result<String, CliError> {
    let base = args.preset.as_deref().map(preset).transpose()?;
    let spec = args.spec.resolve(base.as_ref().map(|p| &p.spec), args.seed.unwrap_or(0))?;
    let dir = out_dir(&args.out_dir)?;
    let sim = generate(&spec)?;
    for (name, data) in [("train.csv", &sim.train), ("test.csv", &sim.test)] {
        let views: Vec<_> = data.assays.iter().map(|a| a.view()).collect();
        sfm::dataset::write_csv(dir.join(name), &views, data.y.view())?;
    }
    sim.truth.write_json(dir.join("truth.json"), args.include_latent.unwrap_or(false))?;
    Ok(format!(
        "simulated {} (n = {}, widths {:?}, seed {}) into {}",
        spec.design.name(),
        spec.n,
        spec.widths,
        spec.seed,
        dir.display()
    ))
}

/// Everything `predict` needs, plus a record of the fit.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub widths: Vec<usize>,
    pub col_means: Vec<f64>,
    pub col_scales: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
    pub response: String,
    /// On the standardized concatenated features.
    pub coefficients: Vec<f64>,
    pub loadings: serde_json::Value,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub config: FitArgs,
}

impl ModelFile {
    pub fn predict(&self, raw: &Array2<f64>) -> Result<Array1<f64>, CliError> {
        if raw.ncols() != self.coefficients.len() {
            return Err(CliError::Config(format!(
                "data has {} feature columns, model expects {}",
                raw.ncols(),
                self.coefficients.len()
            )));
        }
        let mut x = raw.clone();
        for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.col_means[j], self.col_scales[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        let z = x.dot(&Array1::from(self.coefficients.clone()));
        Ok(z.mapv(|v| v * self.y_scale + self.y_mean))
    }
}

fn matrix_json(m: &Array2<f64>) -> serde_json::Value {
    json!(m.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

fn write_predictions(path: &Path, pred: &Array1<f64>) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "prediction").map_err(io)?;
    for v in pred {
        writeln!(out, "{v}").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn expand(values: &Option<Vec<f64>>, len: usize, default: f64, name: &str) -> Result<Vec<f64>, CliError> {
    match values.as_deref() {
        None => Ok(vec![default; len]),
        Some([one]) => Ok(vec![*one; len]),
        Some(v) if v.len() == len => Ok(v.to_vec()),
        Some(v) => Err(CliError::Config(format!("{name}: {} values given, expected 1 or {len}", v.len()))),
    }
}

pub fn fit_cmd(args: &FitArgs) -> Result<String, CliError> {
    args.validate()?;
    let dir = out_dir(&args.out_dir)?;
    let train = args.train.as_ref().expect("validated");
    let has_header = args.has_header.unwrap_or(true);
    let response = args.response.clone().unwrap_or_else(|| "y".into());
    let boundaries = match &args.boundaries {
        Some(b) => b.clone(),
        None => {
            let all = read_feature_csv(train, has_header, None)?;
            vec![all.ncols().saturating_sub(1)]
        }
    };
    let (raw_set, raw_y) = load_csv(train, has_header, &response.parse::<ColumnRef>().expect("infallible"), &boundaries)?;
    let raw: Vec<Array2<f64>> = raw_set.assays().iter().map(|a| a.values().to_owned()).collect();
    let set = MultiAssaySet::standardized(&raw)?;
    let y = Response::standardize(raw_y.values())?;
    let k = set.len();
    let cv = CvSettings {
        folds: args.folds.unwrap_or(sfm::cv::DEFAULT_FOLDS),
        seed: args.seed.unwrap_or(0),
        ..CvSettings::default()
    };

    let (coefficients, loadings, trace, converged, iterations, chosen) = if k == 1 {
        let x = set.concatenated();
        let w = expand(&args.w, 1, 0.2, "w")?[0];
        let base = SfmConfig {
            w,
            rank: args.rank.unwrap_or(1),
            max_outer_iters: args.max_outer_iters.unwrap_or(SfmConfig::default().max_outer_iters),
            rel_tol: args.rel_tol.unwrap_or(SfmConfig::default().rel_tol),
            seed: cv.seed,
            ..SfmConfig::default()
        };
        if base.rank > 1 {
            let c = expand(&args.c, 1, 0.0, "c")?[0];
            if args.c.is_none() {
                return Err(CliError::Config("c: required when rank > 1".into()));
            }
            let f = fit_rank_r(x, &y, &SfmConfig { c, ..base })?;
            let l = json!({ "v": matrix_json(&f.v), "a": matrix_json(&f.a), "beta": f.beta.to_vec() });
            (f.coefficients(), l, f.objective_trace, f.converged, f.iterations, vec![c])
        } else {
            let (f, c) = match &args.c {
                Some(_) => {
                    let c = expand(&args.c, 1, 0.0, "c")?[0];
                    (fit(x, &y, &SfmConfig { c, ..base })?, c)
                }
                None => {
                    let sel = sfm_cv(x, &y, &base, &cv)?;
                    let c = sel.curve.best_value();
                    (sel.fit, c)
                }
            };
            let l = json!({ "v": f.v.values().to_vec(), "alpha": f.alpha.to_vec(), "beta": f.beta });
            (f.coefficients(), l, f.objective_trace, f.converged, f.iterations, vec![c])
        }
    } else {
        let w = expand(&args.w, k, 0.2, "w")?;
        let mut base = MultiSfmConfig::uniform(k, 1.0, 1.0);
        base.w = w;
        if let Some(r) = &args.ranks {
            if r.len() != k + 1 {
                return Err(CliError::Config(format!("ranks: {} values given, expected {}", r.len(), k + 1)));
            }
            base.ranks = r.clone();
        }
        base.joint_orthogonal = args.joint_orthogonal.unwrap_or(false);
        if let Some(m) = args.max_outer_iters {
            base.max_outer_iters = m;
        }
        if let Some(t) = args.rel_tol {
            base.rel_tol = t;
        }
        base.seed = cv.seed;
        let general = base.ranks().iter().any(|&r| r != 1) || base.joint_orthogonal;
        if general {
            if args.c.is_none() {
                return Err(CliError::Config("c: required for multi-factor fits".into()));
            }
            base.c = expand(&args.c, k + 1, 0.0, "c")?;
            let f = fit_multi_general(&set, &y, &base)?;
            let l = json!({
                "v": f.v.iter().map(matrix_json).collect::<Vec<_>>(),
                "a": f.a.iter().map(matrix_json).collect::<Vec<_>>(),
                "gamma": f.gamma.iter().map(matrix_json).collect::<Vec<_>>(),
                "beta": f.beta.iter().map(|b| b.to_vec()).collect::<Vec<_>>(),
            });
            let c = base.c.clone();
            (f.coefficients(), l, f.objective_trace, f.converged, f.iterations, c)
        } else {
            let (f, c) = match &args.c {
                Some(_) => {
                    base.c = expand(&args.c, k + 1, 0.0, "c")?;
                    (fit_multi(&set, &y, &base)?, base.c.clone())
                }
                None => {
                    let sel = sfm_multi_cv(&set, &y, &base, &cv)?;
                    (sel.fit, sel.c)
                }
            };
            let l = json!({
                "v": f.v.iter().map(|v| v.values().to_vec()).collect::<Vec<_>>(),
                "alpha": f.alpha.iter().map(|a| a.to_vec()).collect::<Vec<_>>(),
                "gamma": f.gamma.iter().map(|g| g.to_vec()).collect::<Vec<_>>(),
                "beta": f.beta.to_vec(),
            });
            (f.coefficients(), l, f.objective_trace, f.converged, f.iterations, c)
        }
    };

    let x = set.concatenated();
    let mut echo = args.clone();
    echo.c = Some(chosen.clone());
    echo.boundaries = Some(boundaries.clone());
    let model = ModelFile {
        widths: set.widths(),
        col_means: x.col_means().to_vec(),
        col_scales: x.col_scales().to_vec(),
        y_mean: y.mean(),
        y_scale: y.scale(),
        response,
        coefficients: coefficients.to_vec(),
        loadings,
        objective_trace: trace.clone(),
        converged,
        iterations,
        config: echo,
    };
    let fitted = y.inverse_transform(x.values().dot(&coefficients).view());
    let model_path = dir.join("model.json");
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", model_path.display()));
    let file = File::create(&model_path).map_err(io)?;
    serde_json::to_writer_pretty(BufWriter::new(file), &model).map_err(|e| CliError::Io(e.to_string()))?;
    write_predictions(&dir.join("predictions.csv"), &fitted)?;
    Ok(format!(
        "fitted {} assay(s), c = {:?}, {} iterations{}, final objective {:.6} -> {}",
        k,
        chosen,
        iterations,
        if converged { "" } else { " (not converged)" },
        trace.last().copied().unwrap_or(f64::NAN),
        model_path.display()
    ))
}

pub fn predict_cmd(args: &PredictArgs) -> Result<String, CliError> {
    let model_path = args
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("model: no model file given".into()))?;
    let data = args
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("data: no data CSV given".into()))?;
    let dir = out_dir(&args.out_dir)?;
    let file = File::open(model_path).map_err(|e| CliError::Io(format!("{}: {e}", model_path.display())))?;
    let model: ModelFile = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| CliError::Io(format!("{}: {e}", model_path.display())))?;
    let response = args.response.clone().unwrap_or_else(|| model.response.clone());
    let raw = read_feature_csv(data, args.has_header.unwrap_or(true), Some(&response))?;
    let pred = model.predict(&raw)?;
    let out = dir.join("predictions.csv");
    write_predictions(&out, &pred)?;
    Ok(format!("predicted {} rows -> {}", pred.len(), out.display()))
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<String, CliError> {
    let base = args.preset.as_deref().map(preset).transpose()?;
    let seed = args.seed.unwrap_or(0);
    let spec = args.spec.resolve(base.as_ref().map(|p| &p.spec), seed)?;
    let methods = match &args.methods {
        Some(m) => parse_methods(m)?,
        None => base
            .as_ref()
            .map(|p| p.methods.clone())
            .ok_or_else(|| CliError::Config("methods: no methods or preset given".into()))?,
    };
    let default_w = if spec.design.is_multi() { 1.0 } else { 0.2 };
    let w = args.w.or(base.as_ref().map(|p| p.w)).unwrap_or(default_w);
    if !(w > 0.0 && w.is_finite()) {
        return Err(CliError::Config(format!("w: must be positive, got {w}")));
    }
    let replicates = args.replicates.or(base.as_ref().map(|p| p.replicates)).unwrap_or(10);
    if replicates == 0 {
        return Err(CliError::Config("replicates: must be at least 1".into()));
    }
    let options = MethodOptions {
        w,
        spca_components: args.spca_components,
        folds: args.folds.unwrap_or(sfm::cv::DEFAULT_FOLDS),
        grid_len: args.grid_len.unwrap_or(sfm::cv::DEFAULT_GRID_LEN),
    };
    if options.folds < 2 || options.grid_len == 0 || options.spca_components == Some(0) {
        return Err(CliError::Config("folds, grid_len and spca_components must be positive (folds at least 2)".into()));
    }
    let dir = out_dir(&args.out_dir)?;
    let config = ExperimentConfig {
        spec,
        methods,
        replicates,
        base_seed: seed,
        options,
        record_timings: args.record_timings.unwrap_or(false),
    };
    let report = run_experiment(&config)?;
    for f in &report.failures {
        eprintln!(
            "replicate {} {}: {}",
            f.replicate,
            f.method.map(|m| m.name()).unwrap_or("all methods"),
            f.reason
        );
    }
    emit_report(&report, dir, args.figures.unwrap_or(false))?;
    let medians: Vec<String> = report
        .summary()
        .iter()
        .map(|s| format!("{}={:.3}", s.method.name(), s.mse_median))
        .collect();
    Ok(format!(
        "benchmark {}: {} replicates, {} failures, median normalized MSE {} -> {}",
        args.preset.as_deref().unwrap_or(config.spec.design.name()),
        replicates,
        report.failure_count(),
        medians.join(" "),
        dir.join("results.csv").display()
    ))
}
