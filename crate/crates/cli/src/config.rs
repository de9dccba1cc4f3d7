//! Config file sections and command-line flags.
//!
//! Every section field is optional so that a file, a preset and flags can be
//! layered; flags win over the file, the file wins over the preset.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Deserializer, Serialize};

use sfm::baselines::Method;
use sfm::simgen::{Design, SimSpec};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub simulate: Option<SimulateArgs>,
    pub fit: Option<FitArgs>,
    pub predict: Option<PredictArgs>,
    pub benchmark: Option<BenchmarkArgs>,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Invalid(String),
    Io(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Invalid(m) | ConfigError::Io(m) => f.write_str(m),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Accepts `x = 1.0` as well as `x = [1.0, 2.0]`.
fn one_or_many<'de, D, T>(d: D) -> Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(Option::<OneOrMany<T>>::deserialize(d)?.map(|v| match v {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(xs) => xs,
    }))
}

macro_rules! layer {
    ($top:expr, $bottom:expr, $($field:ident),+ $(,)?) => {
        $( if $top.$field.is_none() { $top.$field = $bottom.$field.clone(); } )+
    };
}

/// Simulation parameters shared by `simulate` and `benchmark`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecArgs {
    /// single_latent, single_indep, multi_latent or multi_indep (or A.1..A.4)
    #[arg(long)]
    pub design: Option<String>,
    /// Training rows.
    #[arg(long)]
    pub n: Option<usize>,
    /// Features per assay, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub widths: Option<Vec<usize>>,
    /// Non-null features per assay.
    #[arg(long)]
    pub n_nonnull: Option<usize>,
    /// Sets both snr_x and snr_y.
    #[arg(long, allow_negative_numbers = true)]
    pub snr: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_x: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_y: Option<f64>,
    #[arg(long)]
    pub test_n: Option<usize>,
}

impl SpecArgs {
    fn layer(&mut self, below: &SpecArgs) {
        layer!(self, below, design, n, widths, n_nonnull, snr, snr_x, snr_y, test_n);
    }

    /// Build on `base` (a preset) or on the design defaults.
    pub fn resolve(&self, base: Option<&SimSpec>, seed: u64) -> Result<SimSpec, ConfigError> {
        let mut spec = match (&self.design, base) {
            (Some(d), _) => {
                let design: Design = d.parse().map_err(|e: sfm::Error| invalid(format!("design: {e}")))?;
                let defaults = default_spec(design, seed);
                match base {
                    Some(b) if b.design == design => b.clone(),
                    _ => defaults,
                }
            }
            (None, Some(b)) => b.clone(),
            (None, None) => return Err(invalid("design: no design or preset given")),
        };
        spec.seed = seed;
        if let Some(n) = self.n {
            spec.n = n;
        }
        if let Some(w) = &self.widths {
            spec.widths = w.clone();
        }
        if let Some(k) = self.n_nonnull {
            spec.n_nonnull = k;
        }
        if let Some(s) = self.snr {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid(format!("snr must be positive, got {s}")));
            }
            spec.snr_x = s;
            spec.snr_y = s;
        }
        if let Some(s) = self.snr_x {
            spec.snr_x = s;
        }
        if let Some(s) = self.snr_y {
            spec.snr_y = s;
        }
        if let Some(t) = self.test_n {
            spec.test_n = t;
        }
        spec.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(spec)
    }
}

fn default_spec(design: Design, seed: u64) -> SimSpec {
    match design {
        Design::SingleLatent => SimSpec::single_latent(2.0, seed),
        Design::SingleIndep => SimSpec::single_indep(5.0, seed),
        Design::MultiLatent => SimSpec::multi_latent(2.0, seed),
        Design::MultiIndep => SimSpec::multi_indep(5.0, seed),
    }
}

/// A named figure experiment.
#[derive(Debug, Clone)]
pub struct Preset {
    pub spec: SimSpec,
    pub w: f64,
    pub replicates: usize,
    pub methods: Vec<Method>,
}

pub const PRESET_NAMES: [&str; 6] = ["fig1-low", "fig1-high", "fig2", "fig3-low", "fig3-high", "fig4"];

pub fn preset(name: &str) -> Result<Preset, ConfigError> {
    let methods = vec![Method::Sfm, Method::Lasso, Method::Enet, Method::Spca];
    let p = |spec, w, replicates| Preset {
        spec,
        w,
        replicates,
        methods: methods.clone(),
    };
    Ok(match name {
        "fig1-low" | "fig1-low-snr" => p(SimSpec::single_latent(0.7, 0), 0.2, 100),
        "fig1-high" | "fig1-high-snr" => p(SimSpec::single_latent(2.0, 0), 0.2, 100),
        "fig2" => p(SimSpec::single_indep(5.0, 0), 0.2, 100),
        "fig3-low" | "fig3-low-snr" => p(SimSpec::multi_latent(0.7, 0), 1.0, 50),
        "fig3-high" | "fig3-high-snr" => p(SimSpec::multi_latent(2.0, 0), 1.0, 50),
        "fig4" => p(SimSpec::multi_indep(5.0, 0), 1.0, 50),
        other => {
            return Err(invalid(format!(
                "preset: unknown preset '{other}'; valid presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Take the simulation design from a figure preset.
    #[arg(long)]
    pub preset: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Existing directory for train.csv, test.csv and truth.json.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write the training latent factors into truth.json.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub include_latent: Option<bool>,
}

impl SimulateArgs {
    pub fn layer(&mut self, below: &SimulateArgs) {
        layer!(self, below, preset, seed, out_dir, include_latent);
        self.spec.layer(&below.spec);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// Training CSV.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Whether the CSV starts with a header row (default true).
    #[arg(long)]
    pub has_header: Option<bool>,
    /// Response column name or 0-based index (default "y").
    #[arg(long)]
    pub response: Option<String>,
    /// Feature columns per assay, comma separated (default: one assay).
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub boundaries: Option<Vec<usize>>,
    /// Reconstruction weight, one value or one per assay (default 0.2).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(default, deserialize_with = "one_or_many")]
    pub w: Option<Vec<f64>>,
    /// L1 bound, one value or one per sparse vector (common last).
    /// Chosen by cross-validation when absent.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(default, deserialize_with = "one_or_many")]
    pub c: Option<Vec<f64>>,
    /// Factors for a single assay.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Factors per assay plus common factors, for several assays.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub ranks: Option<Vec<usize>>,
    #[arg(long)]
    pub joint_orthogonal: Option<bool>,
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub rel_tol: Option<f64>,
    /// Seeds the cross-validation folds.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Existing directory for model.json and predictions.csv.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl FitArgs {
    pub fn layer(&mut self, below: &FitArgs) {
        layer!(
            self,
            below,
            train,
            has_header,
            response,
            boundaries,
            w,
            c,
            rank,
            ranks,
            joint_orthogonal,
            max_outer_iters,
            rel_tol,
            seed,
            folds,
            out_dir
        );
    }

    /// Checks that need no data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.train.is_none() {
            return Err(invalid("train: no training CSV given"));
        }
        if self.out_dir.is_none() {
            return Err(invalid("out_dir: no output directory given"));
        }
        if let Some(c) = self.c.as_ref().and_then(|c| c.iter().find(|c| !(**c > 0.0 && c.is_finite()))) {
            return Err(invalid(format!("c: must be positive, got {c}")));
        }
        if let Some(w) = self.w.as_ref().and_then(|w| w.iter().find(|w| !(**w > 0.0 && w.is_finite()))) {
            return Err(invalid(format!("w: must be positive, got {w}")));
        }
        if self.rank == Some(0) || self.ranks.as_ref().is_some_and(|r| r.contains(&0)) {
            return Err(invalid("rank: must be at least 1"));
        }
        if self.folds.is_some_and(|f| f < 2) {
            return Err(invalid("folds: need at least 2"));
        }
        if self.rel_tol.is_some_and(|t| !(t > 0.0)) {
            return Err(invalid("rel_tol: must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictArgs {
    /// model.json written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// CSV with the same feature columns; a response column is ignored.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub has_header: Option<bool>,
    /// Name of a column to ignore (default "y").
    #[arg(long)]
    pub response: Option<String>,
    /// Existing directory for predictions.csv.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl PredictArgs {
    pub fn layer(&mut self, below: &PredictArgs) {
        layer!(self, below, model, data, has_header, response, out_dir);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkArgs {
    /// fig1-low, fig1-high, fig2, fig3-low, fig3-high or fig4.
    #[arg(long)]
    pub preset: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: SpecArgs,
    /// Comma separated: sfm, lasso, enet, spca, oracle.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Replicate r uses seed + r.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub w: Option<f64>,
    #[arg(long)]
    pub spca_components: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub grid_len: Option<usize>,
    /// Existing directory for the report files.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write mse.svg and roc.svg.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub figures: Option<bool>,
    /// Fill the seconds column of results.csv.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub record_timings: Option<bool>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl BenchmarkArgs {
    pub fn layer(&mut self, below: &BenchmarkArgs) {
        layer!(
            self,
            below,
            preset,
            methods,
            replicates,
            seed,
            w,
            spca_components,
            folds,
            grid_len,
            out_dir,
            figures,
            record_timings,
            threads
        );
        self.spec.layer(&below.spec);
    }
}

pub fn parse_methods(names: &[String]) -> Result<Vec<Method>, ConfigError> {
    let mut out = Vec::new();
    for n in names {
        let m: Method = n.parse().map_err(|e: sfm::Error| invalid(format!("methods: {e}")))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(invalid("methods: empty method list"));
    }
    Ok(out)
}
