//! Simulation designs for the latent-factor and independent-feature studies.
//!
//! Four designs are provided:
//!
//! * `single_latent`: one factor `U` drives `y = βU + ε` and the first
//!   `n_nonnull` features `X_j = α_j U + ε_j`; the rest are pure noise.
//! * `single_indep`: independent standard normal features, `y` a sparse
//!   linear combination of the first `n_nonnull` of them.
//! * `multi_latent`: `K` assays, one specific factor per assay plus one
//!   common factor; non-null features load on both.
//! * `multi_indep`: `K` blocks of independent features, `y` combining the
//!   first `n_nonnull` features of every block.
//!
//! Effect sizes are drawn from the symmetric mixture `½N(−μ, 1) + ½N(μ, 1)`
//! (μ = 3 for factor coefficients, 1.5 for loadings, 2 for direct feature
//! coefficients) and every noise variance is set from its SNR relation.
//!
//! Randomness comes from a ChaCha8 stream seeded with `seed_from_u64`;
//! normal draws use the ziggurat sampler of `rand_distr::StandardNormal`.
//! Parameters are drawn first, then the training rows, then the test rows.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FACTOR_EFFECT: f64 = 3.0;
pub const LOADING_EFFECT: f64 = 1.5;
pub const FEATURE_EFFECT: f64 = 2.0;
pub const DEFAULT_TEST_N: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    SingleLatent,
    SingleIndep,
    MultiLatent,
    MultiIndep,
}

impl Design {
    pub fn is_latent(self) -> bool {
        matches!(self, Design::SingleLatent | Design::MultiLatent)
    }

    pub fn is_multi(self) -> bool {
        matches!(self, Design::MultiLatent | Design::MultiIndep)
    }

    pub fn name(self) -> &'static str {
        match self {
            Design::SingleLatent => "single_latent",
            Design::SingleIndep => "single_indep",
            Design::MultiLatent => "multi_latent",
            Design::MultiIndep => "multi_indep",
        }
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_latent" | "A.1" => Ok(Design::SingleLatent),
            "single_indep" | "A.2" => Ok(Design::SingleIndep),
            "multi_latent" | "A.3" => Ok(Design::MultiLatent),
            "multi_indep" | "A.4" => Ok(Design::MultiIndep),
            other => Err(Error::InvalidArgument(format!(
                "unknown design {other:?}; expected single_latent, single_indep, multi_latent or multi_indep"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub design: Design,
    pub n: usize,
    /// Features per assay; a single entry for the one-assay designs.
    pub widths: Vec<usize>,
    /// Non-null features per assay (always the leading columns).
    pub n_nonnull: usize,
    /// Ignored by the independent designs.
    pub snr_x: f64,
    pub snr_y: f64,
    pub seed: u64,
    pub test_n: usize,
}

impl SimSpec {
    /// `n = 100`, `p = 200`, 20 non-null features, one latent factor.
    pub fn single_latent(snr: f64, seed: u64) -> Self {
        SimSpec {
            design: Design::SingleLatent,
            n: 100,
            widths: vec![200],
            n_nonnull: 20,
            snr_x: snr,
            snr_y: snr,
            seed,
            test_n: DEFAULT_TEST_N,
        }
    }

    /// `n = 100`, `p = 100`, response built from the first 10 features.
    pub fn single_indep(snr_y: f64, seed: u64) -> Self {
        SimSpec {
            design: Design::SingleIndep,
            n: 100,
            widths: vec![100],
            n_nonnull: 10,
            snr_x: 1.0,
            snr_y,
            seed,
            test_n: DEFAULT_TEST_N,
        }
    }

    /// Three assays of 100 features with 10 non-null each.
    pub fn multi_latent(snr: f64, seed: u64) -> Self {
        SimSpec {
            design: Design::MultiLatent,
            n: 100,
            widths: vec![100; 3],
            n_nonnull: 10,
            snr_x: snr,
            snr_y: snr,
            seed,
            test_n: DEFAULT_TEST_N,
        }
    }

    /// Three assays of 200 features with 20 non-null each, as in the
    /// step-by-step generation recipe.
    pub fn multi_latent_appendix(snr: f64, seed: u64) -> Self {
        SimSpec {
            widths: vec![200; 3],
            n_nonnull: 20,
            ..Self::multi_latent(snr, seed)
        }
    }

    /// Three blocks of 100 independent features, 10 active per block.
    pub fn multi_indep(snr_y: f64, seed: u64) -> Self {
        SimSpec {
            design: Design::MultiIndep,
            n: 100,
            widths: vec![100; 3],
            n_nonnull: 10,
            snr_x: 1.0,
            snr_y,
            seed,
            test_n: DEFAULT_TEST_N,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimSpec { seed, ..self.clone() }
    }

    pub fn total_features(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("n must be at least 2, got {}", self.n)));
        }
        if self.test_n == 0 {
            return Err(Error::InvalidArgument("test_n must be positive".into()));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidArgument("widths must be nonempty and positive".into()));
        }
        if !self.design.is_multi() && self.widths.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "design {} takes one assay, got {}",
                self.design.name(),
                self.widths.len()
            )));
        }
        if let Some(&p) = self.widths.iter().find(|&&p| p < self.n_nonnull) {
            return Err(Error::InvalidArgument(format!(
                "n_nonnull = {} exceeds assay width {p}",
                self.n_nonnull
            )));
        }
        if !(self.snr_y > 0.0 && self.snr_y.is_finite()) {
            return Err(Error::InvalidArgument(format!("snr_y must be positive, got {}", self.snr_y)));
        }
        if self.design.is_latent() && !(self.snr_x > 0.0 && self.snr_x.is_finite()) {
            return Err(Error::InvalidArgument(format!("snr_x must be positive, got {}", self.snr_x)));
        }
        Ok(())
    }
}

/// Generating parameters of one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub design: Design,
    /// Factor coefficients (latent designs, common factor last) or feature
    /// coefficients over the concatenated columns (independent designs).
    pub beta_true: Vec<f64>,
    /// Per assay, loadings of the non-null features on the specific factor.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha_true: Vec<Vec<f64>>,
    /// Per assay, loadings on the common factor (multi-assay latent only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma_true: Vec<Vec<f64>>,
    /// Zero-based non-null column indices within each assay.
    pub nonnull_sets: Vec<Vec<usize>>,
    pub e_y2: f64,
    /// Noise variance of every feature, per assay.
    pub e_x2: Vec<Vec<f64>>,
    /// Training latent factors, row-major `n x factors`; exported on request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_true: Option<Vec<Vec<f64>>>,
}

impl SimTruth {
    pub fn widths(&self) -> Vec<usize> {
        self.e_x2.iter().map(Vec::len).collect()
    }

    /// Variance of the noiseless part of feature `j` in assay `k`.
    pub fn signal_variance(&self, k: usize, j: usize) -> f64 {
        let a = self.alpha_true.get(k).and_then(|a| a.get(j)).copied().unwrap_or(0.0);
        let g = self.gamma_true.get(k).and_then(|g| g.get(j)).copied().unwrap_or(0.0);
        a * a + g * g
    }

    /// Non-null indices in concatenated column numbering.
    pub fn nonnull_concatenated(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut offset = 0;
        for (set, width) in self.nonnull_sets.iter().zip(self.widths()) {
            out.extend(set.iter().map(|j| j + offset));
            offset += width;
        }
        out
    }

    /// Write the JSON sidecar. `U_true` is only included with `include_latent`.
    pub fn write_json(&self, path: impl AsRef<Path>, include_latent: bool) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = self.clone();
        if !include_latent {
            out.u_true = None;
        }
        serde_json::to_writer_pretty(BufWriter::new(file), &out).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Raw (unstandardized) simulated rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub assays: Vec<Array2<f64>>,
    pub y: Array1<f64>,
    /// `n x factors` latent scores for the latent designs.
    pub latent: Option<Array2<f64>>,
}

impl SimData {
    pub fn nrows(&self) -> usize {
        self.y.len()
    }

    pub fn concatenated(&self) -> Array2<f64> {
        let views: Vec<_> = self.assays.iter().map(|a| a.view()).collect();
        ndarray::concatenate(ndarray::Axis(1), &views).expect("assays share rows")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub train: SimData,
    pub test: SimData,
    pub truth: SimTruth,
}

/// `count` draws from `½N(−μ, 1) + ½N(μ, 1)`.
pub fn sample_gaussian_mixture<R: Rng + ?Sized>(mean_magnitude: f64, count: usize, rng: &mut R) -> Array1<f64> {
    Array1::from_shape_fn(count, |_| {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let z: f64 = rng.sample(StandardNormal);
        sign * mean_magnitude + z
    })
}

/// Noise variance giving the requested SNR: `Σ coef² / snr`.
pub fn snr_noise_variance(signal_coefficients: &[f64], snr: f64) -> f64 {
    signal_coefficients.iter().map(|c| c * c).sum::<f64>() / snr
}

fn normals<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| rng.sample(StandardNormal))
}

struct Params {
    beta: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    gamma: Vec<Vec<f64>>,
    e_y2: f64,
    e_x2: Vec<Vec<f64>>,
}

fn draw_params(spec: &SimSpec, rng: &mut ChaCha8Rng) -> Params {
    let m = spec.n_nonnull;
    let k = spec.widths.len();
    match spec.design {
        Design::SingleLatent | Design::MultiLatent => {
            let factors = if spec.design.is_multi() { k + 1 } else { 1 };
            let beta = sample_gaussian_mixture(FACTOR_EFFECT, factors, rng).to_vec();
            let mut alpha = Vec::with_capacity(k);
            let mut gamma = Vec::new();
            for _ in 0..k {
                alpha.push(sample_gaussian_mixture(LOADING_EFFECT, m, rng).to_vec());
                if spec.design.is_multi() {
                    gamma.push(sample_gaussian_mixture(LOADING_EFFECT, m, rng).to_vec());
                }
            }
            let e_x2 = (0..k)
                .map(|a| {
                    (0..spec.widths[a])
                        .map(|j| {
                            if j < m {
                                let g = gamma.get(a).map_or(0.0, |g| g[j]);
                                snr_noise_variance(&[alpha[a][j], g], spec.snr_x)
                            } else {
                                1.0
                            }
                        })
                        .collect()
                })
                .collect();
            Params {
                e_y2: snr_noise_variance(&beta, spec.snr_y),
                beta,
                alpha,
                gamma,
                e_x2,
            }
        }
        Design::SingleIndep | Design::MultiIndep => {
            let mut beta = Vec::with_capacity(spec.total_features());
            for &p in &spec.widths {
                beta.extend(sample_gaussian_mixture(FEATURE_EFFECT, m, rng));
                beta.extend(std::iter::repeat_n(0.0, p - m));
            }
            Params {
                e_y2: snr_noise_variance(&beta, spec.snr_y),
                beta,
                alpha: Vec::new(),
                gamma: Vec::new(),
                e_x2: spec.widths.iter().map(|&p| vec![1.0; p]).collect(),
            }
        }
    }
}

fn draw_rows(spec: &SimSpec, params: &Params, n: usize, rng: &mut ChaCha8Rng) -> SimData {
    let m = spec.n_nonnull;
    let k = spec.widths.len();
    match spec.design {
        Design::SingleLatent | Design::MultiLatent => {
            let factors = params.beta.len();
            let mut latent = Array2::zeros((n, factors));
            for f in 0..factors {
                latent.column_mut(f).assign(&normals(rng, n));
            }
            let mut y = latent.dot(&Array1::from(params.beta.clone()));
            y.scaled_add(params.e_y2.sqrt(), &normals(rng, n));
            let mut assays = Vec::with_capacity(k);
            for a in 0..k {
                let p = spec.widths[a];
                let mut x = Array2::zeros((n, p));
                for j in 0..p {
                    let mut col = normals(rng, n);
                    if j < m {
                        col *= params.e_x2[a][j].sqrt();
                        col.scaled_add(params.alpha[a][j], &latent.column(if spec.design.is_multi() { a } else { 0 }));
                        if let Some(g) = params.gamma.get(a) {
                            col.scaled_add(g[j], &latent.column(k));
                        }
                    }
                    x.column_mut(j).assign(&col);
                }
                assays.push(x);
            }
            SimData {
                assays,
                y,
                latent: Some(latent),
            }
        }
        Design::SingleIndep | Design::MultiIndep => {
            let assays: Vec<Array2<f64>> = spec
                .widths
                .iter()
                .map(|&p| {
                    let mut x = Array2::zeros((n, p));
                    for j in 0..p {
                        x.column_mut(j).assign(&normals(rng, n));
                    }
                    x
                })
                .collect();
            let mut y = Array1::zeros(n);
            let mut offset = 0;
            for x in &assays {
                for j in 0..x.ncols() {
                    let b = params.beta[offset + j];
                    if b != 0.0 {
                        y.scaled_add(b, &x.column(j));
                    }
                }
                offset += x.ncols();
            }
            y.scaled_add(params.e_y2.sqrt(), &normals(rng, n));
            SimData {
                assays,
                y,
                latent: None,
            }
        }
    }
}

/// Draw a training set, an independent test set and the generating truth.
pub fn generate(spec: &SimSpec) -> Result<Simulation> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let params = draw_params(spec, &mut rng);
    let train = draw_rows(spec, &params, spec.n, &mut rng);
    let test = draw_rows(spec, &params, spec.test_n, &mut rng);
    let truth = SimTruth {
        design: spec.design,
        beta_true: params.beta,
        alpha_true: params.alpha,
        gamma_true: params.gamma,
        nonnull_sets: vec![(0..spec.n_nonnull).collect(); spec.widths.len()],
        e_y2: params.e_y2,
        e_x2: params.e_x2,
        u_true: train
            .latent
            .as_ref()
            .map(|u| u.outer_iter().map(|r| r.to_vec()).collect()),
    };
    Ok(Simulation { train, test, truth })
}
