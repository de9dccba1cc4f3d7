//! Comparison methods: LASSO, elastic net, supervised PCA and the oracle
//! predictor used to normalize test errors.
//!
//! Every fitted baseline is linear in the standardized features, so a fit is
//! carried as one coefficient vector over the (concatenated) standardized
//! columns.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::cv::{cross_validate, fail_all, CvSettings};
use crate::dataset::{AssayMatrix, Response};
use crate::error::{Error, Result};
use crate::lasso::{geometric_grid, path_with, CovarianceLasso};
use crate::linalg;
use crate::simgen::{SimData, SimTruth};

/// Elastic-net mixing used by the comparisons.
pub const ENET_MIX: f64 = 0.5;
/// Smallest `λ` on the default grid, as a fraction of `λ_max`.
pub const LAMBDA_RATIO: f64 = 0.01;
/// Quantile levels of `|univariate coefficient|` tried as screening thresholds.
pub const THETA_LEVELS: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sfm,
    Lasso,
    Enet,
    Spca,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Sfm, Method::Lasso, Method::Enet, Method::Spca, Method::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sfm => "sfm",
            Method::Lasso => "lasso",
            Method::Enet => "enet",
            Method::Spca => "spca",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let found = match lower.as_str() {
            "elastic_net" | "elasticnet" => Some(Method::Enet),
            "supervised_pca" => Some(Method::Spca),
            other => Method::ALL.into_iter().find(|m| m.name() == other),
        };
        found.ok_or_else(|| {
            let valid: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidArgument(format!("unknown method '{s}'; valid methods: {}", valid.join(", ")))
        })
    }
}

/// Screening set and principal-component regression of a supervised PCA fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaComponents {
    pub screened: Vec<usize>,
    /// `|screened| x m` loadings.
    pub loadings: Array2<f64>,
    /// Regression coefficients on the `m` component scores.
    pub gamma: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit {
    pub method: Method,
    /// Coefficients on the standardized features.
    pub coefficients: Array1<f64>,
    pub selected_features: Vec<usize>,
    /// Hyperparameters chosen by cross-validation, by name.
    pub cv_choice: Vec<(String, f64)>,
    pub pca: Option<PcaComponents>,
}

impl BaselineFit {
    /// Predictions on the standardized response scale.
    pub fn predict(&self, x_standardized: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x_standardized.ncols() != self.coefficients.len() {
            return Err(Error::DimensionMismatch(format!(
                "fit has {} coefficients, data has {} columns",
                self.coefficients.len(),
                x_standardized.ncols()
            )));
        }
        Ok(x_standardized.dot(&self.coefficients))
    }
}

fn support_of(v: ArrayView1<'_, f64>) -> Vec<usize> {
    v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(j, _)| j).collect()
}

fn check_standardized(x: &AssayMatrix, y: &Response) -> Result<()> {
    if !x.is_standardized() || !y.is_standardized() {
        return Err(Error::InvalidArgument("baselines expect standardized inputs".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("X has {} rows, y has {}", x.nrows(), y.len())));
    }
    Ok(())
}

/// Default `λ` grid: `grid_len` values from `λ_max` down to `0.01·λ_max`.
pub fn default_lambda_grid(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, l2_mix: f64, grid_len: usize) -> Vec<f64> {
    let xty = x.t().dot(&y);
    let m = xty.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let max = if m > 0.0 { 2.0 * m / l2_mix } else { 1.0 };
    geometric_grid(max, LAMBDA_RATIO, grid_len)
}

/// Penalized regression with `λ` chosen by K-fold CV, refit on all rows.
///
/// The penalty is not divided by `n`, so inside each fold the grid is scaled
/// by `n_train / n` to keep the per-observation penalty fixed.
pub fn penalized_cv(
    x: &AssayMatrix,
    y: &Response,
    l2_mix: f64,
    settings: &CvSettings,
    lambda_grid: Option<&[f64]>,
) -> Result<BaselineFit> {
    check_standardized(x, y)?;
    if !(l2_mix > 0.0 && l2_mix <= 1.0) {
        return Err(Error::InvalidArgument(format!("mixing must be in (0, 1], got {l2_mix}")));
    }
    let grid = match lambda_grid {
        Some(g) => g.to_vec(),
        None => default_lambda_grid(x.values(), y.values(), l2_mix, settings.grid_len),
    };
    crate::lasso::check_grid(&grid)?;
    let n = y.len() as f64;
    let curve = cross_validate(x.values(), y.values(), settings, &grid, |fold| {
        let scale = fold.y.len() as f64 / n;
        let scaled: Vec<f64> = grid.iter().map(|l| l * scale).collect();
        let solver = CovarianceLasso::new(fold.x.values());
        let xty = fold.x.values().t().dot(&fold.y.values());
        match path_with(&solver, xty.view(), l2_mix, &scaled) {
            Ok(path) => path.into_iter().map(|c| Ok(c.into_values())).collect(),
            Err(e) => fail_all(&grid, e),
        }
    })?;
    let solver = CovarianceLasso::new(x.values());
    let xty = x.values().t().dot(&y.values());
    let path = path_with(&solver, xty.view(), l2_mix, &grid[..=curve.best])?;
    let coefficients = path.into_iter().last().expect("path is nonempty").into_values();
    Ok(BaselineFit {
        method: if l2_mix == 1.0 { Method::Lasso } else { Method::Enet },
        selected_features: support_of(coefficients.view()),
        coefficients,
        cv_choice: vec![("lambda".into(), curve.best_value())],
        pca: None,
    })
}

pub fn lasso_cv(x: &AssayMatrix, y: &Response, settings: &CvSettings, lambda_grid: Option<&[f64]>) -> Result<BaselineFit> {
    penalized_cv(x, y, 1.0, settings, lambda_grid)
}

pub fn enet_cv(x: &AssayMatrix, y: &Response, settings: &CvSettings, lambda_grid: Option<&[f64]>) -> Result<BaselineFit> {
    penalized_cv(x, y, ENET_MIX, settings, lambda_grid)
}

/// `X_jᵀy / X_jᵀX_j` for every column; on standardized data this is the
/// feature-response correlation.
pub fn univariate_coefficients(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Array1<f64> {
    let xty = x.t().dot(&y);
    let ss = x.map_axis(Axis(0), |c| c.dot(&c));
    ndarray::Zip::from(&xty)
        .and(&ss)
        .map_collect(|a, b| if *b > 0.0 { a / b } else { 0.0 })
}

fn spca_core(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, theta: f64, m: usize) -> Result<(Array1<f64>, PcaComponents)> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("X has {} rows, y has {}", x.nrows(), y.len())));
    }
    let coef = univariate_coefficients(x, y);
    let screened: Vec<usize> = (0..coef.len()).filter(|&j| coef[j].abs() >= theta).collect();
    if screened.is_empty() {
        return Err(Error::EmptyScreen(theta));
    }
    if screened.len() < m {
        return Err(Error::InsufficientRank {
            survivors: screened.len(),
            components: m,
        });
    }
    let xs = x.select(Axis(1), &screened);
    let (_, loadings) = linalg::symmetric_top_eigen(linalg::gram(xs.view()).view(), m);
    let scores = xs.dot(&loadings);
    let gamma = linalg::least_squares(scores.view(), y)?;
    let mut full = Array1::zeros(x.ncols());
    for (&j, b) in screened.iter().zip(loadings.dot(&gamma)) {
        full[j] = b;
    }
    Ok((
        full,
        PcaComponents {
            screened,
            loadings,
            gamma,
        },
    ))
}

/// Screen on `|univariate coefficient| ≥ θ`, regress on the first `m`
/// principal components of the survivors.
pub fn supervised_pca(x: &AssayMatrix, y: &Response, theta: f64, m: usize) -> Result<BaselineFit> {
    check_standardized(x, y)?;
    let (coefficients, pca) = spca_core(x.values(), y.values(), theta, m)?;
    Ok(BaselineFit {
        method: Method::Spca,
        coefficients,
        selected_features: pca.screened.clone(),
        cv_choice: vec![("theta".into(), theta)],
        pca: Some(pca),
    })
}

/// Linear-interpolation (type 7) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Screening thresholds at the deciles 0.0..0.9 of `|univariate coefficient|`.
pub fn theta_grid(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Vec<f64> {
    let mut abs: Vec<f64> = univariate_coefficients(x, y).iter().map(|c| c.abs()).collect();
    abs.sort_by(f64::total_cmp);
    THETA_LEVELS.iter().map(|&q| quantile_sorted(&abs, q)).collect()
}

/// Supervised PCA with `θ` chosen by K-fold CV over [`theta_grid`].
pub fn spca_cv(x: &AssayMatrix, y: &Response, m: usize, settings: &CvSettings) -> Result<BaselineFit> {
    check_standardized(x, y)?;
    let grid = theta_grid(x.values(), y.values());
    let curve = cross_validate(x.values(), y.values(), settings, &grid, |fold| {
        grid.iter()
            .map(|&theta| spca_core(fold.x.values(), fold.y.values(), theta, m).map(|(c, _)| c))
            .collect()
    })?;
    supervised_pca(x, y, curve.best_value(), m)
}

/// Noiseless conditional mean of the test response given the truth.
///
/// Latent designs use `Σ β_f U_f` on the test factors; independent designs use
/// `Σ β_j X_j` on the raw test features.
pub fn oracle_predict(truth: &SimTruth, test: &SimData) -> Result<Array1<f64>> {
    if truth.design.is_latent() {
        let latent = test
            .latent
            .as_ref()
            .ok_or_else(|| Error::DesignMismatch("latent design but the test data carry no factors".into()))?;
        if latent.ncols() != truth.beta_true.len() {
            return Err(Error::DesignMismatch(format!(
                "{} factors in the data, {} coefficients in the truth",
                latent.ncols(),
                truth.beta_true.len()
            )));
        }
        Ok(latent.dot(&Array1::from(truth.beta_true.clone())))
    } else {
        let widths: Vec<usize> = test.assays.iter().map(|a| a.ncols()).collect();
        if widths != truth.widths() {
            return Err(Error::DesignMismatch(format!(
                "assay widths {widths:?} differ from the truth's {:?}",
                truth.widths()
            )));
        }
        if truth.beta_true.len() != widths.iter().sum::<usize>() {
            return Err(Error::DesignMismatch("feature coefficients do not cover the columns".into()));
        }
        Ok(test.concatenated().dot(&Array1::from(truth.beta_true.clone())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::standardize;
    use crate::lasso::solve_lagrangian;
    use crate::lasso::PenalizedProblem;
    use crate::simgen::{generate, SimSpec};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, p: usize, seed: u64) -> (AssayMatrix, Response) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng));
        let y = Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut rng));
        (standardize(x.view()).unwrap(), Response::standardize(y.view()).unwrap())
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        let err = "ridge".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("lasso") && err.contains("spca"));
    }

    #[test]
    fn single_lambda_grid_equals_direct_solve() {
        let (x, y) = noise(30, 8, 3);
        let lam = 5.0;
        let fit = lasso_cv(&x, &y, &CvSettings::default(), Some(&[lam])).unwrap();
        let direct = solve_lagrangian(&PenalizedProblem {
            design: x.values(),
            target: y.values(),
            l1_weight: lam,
            l2_mix: 1.0,
        })
        .unwrap();
        for (a, b) in fit.coefficients.iter().zip(direct.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-7);
        }
    }

    #[test]
    fn pure_noise_gives_small_model() {
        let (x, y) = noise(80, 20, 11);
        let fit = lasso_cv(&x, &y, &CvSettings::default(), None).unwrap();
        assert!(fit.selected_features.len() <= 10, "{:?}", fit.selected_features);
    }

    #[test]
    fn spca_without_screening_is_pc_regression() {
        let (x, y) = noise(25, 6, 5);
        let fit = supervised_pca(&x, &y, 0.0, 1).unwrap();
        let (_, pc) = linalg::symmetric_top_eigen(linalg::gram(x.values()).view(), 1);
        let scores = x.values().dot(&pc);
        let b = linalg::least_squares(scores.view(), y.values()).unwrap();
        let direct = scores.column(0).to_owned() * b[0];
        let via_fit = fit.predict(x.values()).unwrap();
        for (a, c) in via_fit.iter().zip(direct.iter()) {
            assert_abs_diff_eq!(a, c, epsilon = 1e-10);
        }
        assert_eq!(fit.selected_features.len(), 6);
    }

    #[test]
    fn over_screening_errors() {
        let (x, y) = noise(25, 6, 5);
        let max = univariate_coefficients(x.values(), y.values())
            .iter()
            .fold(0.0_f64, |a, c| a.max(c.abs()));
        assert!(matches!(supervised_pca(&x, &y, max * 1.01, 1), Err(Error::EmptyScreen(_))));
        let second = {
            let mut abs: Vec<f64> = univariate_coefficients(x.values(), y.values()).iter().map(|c| c.abs()).collect();
            abs.sort_by(|a, b| b.total_cmp(a));
            abs[1]
        };
        assert!(matches!(
            supervised_pca(&x, &y, second, 3),
            Err(Error::InsufficientRank { survivors: 2, components: 3 })
        ));
    }

    #[test]
    fn quantiles_interpolate() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&d, 0.0), 1.0);
        assert_eq!(quantile_sorted(&d, 1.0), 4.0);
        assert_abs_diff_eq!(quantile_sorted(&d, 0.5), 2.5);
        assert_abs_diff_eq!(quantile_sorted(&d, 0.1), 1.3);
    }

    #[test]
    fn oracle_checks_design() {
        let sim = generate(&SimSpec::single_latent(2.0, 1)).unwrap();
        let pred = oracle_predict(&sim.truth, &sim.test).unwrap();
        assert_eq!(pred.len(), sim.test.nrows());
        let mut stripped = sim.test.clone();
        stripped.latent = None;
        assert!(matches!(oracle_predict(&sim.truth, &stripped), Err(Error::DesignMismatch(_))));
    }

    #[test]
    fn independent_oracle_error_matches_noise_variance() {
        let sim = generate(&SimSpec::single_indep(5.0, 2)).unwrap();
        let pred = oracle_predict(&sim.truth, &sim.test).unwrap();
        let r = &sim.test.y - &pred;
        let mse = r.dot(&r) / r.len() as f64;
        assert!((mse / sim.truth.e_y2 - 1.0).abs() < 0.1, "{mse} vs {}", sim.truth.e_y2);
    }
}
