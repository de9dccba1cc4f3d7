//! K-fold cross-validation shared by the factor fits and the baselines.
//!
//! Each fold re-standardizes its training rows and maps the held-out rows
//! through those parameters, so nothing about the validation rows leaks into
//! the fit. Every method in this crate predicts linearly in standardized
//! space, so a fold fit is summarized by one coefficient vector per grid
//! point. A grid point whose fit fails scores an infinite validation error.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_columns, standardize, AssayMatrix, MultiAssaySet, Response};
use crate::error::{Error, Result};
use crate::lasso::geometric_grid;
use crate::multi::{MultiAssayFit, MultiProblem, MultiSfmConfig};
use crate::single::{SfmConfig, SingleFactorFit, SingleProblem};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_GRID_LEN: usize = 20;
/// Smallest `c` on the factor-fit grid, as a fraction of `c_max`.
pub const C_GRID_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
    pub grid_len: usize,
    pub seed: u64,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            folds: DEFAULT_FOLDS,
            grid_len: DEFAULT_GRID_LEN,
            seed: 0,
        }
    }
}

/// Fold label of every row; a pure function of `(n, folds, seed)`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= folds <= n, got {folds} folds for {n} rows"
        )));
    }
    let mixed = seed ^ (n as u64).rotate_left(32) ^ (folds as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut out = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        out[row] = pos % folds;
    }
    Ok(out)
}

/// One training/validation split, standardized on the training rows.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub x: AssayMatrix,
    pub y: Response,
    /// Validation rows mapped through the training standardization.
    pub x_val: Array2<f64>,
    /// Validation responses on the caller's scale.
    pub y_val: Array1<f64>,
}

impl FoldData {
    pub fn split(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, assignment: &[usize], fold: usize) -> Result<Self> {
        let train: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] != fold).collect();
        let val: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] == fold).collect();
        let xt = x.select(ndarray::Axis(0), &train);
        let yt = y.select(ndarray::Axis(0), &train);
        let xs = standardize(xt.view())?;
        let ys = Response::standardize(yt.view())?;
        let x_val = xs.transform(x.select(ndarray::Axis(0), &val).view())?;
        Ok(FoldData {
            x: xs,
            y: ys,
            x_val,
            y_val: y.select(ndarray::Axis(0), &val),
        })
    }

    pub fn validation_mse(&self, coefficients: ArrayView1<'_, f64>) -> f64 {
        let pred = self.y.inverse_transform(self.x_val.dot(&coefficients).view());
        let resid = &self.y_val - &pred;
        resid.dot(&resid) / resid.len() as f64
    }
}

/// Mean validation error over folds for each grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub grid: Vec<f64>,
    pub mean_mse: Vec<f64>,
    /// Index of the first minimizer.
    pub best: usize,
}

impl CvCurve {
    pub fn best_value(&self) -> f64 {
        self.grid[self.best]
    }
}

/// Run `fit_fold` on every fold and average validation errors per grid value.
///
/// `fit_fold` must return one coefficient vector (in the fold's standardized
/// space) per grid value, in grid order.
pub fn cross_validate<F>(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    settings: &CvSettings,
    grid: &[f64],
    fit_fold: F,
) -> Result<CvCurve>
where
    F: Fn(&FoldData) -> Vec<Result<Array1<f64>>> + Sync,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("cross-validation grid is empty".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, y has {}",
            x.nrows(),
            y.len()
        )));
    }
    let assignment = fold_assignment(y.len(), settings.folds, settings.seed)?;
    let per_fold: Vec<(Vec<f64>, Option<Error>)> = (0..settings.folds)
        .into_par_iter()
        .map(|fold| {
            let data = match FoldData::split(x, y, &assignment, fold) {
                Ok(d) => d,
                Err(e) => return (vec![f64::INFINITY; grid.len()], Some(e)),
            };
            let fits = fit_fold(&data);
            assert_eq!(fits.len(), grid.len(), "fold fit must cover the grid");
            let mut first_err = None;
            let mse = fits
                .into_iter()
                .map(|r| match r {
                    Ok(coef) => {
                        let m = data.validation_mse(coef.view());
                        if m.is_finite() {
                            m
                        } else {
                            f64::INFINITY
                        }
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                        f64::INFINITY
                    }
                })
                .collect();
            (mse, first_err)
        })
        .collect();

    let mut mean_mse = vec![0.0; grid.len()];
    for (mse, _) in &per_fold {
        for (acc, m) in mean_mse.iter_mut().zip(mse) {
            *acc += m / settings.folds as f64;
        }
    }
    let mut best: Option<usize> = None;
    for (i, m) in mean_mse.iter().enumerate() {
        if m.is_finite() && best.is_none_or(|b| *m < mean_mse[b]) {
            best = Some(i);
        }
    }
    match best {
        Some(best) => Ok(CvCurve {
            grid: grid.to_vec(),
            mean_mse,
            best,
        }),
        None => Err(per_fold
            .into_iter()
            .find_map(|(_, e)| e)
            .unwrap_or_else(|| Error::InvalidArgument("no grid value produced a finite validation error".into()))),
    }
}

/// Ascending geometric grid from `ratio·max` to `max`.
pub fn ascending_grid(max: f64, ratio: f64, len: usize) -> Vec<f64> {
    let mut g = geometric_grid(max, ratio, len);
    g.reverse();
    g
}

#[derive(Debug, Clone)]
pub struct SfmSelection {
    pub fit: SingleFactorFit,
    pub c_max: f64,
    pub curve: CvCurve,
}

/// Choose `c` for the rank-one fit by cross-validation, then refit on all rows.
///
/// The grid runs geometrically from `0.1·c_max` to `c_max`, where `c_max` is
/// the L1 norm of the unconstrained first `v`-step on the full data.
pub fn sfm_cv(x: &AssayMatrix, y: &Response, base: &SfmConfig, settings: &CvSettings) -> Result<SfmSelection> {
    if !x.is_standardized() || !y.is_standardized() {
        return Err(Error::InvalidArgument("cross-validation expects standardized data".into()));
    }
    base.validate()?;
    let problem = SingleProblem::new(x.values(), y.values())?;
    let init = problem.initial_loadings(1);
    let c_max = problem.unconstrained_l1(base.w, init.column(0))?;
    let grid = ascending_grid(c_max, C_GRID_RATIO, settings.grid_len);
    let curve = cross_validate(x.values(), y.values(), settings, &grid, |fold| {
        let p = match SingleProblem::new(fold.x.values(), fold.y.values()) {
            Ok(p) => p,
            Err(e) => return fail_all(&grid, e),
        };
        let start = p.initial_loadings(1);
        grid.iter()
            .map(|&c| {
                p.fit_from(start.column(0), &SfmConfig { c, ..*base })
                    .map(|f| f.coefficients())
            })
            .collect()
    })?;
    let fit = problem.fit_from(init.column(0), &SfmConfig { c: curve.best_value(), ..*base })?;
    Ok(SfmSelection { fit, c_max, curve })
}

#[derive(Debug, Clone)]
pub struct MultiSfmSelection {
    pub fit: MultiAssayFit,
    /// Per-vector `c_max`, common vector last.
    pub c_max: Vec<f64>,
    /// Chosen bounds, `scale · c_max`.
    pub c: Vec<f64>,
    /// Grid over the common scale.
    pub curve: CvCurve,
}

/// Choose a common scale `s` with `c_k = s·c_max_k` by cross-validation.
pub fn sfm_multi_cv(
    set: &MultiAssaySet,
    y: &Response,
    base: &MultiSfmConfig,
    settings: &CvSettings,
) -> Result<MultiSfmSelection> {
    let problem = MultiProblem::from_set(set, y)?;
    base.validate(set.len())?;
    let c_max = problem.unconstrained_l1(&base.w)?;
    let grid = ascending_grid(1.0, C_GRID_RATIO, settings.grid_len);
    let widths = set.widths();
    let scaled = |s: f64| MultiSfmConfig {
        c: c_max.iter().map(|c| c * s).collect(),
        ..base.clone()
    };
    let x = set.concatenated();
    let curve = cross_validate(x.values(), y.values(), settings, &grid, |fold| {
        let blocks = match split_columns(fold.x.values(), &widths) {
            Ok(b) => b,
            Err(e) => return fail_all(&grid, e),
        };
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        let prepared = MultiProblem::new(&views, fold.y.values()).and_then(|p| p.initial_state().map(|s| (p, s)));
        let (p, start) = match prepared {
            Ok(v) => v,
            Err(e) => return fail_all(&grid, e),
        };
        grid.iter()
            .map(|&s| p.fit_from(start.clone(), &scaled(s)).map(|f| f.coefficients()))
            .collect()
    })?;
    let config = scaled(curve.best_value());
    let fit = problem.fit_from(problem.initial_state()?, &config)?;
    Ok(MultiSfmSelection {
        fit,
        c_max,
        c: config.c,
        curve,
    })
}

pub(crate) fn fail_all(grid: &[f64], e: Error) -> Vec<Result<Array1<f64>>> {
    let msg = e.to_string();
    let mut out = vec![Err(e)];
    out.extend((1..grid.len()).map(|_| Err(Error::InvalidArgument(msg.clone()))));
    out
}
