//! Single-assay sparse factor fitting.
//!
//! The criterion is
//!
//! ```text
//! ‖y − X v β‖₂² + w ‖X − X v αᵀ‖_F²    s.t. ‖v‖₁ ≤ c, ‖α‖₂ = 1
//! ```
//!
//! minimized by cycling through three exact block updates: `β` by
//! univariate regression on the scores `Xv`, `α` by a rank-one Procrustes
//! rotation, and `v` by a bound-form LASSO against the synthetic response
//! `u = (wXα + βy) / (w + β²)`. Large `w` pushes the fit toward sparse PCA;
//! the RSS term is what makes the factor supervised.
//!
//! Both `X` and `y` are expected to be standardized, which absorbs the
//! intercepts of the latent factor model.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{AssayMatrix, Response};
use crate::error::{ensure_finite, Error, Result};
use crate::lasso::{CovarianceLasso, SparseCoefficients};
use crate::linalg;
use crate::procrustes::procrustes_from_cross;

/// Scores with norm below this are treated as a collapsed factor.
pub const DEGENERATE_TOL: f64 = 1e-12;
pub(crate) const POWER_MAX_ITER: usize = 1000;
pub(crate) const POWER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfmConfig {
    /// Weight on the reconstruction error of `X`.
    pub w: f64,
    /// L1 bound on each sparse weight vector.
    pub c: f64,
    pub rank: usize,
    pub max_outer_iters: usize,
    /// Stop when the relative objective decrease drops below this.
    pub rel_tol: f64,
    /// Seeds cross-validation fold assignment; fitting itself is deterministic.
    pub seed: u64,
}

impl Default for SfmConfig {
    fn default() -> Self {
        SfmConfig {
            w: 0.2,
            c: 1.0,
            rank: 1,
            max_outer_iters: 200,
            rel_tol: 1e-7,
            seed: 0,
        }
    }
}

impl SfmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::InvalidArgument(format!("w must be positive, got {}", self.w)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("c must be positive, got {}", self.c)));
        }
        if self.rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SingleFactorFit {
    pub v: SparseCoefficients,
    /// Unit-norm loading vector.
    pub alpha: Array1<f64>,
    /// Always reported nonnegative.
    pub beta: f64,
    /// `X v` on the training data.
    pub latent_scores: Array1<f64>,
    /// Objective after each completed cycle.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Dual parameter of the final v-step.
    pub lambda: f64,
}

impl SingleFactorFit {
    /// Linear coefficients in standardized space, `v β`.
    pub fn coefficients(&self) -> Array1<f64> {
        &self.v.values() * self.beta
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    pub fn predict(&self, x_new: ArrayView2<'_, f64>, x_train: &AssayMatrix, y_train: &Response) -> Result<Array1<f64>> {
        predict(self.coefficients().view(), x_new, x_train, y_train)
    }
}

#[derive(Debug, Clone)]
pub struct RankRFit {
    /// `p x r`; each column obeys the L1 bound.
    pub v: Array2<f64>,
    /// `p x r` with orthonormal columns.
    pub a: Array2<f64>,
    pub beta: Array1<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl RankRFit {
    pub fn coefficients(&self) -> Array1<f64> {
        self.v.dot(&self.beta)
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    pub fn predict(&self, x_new: ArrayView2<'_, f64>, x_train: &AssayMatrix, y_train: &Response) -> Result<Array1<f64>> {
        predict(self.coefficients().view(), x_new, x_train, y_train)
    }
}

/// Map raw rows through the training standardization, apply standardized
/// coefficients, and return predictions in response units.
pub fn predict(
    coefficients: ArrayView1<'_, f64>,
    x_new: ArrayView2<'_, f64>,
    x_train: &AssayMatrix,
    y_train: &Response,
) -> Result<Array1<f64>> {
    if coefficients.len() != x_train.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} training columns",
            coefficients.len(),
            x_train.ncols()
        )));
    }
    let z = x_train.transform(x_new)?;
    Ok(y_train.inverse_transform(z.dot(&coefficients).view()))
}

pub(crate) fn check_xy(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, y has {}",
            x.nrows(),
            y.len()
        )));
    }
    ensure_finite(x.iter())?;
    ensure_finite(y.iter())
}

/// `‖y − Xvβ‖₂² + w‖X − Xvαᵀ‖_F²`, evaluated directly.
pub fn objective(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    v: ArrayView1<'_, f64>,
    alpha: ArrayView1<'_, f64>,
    beta: f64,
    w: f64,
) -> Result<f64> {
    check_xy(x, y)?;
    ensure_finite(v.iter().chain(alpha.iter()).chain([beta, w].iter()))?;
    let scores = x.dot(&v);
    let rss: f64 = y
        .iter()
        .zip(scores.iter())
        .map(|(a, b)| (a - b * beta).powi(2))
        .sum();
    let outer = scores
        .view()
        .insert_axis(Axis(1))
        .dot(&alpha.insert_axis(Axis(0)));
    let recon = linalg::frobenius_sq((&x - &outer).view());
    Ok(rss + w * recon)
}

/// `β* = (Xv)ᵀy / ‖Xv‖²`.
pub fn beta_step(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
    check_xy(x, y)?;
    let scores = x.dot(&v);
    let ss = scores.dot(&scores);
    if !(ss.sqrt() >= DEGENERATE_TOL) {
        return Err(Error::DegenerateFactor { factor: 0, iteration: 0 });
    }
    Ok(scores.dot(&y) / ss)
}

/// `α* = XᵀXv / ‖XᵀXv‖`, the rank-one Procrustes solution.
pub fn alpha_step(x: ArrayView2<'_, f64>, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let scores = x.dot(&v);
    let cross = x.t().dot(&scores);
    unit_or_degenerate(cross, 0, 0)
}

pub(crate) fn unit_or_degenerate(v: Array1<f64>, factor: usize, iteration: usize) -> Result<Array1<f64>> {
    let norm = linalg::l2_norm(v.view());
    if !(norm >= DEGENERATE_TOL) {
        return Err(Error::DegenerateFactor { factor, iteration });
    }
    Ok(v / norm)
}

/// `u = (wXα + βy) / (w + β²)`.
pub fn synthetic_response(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    alpha: ArrayView1<'_, f64>,
    beta: f64,
    w: f64,
) -> Result<Array1<f64>> {
    check_xy(x, y)?;
    let denom = w + beta * beta;
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument("w + β² must be positive".into()));
    }
    Ok((x.dot(&alpha) * w + &y * beta) / denom)
}

/// Bound-form LASSO of the synthetic response on `X`.
pub fn v_step(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    alpha: ArrayView1<'_, f64>,
    beta: f64,
    w: f64,
    c: f64,
) -> Result<SparseCoefficients> {
    let u = synthetic_response(x, y, alpha, beta, w)?;
    crate::lasso::solve_bound(x, u.view(), c)
}

/// Precomputed sufficient statistics of one standardized `(X, y)` pair.
///
/// All fits against the same data (different `c`, different ranks) can share
/// one of these, including the principal-component initialization.
#[derive(Debug, Clone)]
pub struct SingleProblem {
    x: Array2<f64>,
    y: Array1<f64>,
    xty: Array1<f64>,
    yy: f64,
    xx: f64,
    solver: CovarianceLasso,
}

impl SingleProblem {
    pub fn new(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Self> {
        check_xy(x, y)?;
        Ok(SingleProblem {
            x: x.to_owned(),
            y: y.to_owned(),
            xty: x.t().dot(&y),
            yy: y.dot(&y),
            xx: linalg::frobenius_sq(x),
            solver: CovarianceLasso::new(x),
        })
    }

    pub fn nfeatures(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    fn gram(&self) -> ArrayView2<'_, f64> {
        self.solver.gram()
    }

    /// First `r` principal-component loadings (power iteration on `XᵀX`).
    pub fn initial_loadings(&self, r: usize) -> Array2<f64> {
        linalg::power_iteration(self.gram(), r, POWER_MAX_ITER, POWER_TOL)
    }

    fn objective_from(
        &self,
        v: ArrayView1<'_, f64>,
        gv: ArrayView1<'_, f64>,
        galpha: ArrayView1<'_, f64>,
        beta: f64,
        w: f64,
    ) -> f64 {
        let vgv = v.dot(&gv);
        let rss = self.yy - 2.0 * beta * v.dot(&self.xty) + beta * beta * vgv;
        let recon = self.xx - 2.0 * v.dot(&galpha) + vgv;
        rss + w * recon
    }

    /// L1 norm of the unconstrained (minimum-norm least-squares) v-step
    /// solution taken from the starting point `init`.
    pub fn unconstrained_l1(&self, w: f64, init: ArrayView1<'_, f64>) -> Result<f64> {
        let gv = self.gram().dot(&init);
        let ss = init.dot(&gv);
        if !(ss.sqrt() >= DEGENERATE_TOL) {
            return Err(Error::DegenerateFactor { factor: 0, iteration: 0 });
        }
        let beta = init.dot(&self.xty) / ss;
        let alpha = unit_or_degenerate(gv, 0, 0)?;
        let u = synthetic_response(self.x.view(), self.y.view(), alpha.view(), beta, w)?;
        let v = linalg::min_norm_least_squares(self.x.view(), u.view());
        Ok(linalg::l1_norm(v.view()))
    }

    /// Rank-one fit from a given starting `v`.
    pub fn fit_from(&self, init: ArrayView1<'_, f64>, config: &SfmConfig) -> Result<SingleFactorFit> {
        config.validate()?;
        let (w, c) = (config.w, config.c);
        let gram = self.gram();
        let mut v = init.to_owned();
        let mut feasible = false;
        let mut lambda = 0.0;
        let mut trace: Vec<f64> = Vec::new();
        let mut converged = false;
        let mut alpha = Array1::zeros(v.len());
        let mut beta = 0.0;
        let mut iterations = 0;

        for it in 1..=config.max_outer_iters {
            iterations = it;
            let gv = gram.dot(&v);
            let ss = v.dot(&gv);
            if !(ss.sqrt() >= DEGENERATE_TOL) {
                return Err(Error::DegenerateFactor { factor: 0, iteration: it });
            }
            beta = v.dot(&self.xty) / ss;
            alpha = unit_or_degenerate(gv.clone(), 0, it)?;
            let galpha = gram.dot(&alpha);

            let xtu = (&galpha * w + &self.xty * beta) / (w + beta * beta);
            let step = self.solver.solve_bound(xtu.view(), c)?;
            let cand = step.coefficients.into_values();
            let g_cand = gram.dot(&cand);
            let f_cand = self.objective_from(cand.view(), g_cand.view(), galpha.view(), beta, w);
            let f_old = self.objective_from(v.view(), gv.view(), galpha.view(), beta, w);
            // after the first cycle the current v is feasible; never step uphill
            let obj = if feasible && f_old < f_cand {
                f_old
            } else {
                v = cand;
                lambda = step.lambda;
                f_cand
            };
            feasible = true;
            let done = trace.last().is_some_and(|&prev| relative_change(prev, obj) <= config.rel_tol);
            trace.push(obj);
            if done {
                converged = true;
                break;
            }
        }

        if beta < 0.0 {
            beta = -beta;
            v.mapv_inplace(|x| -x);
            alpha.mapv_inplace(|x| -x);
        }
        let latent_scores = self.x.dot(&v);
        Ok(SingleFactorFit {
            v: SparseCoefficients::new(v),
            alpha,
            beta,
            latent_scores,
            objective_trace: trace,
            converged,
            iterations,
            lambda,
        })
    }

    /// Objective of the rank-r criterion from Gram-space quantities.
    fn rank_objective(&self, v: ArrayView2<'_, f64>, gv: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>, beta: ArrayView1<'_, f64>, w: f64) -> f64 {
        let vgv = v.t().dot(&gv);
        let rss = self.yy - 2.0 * beta.dot(&v.t().dot(&self.xty)) + beta.dot(&vgv.dot(&beta));
        let ata = a.t().dot(&a);
        let cross_tr: f64 = (&a * &gv).sum();
        let quad_tr: f64 = (&vgv * &ata).sum();
        rss + w * (self.xx - 2.0 * cross_tr + quad_tr)
    }

    /// Rank-r fit from starting columns `init` (`p x r`).
    pub fn fit_rank_from(&self, init: ArrayView2<'_, f64>, config: &SfmConfig) -> Result<RankRFit> {
        config.validate()?;
        let (w, c) = (config.w, config.c);
        let r = init.ncols();
        let gram = self.gram();
        let mut v = init.to_owned();
        let mut a = Array2::zeros(v.dim());
        let mut beta = Array1::zeros(r);
        let mut feasible = false;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;

        for it in 1..=config.max_outer_iters {
            iterations = it;
            let mut gv = gram.dot(&v);
            let vgv = v.t().dot(&gv);
            for k in 0..r {
                if !(vgv[[k, k]].max(0.0).sqrt() >= DEGENERATE_TOL) {
                    return Err(Error::DegenerateFactor { factor: k, iteration: it });
                }
            }
            beta = linalg::solve_spd(vgv.view(), v.t().dot(&self.xty).view())?;
            a = procrustes_from_cross(gv.view())?.rotation;
            let ga = gram.dot(&a);
            let ata = a.t().dot(&a);

            for k in 0..r {
                let bk = beta[k];
                // Xᵀ of the partial residual y − Σ_{j≠k} β_j X V_j
                let mut xtr = self.xty.clone();
                // Xᵀ of the reconstruction target (X − Σ_{j≠k} X V_j A_jᵀ) A_k
                let mut xte = ga.column(k).to_owned();
                for j in (0..r).filter(|&j| j != k) {
                    xtr.scaled_add(-beta[j], &gv.column(j));
                    xte.scaled_add(-ata[[j, k]], &gv.column(j));
                }
                let denom = w * ata[[k, k]] + bk * bk;
                let xtu = (&xtr * bk + &xte * w) / denom;
                let step = self.solver.solve_bound(xtu.view(), c)?;
                let cand = step.coefficients.into_values();
                let g_cand = gram.dot(&cand);

                let before = self.rank_objective(v.view(), gv.view(), a.view(), beta.view(), w);
                let old_col = v.column(k).to_owned();
                let old_g = gv.column(k).to_owned();
                v.column_mut(k).assign(&cand);
                gv.column_mut(k).assign(&g_cand);
                let after = self.rank_objective(v.view(), gv.view(), a.view(), beta.view(), w);
                if feasible && before < after {
                    v.column_mut(k).assign(&old_col);
                    gv.column_mut(k).assign(&old_g);
                }
            }
            feasible = true;
            let obj = self.rank_objective(v.view(), gv.view(), a.view(), beta.view(), w);
            let done = trace.last().is_some_and(|&prev| relative_change(prev, obj) <= config.rel_tol);
            trace.push(obj);
            if done {
                converged = true;
                break;
            }
        }

        for k in 0..r {
            if beta[k] < 0.0 {
                beta[k] = -beta[k];
                v.column_mut(k).mapv_inplace(|x| -x);
                a.column_mut(k).mapv_inplace(|x| -x);
            }
        }
        Ok(RankRFit {
            v,
            a,
            beta,
            objective_trace: trace,
            converged,
            iterations,
        })
    }
}

pub(crate) fn relative_change(prev: f64, next: f64) -> f64 {
    (prev - next).abs() / prev.abs().max(f64::MIN_POSITIVE)
}

pub(crate) fn check_standardized(x: &AssayMatrix, y: &Response) -> Result<()> {
    if !x.is_standardized() || !y.is_standardized() {
        return Err(Error::InvalidArgument("fit expects standardized X and y".into()));
    }
    Ok(())
}

/// Rank-one fit initialized at the first principal-component loadings.
pub fn fit(x: &AssayMatrix, y: &Response, config: &SfmConfig) -> Result<SingleFactorFit> {
    check_standardized(x, y)?;
    if config.rank != 1 {
        return Err(Error::InvalidArgument(format!(
            "fit handles rank 1; use fit_rank_r for rank {}",
            config.rank
        )));
    }
    let problem = SingleProblem::new(x.values(), y.values())?;
    let init = problem.initial_loadings(1);
    problem.fit_from(init.column(0), config)
}

/// Rank-r fit initialized at the first `r` principal-component loadings.
pub fn fit_rank_r(x: &AssayMatrix, y: &Response, config: &SfmConfig) -> Result<RankRFit> {
    check_standardized(x, y)?;
    config.validate()?;
    if config.rank > x.nrows().min(x.ncols()) {
        return Err(Error::InvalidArgument(format!(
            "rank {} exceeds min(n, p) = {}",
            config.rank,
            x.nrows().min(x.ncols())
        )));
    }
    let problem = SingleProblem::new(x.values(), y.values())?;
    let init = problem.initial_loadings(config.rank);
    problem.fit_rank_from(init.view(), config)
}
