//! Multi-assay sparse factor fitting.
//!
//! With assays `X_1..X_K` observed on the same rows and `X_{K+1}` their
//! column-wise concatenation, the criterion is
//!
//! ```text
//! ‖y − Σ_{k≤K+1} β_k X_k v_k‖² + Σ_{k≤K} w_k ‖X_k − X_k v_k α_kᵀ − X_{K+1} v_{K+1} γ_kᵀ‖_F²
//! ```
//!
//! subject to `‖v_k‖₁ ≤ c_k` and unit-norm `α_k`, `γ_k`. Each assay gets its
//! own factor `U_k = X_k v_k`; `U_{K+1} = X_{K+1} v_{K+1}` is shared by all
//! of them. One cycle updates `β` (least squares on the scores), every
//! `α_k`, every `γ_k`, then `v_1..v_K` and finally `v_{K+1}`.
//!
//! [`fit_multi_general`] lets each assay carry `s_k` specific factors and the
//! concatenation `s_{K+1}` common ones, optionally forcing `A_kᵀΓ_k = 0`.
//!
//! Index `K` (zero-based) always refers to the common factor.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{MultiAssaySet, Response};
use crate::error::{ensure_finite, Error, Result};
use crate::lasso::{self, CovarianceLasso, SparseCoefficients};
use crate::linalg;
use crate::procrustes::procrustes_from_cross;
use crate::single::{relative_change, unit_or_degenerate, DEGENERATE_TOL, POWER_MAX_ITER, POWER_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiSfmConfig {
    /// Reconstruction weight per assay (length K).
    pub w: Vec<f64>,
    /// L1 bound per sparse vector, common factor last (length K + 1).
    pub c: Vec<f64>,
    /// Factors per assay plus common factors (length K + 1). Empty means all 1.
    #[serde(default)]
    pub ranks: Vec<usize>,
    /// Force `A_kᵀΓ_k = 0` in the general fit.
    #[serde(default)]
    pub joint_orthogonal: bool,
    #[serde(default = "default_max_outer_iters")]
    pub max_outer_iters: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_outer_iters() -> usize {
    200
}

fn default_rel_tol() -> f64 {
    1e-7
}

impl MultiSfmConfig {
    /// Same `w` for every assay and same `c` for every sparse vector.
    pub fn uniform(assays: usize, w: f64, c: f64) -> Self {
        MultiSfmConfig {
            w: vec![w; assays],
            c: vec![c; assays + 1],
            ranks: Vec::new(),
            joint_orthogonal: false,
            max_outer_iters: default_max_outer_iters(),
            rel_tol: default_rel_tol(),
            seed: 0,
        }
    }

    pub fn assays(&self) -> usize {
        self.w.len()
    }

    /// Ranks with the empty default expanded.
    pub fn ranks(&self) -> Vec<usize> {
        if self.ranks.is_empty() {
            vec![1; self.w.len() + 1]
        } else {
            self.ranks.clone()
        }
    }

    pub fn validate(&self, assays: usize) -> Result<()> {
        if self.w.len() != assays {
            return Err(Error::InvalidArgument(format!(
                "w has {} entries for {assays} assays",
                self.w.len()
            )));
        }
        if self.c.len() != assays + 1 {
            return Err(Error::InvalidArgument(format!(
                "c has {} entries, expected {}",
                self.c.len(),
                assays + 1
            )));
        }
        if !self.ranks.is_empty() && self.ranks.len() != assays + 1 {
            return Err(Error::InvalidArgument(format!(
                "ranks has {} entries, expected {}",
                self.ranks.len(),
                assays + 1
            )));
        }
        if let Some(w) = self.w.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!("w must be positive, got {w}")));
        }
        if let Some(c) = self.c.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument(format!("c must be positive, got {c}")));
        }
        if self.ranks.contains(&0) {
            return Err(Error::InvalidArgument("ranks must be at least 1".into()));
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

/// Parameters of the one-factor-per-block model.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiState {
    /// `K + 1` sparse vectors; the last lives on the concatenation.
    pub v: Vec<Array1<f64>>,
    pub alpha: Vec<Array1<f64>>,
    pub gamma: Vec<Array1<f64>>,
    /// Length `K + 1`.
    pub beta: Array1<f64>,
}

impl MultiState {
    /// Latent scores `[X_1 v_1, .., X_K v_K, X_{K+1} v_{K+1}]` as columns.
    pub fn scores(&self, assays: &[ArrayView2<'_, f64>]) -> Result<Array2<f64>> {
        check_state(assays, self)?;
        let xc = concat_views(assays)?;
        Ok(scores_of(assays, xc.view(), &self.v))
    }
}

#[derive(Debug, Clone)]
pub struct MultiAssayFit {
    /// `K + 1` sparse vectors; the last is over the concatenated columns.
    pub v: Vec<SparseCoefficients>,
    pub alpha: Vec<Array1<f64>>,
    pub gamma: Vec<Array1<f64>>,
    /// Length `K + 1`, every entry nonnegative.
    pub beta: Array1<f64>,
    /// `n x (K + 1)`.
    pub latent_scores: Array2<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl MultiAssayFit {
    /// Coefficients on the concatenated standardized features.
    pub fn coefficients(&self) -> Array1<f64> {
        let k = self.alpha.len();
        let common = self.v[k].values();
        let mut out = &common * self.beta[k];
        let mut start = 0;
        for (block, v) in self.v[..k].iter().enumerate() {
            let end = start + v.len();
            out.slice_mut(s![start..end]).scaled_add(self.beta[block], &v.values());
            start = end;
        }
        out
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    pub fn predict(&self, raw: &[Array2<f64>], set: &MultiAssaySet, y: &Response) -> Result<Array1<f64>> {
        predict_multi(self.coefficients().view(), raw, set, y)
    }
}

/// Parameters of the general model with `s_k` factors per block.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralState {
    /// `K + 1` matrices `p_k x s_k`; the last is `p_{K+1} x s_{K+1}`.
    pub v: Vec<Array2<f64>>,
    /// `p_k x s_k`, orthonormal columns.
    pub a: Vec<Array2<f64>>,
    /// `p_k x s_{K+1}`, orthonormal columns.
    pub gamma: Vec<Array2<f64>>,
    /// `K + 1` coefficient blocks.
    pub beta: Vec<Array1<f64>>,
}

#[derive(Debug, Clone)]
pub struct GeneralMultiFit {
    pub v: Vec<Array2<f64>>,
    pub a: Vec<Array2<f64>>,
    pub gamma: Vec<Array2<f64>>,
    pub beta: Vec<Array1<f64>>,
    pub joint_orthogonal: bool,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl GeneralMultiFit {
    pub fn coefficients(&self) -> Array1<f64> {
        let k = self.a.len();
        let mut out = self.v[k].dot(&self.beta[k]);
        let mut start = 0;
        for block in 0..k {
            let part = self.v[block].dot(&self.beta[block]);
            let end = start + part.len();
            out.slice_mut(s![start..end]).scaled_add(1.0, &part);
            start = end;
        }
        out
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    pub fn predict(&self, raw: &[Array2<f64>], set: &MultiAssaySet, y: &Response) -> Result<Array1<f64>> {
        predict_multi(self.coefficients().view(), raw, set, y)
    }
}

/// Standardize raw blocks with the training parameters and apply
/// concatenated-space coefficients; predictions come back in response units.
pub fn predict_multi(
    coefficients: ArrayView1<'_, f64>,
    raw: &[Array2<f64>],
    set: &MultiAssaySet,
    y: &Response,
) -> Result<Array1<f64>> {
    let total: usize = set.widths().iter().sum();
    if coefficients.len() != total {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {total} concatenated columns",
            coefficients.len()
        )));
    }
    let blocks = set.transform(raw)?;
    let n = blocks[0].nrows();
    if let Some(bad) = blocks.iter().position(|b| b.nrows() != n) {
        return Err(Error::DimensionMismatch(format!(
            "assay {bad} has {} rows, assay 0 has {n}",
            blocks[bad].nrows()
        )));
    }
    let mut pred = Array1::zeros(n);
    let mut start = 0;
    for b in &blocks {
        let end = start + b.ncols();
        pred += &b.dot(&coefficients.slice(s![start..end]));
        start = end;
    }
    Ok(y.inverse_transform(pred.view()))
}

fn concat_views(assays: &[ArrayView2<'_, f64>]) -> Result<Array2<f64>> {
    if assays.is_empty() {
        return Err(Error::EmptyInput { rows: 0, cols: 0 });
    }
    let n = assays[0].nrows();
    for (k, a) in assays.iter().enumerate() {
        if a.nrows() != n {
            return Err(Error::RowMismatch {
                assay: k,
                expected: n,
                found: a.nrows(),
            });
        }
    }
    concatenate(Axis(1), assays).map_err(|e| Error::DimensionMismatch(e.to_string()))
}

fn scores_of(assays: &[ArrayView2<'_, f64>], xc: ArrayView2<'_, f64>, v: &[Array1<f64>]) -> Array2<f64> {
    let k = assays.len();
    let mut u = Array2::zeros((xc.nrows(), k + 1));
    for (block, x) in assays.iter().enumerate() {
        u.column_mut(block).assign(&x.dot(&v[block]));
    }
    u.column_mut(k).assign(&xc.dot(&v[k]));
    u
}

fn check_state(assays: &[ArrayView2<'_, f64>], state: &MultiState) -> Result<()> {
    let k = assays.len();
    if state.v.len() != k + 1 || state.alpha.len() != k || state.gamma.len() != k || state.beta.len() != k + 1 {
        return Err(Error::DimensionMismatch(format!(
            "state does not describe {k} assays"
        )));
    }
    let total: usize = assays.iter().map(|a| a.ncols()).sum();
    for (block, x) in assays.iter().enumerate() {
        let p = x.ncols();
        if state.v[block].len() != p || state.alpha[block].len() != p || state.gamma[block].len() != p {
            return Err(Error::DimensionMismatch(format!(
                "assay {block} has {p} columns but its parameters do not"
            )));
        }
    }
    if state.v[k].len() != total {
        return Err(Error::DimensionMismatch(format!(
            "common vector has {} entries, concatenation has {total} columns",
            state.v[k].len()
        )));
    }
    for v in state.v.iter().chain(&state.alpha).chain(&state.gamma) {
        ensure_finite(v.iter())?;
    }
    ensure_finite(state.beta.iter())
}

/// `‖X − B Cᵀ‖_F²` expanded so that only `X C` is formed.
fn recon_sq(xx: f64, x: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, c: ArrayView2<'_, f64>) -> f64 {
    let xc = x.dot(&c);
    let cross: f64 = (&xc * &b).sum();
    let quad: f64 = (&b.t().dot(&b) * &c.t().dot(&c)).sum();
    xx - 2.0 * cross + quad
}

fn pair(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    ndarray::stack(Axis(1), &[a, b]).expect("equal lengths")
}

fn rank_one_objective(
    assays: &[ArrayView2<'_, f64>],
    xx: &[f64],
    y: ArrayView1<'_, f64>,
    u: ArrayView2<'_, f64>,
    state: &MultiState,
    w: &[f64],
) -> f64 {
    let k = assays.len();
    let resid = &y - &u.dot(&state.beta);
    let mut total = resid.dot(&resid);
    for block in 0..k {
        let b = pair(u.column(block), u.column(k));
        let c = pair(state.alpha[block].view(), state.gamma[block].view());
        total += w[block] * recon_sq(xx[block], assays[block], b.view(), c.view());
    }
    total
}

/// `‖y − Σ β_k X_k v_k‖² + Σ w_k ‖X_k − X_k v_k α_kᵀ − X_{K+1} v_{K+1} γ_kᵀ‖_F²`.
pub fn multi_objective(
    assays: &[ArrayView2<'_, f64>],
    y: ArrayView1<'_, f64>,
    state: &MultiState,
    w: &[f64],
) -> Result<f64> {
    check_state(assays, state)?;
    ensure_finite(y.iter().chain(w))?;
    for (block, x) in assays.iter().enumerate() {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "assay {block} has {} rows, y has {}",
                x.nrows(),
                y.len()
            )));
        }
        ensure_finite(x.iter())?;
    }
    if w.len() != assays.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} assays",
            w.len(),
            assays.len()
        )));
    }
    let xc = concat_views(assays)?;
    let u = scores_of(assays, xc.view(), &state.v);
    let xx: Vec<f64> = assays.iter().map(|x| linalg::frobenius_sq(*x)).collect();
    Ok(rank_one_objective(assays, &xx, y, u.view(), state, w))
}

/// Least-squares coefficients of `y` on the score columns (no intercept).
pub fn beta_step_multi(y: ArrayView1<'_, f64>, scores: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    linalg::least_squares(scores, y)
}

/// `α_k = (X_k − U_{K+1} γ_kᵀ)ᵀ U_k`, normalized.
pub fn alpha_step_multi(
    x_k: ArrayView2<'_, f64>,
    u_k: ArrayView1<'_, f64>,
    u_common: ArrayView1<'_, f64>,
    gamma_k: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    let mut cross = x_k.t().dot(&u_k);
    cross.scaled_add(-u_common.dot(&u_k), &gamma_k);
    unit_or_degenerate(cross, 0, 0)
}

/// `γ_k = (X_k − U_k α_kᵀ)ᵀ U_{K+1}`, normalized.
pub fn gamma_step_multi(
    x_k: ArrayView2<'_, f64>,
    u_k: ArrayView1<'_, f64>,
    alpha_k: ArrayView1<'_, f64>,
    u_common: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    let mut cross = x_k.t().dot(&u_common);
    cross.scaled_add(-u_k.dot(&u_common), &alpha_k);
    unit_or_degenerate(cross, 0, 0)
}

/// Synthetic response whose bound-form LASSO on `X_k` is the `v_k` update:
///
/// ```text
/// u = [β_k y − Σ_{k'≠k} β_k β_{k'} U_{k'} + w_k X_k α_k − w_k U_{K+1} α_kᵀγ_k] / (w_k + β_k²)
/// ```
pub fn v_k_response(
    k: usize,
    assays: &[ArrayView2<'_, f64>],
    y: ArrayView1<'_, f64>,
    scores: ArrayView2<'_, f64>,
    state: &MultiState,
    w: &[f64],
) -> Result<Array1<f64>> {
    let kk = assays.len();
    if k >= kk {
        return Err(Error::InvalidArgument(format!("assay index {k} out of range for {kk} assays")));
    }
    let bk = state.beta[k];
    let denom = w[k] + bk * bk;
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument("w_k + β_k² must be positive".into()));
    }
    let mut num = &y * bk;
    for j in (0..=kk).filter(|&j| j != k) {
        num.scaled_add(-bk * state.beta[j], &scores.column(j));
    }
    num.scaled_add(w[k], &assays[k].dot(&state.alpha[k]));
    num.scaled_add(-w[k] * state.alpha[k].dot(&state.gamma[k]), &scores.column(kk));
    Ok(num / denom)
}

/// Synthetic response for the common vector:
///
/// ```text
/// u = [β_{K+1} y − Σ_{k≤K} β_{K+1} β_k U_k + Σ_k w_k X_k γ_k − Σ_k w_k U_k α_kᵀγ_k] / (β_{K+1}² + Σ_k w_k)
/// ```
///
/// Each `X_k γ_k` is an `n`-vector; the sums run over assays.
pub fn v_common_response(
    assays: &[ArrayView2<'_, f64>],
    y: ArrayView1<'_, f64>,
    scores: ArrayView2<'_, f64>,
    state: &MultiState,
    w: &[f64],
) -> Result<Array1<f64>> {
    let kk = assays.len();
    let bc = state.beta[kk];
    let denom = bc * bc + w.iter().sum::<f64>();
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument("β_{K+1}² + Σ w_k must be positive".into()));
    }
    let mut num = &y * bc;
    for k in 0..kk {
        num.scaled_add(-bc * state.beta[k], &scores.column(k));
        num.scaled_add(w[k], &assays[k].dot(&state.gamma[k]));
        num.scaled_add(-w[k] * state.alpha[k].dot(&state.gamma[k]), &scores.column(k));
    }
    Ok(num / denom)
}

/// Bound-form LASSO update of `v_k` with everything else fixed.
pub fn v_k_step(
    k: usize,
    assays: &[ArrayView2<'_, f64>],
    y: ArrayView1<'_, f64>,
    state: &MultiState,
    w: &[f64],
    c_k: f64,
) -> Result<SparseCoefficients> {
    let scores = state.scores(assays)?;
    let u = v_k_response(k, assays, y, scores.view(), state, w)?;
    lasso::solve_bound(assays[k], u.view(), c_k)
}

/// Bound-form LASSO update of the common vector on the concatenation.
pub fn v_common_step(
    assays: &[ArrayView2<'_, f64>],
    y: ArrayView1<'_, f64>,
    state: &MultiState,
    w: &[f64],
    c_common: f64,
) -> Result<SparseCoefficients> {
    let scores = state.scores(assays)?;
    let u = v_common_response(assays, y, scores.view(), state, w)?;
    let xc = concat_views(assays)?;
    lasso::solve_bound(xc.view(), u.view(), c_common)
}

/// Precomputed data for repeated multi-assay fits on the same standardized blocks.
#[derive(Debug, Clone)]
pub struct MultiProblem {
    blocks: Vec<Array2<f64>>,
    xc: Array2<f64>,
    y: Array1<f64>,
    xx: Vec<f64>,
    /// One solver per assay, then the concatenation.
    solvers: Vec<CovarianceLasso>,
}

impl MultiProblem {
    pub fn new(assays: &[ArrayView2<'_, f64>], y: ArrayView1<'_, f64>) -> Result<Self> {
        let xc = concat_views(assays)?;
        if xc.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "assays have {} rows, y has {}",
                xc.nrows(),
                y.len()
            )));
        }
        ensure_finite(xc.iter())?;
        ensure_finite(y.iter())?;
        let gram_c = linalg::gram(xc.view());
        let mut solvers = Vec::with_capacity(assays.len() + 1);
        let mut start = 0;
        for x in assays {
            let end = start + x.ncols();
            solvers.push(CovarianceLasso::from_gram(
                gram_c.slice(s![start..end, start..end]).to_owned(),
            ));
            start = end;
        }
        solvers.push(CovarianceLasso::from_gram(gram_c));
        Ok(MultiProblem {
            blocks: assays.iter().map(|a| a.to_owned()).collect(),
            xx: assays.iter().map(|a| linalg::frobenius_sq(*a)).collect(),
            xc,
            y: y.to_owned(),
            solvers,
        })
    }

    pub fn from_set(set: &MultiAssaySet, y: &Response) -> Result<Self> {
        check_standardized_set(set, y)?;
        let views: Vec<_> = set.assays().iter().map(|a| a.values()).collect();
        Self::new(&views, y.values())
    }

    pub fn assays(&self) -> usize {
        self.blocks.len()
    }

    fn views(&self) -> Vec<ArrayView2<'_, f64>> {
        self.blocks.iter().map(|b| b.view()).collect()
    }

    fn design(&self, block: usize) -> ArrayView2<'_, f64> {
        if block < self.blocks.len() {
            self.blocks[block].view()
        } else {
            self.xc.view()
        }
    }

    /// First `ranks[k]` principal-component loadings of each block.
    pub fn initial_loadings(&self, ranks: &[usize]) -> Vec<Array2<f64>> {
        self.solvers
            .iter()
            .zip(ranks)
            .map(|(s, &r)| linalg::power_iteration(s.gram(), r, POWER_MAX_ITER, POWER_TOL))
            .collect()
    }

    /// Starting point of the rank-one fit: principal-component `v`'s, `α_k`
    /// from the Procrustes step with `γ_k = 0`, then `γ_k` from its step.
    pub fn initial_state(&self) -> Result<MultiState> {
        let k = self.assays();
        let loadings = self.initial_loadings(&vec![1; k + 1]);
        let v: Vec<Array1<f64>> = loadings.iter().map(|l| l.column(0).to_owned()).collect();
        let views = self.views();
        let u = scores_of(&views, self.xc.view(), &v);
        let mut alpha = Vec::with_capacity(k);
        let mut gamma = Vec::with_capacity(k);
        for block in 0..k {
            let zero = Array1::zeros(self.blocks[block].ncols());
            let a = alpha_step_multi(views[block], u.column(block), u.column(k), zero.view())
                .map_err(|_| Error::DegenerateFactor { factor: block, iteration: 0 })?;
            let g = gamma_step_multi(views[block], u.column(block), a.view(), u.column(k))
                .map_err(|_| Error::DegenerateFactor { factor: k, iteration: 0 })?;
            alpha.push(a);
            gamma.push(g);
        }
        let beta = beta_step_multi(self.y.view(), u.view())?;
        Ok(MultiState { v, alpha, gamma, beta })
    }

    /// L1 norms of the unconstrained (minimum-norm least-squares) `v`-step
    /// solutions at the initial state, one per sparse vector.
    pub fn unconstrained_l1(&self, w: &[f64]) -> Result<Vec<f64>> {
        let state = self.initial_state()?;
        let views = self.views();
        let u = scores_of(&views, self.xc.view(), &state.v);
        let k = self.assays();
        let mut out = Vec::with_capacity(k + 1);
        for block in 0..k {
            let r = v_k_response(block, &views, self.y.view(), u.view(), &state, w)?;
            out.push(linalg::l1_norm(linalg::min_norm_least_squares(views[block], r.view()).view()));
        }
        let r = v_common_response(&views, self.y.view(), u.view(), &state, w)?;
        out.push(linalg::l1_norm(linalg::min_norm_least_squares(self.xc.view(), r.view()).view()));
        Ok(out)
    }

    pub fn fit(&self, config: &MultiSfmConfig) -> Result<MultiAssayFit> {
        config.validate(self.assays())?;
        if config.ranks().iter().any(|&r| r != 1) {
            return Err(Error::InvalidArgument(
                "fit_multi handles rank one; use fit_multi_general for other ranks".into(),
            ));
        }
        let init = self.initial_state()?;
        self.fit_from(init, config)
    }

    fn check_scores(u: ArrayView2<'_, f64>, iteration: usize) -> Result<()> {
        for (factor, col) in u.axis_iter(Axis(1)).enumerate() {
            if !(linalg::l2_norm(col) >= DEGENERATE_TOL) {
                return Err(Error::DegenerateFactor { factor, iteration });
            }
        }
        Ok(())
    }

    /// Rank-one fit from a given state; only its `v`'s and `γ`'s are used.
    pub fn fit_from(&self, init: MultiState, config: &MultiSfmConfig) -> Result<MultiAssayFit> {
        config.validate(self.assays())?;
        let views = self.views();
        check_state(&views, &init)?;
        let k = self.assays();
        let w = &config.w;
        let y = self.y.view();
        let mut state = init;
        let mut u = scores_of(&views, self.xc.view(), &state.v);
        let mut feasible = false;
        let mut trace: Vec<f64> = Vec::new();
        let mut converged = false;
        let mut iterations = 0;

        for it in 1..=config.max_outer_iters {
            iterations = it;
            Self::check_scores(u.view(), it)?;
            state.beta = beta_step_multi(y, u.view())?;
            for block in 0..k {
                state.alpha[block] =
                    alpha_step_multi(views[block], u.column(block), u.column(k), state.gamma[block].view())
                        .map_err(|_| Error::DegenerateFactor { factor: block, iteration: it })?;
            }
            for block in 0..k {
                state.gamma[block] =
                    gamma_step_multi(views[block], u.column(block), state.alpha[block].view(), u.column(k))
                        .map_err(|_| Error::DegenerateFactor { factor: k, iteration: it })?;
            }
            for block in 0..=k {
                let resp = if block < k {
                    v_k_response(block, &views, y, u.view(), &state, w)?
                } else {
                    v_common_response(&views, y, u.view(), &state, w)?
                };
                let design = self.design(block);
                let xtu = design.t().dot(&resp);
                let step = self.solvers[block].solve_bound(xtu.view(), config.c[block])?;
                let cand = step.coefficients.into_values();
                let before = rank_one_objective(&views, &self.xx, y, u.view(), &state, w);
                let old_v = std::mem::replace(&mut state.v[block], cand);
                let old_u = u.column(block).to_owned();
                u.column_mut(block).assign(&design.dot(&state.v[block]));
                let after = rank_one_objective(&views, &self.xx, y, u.view(), &state, w);
                // once the state is feasible, never accept an uphill step
                if feasible && before < after {
                    state.v[block] = old_v;
                    u.column_mut(block).assign(&old_u);
                }
            }
            feasible = true;
            let obj = rank_one_objective(&views, &self.xx, y, u.view(), &state, w);
            let done = trace.last().is_some_and(|&prev| relative_change(prev, obj) <= config.rel_tol);
            trace.push(obj);
            if done {
                converged = true;
                break;
            }
        }

        for block in 0..k {
            if state.beta[block] < 0.0 {
                state.beta[block] = -state.beta[block];
                state.v[block].mapv_inplace(|x| -x);
                state.alpha[block].mapv_inplace(|x| -x);
                u.column_mut(block).mapv_inplace(|x| -x);
            }
        }
        if state.beta[k] < 0.0 {
            state.beta[k] = -state.beta[k];
            state.v[k].mapv_inplace(|x| -x);
            for g in &mut state.gamma {
                g.mapv_inplace(|x| -x);
            }
            u.column_mut(k).mapv_inplace(|x| -x);
        }

        Ok(MultiAssayFit {
            v: state.v.into_iter().map(SparseCoefficients::new).collect(),
            alpha: state.alpha,
            gamma: state.gamma,
            beta: state.beta,
            latent_scores: u,
            objective_trace: trace,
            converged,
            iterations,
        })
    }

    fn general_scores(&self, v: &[Array2<f64>]) -> Vec<Array2<f64>> {
        (0..v.len()).map(|b| self.design(b).dot(&v[b])).collect()
    }

    fn general_objective(&self, u: &[Array2<f64>], state: &GeneralState, w: &[f64]) -> f64 {
        let k = self.assays();
        let mut resid = self.y.clone();
        for b in 0..=k {
            resid -= &u[b].dot(&state.beta[b]);
        }
        let mut total = resid.dot(&resid);
        for b in 0..k {
            let bm = concatenate(Axis(1), &[u[b].view(), u[k].view()]).expect("same rows");
            let cm = concatenate(Axis(1), &[state.a[b].view(), state.gamma[b].view()]).expect("same rows");
            total += w[b] * recon_sq(self.xx[b], self.blocks[b].view(), bm.view(), cm.view());
        }
        total
    }

    fn loadings_step(&self, u: &[Array2<f64>], state: &mut GeneralState, joint: bool) -> Result<()> {
        let k = self.assays();
        if joint {
            for b in 0..k {
                let s_b = u[b].ncols();
                let stacked = concatenate(Axis(1), &[u[b].view(), u[k].view()]).expect("same rows");
                let rot = procrustes_from_cross(self.blocks[b].t().dot(&stacked).view())?.rotation;
                state.a[b] = rot.slice(s![.., ..s_b]).to_owned();
                state.gamma[b] = rot.slice(s![.., s_b..]).to_owned();
            }
        } else {
            for b in 0..k {
                let mut cross = self.blocks[b].t().dot(&u[b]);
                cross -= &state.gamma[b].dot(&u[k].t().dot(&u[b]));
                state.a[b] = procrustes_from_cross(cross.view())?.rotation;
            }
            for b in 0..k {
                let mut cross = self.blocks[b].t().dot(&u[k]);
                cross -= &state.a[b].dot(&u[b].t().dot(&u[k]));
                state.gamma[b] = procrustes_from_cross(cross.view())?.rotation;
            }
        }
        Ok(())
    }

    fn general_initial_state(&self, ranks: &[usize], joint: bool) -> Result<GeneralState> {
        let k = self.assays();
        let v = self.initial_loadings(ranks);
        let u = self.general_scores(&v);
        let mut state = GeneralState {
            a: (0..k).map(|b| Array2::zeros((self.blocks[b].ncols(), ranks[b]))).collect(),
            gamma: (0..k).map(|b| Array2::zeros((self.blocks[b].ncols(), ranks[k]))).collect(),
            beta: ranks.iter().map(|&r| Array1::zeros(r)).collect(),
            v,
        };
        self.loadings_step(&u, &mut state, joint)?;
        Ok(state)
    }

    /// General fit with `ranks[k]` factors per block.
    pub fn fit_general(&self, config: &MultiSfmConfig) -> Result<GeneralMultiFit> {
        let k = self.assays();
        config.validate(k)?;
        let ranks = config.ranks();
        let total: usize = self.xc.ncols();
        for b in 0..=k {
            let p = if b < k { self.blocks[b].ncols() } else { total };
            let need = if config.joint_orthogonal && b < k { ranks[b] + ranks[k] } else { ranks[b] };
            if need > p {
                return Err(Error::InvalidArgument(format!(
                    "block {b} has {p} columns but needs {need} orthonormal loadings"
                )));
            }
        }
        let init = self.general_initial_state(&ranks, config.joint_orthogonal)?;
        self.fit_general_from(init, config)
    }

    pub fn fit_general_from(&self, init: GeneralState, config: &MultiSfmConfig) -> Result<GeneralMultiFit> {
        let k = self.assays();
        config.validate(k)?;
        let w = &config.w;
        let mut state = init;
        let mut u = self.general_scores(&state.v);
        let mut feasible = false;
        let mut trace: Vec<f64> = Vec::new();
        let mut converged = false;
        let mut iterations = 0;

        for it in 1..=config.max_outer_iters {
            iterations = it;
            for (b, ub) in u.iter().enumerate() {
                for col in ub.axis_iter(Axis(1)) {
                    if !(linalg::l2_norm(col) >= DEGENERATE_TOL) {
                        return Err(Error::DegenerateFactor { factor: b, iteration: it });
                    }
                }
            }
            let all: Vec<ArrayView2<'_, f64>> = u.iter().map(|m| m.view()).collect();
            let design = concatenate(Axis(1), &all).expect("same rows");
            let beta = linalg::least_squares(design.view(), self.y.view())?;
            let mut start = 0;
            for b in 0..=k {
                let end = start + u[b].ncols();
                state.beta[b] = beta.slice(s![start..end]).to_owned();
                start = end;
            }
            self.loadings_step(&u, &mut state, config.joint_orthogonal)?;

            for b in 0..=k {
                for j in 0..state.v[b].ncols() {
                    let resp = self.general_response(b, j, &u, &state, w);
                    let xtu = self.design(b).t().dot(&resp);
                    let step = self.solvers[b].solve_bound(xtu.view(), config.c[b])?;
                    let cand = step.coefficients.into_values();
                    let before = self.general_objective(&u, &state, w);
                    let old_v = state.v[b].column(j).to_owned();
                    let old_u = u[b].column(j).to_owned();
                    let new_u = self.design(b).dot(&cand);
                    state.v[b].column_mut(j).assign(&cand);
                    u[b].column_mut(j).assign(&new_u);
                    let after = self.general_objective(&u, &state, w);
                    if feasible && before < after {
                        state.v[b].column_mut(j).assign(&old_v);
                        u[b].column_mut(j).assign(&old_u);
                    }
                }
            }
            feasible = true;
            let obj = self.general_objective(&u, &state, w);
            let done = trace.last().is_some_and(|&prev| relative_change(prev, obj) <= config.rel_tol);
            trace.push(obj);
            if done {
                converged = true;
                break;
            }
        }

        for b in 0..k {
            for j in 0..state.beta[b].len() {
                if state.beta[b][j] < 0.0 {
                    state.beta[b][j] = -state.beta[b][j];
                    state.v[b].column_mut(j).mapv_inplace(|x| -x);
                    state.a[b].column_mut(j).mapv_inplace(|x| -x);
                }
            }
        }
        for j in 0..state.beta[k].len() {
            if state.beta[k][j] < 0.0 {
                state.beta[k][j] = -state.beta[k][j];
                state.v[k].column_mut(j).mapv_inplace(|x| -x);
                for g in &mut state.gamma {
                    g.column_mut(j).mapv_inplace(|x| -x);
                }
            }
        }
        Ok(GeneralMultiFit {
            v: state.v,
            a: state.a,
            gamma: state.gamma,
            beta: state.beta,
            joint_orthogonal: config.joint_orthogonal,
            objective_trace: trace,
            converged,
            iterations,
        })
    }

    /// Synthetic response for column `j` of block `b` in the general model.
    fn general_response(&self, b: usize, j: usize, u: &[Array2<f64>], state: &GeneralState, w: &[f64]) -> Array1<f64> {
        let k = self.assays();
        let bj = state.beta[b][j];
        // y minus every fitted term except this column's own
        let mut partial = self.y.clone();
        for (blk, ub) in u.iter().enumerate() {
            partial -= &ub.dot(&state.beta[blk]);
        }
        partial.scaled_add(bj, &u[b].column(j));
        let mut num = &partial * bj;
        let mut denom = bj * bj;
        // Σ over assays of w · (X − other outer products) · loading
        let mut add_target = |blk: usize, load: ArrayView1<'_, f64>, skip_own: bool, skip_common: bool| {
            let mut t = self.blocks[blk].dot(&load);
            for i in 0..u[blk].ncols() {
                if !(skip_own && i == j) {
                    t.scaled_add(-state.a[blk].column(i).dot(&load), &u[blk].column(i));
                }
            }
            for i in 0..u[k].ncols() {
                if !(skip_common && i == j) {
                    t.scaled_add(-state.gamma[blk].column(i).dot(&load), &u[k].column(i));
                }
            }
            num.scaled_add(w[blk], &t);
            denom += w[blk] * load.dot(&load);
        };
        if b < k {
            add_target(b, state.a[b].column(j), true, false);
        } else {
            for blk in 0..k {
                add_target(blk, state.gamma[blk].column(j), false, true);
            }
        }
        num / denom
    }
}

fn check_standardized_set(set: &MultiAssaySet, y: &Response) -> Result<()> {
    if set.assays().iter().any(|a| !a.is_standardized()) || !y.is_standardized() {
        return Err(Error::InvalidArgument("fit expects standardized assays and response".into()));
    }
    if set.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "assays have {} rows, y has {}",
            set.nrows(),
            y.len()
        )));
    }
    Ok(())
}

/// Rank-one multi-assay fit from the principal-component initialization.
pub fn fit_multi(set: &MultiAssaySet, y: &Response, config: &MultiSfmConfig) -> Result<MultiAssayFit> {
    MultiProblem::from_set(set, y)?.fit(config)
}

/// Multi-assay fit with `config.ranks` factors per block.
pub fn fit_multi_general(set: &MultiAssaySet, y: &Response, config: &MultiSfmConfig) -> Result<GeneralMultiFit> {
    MultiProblem::from_set(set, y)?.fit_general(config)
}
