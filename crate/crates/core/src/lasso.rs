//! LASSO / elastic net by coordinate descent, and the L1-ball (bound) form.
//!
//! The penalized objective is
//!
//! ```text
//! ‖u − Xv‖₂² + λ · (α‖v‖₁ + (1 − α)/2 · ‖v‖₂²)
//! ```
//!
//! with no `1/2n` factor, so `α = 1` is exactly `‖u − Xv‖₂² + λ‖v‖₁` and
//! every `λ ≥ 2·max_j |X_jᵀu|` yields the zero vector.
//!
//! The bound form `min ‖u − Xv‖₂² s.t. ‖v‖₁ ≤ c` is the Lagrangian solution
//! at the largest `λ` whose L1 norm does not exceed `c`. The LASSO path is
//! piecewise linear in `λ`, so that `λ` is found exactly by following the
//! path from `λ_max` knot by knot and interpolating inside the piece where
//! `‖v(λ)‖₁` crosses `c`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg;

/// Sparse coefficient vector with its support and L1 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoefficients {
    values: Array1<f64>,
    support: Vec<usize>,
    l1_norm: f64,
}

impl SparseCoefficients {
    pub fn new(values: Array1<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| j)
            .collect();
        let l1_norm = linalg::l1_norm(values.view());
        SparseCoefficients {
            values,
            support,
            l1_norm,
        }
    }

    pub fn zeros(p: usize) -> Self {
        Self::new(Array1::zeros(p))
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array1<f64> {
        self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Convergence controls for the coordinate-descent solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Largest per-sweep coefficient change treated as converged.
    pub coef_tol: f64,
    /// KKT residual bound, relative to `max(1, ‖Xᵀu‖∞)`.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    /// Cap on knots visited by the bound-form path search.
    pub max_path_steps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            coef_tol: 1e-9,
            kkt_tol: 1e-8,
            max_sweeps: 10_000,
            max_path_steps: 20_000,
        }
    }
}

/// A penalized least-squares problem `‖target − design·v‖² + λ·penalty(v)`.
#[derive(Debug, Clone, Copy)]
pub struct PenalizedProblem<'a> {
    pub design: ArrayView2<'a, f64>,
    pub target: ArrayView1<'a, f64>,
    pub l1_weight: f64,
    /// 1 is pure LASSO, 0 is ridge.
    pub l2_mix: f64,
}

impl PenalizedProblem<'_> {
    fn validate(&self) -> Result<()> {
        if self.design.nrows() != self.target.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, target has {}",
                self.design.nrows(),
                self.target.len()
            )));
        }
        if !(self.l1_weight >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "l1 weight must be nonnegative, got {}",
                self.l1_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.l2_mix) {
            return Err(Error::InvalidArgument(format!(
                "mixing parameter must lie in [0, 1], got {}",
                self.l2_mix
            )));
        }
        ensure_finite(self.design.iter())?;
        ensure_finite(self.target.iter())
    }
}

/// Result of a bound-form solve.
#[derive(Debug, Clone)]
pub struct BoundSolution {
    pub coefficients: SparseCoefficients,
    /// Dual parameter at which the returned solution was computed
    /// (0 when the constraint is inactive).
    pub lambda: f64,
}

/// Coordinate-descent solver working from the Gram matrix `XᵀX`.
///
/// Everything after construction depends on the design only through the
/// Gram matrix and on the target only through `Xᵀu`, so one solver can be
/// reused for many targets against the same design.
#[derive(Debug, Clone)]
pub struct CovarianceLasso {
    gram: Array2<f64>,
    settings: SolverSettings,
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

impl CovarianceLasso {
    pub fn new(design: ArrayView2<'_, f64>) -> Self {
        Self::from_gram(linalg::gram(design))
    }

    pub fn from_gram(gram: Array2<f64>) -> Self {
        CovarianceLasso {
            gram,
            settings: SolverSettings::default(),
        }
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn gram(&self) -> ArrayView2<'_, f64> {
        self.gram.view()
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    /// Smallest `λ` whose solution is identically zero.
    pub fn lambda_max(&self, xtu: ArrayView1<'_, f64>, l2_mix: f64) -> f64 {
        let m = xtu.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if l2_mix > 0.0 {
            2.0 * m / l2_mix
        } else {
            f64::INFINITY
        }
    }

    /// Minimize the penalized objective given `Xᵀu`, optionally warm-started.
    pub fn solve(
        &self,
        xtu: ArrayView1<'_, f64>,
        lambda: f64,
        l2_mix: f64,
        warm: Option<ArrayView1<'_, f64>>,
    ) -> Result<Array1<f64>> {
        let p = self.dim();
        let mut v = match warm {
            Some(w) => w.to_owned(),
            None => Array1::zeros(p),
        };
        let l1 = lambda * l2_mix;
        let l2 = lambda * (1.0 - l2_mix);
        let scale = xtu.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        let kkt_tol = self.settings.kkt_tol * scale;
        // grad_j = X_jᵀ(u − Xv)
        let mut grad = &xtu - &self.gram.dot(&v);
        for sweep in 0..self.settings.max_sweeps {
            let mut max_change = 0.0_f64;
            for j in 0..p {
                let gjj = self.gram[[j, j]];
                let old = v[j];
                let new = if gjj <= 0.0 {
                    0.0
                } else {
                    let rho = grad[j] + gjj * old;
                    soft_threshold(2.0 * rho, l1) / (2.0 * gjj + l2)
                };
                if new != old {
                    let delta = new - old;
                    grad.scaled_add(-delta, &self.gram.row(j));
                    v[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < self.settings.coef_tol {
                grad = &xtu - &self.gram.dot(&v);
                if kkt_from_gradient(grad.view(), v.view(), lambda, l2_mix) <= kkt_tol {
                    return Ok(v);
                }
            }
            if sweep % 64 == 63 {
                // refresh to stop rounding drift in the running gradient
                grad = &xtu - &self.gram.dot(&v);
            }
        }
        Err(Error::NoConvergence(self.settings.max_sweeps))
    }

    /// `min ‖u − Xv‖² s.t. ‖v‖₁ ≤ c` given `Xᵀu`.
    ///
    /// Follows the Lagrangian path down from `λ_max` one linear piece at a
    /// time (a variable joins or leaves the support at each knot) and stops
    /// inside the piece where `‖v(λ)‖₁` reaches `c`, interpolating `λ` there.
    /// If the path ends (`λ = 0`, or the support Gram turns singular) first,
    /// the constraint is inactive and the end point is returned.
    pub fn solve_bound(&self, xtu: ArrayView1<'_, f64>, c: f64) -> Result<BoundSolution> {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!("L1 bound must be positive, got {c}")));
        }
        let (v, mu) = self.follow_path(xtu, 0.0, PathStop::L1Norm(c))?;
        Ok(BoundSolution {
            coefficients: SparseCoefficients::new(v),
            lambda: 2.0 * mu,
        })
    }

    /// Penalized solution at `λ` by following the path exactly, without
    /// coordinate descent. Used where descent stalls (tiny `λ`, `p > n`).
    pub fn solve_exact(&self, xtu: ArrayView1<'_, f64>, lambda: f64, l2_mix: f64) -> Result<Array1<f64>> {
        if !(lambda >= 0.0) || !(0.0..=1.0).contains(&l2_mix) {
            return Err(Error::InvalidArgument(format!(
                "need λ ≥ 0 and mixing in [0, 1], got {lambda} and {l2_mix}"
            )));
        }
        // the ridge part folds into the Gram diagonal
        let ridge = lambda * (1.0 - l2_mix) / 2.0;
        let (v, _) = self.follow_path(xtu, ridge, PathStop::Mu(lambda * l2_mix / 2.0))?;
        Ok(v)
    }

    /// Coordinate descent, falling back to [`Self::solve_exact`] when it
    /// exhausts its sweeps.
    pub fn solve_or_follow(
        &self,
        xtu: ArrayView1<'_, f64>,
        lambda: f64,
        l2_mix: f64,
        warm: Option<ArrayView1<'_, f64>>,
    ) -> Result<Array1<f64>> {
        match self.solve(xtu, lambda, l2_mix, warm) {
            Err(Error::NoConvergence(_)) => self.solve_exact(xtu, lambda, l2_mix),
            other => other,
        }
    }

    /// Path of `min ‖u − Xv‖² + ridge‖v‖² + 2μ‖v‖₁` from `μ = max|Xᵀu|`
    /// downward. Returns the stopping point and its `μ`.
    fn follow_path(&self, xtu: ArrayView1<'_, f64>, ridge: f64, stop: PathStop) -> Result<(Array1<f64>, f64)> {
        ensure_finite(xtu.iter())?;
        let p = self.dim();
        let mut v: Array1<f64> = Array1::zeros(p);
        // corr_j = X_jᵀ(u − Xv) − ridge·v_j; on the support corr_j = μ·sign(v_j)
        let mut corr = xtu.to_owned();
        let mut mu = corr.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        let mu_target = match stop {
            PathStop::Mu(m) => m,
            PathStop::L1Norm(_) => 0.0,
        };
        if mu <= mu_target {
            return Ok((v, mu_target));
        }
        let tiny = mu * 1e-13;
        let mut chol = ActiveCholesky::default();
        let mut signs: Vec<f64> = Vec::new();
        let mut in_active = vec![false; p];
        // joiners that are linear combinations of the support never enter
        let mut excluded = vec![false; p];
        for j in 0..p {
            if self.gram[[j, j]] > 0.0 && corr[j].abs() >= mu - tiny {
                if chol.push(self.gram.view(), ridge, j) {
                    signs.push(corr[j].signum());
                    in_active[j] = true;
                } else {
                    excluded[j] = true;
                }
            }
        }
        let mut norm = 0.0;
        // a variable that just left may not re-enter with its old sign
        let mut just_dropped: Option<(usize, f64)> = None;

        for _ in 0..self.settings.max_path_steps {
            let active = chol.active.clone();
            let d = chol.solve(&signs);
            if d.iter().any(|x| !x.is_finite()) {
                break;
            }
            let slope: f64 = signs.iter().zip(&d).map(|(s, x)| s * x).sum();
            // a_j = G_{jA} d: rate at which corr_j falls as μ falls
            let mut a = Array1::zeros(p);
            for (k, &j) in active.iter().enumerate() {
                a.scaled_add(d[k], &self.gram.row(j));
            }

            enum Event {
                End,
                Join(usize, f64),
                Drop(usize),
            }
            let mut t_star = mu - mu_target;
            let mut event = Event::End;
            for j in 0..p {
                if in_active[j] || excluded[j] || self.gram[[j, j]] <= 0.0 {
                    continue;
                }
                if a[j] < 1.0 && just_dropped != Some((j, 1.0)) {
                    let t = (mu - corr[j]) / (1.0 - a[j]);
                    if t > 0.0 && t < t_star {
                        t_star = t;
                        event = Event::Join(j, 1.0);
                    }
                }
                if a[j] > -1.0 && just_dropped != Some((j, -1.0)) {
                    let t = (mu + corr[j]) / (1.0 + a[j]);
                    if t > 0.0 && t < t_star {
                        t_star = t;
                        event = Event::Join(j, -1.0);
                    }
                }
            }
            for (k, &j) in active.iter().enumerate() {
                if d[k] != 0.0 {
                    let t = -v[j] / d[k];
                    if t > 0.0 && t < t_star {
                        t_star = t;
                        event = Event::Drop(k);
                    }
                }
            }

            if let PathStop::L1Norm(c) = stop {
                if slope > 0.0 && norm + slope * t_star >= c {
                    let t = ((c - norm) / slope).max(0.0);
                    for (k, &j) in active.iter().enumerate() {
                        v[j] += t * d[k];
                    }
                    return Ok((v, mu - t));
                }
            }

            for (k, &j) in active.iter().enumerate() {
                v[j] += t_star * d[k];
            }
            mu -= t_star;
            just_dropped = None;
            match event {
                Event::End => return Ok((v, mu_target)),
                Event::Join(j, s) => {
                    if chol.push(self.gram.view(), ridge, j) {
                        signs.push(s);
                        in_active[j] = true;
                    } else {
                        excluded[j] = true;
                    }
                }
                Event::Drop(k) => {
                    let j = chol.remove(k);
                    let s = signs.remove(k);
                    in_active[j] = false;
                    v[j] = 0.0;
                    just_dropped = Some((j, s));
                    // a smaller support may no longer explain them
                    excluded.fill(false);
                }
            }
            norm = linalg::l1_norm(v.view());
            // recompute from scratch so rounding does not accumulate
            corr.assign(&xtu);
            for &j in &chol.active {
                corr.scaled_add(-v[j], &self.gram.row(j));
                corr[j] -= ridge * v[j];
            }
        }
        match stop {
            // the support cannot grow further: nothing is left to explain
            PathStop::L1Norm(c) if norm <= c + 1e-8 => Ok((v, mu)),
            PathStop::L1Norm(c) => Err(Error::BisectionFailure(format!(
                "path search stopped with L1 norm {norm} above bound {c}"
            ))),
            PathStop::Mu(_) => Err(Error::NoConvergence(self.settings.max_path_steps)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum PathStop {
    L1Norm(f64),
    Mu(f64),
}

/// Cholesky factor `L Lᵀ = G_AA` of the support Gram matrix, kept up to date
/// as indices join (bordering) and leave (Givens rotations).
#[derive(Debug, Default)]
struct ActiveCholesky {
    active: Vec<usize>,
    /// Row `i` holds `L[i, 0..=i]`.
    rows: Vec<Vec<f64>>,
}

impl ActiveCholesky {
    /// Returns false, leaving the factor untouched, when `G_jj` is (nearly)
    /// explained by the current support.
    fn push(&mut self, gram: ArrayView2<'_, f64>, ridge: f64, j: usize) -> bool {
        let m = self.active.len();
        let mut w = Vec::with_capacity(m + 1);
        for i in 0..m {
            let row = &self.rows[i];
            let dot: f64 = row[..i].iter().zip(&w).map(|(l, x)| l * x).sum();
            w.push((gram[[self.active[i], j]] - dot) / row[i]);
        }
        let gjj = gram[[j, j]] + ridge;
        let rest = gjj - w.iter().map(|x| x * x).sum::<f64>();
        if !(rest > 1e-10 * gjj) {
            return false;
        }
        w.push(rest.sqrt());
        self.rows.push(w);
        self.active.push(j);
        true
    }

    fn remove(&mut self, k: usize) -> usize {
        let j = self.active.remove(k);
        self.rows.remove(k);
        let m = self.active.len();
        for col in k..m {
            let a = self.rows[col][col];
            let b = self.rows[col][col + 1];
            let r = a.hypot(b);
            let (cs, sn) = (a / r, b / r);
            for i in col..m {
                let x = self.rows[i][col];
                let y = self.rows[i][col + 1];
                self.rows[i][col] = cs * x + sn * y;
                self.rows[i][col + 1] = -sn * x + cs * y;
            }
        }
        for (i, row) in self.rows.iter_mut().enumerate().skip(k) {
            row.truncate(i + 1);
        }
        j
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = self.active.len();
        let mut z = Vec::with_capacity(m);
        for i in 0..m {
            let row = &self.rows[i];
            let dot: f64 = row[..i].iter().zip(&z).map(|(l, x)| l * x).sum();
            z.push((rhs[i] - dot) / row[i]);
        }
        for i in (0..m).rev() {
            let mut acc = z[i];
            for (r, zr) in self.rows[i + 1..].iter().zip(&z[i + 1..]) {
                acc -= r[i] * zr;
            }
            z[i] = acc / self.rows[i][i];
        }
        z
    }
}

fn kkt_from_gradient(grad: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>, lambda: f64, l2_mix: f64) -> f64 {
    let l1 = lambda * l2_mix;
    let l2 = lambda * (1.0 - l2_mix);
    grad.iter()
        .zip(v.iter())
        .map(|(&g, &vj)| {
            // stationarity: −2g + l1·∂|v_j| + l2·v_j ∋ 0
            let g2 = 2.0 * g - l2 * vj;
            if vj != 0.0 {
                (g2 - l1 * vj.signum()).abs()
            } else {
                (g2.abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Largest violation of the optimality conditions of the penalized objective.
pub fn kkt_residual(
    design: ArrayView2<'_, f64>,
    target: ArrayView1<'_, f64>,
    v: ArrayView1<'_, f64>,
    lambda: f64,
    l2_mix: f64,
) -> f64 {
    let resid = &target - &design.dot(&v);
    let grad = design.t().dot(&resid);
    kkt_from_gradient(grad.view(), v, lambda, l2_mix)
}

/// Solve the penalized problem from a cold start.
pub fn solve_lagrangian(problem: &PenalizedProblem<'_>) -> Result<SparseCoefficients> {
    problem.validate()?;
    let solver = CovarianceLasso::new(problem.design);
    let xtu = problem.design.t().dot(&problem.target);
    solver
        .solve_or_follow(xtu.view(), problem.l1_weight, problem.l2_mix, None)
        .map(SparseCoefficients::new)
}

/// Least squares over the L1 ball of radius `c`.
pub fn solve_bound(
    design: ArrayView2<'_, f64>,
    target: ArrayView1<'_, f64>,
    c: f64,
) -> Result<SparseCoefficients> {
    PenalizedProblem {
        design,
        target,
        l1_weight: 0.0,
        l2_mix: 1.0,
    }
    .validate()?;
    let solver = CovarianceLasso::new(design);
    let xtu = design.t().dot(&target);
    solver.solve_bound(xtu.view(), c).map(|s| s.coefficients)
}

/// Warm-started solutions along a strictly descending `λ` grid.
pub fn elastic_net_path(
    design: ArrayView2<'_, f64>,
    target: ArrayView1<'_, f64>,
    l2_mix: f64,
    lambda_grid: &[f64],
) -> Result<Vec<SparseCoefficients>> {
    PenalizedProblem {
        design,
        target,
        l1_weight: 0.0,
        l2_mix,
    }
    .validate()?;
    check_grid(lambda_grid)?;
    let solver = CovarianceLasso::new(design);
    let xtu = design.t().dot(&target);
    path_with(&solver, xtu.view(), l2_mix, lambda_grid)
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("λ grid is empty".into()));
    }
    if grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument("λ grid must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("λ grid must be strictly descending".into()));
    }
    Ok(())
}

pub(crate) fn path_with(
    solver: &CovarianceLasso,
    xtu: ArrayView1<'_, f64>,
    l2_mix: f64,
    lambda_grid: &[f64],
) -> Result<Vec<SparseCoefficients>> {
    let mut out = Vec::with_capacity(lambda_grid.len());
    let mut warm = Array1::zeros(solver.dim());
    for &lam in lambda_grid {
        warm = solver.solve_or_follow(xtu, lam, l2_mix, Some(warm.view()))?;
        out.push(SparseCoefficients::new(warm.clone()));
    }
    Ok(out)
}

/// Geometric grid of `len` values from `max` down to `max * ratio`.
pub fn geometric_grid(max: f64, ratio: f64, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![max];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|i| max * (step * i as f64).exp()).collect()
}
