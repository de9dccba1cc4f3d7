//! Small dense linear algebra helpers shared by the solvers.
//!
//! Data lives in `ndarray` containers; decompositions are delegated to
//! `nalgebra` on copies, which is cheap for the small cross-product and
//! Gram matrices these routines see.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Largest condition number accepted by [`least_squares`].
pub const MAX_CONDITION: f64 = 1e12;

pub(crate) fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn gram(x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.t().dot(&x)
}

pub fn frobenius_sq(x: ArrayView2<'_, f64>) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn l1_norm(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Flip `v` so that its largest-magnitude entry is positive.
pub fn canonical_sign(v: &mut Array1<f64>) {
    let mut best = 0.0_f64;
    for &x in v.iter() {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Leading eigenvectors of a symmetric positive semi-definite matrix by
/// power iteration with deflation.
///
/// Returns a `p x count` matrix of unit columns. Each column is iterated until
/// the max-abs change falls below `tol` or `max_iter` is hit; a column that
/// runs out of iterations is kept as is.
pub fn power_iteration(
    gram: ArrayView2<'_, f64>,
    count: usize,
    max_iter: usize,
    tol: f64,
) -> Array2<f64> {
    let p = gram.nrows();
    let mut deflated = gram.to_owned();
    let mut out = Array2::zeros((p, count));
    for k in 0..count {
        let mut v = start_vector(deflated.view(), out.view(), k);
        for _ in 0..max_iter {
            let mut next = deflated.dot(&v);
            // keep the iterate orthogonal to earlier vectors despite rounding
            for prev in 0..k {
                let col = out.column(prev);
                let proj = col.dot(&next);
                next.scaled_add(-proj, &col);
            }
            let norm = l2_norm(next.view());
            if norm == 0.0 {
                break;
            }
            next /= norm;
            let change = next
                .iter()
                .zip(v.iter())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            v = next;
            if change < tol {
                break;
            }
        }
        canonical_sign(&mut v);
        let eig = v.dot(&deflated.dot(&v));
        for i in 0..p {
            for j in 0..p {
                deflated[[i, j]] -= eig * v[i] * v[j];
            }
        }
        out.column_mut(k).assign(&v);
    }
    out
}

fn start_vector(gram: ArrayView2<'_, f64>, previous: ArrayView2<'_, f64>, k: usize) -> Array1<f64> {
    let p = gram.nrows();
    let norms: Vec<f64> = gram
        .axis_iter(Axis(1))
        .map(|c| c.dot(&c))
        .collect();
    let mut best = 0;
    for j in 1..p {
        if norms[j] > norms[best] {
            best = j;
        }
    }
    let mut v = if norms[best] > 0.0 {
        gram.column(best).to_owned()
    } else {
        let mut e = Array1::zeros(p);
        e[k.min(p - 1)] = 1.0;
        e
    };
    // a small uniform component avoids starting exactly orthogonal to the target
    let bump = 1e-3 * l2_norm(v.view()).max(1.0) / (p as f64).sqrt();
    v.mapv_inplace(|x| x + bump);
    for prev in 0..k {
        let col = previous.column(prev);
        let proj = col.dot(&v);
        v.scaled_add(-proj, &col);
    }
    let norm = l2_norm(v.view());
    if norm > 0.0 {
        v /= norm;
    }
    v
}

/// Top `count` eigenpairs of a symmetric matrix by full decomposition,
/// sorted by decreasing eigenvalue. Columns are sign-canonicalized.
pub fn symmetric_top_eigen(sym: ArrayView2<'_, f64>, count: usize) -> (Array1<f64>, Array2<f64>) {
    let eig = to_na(sym).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let p = sym.nrows();
    let mut values = Array1::zeros(count);
    let mut vectors = Array2::zeros((p, count));
    for (slot, &idx) in order.iter().take(count).enumerate() {
        values[slot] = eig.eigenvalues[idx];
        let mut v = Array1::from_iter(eig.eigenvectors.column(idx).iter().copied());
        canonical_sign(&mut v);
        vectors.column_mut(slot).assign(&v);
    }
    (values, vectors)
}

/// Thin SVD `b = U diag(s) Vᵀ` with singular values in decreasing order.
pub fn thin_svd(b: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let svd = to_na(b).svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vt");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &c| s[c].total_cmp(&s[a]));
    let k = s.len();
    let mut u_out = Array2::zeros((u.nrows(), k));
    let mut vt_out = Array2::zeros((k, vt.ncols()));
    let mut s_out = Array1::zeros(k);
    for (slot, &idx) in order.iter().enumerate() {
        s_out[slot] = s[idx];
        for i in 0..u.nrows() {
            u_out[[i, slot]] = u[(i, idx)];
        }
        for j in 0..vt.ncols() {
            vt_out[[slot, j]] = vt[(idx, j)];
        }
    }
    (u_out, s_out, vt_out)
}

/// Solve the symmetric system `a x = rhs`, rejecting matrices whose
/// condition number exceeds [`MAX_CONDITION`].
pub fn solve_spd(a: ArrayView2<'_, f64>, rhs: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let m = to_na(a);
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, v| acc.min(*v));
    if !(min > 0.0) || max / min > MAX_CONDITION {
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::SingularDesign(cond));
    }
    let b = DVector::from_iterator(rhs.len(), rhs.iter().copied());
    let chol = m.cholesky().ok_or(Error::SingularDesign(f64::INFINITY))?;
    let x = chol.solve(&b);
    Ok(Array1::from_iter(x.iter().copied()))
}

/// Least-squares coefficients of `y` on the columns of `design` (no intercept).
pub fn least_squares(design: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if design.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, response has {}",
            design.nrows(),
            y.len()
        )));
    }
    let gram = design.t().dot(&design);
    let rhs = design.t().dot(&y);
    solve_spd(gram.view(), rhs.view())
}

/// Minimum-Euclidean-norm least-squares solution of `x v ≈ u`.
pub fn min_norm_least_squares(x: ArrayView2<'_, f64>, u: ArrayView1<'_, f64>) -> Array1<f64> {
    let svd = to_na(x).svd(true, true);
    let b = DVector::from_iterator(u.len(), u.iter().copied());
    let max_sv = svd.singular_values.iter().fold(0.0_f64, |a, b| a.max(*b));
    let eps = max_sv * 1e-12 * (x.nrows().max(x.ncols()) as f64);
    let sol = svd.solve(&b, eps).expect("U and Vt were computed");
    Array1::from_iter(sol.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn power_iteration_matches_full_eigendecomposition() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 1.0]];
        let (_, exact) = symmetric_top_eigen(a.view(), 2);
        let approx = power_iteration(a.view(), 2, 1000, 1e-12);
        for k in 0..2 {
            for i in 0..3 {
                assert_abs_diff_eq!(approx[[i, k]], exact[[i, k]], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn thin_svd_reconstructs() {
        let b = array![[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]];
        let (u, s, vt) = thin_svd(b.view());
        let rebuilt = u.dot(&Array2::from_diag(&s)).dot(&vt);
        for (x, y) in rebuilt.iter().zip(b.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert!(s[0] >= s[1]);
    }

    #[test]
    fn singular_design_is_rejected() {
        let d = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let y = array![1.0, 2.0, 3.0];
        assert!(matches!(least_squares(d.view(), y.view()), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn min_norm_solution_of_wide_system() {
        // x v = u with x = [1 1]; min-norm solution splits evenly
        let x = array![[1.0, 1.0]];
        let u = array![2.0];
        let v = min_norm_least_squares(x.view(), u.view());
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-12);
    }
}
