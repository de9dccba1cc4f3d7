//! Reduced-rank Procrustes rotation.
//!
//! For `M` (`n x p`) and `N` (`n x k`, `k ≤ p`), the minimizer of
//! `‖M − N Aᵀ‖_F²` over `p x k` matrices with orthonormal columns is
//! `A = U Vᵀ`, where `Mᵀ N = U D Vᵀ` is the thin SVD. Only the `p x k`
//! cross product is decomposed.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg;

/// Relative size of the smallest singular value below which `MᵀN` is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesSolution {
    /// `p x k`, orthonormal columns.
    pub rotation: Array2<f64>,
    pub singular_values: Array1<f64>,
}

/// Solve `min ‖M − N Aᵀ‖_F² s.t. AᵀA = I`.
pub fn procrustes(m: ArrayView2<'_, f64>, n: ArrayView2<'_, f64>) -> Result<ProcrustesSolution> {
    if m.nrows() != n.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "M has {} rows, N has {}",
            m.nrows(),
            n.nrows()
        )));
    }
    ensure_finite(m.iter())?;
    ensure_finite(n.iter())?;
    let cross = m.t().dot(&n);
    procrustes_from_cross(cross.view())
}

/// Same as [`procrustes`] but starting from the cross product `MᵀN`.
pub fn procrustes_from_cross(cross: ArrayView2<'_, f64>) -> Result<ProcrustesSolution> {
    let (p, k) = cross.dim();
    if k == 0 || k > p {
        return Err(Error::DimensionMismatch(format!(
            "need 1 <= k <= p, got p = {p}, k = {k}"
        )));
    }
    if k == 1 {
        let col = cross.column(0);
        let norm = linalg::l2_norm(col);
        if !(norm > 0.0) {
            return Err(Error::RankDeficient { ratio: 0.0 });
        }
        return Ok(ProcrustesSolution {
            rotation: (&col / norm).insert_axis(ndarray::Axis(1)),
            singular_values: Array1::from_elem(1, norm),
        });
    }
    let (u, s, vt) = linalg::thin_svd(cross);
    let ratio = if s[0] > 0.0 { s[k - 1] / s[0] } else { 0.0 };
    if ratio < RANK_TOL {
        return Err(Error::RankDeficient { ratio });
    }
    Ok(ProcrustesSolution {
        rotation: u.dot(&vt),
        singular_values: s,
    })
}

/// `‖M − N Aᵀ‖_F²`.
pub fn procrustes_objective(m: ArrayView2<'_, f64>, n: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>) -> f64 {
    let r = &m - &n.dot(&a.t());
    linalg::frobenius_sq(r.view())
}
