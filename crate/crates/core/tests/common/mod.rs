#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample(StandardNormal))
}

/// Rows with one planted factor on the first few columns, plus a response
/// driven by that factor.
pub fn factor_data(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (Array2<f64>, Array1<f64>) {
    let u = normal_vector(rng, n);
    let active = (p / 3).max(1);
    let mut x = normal_matrix(rng, n, p);
    for j in 0..active {
        let load: f64 = 1.0 + rng.random::<f64>();
        x.column_mut(j).scaled_add(load, &u);
    }
    let noise = normal_vector(rng, n);
    let y = &u * 2.0 + &noise;
    (x, y)
}

pub fn rss(x: ArrayView2<'_, f64>, u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let r = &u - &x.dot(&v);
    r.dot(&r)
}

pub fn l1(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_dense(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[piv, col]].abs() < 1e-11 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap([piv, k], [col, k]);
            }
            b.swap(piv, col);
        }
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            for k in col..n {
                a[[r, k]] -= f * a[[col, k]];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[[r, k]] * x[k]).sum();
        x[r] = (b[r] - s) / a[[r, r]];
    }
    Some(x)
}

/// Best point of the L1 ball found by enumerating every support and sign
/// pattern and solving the face problem in closed form.
pub fn face_enumeration(x: ArrayView2<'_, f64>, u: ArrayView1<'_, f64>, c: f64) -> f64 {
    let p = x.ncols();
    let g = x.t().dot(&x);
    let b = x.t().dot(&u);
    let mut best = u.dot(&u);
    for mask in 1u32..(1 << p) {
        let s: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        let m = s.len();
        for signs in 0u32..(1 << m) {
            let sg: Vec<f64> = (0..m).map(|i| if signs & (1 << i) != 0 { -1.0 } else { 1.0 }).collect();
            let gs = Array2::from_shape_fn((m, m), |(i, j)| g[[s[i], s[j]]]);
            let bs = Array1::from_shape_fn(m, |i| b[s[i]]);
            let mut candidates = Vec::new();
            if signs == 0 {
                // the free minimizer does not depend on the sign pattern
                candidates.extend(solve_dense(gs.clone(), bs.clone()));
            }
            let mut kkt = Array2::zeros((m + 1, m + 1));
            kkt.slice_mut(ndarray::s![..m, ..m]).assign(&gs);
            for i in 0..m {
                kkt[[i, m]] = sg[i];
                kkt[[m, i]] = sg[i];
            }
            let mut rhs = Array1::zeros(m + 1);
            rhs.slice_mut(ndarray::s![..m]).assign(&bs);
            rhs[m] = c;
            if let Some(sol) = solve_dense(kkt, rhs) {
                candidates.push(sol.slice(ndarray::s![..m]).to_owned());
            }
            for vs in candidates {
                if l1(vs.view()) > c * (1.0 + 1e-12) {
                    continue;
                }
                let mut v = Array1::zeros(p);
                for i in 0..m {
                    v[s[i]] = vs[i];
                }
                best = best.min(rss(x, u, v.view()));
            }
        }
    }
    best
}

/// Euclidean projection onto the L1 ball of radius `c` by sorting.
pub fn project_l1_ball(z: ArrayView1<'_, f64>, c: f64) -> Array1<f64> {
    if l1(z) <= c {
        return z.to_owned();
    }
    let mut mags: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - c) / (i + 1) as f64;
        if *m > t {
            theta = t;
        }
    }
    z.mapv(|v| v.signum() * (v.abs() - theta).max(0.0))
}

/// Largest violation of the penalized optimality conditions for
/// `‖u − Xv‖² + λ(a‖v‖₁ + (1 − a)/2 ‖v‖²)`.
pub fn kkt_violation(x: ArrayView2<'_, f64>, u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>, lambda: f64, a: f64) -> f64 {
    let grad = x.t().dot(&(&x.dot(&v) - &u)) * 2.0 + &v * (lambda * (1.0 - a));
    let l1w = lambda * a;
    grad.iter()
        .zip(v.iter())
        .map(|(g, vj)| if *vj != 0.0 { (g + l1w * vj.signum()).abs() } else { (g.abs() - l1w).max(0.0) })
        .fold(0.0, f64::max)
}

/// Orthonormal `p x k` matrix from Gram-Schmidt on Gaussian columns.
pub fn random_orthonormal(rng: &mut ChaCha8Rng, p: usize, k: usize) -> Array2<f64> {
    loop {
        let mut q = normal_matrix(rng, p, k);
        let mut ok = true;
        for j in 0..k {
            for i in 0..j {
                let d = q.column(i).dot(&q.column(j));
                let qi = q.column(i).to_owned();
                q.column_mut(j).scaled_add(-d, &qi);
            }
            let n = q.column(j).dot(&q.column(j)).sqrt();
            if n < 1e-8 {
                ok = false;
                break;
            }
            q.column_mut(j).mapv_inplace(|v| v / n);
        }
        if ok {
            return q;
        }
    }
}
