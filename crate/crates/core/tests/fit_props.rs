#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use ndarray::{Array1, ArrayView2};
use proptest::prelude::*;
use rand::Rng;
use sfm::dataset::{standardize, AssayMatrix, MultiAssaySet, Response};
use sfm::multi::{self, fit_multi, fit_multi_general, multi_objective, MultiSfmConfig, MultiState};
use sfm::single::{self, fit, fit_rank_r, objective, SfmConfig};

fn single_data(seed: u64, n: usize, p: usize) -> (AssayMatrix, Response) {
    let mut r = rng(seed);
    let (x, y) = factor_data(&mut r, n, p);
    (standardize(x.view()).unwrap(), Response::standardize(y.view()).unwrap())
}

fn multi_data(seed: u64, n: usize, widths: &[usize]) -> (MultiAssaySet, Response) {
    let mut r = rng(seed);
    let total: usize = widths.iter().sum();
    let (x, y) = factor_data(&mut r, n, total);
    let mut blocks = Vec::new();
    let mut start = 0;
    for w in widths {
        blocks.push(x.slice(ndarray::s![.., start..start + w]).to_owned());
        start += w;
    }
    (MultiAssaySet::standardized(&blocks).unwrap(), Response::standardize(y.view()).unwrap())
}

fn nonincreasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0))
}

fn unit(v: &Array1<f64>) -> bool {
    (v.dot(v).sqrt() - 1.0).abs() <= 1e-10
}

fn views(set: &MultiAssaySet) -> Vec<ArrayView2<'_, f64>> {
    set.assays().iter().map(|a| a.values()).collect()
}

fn random_state(r: &mut rand_chacha::ChaCha8Rng, widths: &[usize]) -> MultiState {
    let total: usize = widths.iter().sum();
    let unitv = |r: &mut rand_chacha::ChaCha8Rng, p: usize| {
        let v = normal_vector(r, p);
        let n = v.dot(&v).sqrt();
        v / n
    };
    let mut v: Vec<Array1<f64>> = widths.iter().map(|&p| normal_vector(r, p) * 0.3).collect();
    v.push(normal_vector(r, total) * 0.2);
    MultiState {
        v,
        alpha: widths.iter().map(|&p| unitv(r, p)).collect(),
        gamma: widths.iter().map(|&p| unitv(r, p)).collect(),
        beta: normal_vector(r, widths.len() + 1),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn single_fit_invariants(seed in any::<u64>(), n in 8usize..=30, p in 2usize..=20, w in 0.05f64..5.0, c in 0.3f64..3.0) {
        let (x, y) = single_data(seed, n, p);
        let f = fit(&x, &y, &SfmConfig { w, c, ..SfmConfig::default() }).unwrap();
        prop_assert!(nonincreasing(&f.objective_trace), "{:?}", f.objective_trace);
        prop_assert!(unit(&f.alpha));
        prop_assert!(f.v.l1_norm() <= c + 1e-8);
        prop_assert!(f.beta >= 0.0);
        let direct = objective(x.values(), y.values(), f.v.values(), f.alpha.view(), f.beta, w).unwrap();
        prop_assert!((direct - f.final_objective()).abs() <= 1e-8 * direct.max(1.0));
    }

    #[test]
    fn rank_r_fit_invariants(seed in any::<u64>(), n in 10usize..=30, p in 3usize..=15, rank in 1usize..=3, c in 0.5f64..3.0) {
        let (x, y) = single_data(seed, n, p);
        let f = fit_rank_r(&x, &y, &SfmConfig { c, rank, ..SfmConfig::default() }).unwrap();
        prop_assert!(nonincreasing(&f.objective_trace));
        let gram = f.a.t().dot(&f.a);
        for ((i, j), g) in gram.indexed_iter() {
            let id = if i == j { 1.0 } else { 0.0 };
            prop_assert!((g - id).abs() <= 1e-10);
        }
        for col in f.v.columns() {
            prop_assert!(col.iter().map(|x| x.abs()).sum::<f64>() <= c + 1e-8);
        }
    }

    #[test]
    fn single_steps_are_exact_minimizers(seed in any::<u64>(), n in 8usize..=25, p in 2usize..=10, w in 0.1f64..3.0, c in 0.3f64..2.0) {
        let (x, y) = single_data(seed, n, p);
        let (xv, yv) = (x.values(), y.values());
        let mut r = rng(seed ^ 1);
        let v = project_l1_ball(normal_vector(&mut r, p).view(), c);
        let a0 = normal_vector(&mut r, p);
        let alpha = &a0 / a0.dot(&a0).sqrt();
        let obj = |v: &Array1<f64>, a: &Array1<f64>, b: f64| objective(xv, yv, v.view(), a.view(), b, w).unwrap();

        let beta = single::beta_step(xv, yv, v.view()).unwrap();
        let base = obj(&v, &alpha, beta);
        for eps in [1e-3, -1e-3, 0.1, -0.1] {
            prop_assert!(obj(&v, &alpha, beta + eps) >= base - 1e-6);
        }

        let a = single::alpha_step(xv, v.view()).unwrap();
        let base = obj(&v, &a, beta);
        for _ in 0..20 {
            let d = normal_vector(&mut r, p) * 0.05;
            let moved = &a + &d;
            let moved = &moved / moved.dot(&moved).sqrt();
            prop_assert!(obj(&v, &moved, beta) >= base - 1e-6);
        }

        let vs = single::v_step(xv, yv, a.view(), beta, w, c).unwrap().into_values();
        let base = obj(&vs, &a, beta);
        for _ in 0..20 {
            let d = normal_vector(&mut r, p) * 0.05;
            let moved = project_l1_ball((&vs + &d).view(), c);
            prop_assert!(obj(&moved, &a, beta) >= base - 1e-6);
        }
    }

    #[test]
    fn flipping_all_signs_keeps_the_objective(seed in any::<u64>(), n in 5usize..=20, p in 2usize..=8, beta in -3.0f64..3.0) {
        let (x, y) = single_data(seed, n, p);
        let mut r = rng(seed ^ 2);
        let v = normal_vector(&mut r, p);
        let a = normal_vector(&mut r, p);
        let f1 = objective(x.values(), y.values(), v.view(), a.view(), beta, 0.7).unwrap();
        let f2 = objective(x.values(), y.values(), (-&v).view(), (-&a).view(), -beta, 0.7).unwrap();
        prop_assert!((f1 - f2).abs() <= 1e-9 * f1.max(1.0));
    }

    #[test]
    fn without_the_response_the_v_step_is_sparse_pca(seed in any::<u64>(), n in 5usize..=20, p in 2usize..=8, w in 0.1f64..10.0, c in 0.3f64..2.0) {
        let (x, y) = single_data(seed, n, p);
        let mut r = rng(seed ^ 3);
        let a0 = normal_vector(&mut r, p);
        let alpha = &a0 / a0.dot(&a0).sqrt();
        let u = single::synthetic_response(x.values(), y.values(), alpha.view(), 0.0, w).unwrap();
        let xa = x.values().dot(&alpha);
        for (a, b) in u.iter().zip(xa.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        // with β = 0 the criterion is ‖y‖² plus the sparse PCA loss
        let v = single::v_step(x.values(), y.values(), alpha.view(), 0.0, w, c).unwrap();
        let recon = x.values().to_owned() - x.values().dot(&v.values()).insert_axis(ndarray::Axis(1)).dot(&alpha.view().insert_axis(ndarray::Axis(0)));
        let spca = recon.iter().map(|e| e * e).sum::<f64>();
        let f = objective(x.values(), y.values(), v.values(), alpha.view(), 0.0, w).unwrap();
        prop_assert!((f - y.values().dot(&y.values()) - w * spca).abs() <= 1e-8 * f.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn multi_fit_invariants(seed in any::<u64>(), n in 10usize..=30, widths in prop::collection::vec(2usize..=8, 2..=3), w in 0.2f64..2.0, c in 0.5f64..2.5) {
        let (set, y) = multi_data(seed, n, &widths);
        let cfg = MultiSfmConfig::uniform(widths.len(), w, c);
        let f = fit_multi(&set, &y, &cfg).unwrap();
        prop_assert!(nonincreasing(&f.objective_trace), "{:?}", f.objective_trace);
        for a in f.alpha.iter().chain(&f.gamma) {
            prop_assert!(unit(a));
        }
        for v in &f.v {
            prop_assert!(v.l1_norm() <= c + 1e-8);
        }
        prop_assert!(f.beta.iter().all(|b| *b >= 0.0));
    }

    #[test]
    fn general_multi_fit_invariants(seed in any::<u64>(), n in 12usize..=30, widths in prop::collection::vec(3usize..=8, 2..=3), joint in any::<bool>()) {
        let (set, y) = multi_data(seed, n, &widths);
        let mut cfg = MultiSfmConfig::uniform(widths.len(), 1.0, 1.5);
        cfg.ranks = vec![1; widths.len() + 1];
        cfg.ranks[0] = 2;
        cfg.joint_orthogonal = joint;
        let f = fit_multi_general(&set, &y, &cfg).unwrap();
        prop_assert!(nonincreasing(&f.objective_trace));
        for (a, g) in f.a.iter().zip(&f.gamma) {
            for m in [a, g] {
                let gram = m.t().dot(m);
                for ((i, j), v) in gram.indexed_iter() {
                    let id = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((v - id).abs() <= 1e-10);
                }
            }
            if joint {
                prop_assert!(a.t().dot(g).iter().all(|v| v.abs() <= 1e-8));
            }
        }
    }

    #[test]
    fn multi_sign_flip_symmetries(seed in any::<u64>(), n in 5usize..=20, widths in prop::collection::vec(2usize..=6, 2..=3)) {
        let (set, y) = multi_data(seed, n, &widths);
        let xs = views(&set);
        let mut r = rng(seed ^ 4);
        let w: Vec<f64> = widths.iter().map(|_| 0.5 + r.random::<f64>()).collect();
        let state = random_state(&mut r, &widths);
        let f0 = multi_objective(&xs, y.values(), &state, &w).unwrap();
        for k in 0..widths.len() {
            let mut s = state.clone();
            s.v[k] = -&s.v[k];
            s.alpha[k] = -&s.alpha[k];
            s.beta[k] = -s.beta[k];
            let f = multi_objective(&xs, y.values(), &s, &w).unwrap();
            prop_assert!((f - f0).abs() <= 1e-9 * f0.max(1.0));
        }
        let kk = widths.len();
        let mut s = state.clone();
        s.v[kk] = -&s.v[kk];
        s.beta[kk] = -s.beta[kk];
        for g in &mut s.gamma {
            *g = -&*g;
        }
        let f = multi_objective(&xs, y.values(), &s, &w).unwrap();
        prop_assert!((f - f0).abs() <= 1e-9 * f0.max(1.0));
    }

    #[test]
    fn multi_steps_are_exact_minimizers(seed in any::<u64>(), n in 8usize..=20, widths in prop::collection::vec(2usize..=6, 2..=3)) {
        let (set, y) = multi_data(seed, n, &widths);
        let xs = views(&set);
        let kk = widths.len();
        let mut r = rng(seed ^ 5);
        let w: Vec<f64> = widths.iter().map(|_| 0.5 + r.random::<f64>()).collect();
        let mut state = random_state(&mut r, &widths);
        let obj = |s: &MultiState| multi_objective(&xs, y.values(), s, &w).unwrap();

        let scores = state.scores(&xs).unwrap();
        state.beta = multi::beta_step_multi(y.values(), scores.view()).unwrap();
        let base = obj(&state);
        for i in 0..=kk {
            for eps in [1e-3, -1e-3] {
                let mut s = state.clone();
                s.beta[i] += eps;
                prop_assert!(obj(&s) >= base - 1e-6);
            }
        }

        let c = 1.2;
        for k in 0..kk {
            state.v[k] = multi::v_k_step(k, &xs, y.values(), &state, &w, c).unwrap().into_values();
            let base = obj(&state);
            for _ in 0..10 {
                let mut s = state.clone();
                let d = normal_vector(&mut r, widths[k]) * 0.05;
                s.v[k] = project_l1_ball((&s.v[k] + &d).view(), c);
                prop_assert!(obj(&s) >= base - 1e-6);
            }
        }
        state.v[kk] = multi::v_common_step(&xs, y.values(), &state, &w, c).unwrap().into_values();
        let base = obj(&state);
        for _ in 0..10 {
            let mut s = state.clone();
            let d = normal_vector(&mut r, s.v[kk].len()) * 0.05;
            s.v[kk] = project_l1_ball((&s.v[kk] + &d).view(), c);
            prop_assert!(obj(&s) >= base - 1e-6);
        }
    }

    #[test]
    fn alpha_updates_do_not_depend_on_order(seed in any::<u64>(), n in 8usize..=20, widths in prop::collection::vec(2usize..=6, 2..=3)) {
        let (set, y) = multi_data(seed, n, &widths);
        let _ = y;
        let xs = views(&set);
        let mut r = rng(seed ^ 6);
        let state = random_state(&mut r, &widths);
        let scores = state.scores(&xs).unwrap();
        let kk = widths.len();
        let update = |order: &[usize]| {
            let mut s = state.clone();
            for &k in order {
                s.alpha[k] = multi::alpha_step_multi(xs[k], scores.column(k), scores.column(kk), s.gamma[k].view()).unwrap();
            }
            s.alpha
        };
        let forward: Vec<usize> = (0..kk).collect();
        let backward: Vec<usize> = (0..kk).rev().collect();
        for (a, b) in update(&forward).iter().zip(update(&backward).iter()) {
            for (x, z) in a.iter().zip(b.iter()) {
                prop_assert!((x - z).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn reductions_agree_on_random_instances() {
    for seed in 0..10u64 {
        let (x, y) = single_data(seed, 20, 8);
        let cfg = SfmConfig { c: 1.3, ..SfmConfig::default() };
        let one = fit(&x, &y, &cfg).unwrap();
        let r = fit_rank_r(&x, &y, &cfg).unwrap();
        assert!((one.final_objective() - r.final_objective()).abs() <= 1e-6);

        let (set, y) = multi_data(seed, 20, &[4, 5]);
        let mcfg = MultiSfmConfig::uniform(2, 1.0, 1.2);
        let a = fit_multi(&set, &y, &mcfg).unwrap();
        let b = fit_multi_general(&set, &y, &mcfg).unwrap();
        assert!((a.final_objective() - b.final_objective()).abs() <= 1e-6);
    }
}

#[test]
fn degenerate_inputs_are_errors() {
    let x = standardize(ndarray::arr2(&[[1.0, 2.0], [2.0, 1.0], [3.0, 5.0]]).view()).unwrap();
    let y = Response::standardize(ndarray::arr1(&[1.0, 2.0, 4.0]).view()).unwrap();
    assert!(fit(&x, &y, &SfmConfig { c: 0.0, ..SfmConfig::default() }).is_err());
    assert!(fit(&x, &y, &SfmConfig { w: -1.0, ..SfmConfig::default() }).is_err());
    assert!(single::beta_step(x.values(), y.values(), Array1::zeros(2).view()).is_err());
}
