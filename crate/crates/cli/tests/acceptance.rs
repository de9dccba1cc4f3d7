//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p sfm-cli --test acceptance`. The process exits
//! nonzero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use sfm::baselines::Method;
use sfm::bench::{run_experiment, BenchmarkReport, ExperimentConfig, MethodOptions};
use sfm::dataset::{standardize, MultiAssaySet, Response};
use sfm::lasso::{CovarianceLasso, PenalizedProblem};
use sfm::multi::{fit_multi, fit_multi_general, MultiSfmConfig};
use sfm::procrustes::{procrustes, procrustes_objective};
use sfm::simgen::SimSpec;
use sfm::single::{fit, fit_rank_r, SfmConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, title: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    let pass = out.pass && in_time;
    let budget = match limit {
        Some(l) if !in_time => format!(" (over the {}s budget)", l.as_secs()),
        _ => String::new(),
    };
    println!(
        "{} criterion {id}: {title}: {}; {:.1}s{budget}",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64()
    );
    pass
}

/// `‖u − Xv‖²` through the Gram matrix.
fn quad(g: &Array2<f64>, b: &Array1<f64>, uu: f64, v: &[f64]) -> f64 {
    let p = v.len();
    let mut f = uu;
    for i in 0..p {
        f -= 2.0 * b[i] * v[i];
        for j in 0..p {
            f += v[i] * g[[i, j]] * v[j];
        }
    }
    f
}

/// Calls `visit` on every integer vector of length `p` with `Σ|k_i| ≤ m`.
fn lattice(p: usize, m: i64, visit: &mut impl FnMut(&[i64])) {
    fn rec(k: &mut Vec<i64>, p: usize, left: i64, visit: &mut impl FnMut(&[i64])) {
        if k.len() == p {
            visit(k);
            return;
        }
        for x in -left..=left {
            k.push(x);
            rec(k, p, left - x.abs(), visit);
            k.pop();
        }
    }
    rec(&mut Vec::with_capacity(p), p, m, visit);
}

/// Exhaustive search over a lattice on the L1 ball, refined around the best
/// point by successively finer local lattices.
fn lattice_oracle(x: ArrayView2<'_, f64>, u: ArrayView1<'_, f64>, c: f64) -> f64 {
    let p = x.ncols();
    let g = x.t().dot(&x);
    let b = x.t().dot(&u);
    let uu = u.dot(&u);
    let m: i64 = match p {
        1 => 20_000,
        2 => 400,
        3 => 60,
        _ => 24,
    };
    let h = c / m as f64;
    let mut best_v = vec![0.0; p];
    let mut best = uu;
    lattice(p, m, &mut |k| {
        let v: Vec<f64> = k.iter().map(|&i| i as f64 * h).collect();
        let f = quad(&g, &b, uu, &v);
        if f < best {
            best = f;
            best_v = v;
        }
    });
    let mut step = h / 2.0;
    let side = 4i64;
    for _ in 0..30 {
        let center = best_v.clone();
        let mut idx = vec![-side; p];
        loop {
            let mut v: Vec<f64> = center.iter().zip(&idx).map(|(c0, &i)| c0 + i as f64 * step).collect();
            let norm: f64 = v.iter().map(|a| a.abs()).sum();
            if norm > c {
                // pull back onto the sphere of the ball
                v.iter_mut().for_each(|a| *a *= c / norm);
            }
            let f = quad(&g, &b, uu, &v);
            if f < best {
                best = f;
                best_v = v;
            }
            let mut d = 0;
            while d < p && idx[d] == side {
                idx[d] = -side;
                d += 1;
            }
            if d == p {
                break;
            }
            idx[d] += 1;
        }
        step /= 2.0;
    }
    best
}

fn criterion_1() -> Outcome {
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_abs_gap = 0.0_f64;
    let mut worst_kkt = 0.0_f64;
    let mut errors = 0;
    for inst in 0..500u64 {
        let mut r = rng(10_000 + inst);
        let n = r.random_range(1..=10);
        let p = r.random_range(1..=4);
        let x = normal_matrix(&mut r, n, p);
        let u = normal_vector(&mut r, n);
        let c = r.random_range(0.05..3.0);
        let solver = CovarianceLasso::new(x.view());
        let xtu = x.t().dot(&u);
        let sol = match solver.solve_bound(xtu.view(), c) {
            Ok(s) => s,
            Err(_) => {
                errors += 1;
                continue;
            }
        };
        let v = sol.coefficients.values();
        if l1(v) > c + 1e-8 {
            errors += 1;
        }
        let ours = rss(x.view(), u.view(), v);
        let oracle = lattice_oracle(x.view(), u.view(), c);
        worst_gap = worst_gap.max(ours - oracle);
        worst_abs_gap = worst_abs_gap.max((ours - oracle).abs());
        worst_kkt = worst_kkt.max(kkt_violation(x.view(), u.view(), v, sol.lambda, 1.0));

        let mix = if inst % 2 == 0 { 1.0 } else { r.random_range(0.0..1.0) };
        let top = 2.0 * xtu.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        let lambda = r.random_range(0.001..1.1) * top;
        match sfm::lasso::solve_lagrangian(&PenalizedProblem {
            design: x.view(),
            target: u.view(),
            l1_weight: lambda,
            l2_mix: mix,
        }) {
            Ok(v) => worst_kkt = worst_kkt.max(kkt_violation(x.view(), u.view(), v.values(), lambda, mix)),
            Err(_) => errors += 1,
        }
    }
    Outcome {
        pass: errors == 0 && worst_gap <= 1e-4 && worst_kkt <= 1e-6,
        detail: format!(
            "500 instances, worst objective excess over oracle {worst_gap:.2e} (largest |gap| {worst_abs_gap:.2e}), worst KKT residual {worst_kkt:.2e}, {errors} errors"
        ),
    }
}

fn criterion_2() -> Outcome {
    let shapes = [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2)];
    let mut losses = 0;
    let mut worst_orth = 0.0_f64;
    let mut worst_angle = 0.0_f64;
    let mut angular = 0;
    let mut errors = 0;
    for inst in 0..200u64 {
        let mut r = rng(20_000 + inst);
        let (p, k) = shapes[inst as usize % shapes.len()];
        let n = r.random_range(3..=10);
        let m = normal_matrix(&mut r, n, p);
        let nn = normal_matrix(&mut r, n, k);
        let a = match procrustes(m.view(), nn.view()) {
            Ok(s) => s.rotation,
            Err(_) => {
                errors += 1;
                continue;
            }
        };
        let gram = a.t().dot(&a);
        for ((i, j), v) in gram.indexed_iter() {
            worst_orth = worst_orth.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
        let best = procrustes_objective(m.view(), nn.view(), a.view());
        for _ in 0..10_000 {
            let cand = random_orthonormal(&mut r, p, k);
            if procrustes_objective(m.view(), nn.view(), cand.view()) < best - 1e-10 * best.max(1.0) {
                losses += 1;
                break;
            }
        }
        if (p, k) == (2, 1) {
            angular += 1;
            let f = |t: f64| {
                let cand = ndarray::arr2(&[[t.cos()], [t.sin()]]);
                procrustes_objective(m.view(), nn.view(), cand.view())
            };
            let steps = 36_000;
            let h = std::f64::consts::TAU / steps as f64;
            let mut t_best = 0.0;
            for i in 0..steps {
                if f(i as f64 * h) < f(t_best) {
                    t_best = i as f64 * h;
                }
            }
            let (mut lo, mut hi) = (t_best - h, t_best + h);
            for _ in 0..100 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if f(m1) < f(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let t = 0.5 * (lo + hi);
            worst_angle = worst_angle
                .max((a[[0, 0]] - t.cos()).abs())
                .max((a[[1, 0]] - t.sin()).abs());
        }
    }
    Outcome {
        pass: errors == 0 && losses == 0 && worst_angle <= 1e-4 && worst_orth <= 1e-10,
        detail: format!(
            "200 instances, {losses} beaten by a random candidate, {angular} angular checks with worst entry error {worst_angle:.2e}, orthonormality error {worst_orth:.2e}, {errors} errors"
        ),
    }
}

fn nonincreasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0))
}

fn single_instance(seed: u64) -> (sfm::dataset::AssayMatrix, Response, f64, f64) {
    let mut r = rng(seed);
    let n = r.random_range(5..=30);
    let p = r.random_range(2..=20);
    let (x, y) = factor_data(&mut r, n, p);
    let w = r.random_range(0.05..5.0);
    let c = r.random_range(0.2..4.0);
    (standardize(x.view()).unwrap(), Response::standardize(y.view()).unwrap(), w, c)
}

fn multi_instance(seed: u64) -> (MultiAssaySet, Response, MultiSfmConfig) {
    let mut r = rng(seed);
    let n = r.random_range(10..=30);
    let k = r.random_range(2..=3);
    let widths: Vec<usize> = (0..k).map(|_| r.random_range(2..=8)).collect();
    let (x, y) = factor_data(&mut r, n, widths.iter().sum());
    let mut blocks = Vec::new();
    let mut start = 0;
    for w in &widths {
        blocks.push(x.slice(ndarray::s![.., start..start + w]).to_owned());
        start += w;
    }
    let mut cfg = MultiSfmConfig::uniform(k, 1.0, 1.0);
    cfg.w = (0..k).map(|_| r.random_range(0.2..3.0)).collect();
    cfg.c = (0..=k).map(|_| r.random_range(0.3..2.5)).collect();
    (MultiAssaySet::standardized(&blocks).unwrap(), Response::standardize(y.view()).unwrap(), cfg)
}

fn criterion_3() -> Outcome {
    let mut bad_single = 0;
    let mut bad_multi = 0;
    let mut errors = 0;
    for inst in 0..1000u64 {
        let (x, y, w, c) = single_instance(30_000 + inst);
        match fit(&x, &y, &SfmConfig { w, c, ..SfmConfig::default() }) {
            Ok(f) if nonincreasing(&f.objective_trace) => {}
            Ok(_) => bad_single += 1,
            Err(_) => errors += 1,
        }
    }
    for inst in 0..200u64 {
        let (set, y, cfg) = multi_instance(40_000 + inst);
        match fit_multi(&set, &y, &cfg) {
            Ok(f) if nonincreasing(&f.objective_trace) => {}
            Ok(_) => bad_multi += 1,
            Err(_) => errors += 1,
        }
    }
    Outcome {
        pass: bad_single == 0 && bad_multi == 0 && errors == 0,
        detail: format!(
            "{bad_single}/1000 single-assay and {bad_multi}/200 multi-assay traces increased, {errors} errors"
        ),
    }
}

const METHODS: [Method; 4] = [Method::Sfm, Method::Lasso, Method::Enet, Method::Spca];

fn experiment(spec: SimSpec, w: f64, replicates: usize, base_seed: u64) -> BenchmarkReport {
    let config = ExperimentConfig {
        spec,
        methods: METHODS.to_vec(),
        replicates,
        base_seed,
        options: MethodOptions { w, ..MethodOptions::default() },
        record_timings: false,
    };
    run_experiment(&config).expect("experiment runs")
}

fn medians(report: &BenchmarkReport) -> String {
    METHODS
        .iter()
        .map(|m| format!("{} {:.3}", m.name(), report.median_mse(*m).unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(", ")
        + &format!(", {} failed runs", report.failure_count())
}

fn med(report: &BenchmarkReport, m: Method) -> f64 {
    report.median_mse(m).unwrap_or(f64::NAN)
}

fn criterion_4(report: &BenchmarkReport) -> Outcome {
    let (s, l, p) = (med(report, Method::Sfm), med(report, Method::Lasso), med(report, Method::Spca));
    Outcome {
        pass: s <= l && s <= 1.15 * p,
        detail: format!("medians {}; need sfm <= lasso and sfm <= 1.15 x spca = {:.3}", medians(report), 1.15 * p),
    }
}

fn criterion_5(report: &BenchmarkReport) -> Outcome {
    let (s, l, p) = (med(report, Method::Sfm), med(report, Method::Lasso), med(report, Method::Spca));
    Outcome {
        pass: s <= 1.25 * l && p >= 1.5 * l,
        detail: format!(
            "medians {}; need sfm <= {:.3} and spca >= {:.3}",
            medians(report),
            1.25 * l,
            1.5 * l
        ),
    }
}

fn criterion_6(report: &BenchmarkReport) -> Outcome {
    let s = med(report, Method::Sfm);
    let pass = [Method::Lasso, Method::Enet, Method::Spca].iter().all(|m| s < med(report, *m));
    Outcome {
        pass,
        detail: format!("medians {}; need sfm below every baseline", medians(report)),
    }
}

fn criterion_7(report: &BenchmarkReport) -> Outcome {
    let worst_linear = med(report, Method::Lasso).max(med(report, Method::Enet));
    let best_factor = med(report, Method::Sfm).min(med(report, Method::Spca));
    Outcome {
        pass: worst_linear < best_factor,
        detail: format!("medians {}; need lasso and enet below sfm and spca", medians(report)),
    }
}

fn median_of(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_8(report: &BenchmarkReport) -> Outcome {
    let rate = |m: Method, tpr: bool| median_of(report.rows_for(m).map(|r| if tpr { r.tpr } else { r.fpr }).collect());
    let (st, lt) = (rate(Method::Sfm, true), rate(Method::Lasso, true));
    let fprs = METHODS
        .iter()
        .map(|m| format!("{} {:.3}", m.name(), rate(*m, false)))
        .collect::<Vec<_>>()
        .join(", ");
    let tprs = METHODS
        .iter()
        .map(|m| format!("{} {:.3}", m.name(), rate(*m, true)))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome {
        pass: st >= lt,
        detail: format!("median TPR {tprs}; median FPR (recorded only) {fprs}"),
    }
}

fn criterion_9() -> Outcome {
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_sfm"))
            .args([
                "benchmark",
                "--preset",
                "fig1-high",
                "--replicates",
                "6",
                "--seed",
                "77",
                "--methods",
                "sfm,lasso,enet,spca,oracle",
                "--threads",
                threads,
                "--out-dir",
                dir.path().to_str().unwrap(),
            ])
            .output()
            .expect("spawn sfm");
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(dir.path().join("results.csv")).unwrap()
    };
    let one = run("1");
    let again = run("1");
    let four = run("4");
    let same = one == again && one == four;
    Outcome {
        pass: same,
        detail: format!(
            "results.csv from 1, 1 and 4 threads ({} bytes) {}",
            one.len(),
            if same { "identical" } else { "differ" }
        ),
    }
}

fn criterion_10() -> Outcome {
    let mut worst_single = 0.0_f64;
    let mut worst_multi = 0.0_f64;
    let mut errors = 0;
    for inst in 0..50u64 {
        let (x, y, w, c) = single_instance(50_000 + inst);
        let cfg = SfmConfig { w, c, ..SfmConfig::default() };
        match (fit(&x, &y, &cfg), fit_rank_r(&x, &y, &cfg)) {
            (Ok(a), Ok(b)) => worst_single = worst_single.max((a.final_objective() - b.final_objective()).abs()),
            _ => errors += 1,
        }
        let (set, y, cfg) = multi_instance(60_000 + inst);
        match (fit_multi(&set, &y, &cfg), fit_multi_general(&set, &y, &cfg)) {
            (Ok(a), Ok(b)) => worst_multi = worst_multi.max((a.final_objective() - b.final_objective()).abs()),
            _ => errors += 1,
        }
    }
    Outcome {
        pass: errors == 0 && worst_single <= 1e-6 && worst_multi <= 1e-6,
        detail: format!(
            "50 instances, largest objective difference rank-r vs rank-1 {worst_single:.2e}, general vs one-factor multi {worst_multi:.2e}, {errors} errors"
        ),
    }
}

fn main() {
    let min = |m: u64| Some(Duration::from_secs(60 * m));
    let mut all = true;
    all &= report(1, "bound solver against lattice oracle, KKT", min(1), criterion_1);
    all &= report(2, "Procrustes against random candidates and angular search", min(1), criterion_2);
    all &= report(3, "monotone objective traces", min(5), criterion_3);

    let mut high = None;
    all &= report(4, "one assay, latent factor, SNR 2", min(10), || {
        let r = experiment(SimSpec::single_latent(2.0, 0), 0.2, 30, 1_000);
        let out = criterion_4(&r);
        high = Some(r);
        out
    });
    all &= report(5, "one assay, independent features", min(10), || {
        criterion_5(&experiment(SimSpec::single_indep(5.0, 0), 0.2, 30, 2_000))
    });
    all &= report(6, "three assays, latent factors, SNR 2", min(20), || {
        criterion_6(&experiment(SimSpec::multi_latent(2.0, 0), 1.0, 20, 3_000))
    });
    all &= report(7, "three assays, independent features", min(20), || {
        criterion_7(&experiment(SimSpec::multi_indep(5.0, 0), 1.0, 20, 4_000))
    });
    let high = high.expect("criterion 4 ran");
    all &= report(8, "selection rates on the latent one-assay runs", None, || criterion_8(&high));
    all &= report(9, "benchmark output independent of thread count", None, criterion_9);
    all &= report(10, "reduced fits agree with the rank-one fits", None, criterion_10);
    println!("acceptance: {}", if all { "all criteria pass" } else { "some criteria FAIL" });
    if !all {
        std::process::exit(1);
    }
}
