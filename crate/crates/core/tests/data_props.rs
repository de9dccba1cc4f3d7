mod common;

use common::*;
use ndarray::Array1;
use proptest::prelude::*;
use sfm::baselines::{supervised_pca, Method};
use sfm::bench::{read_results_csv, emit_report, run_experiment, selection_rates, ExperimentConfig, MethodOptions};
use sfm::cv::fold_assignment;
use sfm::dataset::{concat, read_csv_table, split_columns, standardize, write_csv, ColumnRef, Response};
use sfm::simgen::{generate, snr_noise_variance, Design, SimSpec};

fn corr(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    let am = a.mean().unwrap();
    let bm = b.mean().unwrap();
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        sab += (x - am) * (y - bm);
        saa += (x - am) * (x - am);
        sbb += (y - bm) * (y - bm);
    }
    sab / (saa * sbb).sqrt()
}

fn var(a: &Array1<f64>) -> f64 {
    let m = a.mean().unwrap();
    a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (a.len() - 1) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardization_round_trips(seed in any::<u64>(), n in 2usize..=30, p in 1usize..=10, scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
        let mut r = rng(seed);
        let raw = normal_matrix(&mut r, n, p) * scale + shift;
        let x = standardize(raw.view()).unwrap();
        for col in x.values().columns() {
            prop_assert!(col.mean().unwrap().abs() <= 1e-10);
            prop_assert!((col.var(1.0) - 1.0).abs() <= 1e-10);
        }
        let back = x.destandardize();
        for (a, b) in back.iter().zip(raw.iter()) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn concatenation_splits_back(seed in any::<u64>(), n in 2usize..=12, widths in prop::collection::vec(1usize..=6, 1..=4)) {
        let mut r = rng(seed);
        let blocks: Vec<_> = widths.iter().map(|&p| normal_matrix(&mut r, n, p)).collect();
        let assays: Vec<_> = blocks.iter().map(|b| standardize(b.view()).unwrap()).collect();
        let joined = concat(&assays).unwrap();
        let parts = split_columns(joined.values(), &widths).unwrap();
        for (part, a) in parts.iter().zip(&assays) {
            prop_assert_eq!(part, &a.values().to_owned());
        }
    }

    #[test]
    fn csv_round_trips(seed in any::<u64>(), n in 1usize..=10, widths in prop::collection::vec(1usize..=4, 1..=3)) {
        let mut r = rng(seed);
        let blocks: Vec<_> = widths.iter().map(|&p| normal_matrix(&mut r, n, p) * 1e3).collect();
        let y = normal_vector(&mut r, n);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        write_csv(&path, &views, y.view()).unwrap();
        let table = read_csv_table(&path, true, &ColumnRef::Name("y".into()), &widths).unwrap();
        prop_assert_eq!(table.response, y);
        prop_assert_eq!(table.assays, blocks);
    }

    #[test]
    fn folds_are_a_pure_function_of_their_inputs(n in 2usize..=200, folds in 2usize..=10, seed in any::<u64>()) {
        prop_assume!(folds <= n);
        let a = fold_assignment(n, folds, seed).unwrap();
        prop_assert_eq!(&a, &fold_assignment(n, folds, seed).unwrap());
        let mut counts = vec![0usize; folds];
        for f in &a {
            counts[*f] += 1;
        }
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn simulated_noise_matches_the_snr_identities(seed in any::<u64>(), design in 0usize..4, snr in 0.3f64..6.0) {
        let design = [Design::SingleLatent, Design::SingleIndep, Design::MultiLatent, Design::MultiIndep][design];
        let widths = if design.is_multi() { vec![8, 9, 7] } else { vec![12] };
        let spec = SimSpec { design, n: 10, widths, n_nonnull: 3, snr_x: snr, snr_y: snr * 1.3, seed, test_n: 5 };
        let sim = generate(&spec).unwrap();
        let t = &sim.truth;
        let expect = t.beta_true.iter().map(|b| b * b).sum::<f64>() / spec.snr_y;
        prop_assert!((t.e_y2 - expect).abs() <= 1e-12 * expect.max(1.0));
        if design.is_latent() {
            for (k, row) in t.e_x2.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    let want = if j < 3 { t.signal_variance(k, j) / spec.snr_x } else { 1.0 };
                    prop_assert!((e - want).abs() <= 1e-12 * want.max(1.0));
                }
            }
        }
        let rates = selection_rates(&t.nonnull_concatenated(), t);
        prop_assert_eq!(rates, (1.0, 0.0));
    }

    #[test]
    fn supervised_pca_without_screening_is_first_pc_regression(seed in any::<u64>(), n in 6usize..=25, p in 2usize..=10) {
        let mut r = rng(seed);
        let (raw, yraw) = factor_data(&mut r, n, p);
        let x = standardize(raw.view()).unwrap();
        let y = Response::standardize(yraw.view()).unwrap();
        let fit = supervised_pca(&x, &y, 0.0, 1).unwrap();
        // top eigenvector of XᵀX by plain power iteration
        let g = x.values().t().dot(&x.values());
        let mut v = Array1::from_elem(p, 1.0) + normal_vector(&mut r, p) * 0.1;
        for _ in 0..5000 {
            let next = g.dot(&v);
            v = &next / next.dot(&next).sqrt();
        }
        let z = x.values().dot(&v);
        let gamma = z.dot(&y.values()) / z.dot(&z);
        let ours = rss(x.values(), y.values(), fit.coefficients.view());
        let pcr = rss(x.values(), y.values(), (&v * gamma).view());
        prop_assert!((ours - pcr).abs() <= 1e-8 * pcr.max(1.0), "{ours} vs {pcr}");
    }
}

#[test]
fn same_seed_same_data() {
    for spec in [SimSpec::single_latent(2.0, 17), SimSpec::multi_indep(5.0, 17)] {
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate(&spec.with_seed(18)).unwrap();
        assert_ne!(a.train.y, c.train.y);
    }
}

#[test]
fn large_sample_snr_and_null_independence() {
    let spec = SimSpec {
        design: Design::MultiLatent,
        n: 100_000,
        widths: vec![6, 6],
        n_nonnull: 3,
        snr_x: 1.7,
        snr_y: 2.0,
        seed: 99,
        test_n: 1,
    };
    let sim = generate(&spec).unwrap();
    let latent = sim.train.latent.as_ref().unwrap();
    let t = &sim.truth;
    for k in 0..2 {
        let x = &sim.train.assays[k];
        for j in 0..3 {
            let signal = &latent.column(k) * t.alpha_true[k][j] + &latent.column(2) * t.gamma_true[k][j];
            let noise = &x.column(j) - &signal;
            let ratio = var(&signal) / var(&noise);
            assert!((ratio / spec.snr_x - 1.0).abs() < 0.05, "assay {k} feature {j}: {ratio}");
        }
        for j in 3..6 {
            assert!(corr(x.column(j), sim.train.y.view()).abs() < 0.02);
        }
    }
    let y_signal = latent.dot(&Array1::from(t.beta_true.clone()));
    let y_noise = &sim.train.y - &y_signal;
    let ratio = var(&y_signal) / var(&y_noise);
    assert!((ratio / spec.snr_y - 1.0).abs() < 0.05, "{ratio}");
    assert_eq!(snr_noise_variance(&[3.0, 4.0], 5.0), 5.0);
}

#[test]
fn benchmark_report_is_deterministic_and_round_trips() {
    let spec = SimSpec { n: 30, widths: vec![12], n_nonnull: 3, test_n: 40, ..SimSpec::single_indep(5.0, 0) };
    let config = ExperimentConfig {
        spec,
        methods: vec![Method::Sfm, Method::Lasso, Method::Enet, Method::Spca, Method::Oracle],
        replicates: 3,
        base_seed: 21,
        options: MethodOptions { folds: 3, grid_len: 5, ..MethodOptions::default() },
        record_timings: false,
    };
    let a = run_experiment(&config).unwrap();
    let b = run_experiment(&config).unwrap();
    assert_eq!(a.rows, b.rows);
    for row in &a.rows {
        assert!((0.0..=1.0).contains(&row.tpr) && (0.0..=1.0).contains(&row.fpr));
        assert!(row.normalized_test_mse.is_finite());
    }
    let dir = tempfile::tempdir().unwrap();
    emit_report(&a, dir.path(), false).unwrap();
    let back = read_results_csv(&dir.path().join("results.csv")).unwrap();
    assert_eq!(back, a.rows);
}
