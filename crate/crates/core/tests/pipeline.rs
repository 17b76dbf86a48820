use fracnet::em::{fit, EMConfig};
use fracnet::eval::systems::three_node;
use fracnet::eval::{predict_k_steps, relative_error, rolling_origin, run_latent_comparison, ComparisonConfig, DataSource, Method};
use fracnet::kalman::run_filter;
use fracnet::model::{baseline_fit_no_latent, simulate, BaselineOptions, InputSequence, ModelParams, Noise};
use fracnet::inputs::Penalty;
use fracnet::Series;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn observed_model() -> ModelParams<f64> {
    let a = DMatrix::from_row_slice(2, 2, &[-0.2, 0.05, 0.1, -0.15]);
    ModelParams::observed_only(a, DMatrix::zeros(2, 0), DMatrix::identity(2, 2) * 1e-3, vec![0.6, 0.9]).unwrap()
}

#[test]
fn noiseless_fit_recovers_fully_observed_model() {
    let truth = observed_model();
    let x0 = DVector::from_column_slice(&[1.5, -2.0]);
    let sim = simulate(&truth, Some(&x0), None, &InputSequence::zeros(0, 59), 60, Noise::None).unwrap();
    let report = fit(&sim.observed, &truth.alpha_obs, &[], 0, &EMConfig::default()).unwrap();
    assert!(report.converged);
    assert!((&report.theta_final.a11 - &truth.a11).amax() < 1e-8);

    let base = baseline_fit_no_latent(&sim.observed, &truth.alpha_obs, 0, Penalty::Fixed(0.0), BaselineOptions::default())
        .unwrap();
    assert!((base.a() - &truth.a11).amax() < 1e-8);

    let pred = rolling_origin(&base.params, sim.observed.values(), &DMatrix::zeros(0, 59), &DMatrix::zeros(0, 59), 48, 5, None)
        .unwrap();
    assert!(pred.per_node_error.iter().all(|e| e.unwrap() < 1e-6), "{:?}", pred.per_node_error);
}

#[test]
fn rolling_origin_matches_direct_forecasts() {
    let truth = observed_model();
    let sim = simulate(&truth, Some(&DVector::from_column_slice(&[1.0, 1.0])), None, &InputSequence::zeros(0, 39), 40, Noise::Seeded(9))
        .unwrap();
    let x = sim.observed.values();
    let (train, h) = (30, 3);
    let report = rolling_origin(&truth, x, &DMatrix::zeros(0, 39), &DMatrix::zeros(0, 39), train, h, None).unwrap();
    assert_eq!(report.first_target, train + h - 1);
    // each target forecast from the history ending h samples before it
    let mut direct = DMatrix::zeros(2, 40 - report.first_target);
    for (c, target) in (report.first_target..40).enumerate() {
        let hist = target + 1 - h;
        let f = predict_k_steps(&truth, &x.columns(0, hist).into_owned(), &DMatrix::zeros(0, hist - 1), &DMatrix::zeros(0, hist - 1), h)
            .unwrap();
        direct.set_column(c, &f.column(h - 1));
    }
    assert!((report.predictions.values() - &direct).amax() < 1e-12);
    let errors = relative_error(&x.columns(report.first_target, direct.ncols()).into_owned(), &direct).unwrap();
    assert_eq!(errors, report.per_node_error);
}

#[test]
fn method_order_only_permutes_columns() {
    let sys = three_node::<f64>(1e-3, [2.0, 5.0, 0.0]);
    let gen = |s: u64| sys.simulate(120, s);
    let mut cfg = ComparisonConfig {
        n_seeds: 3,
        seed: 17,
        ..Default::default()
    };
    cfg.em.max_iter = 30;
    let a = run_latent_comparison(DataSource::PerSeed(&gen), &[0, 1], &[2], &[0.7, 1.1], &[0.8], &cfg).unwrap();
    cfg.methods = vec![Method::WithLatent, Method::WithoutLatent];
    let b = run_latent_comparison(DataSource::PerSeed(&gen), &[0, 1], &[2], &[0.7, 1.1], &[0.8], &cfg).unwrap();
    for method in [Method::WithLatent, Method::WithoutLatent] {
        assert_eq!(a.mean_errors(method), b.mean_errors(method));
        assert_eq!(a.median_errors(method), b.median_errors(method));
    }
    assert_eq!(a.win_rate(), b.win_rate());
    for (sa, sb) in a.seeds.iter().zip(&b.seeds) {
        assert_eq!(sa.methods[0].errors, sb.methods[1].errors);
        assert_eq!(sa.methods[1].errors, sb.methods[0].errors);
    }
}

#[test]
fn single_precision_filter_tracks_double() {
    let sys = three_node::<f64>(1e-3, [2.0, 5.0, 0.0]);
    let rec = sys.simulate(80, 4).unwrap();
    let th = ModelParams::partition(&sys.params().stacked_a(), &DMatrix::zeros(3, 0), &sys.params().stacked_sigma(), &sys.alpha, &[0, 1], &[2])
        .unwrap();
    let x: Series = rec.select_channels(&[0, 1]).unwrap();
    let f64_run = run_filter(&th, &x, &InputSequence::zeros(0, 79), &DVector::zeros(1), &DMatrix::identity(1, 1)).unwrap();
    let th32 = th.cast::<f32>();
    let f32_run = run_filter(&th32, &x.cast::<f32>(), &InputSequence::zeros(0, 79), &DVector::zeros(1), &DMatrix::identity(1, 1))
        .unwrap();
    for k in 0..79 {
        let (a, b) = (f64_run.z_hat[(0, k)], f32_run.z_hat[(0, k)] as f64);
        assert!((a - b).abs() < 1e-3 * a.abs().max(1.0), "step {k}: {a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn seeded_comparisons_are_reproducible(seed in 0u64..1000) {
        let sys = three_node::<f64>(1e-3, [2.0, 5.0, 0.0]);
        let gen = |s: u64| sys.simulate(60, s);
        let mut cfg = ComparisonConfig { n_seeds: 2, seed, ..Default::default() };
        cfg.em.max_iter = 5;
        let a = run_latent_comparison(DataSource::PerSeed(&gen), &[0, 1], &[2], &[0.7, 1.1], &[0.8], &cfg).unwrap();
        let b = run_latent_comparison(DataSource::PerSeed(&gen), &[0, 1], &[2], &[0.7, 1.1], &[0.8], &cfg).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn filter_covariances_stay_symmetric_psd(seed in any::<u64>(), a in 0.2f64..1.4) {
        let sys = three_node::<f64>(1e-2, [1.0, -1.0, 0.5]);
        let rec = sys.simulate(40, seed).unwrap();
        let mut th = ModelParams::partition(&sys.params().stacked_a(), &DMatrix::zeros(3, 0), &sys.params().stacked_sigma(), &sys.alpha, &[0], &[1, 2])
            .unwrap();
        th.alpha_lat = vec![a, a];
        let x = rec.select_channels(&[0]).unwrap();
        let f = run_filter(&th, &x, &InputSequence::zeros(0, 39), &DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap();
        for p in &f.p_hat {
            prop_assert!((p - p.transpose()).amax() < 1e-12);
            prop_assert!(p.clone().symmetric_eigen().eigenvalues.min() > -1e-12);
        }
    }
}
