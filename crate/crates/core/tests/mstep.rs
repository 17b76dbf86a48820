//! The closed-form M-step against an expected log-likelihood written out
//! term by term, one transition at a time.

use fracnet::em::{m_step, normalize_latent_scale, q_value, EStepQuantities, MStepOptions};
use fracnet::eval::systems::three_node;
use fracnet::fracops::GLKernel;
use fracnet::inputs::{estimate_all_inputs, SolverOptions};
use fracnet::kalman::run_filter;
use fracnet::model::{simulate, InputSequence, ModelParams, Noise, TimeSeriesMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{coords, get, golden_max, instances, q_oracle, random_spd, set};

mod support;

#[test]
fn library_q_matches_term_by_term_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for e in instances() {
        let mut th = ModelParams::random(
            e.kernel_obs.alphas().to_vec(),
            e.kernel_lat.alphas().to_vec(),
            e.p(),
            0.8,
            &mut rng,
        );
        th.sigma1 = random_spd(e.n(), 0.5, &mut rng);
        th.sigma2 = random_spd(e.m(), 0.5, &mut rng);
        let (ours, oracle) = (q_value(&th, &e).unwrap(), q_oracle(&th, &e));
        assert!((ours - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{ours} vs {oracle}");
    }
}

#[test]
fn update_is_a_stationary_point() {
    for (idx, e) in instances().into_iter().enumerate() {
        let th = m_step(&e, MStepOptions::default()).unwrap().params;
        let mut worst = 0f64;
        for c in coords(&th) {
            let v = get(&th, c);
            let h = 1e-6 * v.abs().max(1.0);
            let g = (q_oracle(&set(&th, c, v + h), &e) - q_oracle(&set(&th, c, v - h), &e)) / (2.0 * h);
            worst = worst.max(g.abs());
        }
        assert!(worst < 1e-5, "instance {idx}: gradient max norm {worst:e}");
    }
}

#[test]
fn update_matches_coordinatewise_search() {
    for (idx, e) in instances().into_iter().enumerate() {
        let th = m_step(&e, MStepOptions::default()).unwrap().params;
        let best = q_oracle(&th, &e);
        for c in coords(&th) {
            let v = get(&th, c);
            let w = 0.5 * v.abs().max(0.2);
            let found = golden_max(|s| q_oracle(&set(&th, c, s), &e), v - w, v + w);
            assert!((found - v).abs() < 1e-4, "instance {idx} {c:?}: update {v}, search {found}");
            assert!(q_oracle(&set(&th, c, found), &e) <= best + 1e-9);
        }
    }
}

#[test]
fn m_step_never_decreases_q_along_em() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (n, m, p, len) = (2, 1, usize::from(seed % 2 == 1), 80);
        // the three-node reference network with node 3 latent
        let reference = three_node::<f64>(1e-3, [2.0, 5.0, 0.0]).params();
        let mut truth = ModelParams::partition(&reference.stacked_a(), &DMatrix::zeros(3, p), &reference.stacked_sigma(), &[0.7, 1.1, 0.8], &[0, 1], &[2])
            .unwrap();
        truth.b1 = DMatrix::from_element(n, p, 0.5);
        truth.b2 = DMatrix::from_element(m, p, -0.5);
        let u = DMatrix::from_fn(p, len - 1, |_, t| if t % 17 == 3 { 1.0 } else { 0.0 });
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let sim = simulate(&truth, Some(&x0), None, &InputSequence::new(u).unwrap(), len, Noise::Seeded(seed)).unwrap();
        let x: &TimeSeriesMatrix<f64> = &sim.observed;

        let mut theta = ModelParams::random(vec![0.7, 1.1], vec![0.8], p, 0.5, &mut rng);
        let mut inputs = InputSequence::zeros(p, len - 1);
        let (z0, p0) = (DVector::zeros(m), DMatrix::identity(m, m));
        for iter in 0..20 {
            let f = run_filter(&theta, x, &inputs, &z0, &p0).unwrap();
            if p > 0 {
                inputs = estimate_all_inputs(&theta, x.values(), &f.z_hat, 0.05, SolverOptions::default(), None).unwrap();
            }
            let e = EStepQuantities::new(
                x.values().clone(),
                f.z_hat,
                f.p_hat,
                inputs.values().clone(),
                GLKernel::new(&theta.alpha_obs, len - 1),
                GLKernel::new(&theta.alpha_lat, len - 1),
            )
            .unwrap();
            let next = m_step(&e, MStepOptions::default()).unwrap().params;
            let (before, after) = (q_value(&theta, &e).unwrap(), q_value(&next, &e).unwrap());
            assert!(after >= before - 1e-8, "seed {seed} iteration {iter}: {before} -> {after}");
            theta = next;
            normalize_latent_scale(&mut theta);
        }
    }
}
