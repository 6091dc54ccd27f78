use proptest::prelude::*;

use levy_em::em_engine::{coupled_em_family, em_path};
use levy_em::levy_measures::{JumpLaw, LevyMeasure};
use levy_em::levy_sampler::{pairwise_sum, sample_noise_grid, LevyProcess};
use levy_em::rate_lab::{holder_case_1_exponent, holder_case_2_exponent, predict_rate, EpsMargin, Regime};
use levy_em::rng;
use levy_em::sde_model::{AlphaCirParams, SdeModel};
use levy_em::stats::ks_two_sample;
use levy_em::yw_kit::{PsiVariant, YwFunction, YwParams};

fn measure() -> impl Strategy<Value = LevyMeasure<f64>> {
    prop_oneof![
        (1.05..1.95f64, 0.1..5.0f64).prop_map(|(a, c)| LevyMeasure::stable(a, c).unwrap()),
        (1.05..1.95f64, 0.1..5.0f64, 0.05..5.0f64).prop_map(|(a, c, l)| LevyMeasure::tempered_stable(a, c, l).unwrap()),
        (1.05..1.95f64, 0.1..5.0f64, 0.1..5.0f64).prop_map(|(a, c, k)| LevyMeasure::truncated_stable(a, c, k).unwrap()),
        (0.1..5.0f64, 0.1..3.0f64)
            .prop_map(|(r, m)| LevyMeasure::compound_poisson(r, JumpLaw::Exponential { mean: m }).unwrap()),
        (0.1..5.0f64, 1.1..4.0f64, 0.1..2.0f64)
            .prop_map(|(r, e, m)| LevyMeasure::compound_poisson(r, JumpLaw::Pareto { exponent: e, min: m }).unwrap()),
        (0.1..5.0f64, 0.1..3.0f64)
            .prop_map(|(r, s)| LevyMeasure::compound_poisson(r, JumpLaw::PointMass { size: s }).unwrap()),
    ]
}

fn square_integrable_measure() -> impl Strategy<Value = LevyMeasure<f64>> {
    prop_oneof![
        (1.05..1.95f64, 0.1..5.0f64, 0.05..5.0f64).prop_map(|(a, c, l)| LevyMeasure::tempered_stable(a, c, l).unwrap()),
        (1.05..1.95f64, 0.1..5.0f64, 0.1..5.0f64).prop_map(|(a, c, k)| LevyMeasure::truncated_stable(a, c, k).unwrap()),
        (0.1..5.0f64, 0.1..3.0f64)
            .prop_map(|(r, m)| LevyMeasure::compound_poisson(r, JumpLaw::Exponential { mean: m }).unwrap()),
        (0.1..5.0f64, 2.1..4.0f64, 0.1..2.0f64)
            .prop_map(|(r, e, m)| LevyMeasure::compound_poisson(r, JumpLaw::Pareto { exponent: e, min: m }).unwrap()),
    ]
}

fn variant() -> impl Strategy<Value = PsiVariant<f64>> {
    prop_oneof![Just(PsiVariant::ClosedForm), (0.01..0.2f64).prop_map(|ramp| PsiVariant::Mollified { ramp })]
}

fn yw() -> impl Strategy<Value = YwFunction<f64>> {
    (1.0001..10.0f64, 1e-3..1.0f64, variant())
        .prop_map(|(d, e, v)| YwFunction::new(YwParams::new(d, e, v)).unwrap())
}

proptest! {
    #[test]
    fn tails_are_monotone(m in measure(), x in 1e-3..10.0f64, ratio in 1.0..10.0f64) {
        let y = x * ratio;
        prop_assert!(m.tail_mass(x).unwrap() >= m.tail_mass(y).unwrap());
        prop_assert!(m.tail_first_moment(x).unwrap() >= m.tail_first_moment(y).unwrap());
        prop_assert!(m.small_second_moment(x).unwrap() <= m.small_second_moment(y).unwrap());
        prop_assert!(m.tail_first_moment(x).unwrap() >= x * m.tail_mass(x).unwrap() * (1.0 - 1e-12));
    }

    #[test]
    fn second_moment_splits_at_any_point(m in square_integrable_measure(), u in 1e-2..10.0f64) {
        prop_assert!(m.is_square_integrable());
        let below = m.small_second_moment(u).unwrap();
        let total = m.second_moment();
        prop_assert!(below <= total * (1.0 + 1e-12));
        prop_assert!((m.small_second_moment(f64::INFINITY).unwrap() - total).abs() <= 1e-12 * total);
    }

    #[test]
    fn phi_shape(f in yw(), x in -5.0..5.0f64) {
        let eps = f.params().epsilon;
        let (p, d, dd) = (f.phi(x), f.phi_prime(x), f.phi_double_prime(x));
        prop_assert!(p >= 0.0);
        prop_assert_eq!(p, f.phi(-x));
        prop_assert!(d.abs() <= 1.0);
        prop_assert!(d * x.signum() >= 0.0);
        prop_assert!(dd >= 0.0);
        if x < -eps {
            prop_assert!(d < 0.0);
        }
        prop_assert!(x.abs() <= eps + p + 1e-12);
    }

    #[test]
    fn phi_is_convex_and_bregman_nonnegative(f in yw(), x in -3.0..3.0f64, y in -3.0..3.0f64) {
        let scale = f.params().epsilon;
        let (x, y) = (x * scale, y * scale);
        let mid = f.phi((x + y) / 2.0);
        prop_assert!(mid <= (f.phi(x) + f.phi(y)) / 2.0 + 1e-15);
        prop_assert!(f.bregman(x, y) >= 0.0);
        prop_assert!(f.bregman(y, y) == 0.0);
    }

    #[test]
    fn single_precision_phi_tracks_double(d in 1.1..10.0f64, e in 1e-2..1.0f64, x in -2.0..2.0f64) {
        let f64v = YwFunction::new(YwParams::new(d, e, PsiVariant::ClosedForm)).unwrap();
        let f32v = YwFunction::new(YwParams::new(d as f32, e as f32, PsiVariant::ClosedForm)).unwrap();
        prop_assert!((f64v.phi(x) - f32v.phi(x as f32) as f64).abs() < 1e-5);
        prop_assert!((f64v.phi_prime(x) - f32v.phi_prime(x as f32) as f64).abs() < 1e-4);
    }

    #[test]
    fn case_boundary_identity(rho in 0.01..1.0f64, gamma in 0.5001..1.0f64, beta in 0.01..0.99f64) {
        let boundary = 2.0 * (1.0 - gamma) / (1.0 - beta);
        let a = holder_case_1_exponent(rho, gamma, beta);
        let b = holder_case_2_exponent(rho, beta, boundary);
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn prediction_regimes(rho in 0.01..1.0f64, gamma in 0.5..1.0f64, alpha in 1.0..2.0f64, t in 0.01..0.99f64) {
        let lo = 1.0 - 1.0 / alpha;
        let beta = lo + t * (1.0 - lo);
        let p = predict_rate(rho, gamma, beta, alpha, EpsMargin::Zero).unwrap();
        prop_assert!(p.exponent >= 0.0 && p.exponent <= rho / 2.0);
        let boundary = 2.0 * (1.0 - gamma) / (1.0 - beta);
        match p.regime {
            Regime::LogCase => prop_assert_eq!(gamma, 0.5),
            Regime::HolderCase1 => prop_assert!(alpha < boundary),
            Regime::HolderCase2 { .. } => prop_assert!(alpha >= boundary),
            Regime::DiffusionBaseline => prop_assert!(false),
        }
    }

    #[test]
    fn ks_statistic_is_symmetric_and_bounded(a in prop::collection::vec(-10.0..10.0f64, 1..50), b in prop::collection::vec(-10.0..10.0f64, 1..50)) {
        let d = ks_two_sample(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_two_sample(&b, &a));
        prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
    }
}

fn driver() -> impl Strategy<Value = LevyProcess<f64>> {
    prop_oneof![
        Just(LevyMeasure::stable(1.5, 1.0).unwrap()),
        Just(LevyMeasure::truncated_stable(1.5, 1.0, 1.0).unwrap()),
        Just(LevyMeasure::compound_poisson(2.0, JumpLaw::Exponential { mean: 1.0 }).unwrap()),
    ]
    .prop_map(|m| LevyProcess::new(m, 0.5, if m.stable_index().is_some() { 0.01 } else { 0.0 }).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coarsening_is_a_block_sum(p in driver(), seed in any::<u64>(), k in 1u32..10, j in 0u32..10) {
        let n_fine = 1usize << k;
        let m = 1usize << j.min(k);
        let fine = sample_noise_grid(&p, 1.0, n_fine, rng::path_seed_id(seed, 0)).unwrap();
        let coarse = fine.coarsen(m).unwrap();
        let block = n_fine / m;
        for i in 0..m {
            prop_assert_eq!(coarse.dl[i], pairwise_sum(&fine.dl[i * block..(i + 1) * block]));
            prop_assert_eq!(coarse.dw[i], pairwise_sum(&fine.dw[i * block..(i + 1) * block]));
        }
        let total: f64 = fine.dl.iter().sum();
        let coarse_total: f64 = coarse.dl.iter().sum();
        prop_assert!((total - coarse_total).abs() <= 1e-9 * (1.0 + fine.dl.iter().map(|x| x.abs()).sum::<f64>()));
    }

    #[test]
    fn noise_is_a_function_of_the_seed(p in driver(), seed in any::<u64>(), i in 0u64..1000) {
        let a = sample_noise_grid(&p, 1.0, 64, rng::path_seed_id(seed, i)).unwrap();
        let b = sample_noise_grid(&p, 1.0, 64, rng::path_seed_id(seed, i)).unwrap();
        let c = sample_noise_grid(&p, 1.0, 64, rng::path_seed_id(seed, i + 1)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(a.dw, c.dw);
    }

    #[test]
    fn coupled_family_equals_direct_coarse_runs(p in driver(), seed in any::<u64>()) {
        let mut params = AlphaCirParams::new(1.0, 1.0, 0.5, 0.5, 1.5, 1.0, 1.0);
        params.clamp = Some(10.0);
        let model = SdeModel::alpha_cir_with_driver(params, p).unwrap();
        let noise = sample_noise_grid(&model.driver, 1.0, 256, rng::path_seed_id(seed, 0)).unwrap();
        let levels = [4usize, 16, 64];
        let family = coupled_em_family(&model, &noise, &levels).unwrap();
        prop_assert_eq!(family.len(), 4);
        for &n in levels.iter().chain([256usize].iter()) {
            let direct = em_path(&model, &noise.coarsen(n).unwrap()).unwrap();
            prop_assert_eq!(&family[&n].values, &direct.values);
        }
    }
}
