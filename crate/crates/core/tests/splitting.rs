use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use semiboost::hypothesis::HypothesisInputs;
use semiboost::order::GridSpec;
use semiboost::scheme::{make_ou, weak_expectation, GaussianNoise, NoiseLaw, SchemeSemigroup, UniformNoise};
use semiboost::splitting::{
    build_split, bump, convolved_expectation, regularized_expectation, theta_weight, LocalizationOptions, SplitNoise,
};

fn setup(n: u32) -> (SchemeSemigroup, SplitNoise) {
    let noise: Arc<dyn NoiseLaw> = Arc::new(GaussianNoise { dim: 1 });
    let grid = GridSpec::new(1.0, n).unwrap().with_level(1);
    let sg = SchemeSemigroup::new(Arc::new(make_ou(1.0, 1.0)), noise.clone(), grid).unwrap();
    let split = build_split(noise, &[0.0], 1.0, 1.0 / f64::from(n)).unwrap();
    (sg, split)
}

proptest! {
    #[test]
    fn bump_lies_in_unit_interval(v in 0.05f64..10.0, z in prop::collection::vec(-20.0f64..20.0, 1..4)) {
        let b = bump(v, &z);
        prop_assert!((0.0..=1.0).contains(&b));
        let r = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(b == 0.0 || r < 2.0 * v);
        prop_assert!(b == 1.0 || r > v);
    }

    #[test]
    fn bump_is_continuous(v in 0.1f64..5.0, z in -6.0f64..6.0) {
        let h = 1e-9 * v;
        prop_assert!((bump(v, &[z]) - bump(v, &[z + h])).abs() < 1e-6);
    }

    #[test]
    fn theta_lies_in_unit_interval(
        chi in prop::collection::vec(any::<bool>(), 16),
        z in prop::collection::vec(-3.0f64..3.0, 16),
    ) {
        let (_, split) = setup(16);
        let zs: Vec<Vec<f64>> = z.iter().map(|&v| vec![v]).collect();
        let th = theta_weight(&split, &chi, &zs);
        prop_assert!((0.0..=1.0).contains(&th));
    }
}

#[test]
fn unit_weight_matches_the_plain_scheme() {
    let (sg, split) = setup(8);
    let f = |x: &[f64]| x[0].cos();
    let plain = weak_expectation(&sg, &[0.5], 1.0, f, 200_000, 1).unwrap();
    let reg = regularized_expectation(&sg, &split, &[0.5], 1.0, f, 200_000, 2, LocalizationOptions::off()).unwrap();
    assert_eq!(reg.theta_mean.mean, 1.0);
    let se = plain.stderr.hypot(reg.value.stderr);
    assert!((plain.mean - reg.value.mean).abs() < 3.0 * se, "{plain:?} vs {reg:?}");
}

#[test]
fn blur_leaves_linear_functions_unbiased() {
    let (sg, _) = setup(8);
    let f = |x: &[f64]| 2.0 * x[0] - 1.0;
    let plain = weak_expectation(&sg, &[0.3], 1.0, f, 200_000, 4).unwrap();
    let blurred = convolved_expectation(&sg, 0.5, &[0.3], 1.0, f, 200_000, 5).unwrap();
    let se = plain.stderr.hypot(blurred.stderr);
    assert!((plain.mean - blurred.mean).abs() < 3.0 * se, "{plain:?} vs {blurred:?}");
}

#[test]
fn v_acceptance_stays_in_unit_interval() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(8);
    let gauss = build_split(Arc::new(GaussianNoise { dim: 2 }), &[0.3, -0.2], 0.8, 1.0 / 16.0).unwrap();
    let unif = build_split(Arc::new(UniformNoise { half_width: 3f64.sqrt() }), &[0.0], 1.0, 1.0 / 16.0).unwrap();
    for _ in 0..1_000_000 {
        let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let a = gauss.v_acceptance(&z).unwrap();
        assert!((0.0..=1.0).contains(&a), "{a} at {z:?}");
        let u = [rng.random_range(-3f64.sqrt()..3f64.sqrt())];
        let b = unif.v_acceptance(&u).unwrap();
        assert!((0.0..=1.0).contains(&b), "{b} at {u:?}");
    }
}

/// With common random numbers the OU path is affine in `x0` and `Theta` does
/// not see `x0`, so the difference quotient of `E[Theta X] / E[Theta]` is
/// `(1 - d)^K` up to rounding.
#[test]
fn regularized_semigroup_has_the_affine_derivative() {
    let (sg, split) = setup(16);
    let h = 1e-3;
    let run = |x0: f64| {
        regularized_expectation(&sg, &split, &[x0], 1.0, |x| x[0], 20_000, 9, Default::default()).unwrap().value.mean
    };
    let fd = (run(1.0 + h) - run(1.0 - h)) / (2.0 * h);
    let exact = (1.0 - 1.0 / 16.0f64).powi(16);
    assert!((fd - exact).abs() < 1e-8, "fd {fd} vs {exact}");
}

#[test]
fn later_times_only_relax_the_first_threshold() {
    let base = HypothesisInputs {
        psi_norm: Some(1.0),
        lambda_star: Some(1.0),
        m8: Some(105.0),
        m_star: Some(0.388),
        noise_dim: 1,
        horizon: 1.0,
        t: 0.05,
    };
    for n in [16u64, 256, 4096] {
        let mut prev = f64::INFINITY;
        for t in [0.05, 0.1, 0.25, 0.5, 1.0] {
            let lhs = HypothesisInputs { t, ..base }.threshold1(1.0 / n as f64).lhs;
            assert!(lhs <= prev);
            prev = lhs;
        }
    }
    let mut prev = u64::MAX;
    for t in [0.05, 0.1, 0.25, 0.5, 1.0] {
        let n = HypothesisInputs { t, ..base }.minimal_n().unwrap();
        assert!(n <= prev);
        prev = n;
    }
}
