use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use semiboost::config::{StudyConfig, StudyKind};
use semiboost::random_grid::Coupling;
use semiboost::report::fit_slope;

proptest! {
    #[test]
    fn config_text_round_trips(
        kind in prop::sample::select(StudyKind::ALL.to_vec()),
        nu in prop::collection::vec(1u32..6, 1..4),
        n in prop::collection::vec(2u32..64, 1..5),
        alpha in 1u32..3,
        x0 in -10.0f64..10.0,
        sigma in 0.0f64..3.0,
        samples in 1u64..10_000_000,
        seed in any::<u64>(),
        common in any::<bool>(),
    ) {
        let mut cfg = StudyConfig::for_kind(kind);
        cfg.nu = nu;
        cfg.n = n;
        cfg.alpha = alpha;
        cfg.x0 = x0;
        cfg.sigma = sigma;
        cfg.samples = samples;
        cfg.seed = seed;
        cfg.coupling = if common { Coupling::Common } else { Coupling::Independent };
        let back = StudyConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn slope_survives_one_percent_noise() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(12);
    for _ in 0..200 {
        let rows: Vec<(f64, f64)> = [2.0, 4.0, 8.0, 16.0, 32.0]
            .iter()
            .map(|&n: &f64| {
                let g: f64 = rng.sample(StandardNormal);
                (n, 3.0 / (n * n) * (1.0 + 0.01 * g))
            })
            .collect();
        let (s, _) = fit_slope(&rows).unwrap();
        assert!((1.8..=2.2).contains(&s), "slope {s}");
    }
}

#[test]
fn exact_power_law_gives_exact_slope() {
    let rows: Vec<(f64, f64)> = [2.0, 4.0, 8.0].iter().map(|&n: &f64| (n, 0.5 * n.powf(-1.5))).collect();
    let (s, se) = fit_slope(&rows).unwrap();
    assert!((s - 1.5).abs() < 1e-12);
    assert!(se < 1e-10);
}
