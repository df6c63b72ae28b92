//! The five invariant checks of a splitting, as one table.

use std::sync::Arc;

use super::{build_split, bump_log_bound, ks_critical_1pct, ks_statistic, lambda_tail_bound, regularized_expectation};
use crate::error::Result;
use crate::order::GridSpec;
use crate::report::fit_slope;
use crate::rng::CounterRng;
use crate::scheme::{make_brownian, NoiseLaw, SchemeSemigroup};

/// One check: `value` compared against `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Step used for the law-equality and self-normalization checks.
pub const CHECK_DELTA: f64 = 1.0 / 16.0;

/// Counts `K = floor(t / d)` at which the `Lambda` tail is checked.
pub const LAMBDA_COUNTS: [u64; 3] = [8, 16, 32];

/// Radii over which the bump derivative scaling is fitted.
pub const BUMP_RADII: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

/// Largest `|slope - p q|` of `log max phi_v |d^q ln phi_v|^p` against `log v`.
pub fn bump_scaling_deviation() -> Result<f64> {
    let mut worst = 0f64;
    for q in 1..=2 {
        for p in 1..=2 {
            let rows: Vec<(f64, f64)> = BUMP_RADII.iter().map(|&v| (v, bump_log_bound(v, q, p, 20_000))).collect();
            let (slope, _) = fit_slope(&rows)?;
            worst = worst.max((slope - f64::from(p * q)).abs());
        }
    }
    Ok(worst)
}

/// Law equality, bump scaling, `Lambda` tail, residual nonnegativity and
/// exact self-normalization, each on `samples` draws.
pub fn invariant_checks(
    noise: Arc<dyn NoiseLaw>,
    z_star: &[f64],
    r_star: f64,
    samples: u64,
    seed: u64,
) -> Result<Vec<CheckRow>> {
    let split = build_split(noise.clone(), z_star, r_star, CHECK_DELTA)?;
    let dim = split.dim();
    let mut rows = Vec::new();

    // first coordinate of sqrt(d) Z, drawn directly and through the mixture
    let sd = CHECK_DELTA.sqrt();
    let mut buf = vec![0.0; dim];
    let mut direct = Vec::with_capacity(samples as usize);
    let mut mixed = Vec::with_capacity(samples as usize);
    for k in 0..samples {
        noise.sample(&mut CounterRng::from_words(&[seed, k, 1]), &mut buf);
        direct.push(sd * buf[0]);
        split.sample(&mut CounterRng::from_words(&[seed, k, 2]), &mut buf)?;
        mixed.push(buf[0]);
    }
    let crit = ks_critical_1pct(direct.len(), mixed.len());
    let ks = ks_statistic(&direct, &mixed);
    rows.push(CheckRow { name: "law_equality_ks", value: ks, threshold: crit, pass: ks < crit });

    let dev = bump_scaling_deviation()?;
    rows.push(CheckRow { name: "bump_scaling_slope_deviation", value: dev, threshold: 0.2, pass: dev <= 0.2 });

    // excess of the empirical P(not Lambda) over bound + 3 sigma, worst count
    let mut excess = f64::NEG_INFINITY;
    for &k in &LAMBDA_COUNTS {
        let misses = (0..samples)
            .filter(|&s| {
                let mut rng = CounterRng::from_words(&[seed, s, 3, k]);
                let hits = (0..k).filter(|_| split.sample_chi(&mut rng)).count();
                (hits as f64) < split.m_star * k as f64 / 2.0
            })
            .count();
        let freq = misses as f64 / samples as f64;
        let sigma = (freq * (1.0 - freq) / samples as f64).sqrt();
        excess = excess.max(freq - lambda_tail_bound(split.m_star, k) - 3.0 * sigma);
    }
    rows.push(CheckRow { name: "lambda_tail_excess", value: excess, threshold: 0.0, pass: excess <= 0.0 });

    // v_acceptance errors out on a weight outside [0, 1]
    let mut min_weight = 1f64;
    for k in 0..samples {
        noise.sample(&mut CounterRng::from_words(&[seed, k, 4]), &mut buf);
        min_weight = min_weight.min(split.v_acceptance(&buf)?);
    }
    rows.push(CheckRow { name: "v_weight_min", value: min_weight, threshold: 0.0, pass: min_weight >= 0.0 });

    let steps = (1.0 / CHECK_DELTA) as u32;
    let grid = GridSpec::new(1.0, steps)?.with_level(1);
    let sg = SchemeSemigroup::new(Arc::new(make_brownian(dim)), noise, grid)?;
    let x0 = vec![0.0; dim];
    let r = regularized_expectation(&sg, &split, &x0, 1.0, |_| 1.0, samples.min(20_000), seed, Default::default())?;
    let dev = (r.value.mean - 1.0).abs();
    rows.push(CheckRow { name: "self_normalized_one", value: dev, threshold: 0.0, pass: dev == 0.0 });
    Ok(rows)
}

pub fn checks_csv(rows: &[CheckRow]) -> String {
    let mut s = String::from("check,value,threshold,pass\n");
    for r in rows {
        s.push_str(&format!("{},{:.6e},{:.6e},{}\n", r.name, r.value, r.threshold, r.pass));
    }
    s
}
