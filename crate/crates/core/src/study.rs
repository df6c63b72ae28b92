//! Study dispatch: one [`StudyConfig`] in, one CSV out.
//!
//! The CSV opens with `#` lines holding the resolved config, so a file
//! carries everything needed to reproduce it.

use std::fmt::Write;
use std::sync::Arc;

use statrs::distribution::{Continuous, Normal};

use crate::config::{NoiseKind, SchemeKind, StudyConfig, StudyKind};
use crate::error::{Error, Result};
use crate::expansion::expansion_tree;
use crate::expansion::matrix::{exact_semigroup_matrix, qhat_matrix, tv_distance_matrix, MatrixSemigroup};
use crate::hypothesis::{hypothesis_report, HypothesisInputs};
use crate::order::{GridSpec, OrderParams};
use crate::random_grid::{weak_error_study, EstimatorOptions, StudyOrders};
use crate::report::{fit_slope, ConvergenceReport};
use crate::scheme::oracle::{ou_oracle, OuFunctional};
use crate::scheme::{
    ellipticity_floor, make_brownian, make_ou, moment_estimate, psi_norm_estimate, state_cloud, weak_expectation,
    GaussianNoise, NoiseLaw, RademacherNoise, SchemeFunction, SchemeSemigroup, UniformNoise,
};
use crate::splitting::checks::checks_csv;
use crate::splitting::{build_split, convolved_density, invariant_checks};

/// A finished study. `failures` names invariant checks that did not hold;
/// the CSV is complete either way.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub csv: String,
    pub failures: Vec<String>,
}

pub fn noise_law(kind: NoiseKind) -> Arc<dyn NoiseLaw> {
    match kind {
        NoiseKind::Gaussian => Arc::new(GaussianNoise { dim: 1 }),
        NoiseKind::Uniform => Arc::new(UniformNoise { half_width: 1.0 }),
        NoiseKind::Rademacher => Arc::new(RademacherNoise),
    }
}

fn scheme_function(cfg: &StudyConfig) -> Arc<dyn SchemeFunction> {
    match cfg.scheme {
        SchemeKind::Ou => Arc::new(make_ou(cfg.a, cfg.sigma)),
        SchemeKind::Brownian => Arc::new(make_brownian(1)),
    }
}

/// The configured scheme on the level-0 grid with `n` steps.
pub fn scheme_semigroup(cfg: &StudyConfig, n: u32) -> Result<SchemeSemigroup> {
    SchemeSemigroup::new(scheme_function(cfg), noise_law(cfg.noise), GridSpec::new(cfg.horizon, n)?)
}

fn first_n(cfg: &StudyConfig) -> Result<u32> {
    cfg.n.first().copied().ok_or_else(|| Error::Config("need at least one n".into()))
}

/// `E f(X_T)` for the continuous-time process, OU only.
pub fn exact_value(cfg: &StudyConfig) -> Result<f64> {
    if cfg.scheme != SchemeKind::Ou {
        return Err(Error::Config(format!("no closed form for scheme {}", cfg.scheme)));
    }
    if cfg.noise != NoiseKind::Gaussian {
        return Err(Error::Config("closed forms assume Gaussian noise".into()));
    }
    cfg.f.ou_exact(cfg.a, cfg.sigma, cfg.x0, cfg.horizon)
}

/// Density of `X_T` at `y`.
pub fn exact_density(cfg: &StudyConfig, y: f64) -> Result<f64> {
    match cfg.scheme {
        SchemeKind::Ou => ou_oracle(cfg.a, cfg.sigma, cfg.x0, cfg.horizon, OuFunctional::DensityAt(y)),
        SchemeKind::Brownian => Ok(Normal::new(cfg.x0, cfg.horizon.sqrt()).map_err(|e| Error::invalid(e.to_string()))?.pdf(y)),
    }
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    let mut failures = Vec::new();
    let body = match cfg.kind {
        StudyKind::Params => params_table(cfg)?,
        StudyKind::Expand => expand_tree(cfg)?,
        StudyKind::MatrixConvergence => matrix_convergence(cfg)?,
        StudyKind::SdeBaseError => base_error(cfg)?,
        StudyKind::SdeWeakError => weak_error(cfg)?,
        StudyKind::TvStudy => tv_study(cfg)?,
        StudyKind::DensityCompare => density_compare(cfg)?,
        StudyKind::SplittingCheck => {
            let rows = invariant_checks(noise_law(cfg.noise), &[cfg.z_star], cfg.r_star, cfg.samples, cfg.seed)?;
            failures.extend(rows.iter().filter(|r| !r.pass).map(|r| r.name.to_string()));
            checks_csv(&rows)
        }
        StudyKind::HypothesisReport => hypothesis(cfg)?,
    };
    let mut csv = String::new();
    for line in cfg.to_text().lines() {
        let _ = writeln!(csv, "# {line}");
    }
    csv.push_str(&body);
    Ok(StudyOutput { csv, failures })
}

fn params_for(cfg: &StudyConfig, nu: u32, n: u32) -> Result<OrderParams> {
    OrderParams::new(cfg.alpha, cfg.beta, nu, GridSpec::new(cfg.horizon, n)?)
}

fn params_table(cfg: &StudyConfig) -> Result<String> {
    let n = first_n(cfg)?;
    let mut s = String::from("target_nu,level,nu,i,m,q,kappa\n");
    let mut summary = String::new();
    for &nu in &cfg.nu {
        let p = params_for(cfg, nu, n)?;
        for r in p.table() {
            let opt = |v: Option<u32>| v.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(s, "{nu},{},{},{},{},{},{}", r.level, r.nu, opt(r.i), r.m, opt(r.q), r.kappa);
        }
        let _ = writeln!(summary, "q_nu,{nu},{}", p.q_nu()?);
        let _ = writeln!(summary, "l_max,{nu},{}", p.l_max());
    }
    Ok(s + &summary)
}

fn expand_tree(cfg: &StudyConfig) -> Result<String> {
    let mut s = String::new();
    for &nu in &cfg.nu {
        for &n in &cfg.n {
            let p = params_for(cfg, nu, n)?;
            let _ = writeln!(s, "# nu = {nu}, n = {n}, level = {}", cfg.level);
            for line in expansion_tree(&p, cfg.level) {
                let _ = writeln!(s, "{line}");
            }
        }
    }
    Ok(s)
}

fn matrix_convergence(cfg: &StudyConfig) -> Result<String> {
    let fam = MatrixSemigroup::from_rows(&cfg.generator)?;
    let exact = exact_semigroup_matrix(&fam, cfg.horizon)?;
    let mut s = String::from("n,nu,tv_error,fitted_slope\n");
    for &nu in &cfg.nu {
        let mut rows = Vec::new();
        for &n in &cfg.n {
            let p = params_for(cfg, nu, n)?;
            rows.push((n, tv_distance_matrix(&exact, &qhat_matrix(&fam, &p, nu, 0)?)?));
        }
        let pts: Vec<(f64, f64)> = rows.iter().map(|&(n, e)| (f64::from(n), e)).collect();
        let slope = fit_slope(&pts).map_or("nan".to_string(), |f| format!("{:.6}", f.0));
        for (n, e) in rows {
            let _ = writeln!(s, "{n},{nu},{e:.10e},{slope}");
        }
    }
    Ok(s)
}

fn base_error(cfg: &StudyConfig) -> Result<String> {
    let exact = exact_value(cfg)?;
    let mut s = String::from("n,estimate,stderr,exact,error\n");
    let mut pts = Vec::new();
    for &n in &cfg.n {
        let sg = scheme_semigroup(cfg, n)?;
        let sg = sg.with_grid(sg.grid.with_level(1));
        let est = weak_expectation(&sg, &[cfg.x0], cfg.horizon, |x| cfg.f.eval(x), cfg.samples, cfg.seed)?;
        let err = (est.mean - exact).abs();
        if est.stderr < err / 2.0 {
            pts.push((f64::from(n), err));
        }
        let _ = writeln!(s, "{n},{:.10e},{:.6e},{exact:.10e},{err:.6e}", est.mean, est.stderr);
    }
    let fit = fit_slope(&pts).ok();
    let _ = writeln!(s, "fitted_slope,{}", fit.map_or("nan".to_string(), |f| format!("{:.6}", f.0)));
    Ok(s)
}

fn weak_reports(cfg: &StudyConfig) -> Result<Vec<ConvergenceReport>> {
    let exact = exact_value(cfg)?;
    let sg = scheme_semigroup(cfg, first_n(cfg)?)?;
    let options = EstimatorOptions { coupling: cfg.coupling };
    cfg.nu
        .iter()
        .map(|&nu| {
            let orders = StudyOrders { nu, alpha: cfg.alpha, beta: cfg.beta };
            weak_error_study(orders, &sg, &[cfg.x0], |x| cfg.f.eval(x), exact, &cfg.n, cfg.samples, cfg.seed, options)
        })
        .collect()
}

fn weak_error(cfg: &StudyConfig) -> Result<String> {
    Ok(weak_reports(cfg)?.iter().map(ConvergenceReport::to_csv).collect::<Vec<_>>().join("\n"))
}

/// True when the higher order's error is below the lower order's at every
/// `n` where both rows are usable; `None` with no such `n`.
pub fn higher_order_dominates(low: &ConvergenceReport, high: &ConvergenceReport) -> Option<bool> {
    let mut any = false;
    for h in high.usable_rows() {
        if let Some(l) = low.usable_rows().find(|l| l.n == h.n) {
            any = true;
            if h.error >= l.error {
                return Some(false);
            }
        }
    }
    any.then_some(true)
}

fn tv_study(cfg: &StudyConfig) -> Result<String> {
    let reports = weak_reports(cfg)?;
    let mut s = reports.iter().map(ConvergenceReport::to_csv).collect::<Vec<_>>().join("\n");
    for pair in reports.windows(2) {
        let verdict = higher_order_dominates(&pair[0], &pair[1]).map_or("undetermined".to_string(), |b| b.to_string());
        let _ = writeln!(s, "nu{}_below_nu{}_at_usable_n,{verdict}", pair[1].rows[0].nu, pair[0].rows[0].nu);
    }
    Ok(s)
}

fn density_compare(cfg: &StudyConfig) -> Result<String> {
    let ys: Vec<Vec<f64>> = cfg.grid.values().into_iter().map(|y| vec![y]).collect();
    let exact: Vec<f64> = ys.iter().map(|y| exact_density(cfg, y[0])).collect::<Result<_>>()?;
    let options = EstimatorOptions { coupling: cfg.coupling };
    let mut s = String::from("nu,n,y,p_hat,stderr,p_exact,abs_err\n");
    let mut summary = String::from("summary,nu,n,sup_error,stderr_at_sup\n");
    for &nu in &cfg.nu {
        for &n in &cfg.n {
            let p = params_for(cfg, nu, n)?;
            let sg = scheme_semigroup(cfg, n)?;
            let table = convolved_density(&p, &sg, cfg.theta, &[cfg.x0], &ys, cfg.samples, cfg.seed, options)?;
            let (mut sup, mut sup_se) = (0.0, 0.0);
            for (k, y) in ys.iter().enumerate() {
                let err = (table.density[k] - exact[k]).abs();
                if err > sup {
                    (sup, sup_se) = (err, table.stderr[k]);
                }
                let _ = writeln!(
                    s,
                    "{nu},{n},{},{:.10e},{:.6e},{:.10e},{err:.6e}",
                    y[0], table.density[k], table.stderr[k], exact[k]
                );
            }
            let _ = writeln!(summary, "sup_error,{nu},{n},{sup:.6e},{sup_se:.6e}");
        }
    }
    Ok(s + &summary)
}

/// Measured constants for the threshold report.
pub fn hypothesis_inputs(cfg: &StudyConfig) -> Result<HypothesisInputs> {
    let scheme = scheme_function(cfg);
    let noise = noise_law(cfg.noise);
    let r = cfg.cloud_radius;
    let states: Vec<Vec<f64>> = (-10..=10).map(|k| vec![r * f64::from(k) / 10.0]).collect();
    let cloud = state_cloud(&states, scheme.dim_z());
    let psi = psi_norm_estimate(scheme.as_ref(), 3, &cloud)?;
    let lambda = ellipticity_floor(scheme.as_ref(), &cloud)?;
    let m8 = moment_estimate(noise.as_ref(), 8.0, cfg.samples, cfg.seed)?;
    let m_star = match build_split(noise.clone(), &[cfg.z_star], cfg.r_star, 1.0) {
        Ok(s) => Some(s.m_star),
        Err(Error::NotLowerBounded { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(HypothesisInputs {
        psi_norm: Some(psi.norm3),
        lambda_star: Some(lambda),
        m8: Some(m8.mean),
        m_star,
        noise_dim: noise.dim(),
        horizon: cfg.horizon,
        t: cfg.t,
    })
}

fn hypothesis(cfg: &StudyConfig) -> Result<String> {
    let inputs = hypothesis_inputs(cfg)?;
    let n_list: Vec<u64> = cfg.n.iter().map(|&n| u64::from(n)).collect();
    let report = hypothesis_report(inputs, &n_list)?;
    let mut s = String::from("constant,value\n");
    let fmt = |v: Option<f64>| v.map_or("unknown".to_string(), |v| format!("{v:.6e}"));
    let _ = writeln!(s, "psi_norm,{}", fmt(inputs.psi_norm));
    let _ = writeln!(s, "lambda_star,{}", fmt(inputs.lambda_star));
    let _ = writeln!(s, "m8,{}", fmt(inputs.m8));
    let _ = writeln!(s, "m_star,{}", fmt(inputs.m_star));
    s.push('\n');
    s.push_str(&report.to_csv());
    Ok(s)
}
