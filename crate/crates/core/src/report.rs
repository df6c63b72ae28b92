//! Convergence tables and log-log slope fits.

use std::fmt::Write;

use crate::error::{Error, Result};

/// Least squares fit of `log error = c - s log n`. Returns `(s, stderr of s)`;
/// the standard error is `NaN` with only two points.
pub fn fit_slope(rows: &[(f64, f64)]) -> Result<(f64, f64)> {
    if rows.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 points, got {}", rows.len())));
    }
    if let Some(&(n, e)) = rows.iter().find(|(n, e)| !(*n > 0.0) || !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::DegenerateFit(format!("non-positive value in ({n}, {e})")));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all n values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let ci = if rows.len() > 2 {
        let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - b * (x - mx)).powi(2)).sum();
        (ssr / (k - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok((-b, ci))
}

/// One `n` of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: u32,
    pub nu: u32,
    pub estimate: f64,
    /// Zero for exact evaluations.
    pub stderr: f64,
    pub exact: f64,
    pub error: f64,
    /// `stderr < error / 2`.
    pub usable: bool,
    /// `NaN` when not measured.
    pub work_per_sample: f64,
}

impl ConvergenceRow {
    pub fn new(n: u32, nu: u32, estimate: f64, stderr: f64, exact: f64, work_per_sample: f64) -> Self {
        let error = (estimate - exact).abs();
        ConvergenceRow { n, nu, estimate, stderr, exact, error, usable: stderr < error / 2.0, work_per_sample }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// Sorted by `n`.
    pub rows: Vec<ConvergenceRow>,
    pub slope: Option<f64>,
    pub slope_ci: Option<f64>,
}

impl ConvergenceReport {
    /// Sorts rows and fits the slope on the usable ones.
    pub fn from_rows(mut rows: Vec<ConvergenceRow>) -> Self {
        rows.sort_by_key(|r| r.n);
        let usable: Vec<(f64, f64)> = rows.iter().filter(|r| r.usable).map(|r| (r.n as f64, r.error)).collect();
        let fit = fit_slope(&usable).ok();
        ConvergenceReport { rows, slope: fit.map(|f| f.0), slope_ci: fit.map(|f| f.1) }
    }

    /// Fewer than two usable rows: Monte Carlo noise hides the error.
    pub fn noise_dominated(&self) -> bool {
        self.slope.is_none()
    }

    pub fn usable_rows(&self) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(|r| r.usable)
    }

    /// `(n, work per sample, ratio to the previous n)`.
    pub fn work_accounting(&self) -> Vec<(u32, f64, Option<f64>)> {
        let mut out = Vec::with_capacity(self.rows.len());
        let mut prev: Option<f64> = None;
        for r in &self.rows {
            out.push((r.n, r.work_per_sample, prev.map(|p| r.work_per_sample / p)));
            prev = Some(r.work_per_sample);
        }
        out
    }

    /// CSV body: the row table and the `fitted_slope` / `slope_ci` footer.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,nu,estimate,stderr,exact,abs_error,usable,work_per_sample\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.10e},{:.6e},{:.10e},{:.6e},{},{}",
                r.n, r.nu, r.estimate, r.stderr, r.exact, r.error, r.usable, r.work_per_sample
            );
        }
        let fmt = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(s, "fitted_slope,{}", fmt(self.slope));
        let _ = writeln!(s, "slope_ci,{}", fmt(self.slope_ci));
        s
    }
}
