//! Checks of the step-size thresholds under which the density bounds apply.
//!
//! Two conditions are tested for a step `d = T/n`:
//!
//! 1. `3 d^{1/4} |psi| + d M_8 + exp(-m*^2 t / (2d)) <= 1/2`
//! 2. `d^{-1/2} >= 8 (N^3 + N^2 + 1) |psi|^2 / lambda*`
//!
//! Both get easier as `d` decreases, so the smallest admissible `n` is found
//! by bisection.

use std::fmt::{self, Write};

use crate::error::{Error, Result};

/// Measured constants. `None` marks a constant that was not estimated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HypothesisInputs {
    pub psi_norm: Option<f64>,
    pub lambda_star: Option<f64>,
    pub m8: Option<f64>,
    pub m_star: Option<f64>,
    pub noise_dim: usize,
    pub horizon: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Satisfied,
    Violated,
    Unknown(&'static str),
    Inapplicable(&'static str),
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Satisfied => write!(f, "satisfied"),
            Status::Violated => write!(f, "violated"),
            Status::Unknown(what) => write!(f, "unknown ({what} not estimated)"),
            Status::Inapplicable(why) => write!(f, "{why}"),
        }
    }
}

/// `(lhs, rhs, status)` of one threshold at one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub lhs: f64,
    pub rhs: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisRow {
    pub n: u64,
    pub delta: f64,
    pub threshold1: Check,
    pub threshold2: Check,
}

impl HypothesisInputs {
    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !(self.t > 0.0) || self.t > self.horizon {
            return Err(Error::invalid(format!("need 0 < t <= T, got t = {}, T = {}", self.t, self.horizon)));
        }
        if self.noise_dim == 0 {
            return Err(Error::invalid("noise dimension must be positive"));
        }
        Ok(())
    }

    pub fn threshold1(&self, delta: f64) -> Check {
        let (Some(psi), Some(m8), Some(m_star)) = (self.psi_norm, self.m8, self.m_star) else {
            let missing = if self.psi_norm.is_none() {
                "psi norm"
            } else if self.m8.is_none() {
                "M_8"
            } else {
                "m*"
            };
            return Check { lhs: f64::NAN, rhs: 0.5, status: Status::Unknown(missing) };
        };
        let lhs = 3.0 * delta.powf(0.25) * psi + delta * m8 + (-m_star * m_star * self.t / (2.0 * delta)).exp();
        Check { lhs, rhs: 0.5, status: if lhs <= 0.5 { Status::Satisfied } else { Status::Violated } }
    }

    pub fn threshold2(&self, delta: f64) -> Check {
        let lhs = delta.powf(-0.5);
        let (Some(psi), Some(lambda)) = (self.psi_norm, self.lambda_star) else {
            let missing = if self.psi_norm.is_none() { "psi norm" } else { "lambda*" };
            return Check { lhs, rhs: f64::NAN, status: Status::Unknown(missing) };
        };
        if !(lambda > 0.0) {
            return Check {
                lhs,
                rhs: f64::INFINITY,
                status: Status::Inapplicable("ellipticity violated, Proposition inapplicable"),
            };
        }
        let n = self.noise_dim as f64;
        let rhs = 8.0 * (n.powi(3) + n * n + 1.0) / lambda * psi * psi;
        Check { lhs, rhs, status: if lhs >= rhs { Status::Satisfied } else { Status::Violated } }
    }

    pub fn row(&self, n: u64) -> HypothesisRow {
        let delta = self.horizon / n as f64;
        HypothesisRow { n, delta, threshold1: self.threshold1(delta), threshold2: self.threshold2(delta) }
    }

    fn both_hold(&self, n: u64) -> Option<bool> {
        let r = self.row(n);
        match (&r.threshold1.status, &r.threshold2.status) {
            (Status::Satisfied, Status::Satisfied) => Some(true),
            (Status::Unknown(_), _) | (_, Status::Unknown(_)) | (_, Status::Inapplicable(_)) => None,
            _ => Some(false),
        }
    }

    /// Smallest `n` with both thresholds satisfied, `None` when a constant is
    /// missing, ellipticity fails, or no `n <= 2^62` works.
    pub fn minimal_n(&self) -> Option<u64> {
        self.both_hold(1)?;
        if self.both_hold(1) == Some(true) {
            return Some(1);
        }
        let mut hi = 2u64;
        while self.both_hold(hi) != Some(true) {
            if hi >= 1 << 62 {
                return None;
            }
            hi *= 2;
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.both_hold(mid) == Some(true) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

/// Threshold table for `n_list` plus the minimal admissible `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub inputs: HypothesisInputs,
    pub rows: Vec<HypothesisRow>,
    pub minimal_n: Option<u64>,
}

pub fn hypothesis_report(inputs: HypothesisInputs, n_list: &[u64]) -> Result<HypothesisReport> {
    inputs.validate()?;
    if n_list.contains(&0) {
        return Err(Error::invalid("n must be positive"));
    }
    Ok(HypothesisReport { inputs, rows: n_list.iter().map(|&n| inputs.row(n)).collect(), minimal_n: inputs.minimal_n() })
}

impl HypothesisReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,delta,threshold1_lhs,threshold1,threshold2_lhs,threshold2_rhs,threshold2\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.6e},{:.6e},{},{:.6e},{:.6e},{}",
                r.n, r.delta, r.threshold1.lhs, r.threshold1.status, r.threshold2.lhs, r.threshold2.rhs, r.threshold2.status
            );
        }
        let _ = writeln!(s, "minimal_n,{}", self.minimal_n.map_or("none".to_string(), |n| n.to_string()));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou() -> HypothesisInputs {
        HypothesisInputs {
            psi_norm: Some(1.0),
            lambda_star: Some(1.0),
            m8: Some(105.0),
            m_star: Some(0.388),
            noise_dim: 1,
            horizon: 1.0,
            t: 1.0,
        }
    }

    #[test]
    fn second_threshold_is_one_over_576() {
        let i = ou();
        assert_eq!(i.threshold2(1.0 / 576.0).status, Status::Satisfied);
        assert_eq!(i.threshold2(1.0 / 575.0).status, Status::Violated);
    }

    #[test]
    fn minimal_n_is_the_boundary() {
        let i = ou();
        let n = i.minimal_n().unwrap();
        assert!(n >= 576);
        assert_eq!(i.both_hold(n), Some(true));
        assert_eq!(i.both_hold(n - 1), Some(false));
    }

    #[test]
    fn missing_and_degenerate_constants() {
        let mut i = ou();
        i.lambda_star = Some(0.0);
        let r = hypothesis_report(i, &[10]).unwrap();
        assert!(r.to_csv().contains("ellipticity violated, Proposition inapplicable"));
        assert_eq!(r.minimal_n, None);
        i.lambda_star = None;
        assert_eq!(i.threshold2(0.1).status, Status::Unknown("lambda*"));
        i.m8 = None;
        assert!(hypothesis_report(i, &[4]).unwrap().to_csv().contains("M_8 not estimated"));
        assert!(hypothesis_report(ou(), &[0]).is_err());
    }
}
