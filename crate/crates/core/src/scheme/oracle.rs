//! Closed-form functionals of the Ornstein–Uhlenbeck process
//! `dX = -a X dt + sigma dW`, for which
//! `X_T ~ Normal(x0 e^{-aT}, sigma^2 (1 - e^{-2aT}) / (2a))`.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuFunctional {
    Mean,
    SecondMoment,
    CdfAt(f64),
    DensityAt(f64),
    /// `E cos(X_T)`
    CosMean,
}

/// Mean and variance of `X_T`.
pub fn ou_law(a: f64, sigma: f64, x0: f64, t: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) {
        return Err(Error::invalid(format!("mean-reversion rate must be positive, got {a}")));
    }
    if t < 0.0 {
        return Err(Error::invalid(format!("negative horizon {t}")));
    }
    let mean = x0 * (-a * t).exp();
    let var = sigma * sigma * (-(-2.0 * a * t).exp_m1()) / (2.0 * a);
    Ok((mean, var))
}

pub fn ou_oracle(a: f64, sigma: f64, x0: f64, t: f64, functional: OuFunctional) -> Result<f64> {
    let (mean, var) = ou_law(a, sigma, x0, t)?;
    let point = |y: f64, below: bool| -> f64 {
        if var == 0.0 {
            return if below { f64::from(u8::from(mean <= y)) } else { f64::NAN };
        }
        let law = Normal::new(mean, var.sqrt()).expect("positive variance");
        if below {
            law.cdf(y)
        } else {
            law.pdf(y)
        }
    };
    Ok(match functional {
        OuFunctional::Mean => mean,
        OuFunctional::SecondMoment => var + mean * mean,
        OuFunctional::CdfAt(k) => point(k, true),
        OuFunctional::DensityAt(y) => point(y, false),
        OuFunctional::CosMean => (-0.5 * var).exp() * mean.cos(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let m = ou_oracle(1.0, 1.0, 1.0, 1.0, OuFunctional::Mean).unwrap();
        assert!((m - 0.367879).abs() < 1e-6);
        let s = ou_oracle(1.0, 1.0, 1.0, 1.0, OuFunctional::SecondMoment).unwrap();
        assert!((s - 0.567668).abs() < 1e-6);
        assert!((ou_oracle(0.7, 1.3, 0.0, 2.0, OuFunctional::CdfAt(0.0)).unwrap() - 0.5).abs() < 1e-15);
        let (mean, var) = ou_law(1.0, 1.0, 1.0, 1.0).unwrap();
        let peak = ou_oracle(1.0, 1.0, 1.0, 1.0, OuFunctional::DensityAt(mean)).unwrap();
        assert!((peak - 1.0 / (2.0 * std::f64::consts::PI * var).sqrt()).abs() < 1e-14);
        assert!(ou_oracle(0.0, 1.0, 1.0, 1.0, OuFunctional::Mean).is_err());
    }
}
