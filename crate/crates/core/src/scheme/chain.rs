//! A finite-state chain written as a scheme, so that the simulation backends
//! can be checked against exact matrix evaluation.
//!
//! The state is the index `x[0]` stored as a float. With `w = sqrt(d) z` and
//! `z` uniform on `[-1, 1]`, `psi` maps `u = (z + 1) / 2` through the
//! cumulative row `x` of `I + d A`.

use nalgebra::DMatrix;

use super::SchemeFunction;
use crate::error::Result;
use crate::expansion::matrix::{MatrixSemigroup, OperatorFamily};

#[derive(Debug, Clone)]
pub struct ChainScheme {
    chain: MatrixSemigroup,
}

impl ChainScheme {
    pub fn new(chain: MatrixSemigroup) -> Self {
        ChainScheme { chain }
    }

    pub fn chain(&self) -> &MatrixSemigroup {
        &self.chain
    }

    /// Checks the step is admissible for the Euler chain.
    pub fn step_matrix(&self, delta: f64) -> Result<DMatrix<f64>> {
        self.chain.base_step(delta)
    }
}

impl SchemeFunction for ChainScheme {
    fn dim_x(&self) -> usize {
        1
    }

    fn dim_z(&self) -> usize {
        1
    }

    fn psi(&self, _kappa: f64, x: &[f64], w: &[f64], delta: f64, out: &mut [f64]) {
        if delta <= 0.0 {
            out[0] = x[0];
            return;
        }
        let a = self.chain.generator();
        let i = x[0] as usize;
        let u = ((w[0] / delta.sqrt() + 1.0) / 2.0).clamp(0.0, 1.0 - f64::EPSILON);
        let mut acc = 0.0;
        let last = a.ncols() - 1;
        for y in 0..last {
            acc += f64::from(u8::from(y == i)) + delta * a[(i, y)];
            if u < acc {
                out[0] = y as f64;
                return;
            }
        }
        out[0] = last as f64;
    }
}
