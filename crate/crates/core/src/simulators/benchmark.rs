//! Closed-form test functions with known global minima.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ParameterSpace, ParameterSpec, ParameterVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Sphere,
    Rosenbrock,
    Rastrigin,
}

impl std::str::FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(BenchmarkKind::Sphere),
            "rosenbrock" => Ok(BenchmarkKind::Rosenbrock),
            "rastrigin" => Ok(BenchmarkKind::Rastrigin),
            _ => Err(Error::invalid(format!("unknown benchmark {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkProblem {
    pub kind: BenchmarkKind,
    pub dimension: usize,
    pub lower: f64,
    pub upper: f64,
}

impl BenchmarkProblem {
    pub fn new(kind: BenchmarkKind, dimension: usize, lower: f64, upper: f64) -> Result<Self> {
        if dimension == 0 || !(lower < upper) {
            return Err(Error::invalid("benchmark needs d >= 1 and lower < upper"));
        }
        if kind == BenchmarkKind::Rosenbrock && dimension < 2 {
            return Err(Error::invalid("rosenbrock needs d >= 2"));
        }
        let p = BenchmarkProblem {
            kind,
            dimension,
            lower,
            upper,
        };
        let argmin = p.argmin();
        if argmin.iter().any(|x| *x < lower || *x > upper) {
            return Err(Error::invalid("bounds exclude the global minimizer"));
        }
        Ok(p)
    }

    pub fn argmin(&self) -> Vec<f64> {
        let v = match self.kind {
            BenchmarkKind::Rosenbrock => 1.0,
            BenchmarkKind::Sphere | BenchmarkKind::Rastrigin => 0.0,
        };
        vec![v; self.dimension]
    }

    pub fn global_minimum(&self) -> f64 {
        0.0
    }

    /// Space named `x0..x{d-1}`; the nominal initial point sits at 80 % of
    /// each range.
    pub fn space(&self) -> ParameterSpace {
        let init = self.lower + 0.8 * (self.upper - self.lower);
        ParameterSpace::new(
            (0..self.dimension)
                .map(|i| ParameterSpec::new(format!("x{i}"), self.lower, self.upper, init).expect("valid bounds"))
                .collect(),
        )
        .expect("unique names")
    }

    pub fn evaluate(&self, theta: &ParameterVector) -> Result<f64> {
        let x = theta.as_slice();
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        if let Some(v) = x.iter().find(|v| !(self.lower..=self.upper).contains(*v)) {
            return Err(Error::invalid(format!(
                "{v} outside benchmark bounds [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(match self.kind {
            BenchmarkKind::Sphere => x.iter().map(|v| v * v).sum(),
            BenchmarkKind::Rosenbrock => x
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum(),
            BenchmarkKind::Rastrigin => {
                10.0 * x.len() as f64
                    + x.iter()
                        .map(|v| v * v - 10.0 * (2.0 * PI * v).cos())
                        .sum::<f64>()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_minima() {
        let r = BenchmarkProblem::new(BenchmarkKind::Rosenbrock, 5, -2.0, 2.0).unwrap();
        assert_eq!(r.evaluate(&ParameterVector(vec![1.0; 5])).unwrap(), 0.0);
        let s = BenchmarkProblem::new(BenchmarkKind::Sphere, 3, -2.0, 2.0).unwrap();
        assert_eq!(s.evaluate(&ParameterVector(vec![0.0; 3])).unwrap(), 0.0);
    }

    #[test]
    fn rastrigin_half_point() {
        let p = BenchmarkProblem::new(BenchmarkKind::Rastrigin, 2, -5.12, 5.12).unwrap();
        let v = p.evaluate(&ParameterVector(vec![0.5, 0.5])).unwrap();
        // 2 * (0.25 + 10 (1 - cos pi))
        assert!((v - 40.5).abs() < 1e-12);
    }

    #[test]
    fn bounds_are_enforced() {
        let p = BenchmarkProblem::new(BenchmarkKind::Sphere, 2, -2.0, 2.0).unwrap();
        assert!(p.evaluate(&ParameterVector(vec![2.5, 0.0])).is_err());
        assert!(p.evaluate(&ParameterVector(vec![0.0])).is_err());
        assert!(BenchmarkProblem::new(BenchmarkKind::Rosenbrock, 3, 2.0, 3.0).is_err());
        assert_eq!(p.space().dimension(), 2);
    }
}
