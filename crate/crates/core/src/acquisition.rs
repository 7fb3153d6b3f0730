//! Expected Improvement and its maximization over the unit cube.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forest::RandomForest;
use crate::lbfgsb::{self, Method};
use crate::rng;
use crate::space::UnitVector;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `EI = sigma * (z Phi(z) + phi(z))` with `z = (f_star - mean) / sigma`, for
/// minimization. Exactly zero when `sigma == 0`.
pub fn expected_improvement(mean: f64, sigma: f64, f_star: f64) -> Result<f64> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::invalid(format!("negative standard deviation {sigma}")));
    }
    Ok(ei_unchecked(mean, sigma, f_star))
}

#[inline]
fn ei_unchecked(mean: f64, sigma: f64, f_star: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z = (f_star - mean) / sigma;
    (sigma * (z * normal_cdf(z) + normal_pdf(z))).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionOptions {
    pub n_starts: usize,
    pub quasi_newton: lbfgsb::Options,
    /// Best EI at or below this triggers the random fallback.
    pub ei_floor: f64,
    /// L-infinity radius inside which a candidate counts as already sampled.
    pub duplicate_radius: f64,
}

impl Default for AcquisitionOptions {
    fn default() -> Self {
        AcquisitionOptions {
            n_starts: 10,
            quasi_newton: lbfgsb::Options::default(),
            ei_floor: 1e-12,
            duplicate_radius: 1e-9,
        }
    }
}

impl AcquisitionOptions {
    pub fn with_method(mut self, method: Method) -> Self {
        self.quasi_newton.method = method;
        self
    }
}

/// Everything the acquisition step reads: the (possibly stale) surrogate,
/// the current incumbent value and the points already evaluated.
#[derive(Clone, Copy, Debug)]
pub struct AcquisitionContext<'a> {
    pub forest: Option<&'a RandomForest>,
    pub incumbent: f64,
    pub incumbent_point: Option<&'a UnitVector>,
    pub evaluated: &'a [UnitVector],
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionResult {
    pub point: UnitVector,
    pub ei: f64,
    pub n_starts_used: usize,
    pub fallback_used: bool,
    pub duplicate_avoided: bool,
}

struct StartOutcome {
    x: Vec<f64>,
    ei: f64,
}

pub fn ei_at(forest: &RandomForest, x: &UnitVector, f_star: f64) -> Result<f64> {
    let p = forest.predict(x)?;
    expected_improvement(p.mean, p.std, f_star)
}

fn is_duplicate(x: &[f64], evaluated: &[UnitVector], radius: f64) -> bool {
    evaluated.iter().any(|e| {
        e.as_slice()
            .iter()
            .zip(x)
            .all(|(a, b)| (a - b).abs() <= radius)
    })
}

/// Multi-start maximization of EI. Start 0 is the incumbent point when one
/// is given; the rest are uniform draws. The best start wins, with ties
/// going to the lowest start index.
pub fn optimize_acquisition(
    ctx: &AcquisitionContext<'_>,
    opts: &AcquisitionOptions,
    seed: u64,
    exec: Execution,
) -> Result<AcquisitionResult> {
    let forest = ctx
        .forest
        .ok_or_else(|| Error::InvalidState("acquisition requires a trained surrogate".into()))?;
    if !ctx.incumbent.is_finite() {
        return Err(Error::InvalidState(format!(
            "incumbent value {} is not finite",
            ctx.incumbent
        )));
    }
    if opts.n_starts == 0 {
        return Err(Error::invalid("acquisition needs at least one start"));
    }
    let d = forest.dim();
    if let Some(p) = ctx.incumbent_point {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
    }

    let mut rng = rng::rng_from(seed);
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.n_starts);
    if let Some(p) = ctx.incumbent_point {
        starts.push(p.as_slice().to_vec());
    }
    while starts.len() < opts.n_starts {
        starts.push((0..d).map(|_| rng.gen::<f64>()).collect());
    }
    let fallback: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();

    let lower = vec![0.0; d];
    let upper = vec![1.0; d];
    let f_star = ctx.incumbent;
    let outcomes: Vec<StartOutcome> = exec.map_slice(&starts, |x0| {
        let mut buf = Vec::with_capacity(forest.n_trees());
        let objective = |x: &[f64]| {
            let p = forest.predict_with_buffer(x, &mut buf);
            -ei_unchecked(p.mean, p.std, f_star)
        };
        let m = lbfgsb::minimize(objective, x0, &lower, &upper, &opts.quasi_newton);
        StartOutcome { x: m.x, ei: -m.f }
    });

    // Highest EI first, ties to the lowest start index. A start whose optimum
    // repeats an archived point gives way to the next best start, and the
    // random point is used only once nothing useful is left.
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| outcomes[b].ei.total_cmp(&outcomes[a].ei).then(a.cmp(&b)));
    let useful = || {
        order
            .iter()
            .map(|&i| &outcomes[i])
            .take_while(|o| o.ei > opts.ei_floor)
    };
    let is_dup = |x: &[f64]| is_duplicate(x, ctx.evaluated, opts.duplicate_radius);
    let duplicate_avoided = useful().next().is_some_and(|o| is_dup(&o.x));
    let chosen = useful().find(|o| !is_dup(&o.x));

    let fallback_used = chosen.is_none();
    let (point, ei) = match chosen {
        Some(o) => (o.x.clone(), o.ei),
        None => {
            let p = forest.predict_raw(&fallback);
            let ei = ei_unchecked(p.mean, p.std, f_star);
            (fallback, ei)
        }
    };
    Ok(AcquisitionResult {
        point: UnitVector::clamped(point),
        ei,
        n_starts_used: starts.len(),
        fallback_used,
        duplicate_avoided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{ForestParams, TrainingSet};

    #[test]
    fn density_and_cdf_values() {
        assert!((normal_pdf(0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.0) - 0.841_344_746_1).abs() < 1e-10);
        assert!((normal_cdf(-1.0) + normal_cdf(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ei_closed_form_points() {
        assert_eq!(expected_improvement(3.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(expected_improvement(-3.0, 0.0, 1.0).unwrap(), 0.0);
        let at_zero = expected_improvement(0.5, 1.0, 0.5).unwrap();
        assert!((at_zero - INV_SQRT_2PI).abs() < 1e-15);
        assert!(expected_improvement(0.0, -1.0, 0.0).is_err());
        assert!(expected_improvement(1e6, 1e-3, 0.0).unwrap() >= 0.0);
    }

    #[test]
    fn ei_increases_with_sigma() {
        for &mu in &[-2.0, -0.5, 0.0, 0.7, 3.0] {
            let mut prev = 0.0;
            for k in 1..=60 {
                let sigma = k as f64 * 0.05;
                let v = expected_improvement(mu, sigma, 0.0).unwrap();
                assert!(v >= prev, "mu={mu} sigma={sigma}");
                prev = v;
            }
        }
    }

    fn forest_1d(n_trees: usize) -> RandomForest {
        let xs: Vec<UnitVector> = [0.0, 1.0, 0.5].iter().map(|&x| UnitVector(vec![x])).collect();
        let data = TrainingSet::new(&xs, &[1.0, 1.0, 0.2]).unwrap();
        RandomForest::fit(
            &data,
            &ForestParams {
                n_trees,
                ..Default::default()
            },
            42,
        )
        .unwrap()
    }

    #[test]
    fn single_tree_surface_triggers_fallback() {
        let forest = forest_1d(1);
        let ctx = AcquisitionContext {
            forest: Some(&forest),
            incumbent: 0.2,
            incumbent_point: None,
            evaluated: &[],
        };
        let r = optimize_acquisition(&ctx, &AcquisitionOptions::default(), 5, Execution::default())
            .unwrap();
        assert!(r.fallback_used);
        assert_eq!(r.ei, 0.0);
        assert!(r.point.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn missing_forest_is_a_state_error() {
        let ctx = AcquisitionContext {
            forest: None,
            incumbent: 0.0,
            incumbent_point: None,
            evaluated: &[],
        };
        assert!(matches!(
            optimize_acquisition(&ctx, &AcquisitionOptions::default(), 0, Execution::default()),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn deterministic_across_execution_modes() {
        let forest = forest_1d(50);
        let best = UnitVector(vec![0.5]);
        let ctx = AcquisitionContext {
            forest: Some(&forest),
            incumbent: 0.2,
            incumbent_point: Some(&best),
            evaluated: &[],
        };
        let opts = AcquisitionOptions::default();
        let a = optimize_acquisition(&ctx, &opts, 9, Execution::Sequential).unwrap();
        let b = optimize_acquisition(&ctx, &opts, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ei, ei_at(&forest, &a.point, 0.2).unwrap());
    }

    #[test]
    fn duplicate_candidates_are_replaced() {
        let forest = forest_1d(200);
        let best = UnitVector(vec![0.5]);
        let opts = AcquisitionOptions::default();
        let ctx = AcquisitionContext {
            forest: Some(&forest),
            incumbent: 0.2,
            incumbent_point: Some(&best),
            evaluated: &[],
        };
        let first = optimize_acquisition(&ctx, &opts, 3, Execution::default()).unwrap();
        let seen = vec![first.point.clone()];
        let ctx = AcquisitionContext {
            evaluated: &seen,
            ..ctx
        };
        let second = optimize_acquisition(&ctx, &opts, 3, Execution::default()).unwrap();
        assert!(second.duplicate_avoided);
        assert_ne!(second.point, first.point);
    }
}
