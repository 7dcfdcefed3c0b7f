//! Gradient-descent vector fields over analytic test functions, plus the
//! first-order baselines (fixed-step descent and Adam) used for comparisons.

use crate::error::FlowError;
use crate::flow::VectorField;
use crate::vector::ParamVector;

/// A differentiable cost function with an analytic gradient.
///
/// The gradient is expected to agree with central finite differences; the
/// test suites hold every implementation to that.
pub trait CostFunction {
    fn dim(&self) -> usize;
    fn value(&self, theta: &ParamVector) -> f64;
    fn grad(&self, theta: &ParamVector) -> ParamVector;
}

impl<C: CostFunction + ?Sized> CostFunction for &C {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, theta: &ParamVector) -> f64 {
        (**self).value(theta)
    }
    fn grad(&self, theta: &ParamVector) -> ParamVector {
        (**self).grad(theta)
    }
}

/// Semi-axes of the elliptical bowl `f = θ₁²/c₁² + θ₂²/c₂²`.
#[derive(Debug, Clone, Copy)]
pub struct EllipseParams {
    pub c1: f64,
    pub c2: f64,
}

impl EllipseParams {
    pub fn new(c1: f64, c2: f64) -> Result<Self, FlowError> {
        if c1 > 0.0 && c2 > 0.0 && c1.is_finite() && c2.is_finite() {
            Ok(EllipseParams { c1, c2 })
        } else {
            Err(FlowError::InvalidConfig(format!(
                "ellipse semi-axes must be positive, got ({c1}, {c2})"
            )))
        }
    }
}

/// The elliptical bowl cost.
#[derive(Debug, Clone, Copy)]
pub struct EllipseCost {
    params: EllipseParams,
}

pub fn ellipse_cost(params: EllipseParams) -> EllipseCost {
    EllipseCost { params }
}

impl CostFunction for EllipseCost {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, theta: &ParamVector) -> f64 {
        let EllipseParams { c1, c2 } = self.params;
        theta[0] * theta[0] / (c1 * c1) + theta[1] * theta[1] / (c2 * c2)
    }
    fn grad(&self, theta: &ParamVector) -> ParamVector {
        let EllipseParams { c1, c2 } = self.params;
        ParamVector::new(vec![2.0 * theta[0] / (c1 * c1), 2.0 * theta[1] / (c2 * c2)])
    }
}

/// Beale's function, the polynomial test surface with its minimum at
/// `(3, 0.5)`.
#[derive(Debug, Clone, Copy)]
pub struct BealeCost;

pub fn beale_cost() -> BealeCost {
    BealeCost
}

impl CostFunction for BealeCost {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, theta: &ParamVector) -> f64 {
        let (t1, t2) = (theta[0], theta[1]);
        let e1 = 1.5 - t1 + t1 * t2;
        let e2 = 2.25 - t1 + t1 * t2 * t2;
        let e3 = 2.625 - t1 + t1 * t2 * t2 * t2;
        e1 * e1 + e2 * e2 + e3 * e3
    }
    fn grad(&self, theta: &ParamVector) -> ParamVector {
        let (t1, t2) = (theta[0], theta[1]);
        let e1 = 1.5 - t1 + t1 * t2;
        let e2 = 2.25 - t1 + t1 * t2 * t2;
        let e3 = 2.625 - t1 + t1 * t2 * t2 * t2;
        let g1 =
            2.0 * e1 * (t2 - 1.0) + 2.0 * e2 * (t2 * t2 - 1.0) + 2.0 * e3 * (t2 * t2 * t2 - 1.0);
        let g2 = 2.0 * e1 * t1 + 4.0 * e2 * t1 * t2 + 6.0 * e3 * t1 * t2 * t2;
        ParamVector::new(vec![g1, g2])
    }
}

/// Descent field `v(θ) = −∇f(θ)` over a cost function.
#[derive(Debug, Clone)]
pub struct GdField<C> {
    cost: C,
}

pub fn gd_field<C: CostFunction>(cost: C) -> GdField<C> {
    GdField { cost }
}

impl<C: CostFunction> GdField<C> {
    pub fn cost(&self) -> &C {
        &self.cost
    }
}

impl<C: CostFunction> VectorField for GdField<C> {
    fn dim(&self) -> usize {
        self.cost.dim()
    }
    fn eval(&self, theta: &ParamVector) -> ParamVector {
        self.cost.grad(theta).scaled(-1.0)
    }
}

/// Central-difference gradient, the oracle every analytic gradient is checked
/// against: `(f(θ+h·eᵢ) − f(θ−h·eᵢ)) / 2h` per component.
pub fn finite_diff_grad<C: CostFunction + ?Sized>(
    cf: &C,
    theta: &ParamVector,
    h: f64,
) -> ParamVector {
    assert!(h > 0.0, "step size must be positive");
    let base = theta.as_slice().to_vec();
    (0..theta.dim())
        .map(|i| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            (cf.value(&ParamVector::new(plus)) - cf.value(&ParamVector::new(minus))) / (2.0 * h)
        })
        .collect()
}

/// One row of a descent trace.
#[derive(Debug, Clone)]
pub struct GdRecord {
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub theta: ParamVector,
}

/// How a baseline run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum GdStop {
    Budget,
    Failed(FlowError),
}

/// A baseline descent trace with one record per completed iteration.
#[derive(Debug, Clone)]
pub struct GdRun {
    pub final_theta: ParamVector,
    pub trace: Vec<GdRecord>,
    pub stop: GdStop,
}

/// Fixed-step first-order descent: `θ ← θ − α∇f`, `num` times.
///
/// If the cost turns non-finite the partial trace is kept and the stop reason
/// records the iteration.
pub fn basic_gd_run<C: CostFunction + ?Sized>(
    cf: &C,
    theta0: &ParamVector,
    alpha: f64,
    num: usize,
) -> GdRun {
    assert!(alpha > 0.0, "alpha must be positive");
    assert_eq!(cf.dim(), theta0.dim(), "dimension mismatch");
    let mut theta = theta0.clone();
    let mut trace = Vec::with_capacity(num);
    for iteration in 1..=num {
        let grad = cf.grad(&theta);
        theta = theta.add_scaled(-alpha, &grad);
        let cost = cf.value(&theta);
        if !cost.is_finite() || !theta.is_finite() {
            return GdRun {
                final_theta: theta,
                trace,
                stop: GdStop::Failed(FlowError::Diverged { iteration }),
            };
        }
        trace.push(GdRecord {
            iteration,
            cost,
            grad_norm: cf.grad(&theta).norm(),
            theta: theta.clone(),
        });
    }
    GdRun {
        final_theta: theta,
        trace,
        stop: GdStop::Budget,
    }
}

/// Adam hyperparameters. The defaults are the universally cited ones, with
/// the step size used by the descent comparison in this crate.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 0.15,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(FlowError::InvalidConfig(format!(
                "adam alpha must be positive, got {}",
                self.alpha
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(FlowError::InvalidConfig(format!(
                    "adam {name} must lie in [0, 1), got {b}"
                )));
            }
        }
        Ok(())
    }
}

/// Standard bias-corrected Adam, run for `num` iterations.
pub fn adam_run<C: CostFunction + ?Sized>(
    cf: &C,
    theta0: &ParamVector,
    config: &AdamConfig,
    num: usize,
) -> GdRun {
    assert_eq!(cf.dim(), theta0.dim(), "dimension mismatch");
    config.validate().expect("invalid adam configuration");
    let dim = theta0.dim();
    let mut theta = theta0.as_slice().to_vec();
    let mut m = vec![0.0; dim];
    let mut s = vec![0.0; dim];
    let mut trace = Vec::with_capacity(num);
    for iteration in 1..=num {
        let grad = cf.grad(&ParamVector::new(theta.clone()));
        let bc1 = 1.0 - config.beta1.powi(iteration as i32);
        let bc2 = 1.0 - config.beta2.powi(iteration as i32);
        for i in 0..dim {
            let g = grad[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            s[i] = config.beta2 * s[i] + (1.0 - config.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let s_hat = s[i] / bc2;
            theta[i] -= config.alpha * m_hat / (s_hat.sqrt() + config.eps_hat);
        }
        let theta_pv = ParamVector::new(theta.clone());
        let cost = cf.value(&theta_pv);
        if !cost.is_finite() || !theta_pv.is_finite() {
            return GdRun {
                final_theta: theta_pv,
                trace,
                stop: GdStop::Failed(FlowError::Diverged { iteration }),
            };
        }
        trace.push(GdRecord {
            iteration,
            cost,
            grad_norm: cf.grad(&theta_pv).norm(),
            theta: theta_pv,
        });
    }
    GdRun {
        final_theta: ParamVector::new(theta),
        trace,
        stop: GdStop::Budget,
    }
}

/// The exact continuous-descent trajectory of the elliptical bowl,
/// `θ₂(θ₁) = θ₂⁰ (θ₁/θ₁⁰)^c` with `c = (c₁/c₂)²`, sampled from `θ₁⁰`
/// toward the origin.
///
/// Both starting components must be nonzero.
pub fn ellipse_exact_path(
    theta0: &ParamVector,
    params: &EllipseParams,
    samples: usize,
) -> Vec<ParamVector> {
    assert_eq!(theta0.dim(), 2, "the ellipse lives in two dimensions");
    assert!(
        theta0[0] != 0.0 && theta0[1] != 0.0,
        "starting components must be nonzero"
    );
    assert!(samples >= 2, "need at least the two endpoints");
    let c = (params.c1 / params.c2).powi(2);
    (0..samples)
        .map(|i| {
            // ratio runs from 1 down to 0 inclusive
            let ratio = 1.0 - i as f64 / (samples - 1) as f64;
            ParamVector::new(vec![theta0[0] * ratio, theta0[1] * ratio.powf(c)])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grad_matches_fd<C: CostFunction>(cf: &C, points: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..points {
            let theta: ParamVector = (0..cf.dim()).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let h = 1e-6 * theta.norm().max(1.0);
            let analytic = cf.grad(&theta);
            let numeric = finite_diff_grad(cf, &theta, h);
            for i in 0..cf.dim() {
                let scale = analytic[i].abs().max(1e-3);
                assert!(
                    (analytic[i] - numeric[i]).abs() <= 1e-6 * scale,
                    "component {i} at {theta:?}: analytic {} vs fd {}",
                    analytic[i],
                    numeric[i]
                );
            }
        }
    }

    #[test]
    fn ellipse_values_and_gradient() {
        let cf = ellipse_cost(EllipseParams::new(6.0, 2.0).unwrap());
        let theta = ParamVector::new(vec![4.0, 1.5]);
        assert_abs_diff_eq!(cf.value(&theta), 16.0 / 36.0 + 2.25 / 4.0, epsilon = 1e-15);
        let g = cf.grad(&theta);
        assert_abs_diff_eq!(g[0], 2.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.75, epsilon = 1e-15);
        // global minimum
        let origin = ParamVector::zeros(2);
        assert_eq!(cf.value(&origin), 0.0);
        assert_eq!(cf.grad(&origin).norm(), 0.0);
    }

    #[test]
    fn ellipse_rejects_bad_axes() {
        assert!(EllipseParams::new(0.0, 2.0).is_err());
        assert!(EllipseParams::new(6.0, -1.0).is_err());
    }

    #[test]
    fn beale_minimum_and_reference_value() {
        let cf = beale_cost();
        let min = ParamVector::new(vec![3.0, 0.5]);
        assert_abs_diff_eq!(cf.value(&min), 0.0, epsilon = 1e-24);
        assert_abs_diff_eq!(cf.grad(&min).norm(), 0.0, epsilon = 1e-12);
        // 9.5² + 34.25² + 106.625² by hand
        let start = ParamVector::new(vec![4.0, 3.0]);
        assert_abs_diff_eq!(cf.value(&start), 12632.203125, epsilon = 1e-9);
    }

    #[test]
    fn gradients_match_finite_differences() {
        grad_matches_fd(&ellipse_cost(EllipseParams::new(6.0, 2.0).unwrap()), 20, 3);
        grad_matches_fd(&beale_cost(), 20, 4);
    }

    #[test]
    fn descent_field_negates_gradient() {
        let field = gd_field(ellipse_cost(EllipseParams::new(6.0, 2.0).unwrap()));
        let theta = ParamVector::new(vec![4.0, 1.5]);
        let v = field.eval(&theta);
        assert_abs_diff_eq!(v[0], -2.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], -0.75, epsilon = 1e-15);
        // homogeneity of the quadratic's gradient
        let v2 = field.eval(&theta.scaled(2.0));
        assert_abs_diff_eq!(v2[0], 2.0 * v[0], epsilon = 1e-15);
        assert_abs_diff_eq!(v2[1], 2.0 * v[1], epsilon = 1e-15);
    }

    #[test]
    fn finite_diff_on_constant_is_zero() {
        struct Flat;
        impl CostFunction for Flat {
            fn dim(&self) -> usize {
                3
            }
            fn value(&self, _: &ParamVector) -> f64 {
                7.25
            }
            fn grad(&self, _: &ParamVector) -> ParamVector {
                ParamVector::zeros(3)
            }
        }
        let g = finite_diff_grad(&Flat, &ParamVector::new(vec![1.0, -2.0, 0.5]), 1e-6);
        assert_eq!(g.norm(), 0.0);
    }

    /// 1-D quadratic used by the closed-form decay checks.
    struct HalfSquare;
    impl CostFunction for HalfSquare {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, t: &ParamVector) -> f64 {
            0.5 * t[0] * t[0]
        }
        fn grad(&self, t: &ParamVector) -> ParamVector {
            ParamVector::new(vec![t[0]])
        }
    }

    #[test]
    fn basic_gd_geometric_decay() {
        // θ_k = 0.9^k for f = θ²/2 with α = 0.1.
        let run = basic_gd_run(&HalfSquare, &ParamVector::new(vec![1.0]), 0.1, 40);
        assert_eq!(run.stop, GdStop::Budget);
        for rec in &run.trace {
            let expected = 0.9f64.powi(rec.iteration as i32);
            assert_relative_eq!(rec.theta[0], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn basic_gd_single_step_is_the_straight_ray() {
        let cf = ellipse_cost(EllipseParams::new(6.0, 2.0).unwrap());
        let theta0 = ParamVector::new(vec![4.0, 1.5]);
        let alpha = 0.3;
        let run = basic_gd_run(&cf, &theta0, alpha, 1);
        let expected = theta0.add_scaled(-alpha, &cf.grad(&theta0));
        assert_eq!(run.trace[0].theta.as_slice(), expected.as_slice());
    }

    #[test]
    fn basic_gd_stationary_start_stays_put() {
        let cf = ellipse_cost(EllipseParams::new(6.0, 2.0).unwrap());
        let run = basic_gd_run(&cf, &ParamVector::zeros(2), 0.1, 10);
        for rec in &run.trace {
            assert_eq!(rec.theta.as_slice(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn basic_gd_reports_divergence() {
        // A huge step on the quadratic doubles θ each iteration; the cost
        // overflows eventually and the stop records where.
        let run = basic_gd_run(&HalfSquare, &ParamVector::new(vec![1.0]), 3.0, 2000);
        match run.stop {
            GdStop::Failed(FlowError::Diverged { iteration }) => {
                assert_eq!(run.trace.len() + 1, iteration);
            }
            other => panic!("unexpected stop {other:?}"),
        }
    }

    #[test]
    fn adam_first_step_magnitude_is_alpha() {
        let config = AdamConfig {
            alpha: 0.05,
            ..AdamConfig::default()
        };
        let run = adam_run(&HalfSquare, &ParamVector::new(vec![1.0]), &config, 1);
        // Bias-corrected m̂/√v̂ equals 1 on the first step up to eps_hat.
        assert_abs_diff_eq!(run.trace[0].theta[0], 1.0 - 0.05, epsilon = 1e-8);
    }

    #[test]
    fn adam_zero_gradient_stays_put() {
        struct Flat;
        impl CostFunction for Flat {
            fn dim(&self) -> usize {
                2
            }
            fn value(&self, _: &ParamVector) -> f64 {
                1.0
            }
            fn grad(&self, _: &ParamVector) -> ParamVector {
                ParamVector::zeros(2)
            }
        }
        let run = adam_run(
            &Flat,
            &ParamVector::new(vec![0.3, -0.7]),
            &AdamConfig::default(),
            5,
        );
        for rec in &run.trace {
            assert_eq!(rec.theta.as_slice(), &[0.3, -0.7]);
        }
    }

    #[test]
    fn exact_path_exponent_and_endpoints() {
        let params = EllipseParams::new(6.0, 2.0).unwrap();
        let theta0 = ParamVector::new(vec![4.0, 1.5]);
        let path = ellipse_exact_path(&theta0, &params, 101);
        assert_eq!(path.len(), 101);
        assert_eq!(path[0].as_slice(), theta0.as_slice());
        // endpoint reaches the origin
        assert_abs_diff_eq!(path[100].norm(), 0.0, epsilon = 1e-300);
        // exponent c = (c1/c2)² = 9
        let mid = &path[50];
        let ratio = mid[0] / theta0[0];
        assert_relative_eq!(mid[1], theta0[1] * ratio.powi(9), max_relative = 1e-12);
    }

    #[test]
    fn exact_path_symmetric_axes_is_straight_ray() {
        let params = EllipseParams::new(2.0, 2.0).unwrap();
        let theta0 = ParamVector::new(vec![3.0, 1.0]);
        let path = ellipse_exact_path(&theta0, &params, 11);
        for p in &path {
            // c = 1: θ2/θ1 constant along the ray
            assert_relative_eq!(p[1] * theta0[0], p[0] * theta0[1], max_relative = 1e-12);
        }
    }
}
