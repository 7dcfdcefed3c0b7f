//! The second-order flow update scheme.
//!
//! One iteration works on a vector field `v(θ)` as follows. A micro-step
//! `ε = α/M` probes the field once more at `θ + ε·v` to estimate the
//! acceleration
//!
//! ```text
//! a = (v(θ + ε·v) − v(θ)) / ε
//! ```
//!
//! at the cost of a single extra field evaluation. Treating `a` as constant,
//! `n` micro-steps compound to
//!
//! ```text
//! v_n = v + nε·a
//! θ_n = θ + nε·v + ½ n(n−1) ε²·a
//! ```
//!
//! and the step count `n*` is solved for so that a chosen ratio of the
//! second-order to the first-order contribution equals `rho_targ` (three
//! variants, [`Approach`]). The applied update is `θ_{n*}` and the learning
//! rate for the next iteration becomes `α = n*·ε`.

use crate::error::FlowError;
use crate::vector::ParamVector;

/// A deterministic, side-effect-free vector field over parameter space.
///
/// Implementations must return a vector of dimension [`VectorField::dim`] and
/// must produce bitwise-identical output for identical input; the iteration
/// logic relies on this when it re-evaluates the field during retries.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, theta: &ParamVector) -> ParamVector;
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, theta: &ParamVector) -> ParamVector {
        (**self).eval(theta)
    }
}

/// Which metric defines the virtual step count `n*`.
///
/// * `A`: ratio of the norms of the second and first update terms,
///   `n* = 1 + (2 rho/ε) ‖v‖/‖a‖`.
/// * `B`: the same ratio measured along `v̂`,
///   `n* = 1 + (2 rho/ε) v²/|v·a|`.
/// * `C`: ratio of the velocity change to the velocity,
///   `n* = (rho/ε) ‖v‖/‖a‖`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Approach {
    #[default]
    A,
    B,
    C,
}

impl Approach {
    pub fn nstar(self, v: &ParamVector, a: &ParamVector, rho_targ: f64, epsilon: f64) -> NStar {
        match self {
            Approach::A => nstar_approach_a(v, a, rho_targ, epsilon),
            Approach::B => nstar_approach_b(v, a, rho_targ, epsilon),
            Approach::C => nstar_approach_c(v, a, rho_targ, epsilon),
        }
    }
}

impl std::str::FromStr for Approach {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Approach::A),
            "B" | "b" => Ok(Approach::B),
            "C" | "c" => Ok(Approach::C),
            other => Err(format!("unknown approach {other:?}, expected A, B or C")),
        }
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Approach::A => write!(f, "A"),
            Approach::B => write!(f, "B"),
            Approach::C => write!(f, "C"),
        }
    }
}

/// Outcome of an `n*` evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NStar {
    /// A finite virtual step count.
    Finite(f64),
    /// The acceleration is negligible against the velocity; no finite step
    /// count attains the target ratio and the caller must bound α itself.
    Unbounded,
    /// The velocity vanished; the flow has nowhere to go.
    Converged,
}

// Floating-point noise guard: accelerations (or their projection on v) below
// this fraction of the opposing norm count as zero.
const NSTAR_ATOL: f64 = 1e-14;

// When n* is unbounded and no alpha_max is supplied, n is clamped to this
// multiple of M, bounding the growth of alpha to one decade per step.
const UNBOUNDED_NSTAR_M_FACTOR: f64 = 10.0;

// Relative tolerance of the convergence signal on ‖v‖.
const VTOL_REL: f64 = 1e-12;

/// `n* = 1 + (2 rho/ε) ‖v‖/‖a‖` (norm-ratio metric).
pub fn nstar_approach_a(v: &ParamVector, a: &ParamVector, rho_targ: f64, epsilon: f64) -> NStar {
    debug_assert!(epsilon > 0.0 && rho_targ > 0.0);
    let v_norm = v.norm();
    if v_norm == 0.0 {
        return NStar::Converged;
    }
    let a_norm = a.norm();
    if a_norm < NSTAR_ATOL * v_norm {
        return NStar::Unbounded;
    }
    NStar::Finite(1.0 + (2.0 * rho_targ / epsilon) * v_norm / a_norm)
}

/// `n* = 1 + (2 rho/ε) v²/|v·a|` (metric measured along `v̂`).
pub fn nstar_approach_b(v: &ParamVector, a: &ParamVector, rho_targ: f64, epsilon: f64) -> NStar {
    debug_assert!(epsilon > 0.0 && rho_targ > 0.0);
    let v_sq = v.dot(v);
    if v_sq == 0.0 {
        return NStar::Converged;
    }
    let va = v.dot(a).abs();
    if va < NSTAR_ATOL * v_sq {
        return NStar::Unbounded;
    }
    NStar::Finite(1.0 + (2.0 * rho_targ / epsilon) * v_sq / va)
}

/// `n* = (rho/ε) ‖v‖/‖a‖` (velocity-change metric; the large-n limit of
/// approach A without the factor of two).
pub fn nstar_approach_c(v: &ParamVector, a: &ParamVector, rho_targ: f64, epsilon: f64) -> NStar {
    debug_assert!(epsilon > 0.0 && rho_targ > 0.0);
    let v_norm = v.norm();
    if v_norm == 0.0 {
        return NStar::Converged;
    }
    let a_norm = a.norm();
    if a_norm < NSTAR_ATOL * v_norm {
        return NStar::Unbounded;
    }
    NStar::Finite((rho_targ / epsilon) * v_norm / a_norm)
}

/// Evaluates the field at `theta0` and at the probe point `theta0 + ε·v`,
/// returning `(v, a)` with `a = (v(θ+εv) − v)/ε`. Exactly two field
/// evaluations are performed.
pub fn estimate_acceleration<F: VectorField + ?Sized>(
    field: &F,
    theta0: &ParamVector,
    epsilon: f64,
) -> Result<(ParamVector, ParamVector), FlowError> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let v0 = field.eval(theta0);
    check_field_output(&v0, theta0)?;
    let probe = theta0.add_scaled(epsilon, &v0);
    let v1 = field.eval(&probe);
    check_field_output(&v1, &probe)?;
    let a = v0
        .iter()
        .zip(v1.iter())
        .map(|(a0, a1)| (a1 - a0) / epsilon)
        .collect();
    Ok((v0, a))
}

fn check_field_output(v: &ParamVector, at: &ParamVector) -> Result<(), FlowError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(FlowError::NonFiniteField {
            theta: at.as_slice().to_vec(),
        })
    }
}

/// Net parameter change of `n` compounded micro-steps:
/// `nε·v + ½ n(n−1) ε²·a`. `n` is used as a real number.
pub fn compound_dtheta(v: &ParamVector, a: &ParamVector, n: f64, epsilon: f64) -> ParamVector {
    debug_assert!(n >= 1.0 && epsilon > 0.0);
    let c1 = n * epsilon;
    let c2 = 0.5 * n * (n - 1.0) * epsilon * epsilon;
    v.iter()
        .zip(a.iter())
        .map(|(vi, ai)| c1 * vi + c2 * ai)
        .collect()
}

/// Velocity after `n` compounded micro-steps: `v + nε·a`.
pub fn compound_v(v: &ParamVector, a: &ParamVector, n: f64, epsilon: f64) -> ParamVector {
    v.add_scaled(n * epsilon, a)
}

/// Smooth-α form of the update: `θ + α·v + (α²/2)·a`.
pub fn continuous_update(
    theta0: &ParamVector,
    v: &ParamVector,
    a: &ParamVector,
    alpha: f64,
) -> ParamVector {
    debug_assert!(alpha >= 0.0);
    let half_sq = 0.5 * alpha * alpha;
    theta0
        .iter()
        .zip(v.iter())
        .zip(a.iter())
        .map(|((ti, vi), ai)| ti + alpha * vi + half_sq * ai)
        .collect()
}

/// Second-order prediction of the cost after a smooth-α update, valid when
/// `v = −∇f` at `θ0`: `f0 − α·v² − α²·(v·a)`.
pub fn predict_cf(f0: f64, v: &ParamVector, a: &ParamVector, alpha: f64) -> f64 {
    f0 - alpha * v.dot(v) - alpha * alpha * v.dot(a)
}

/// Tunable parameters of the iteration.
#[derive(Debug, Clone)]
pub struct VAFlowConfig {
    /// Initial learning rate.
    pub alpha0: f64,
    /// Target value of the chosen step-count metric.
    pub rho_targ: f64,
    /// Micro-step divisor: `ε = α/m`.
    pub m: u32,
    /// Iteration budget.
    pub num: usize,
    /// Which `n*` metric to use.
    pub approach: Approach,
    /// Floor for `n*`; below it the step is retried with a reduced α.
    pub nstar_min: f64,
    /// Hard cap on the effective α of a step, when the application has a
    /// natural scale for it (inverse kinematics does, descent does not).
    pub alpha_max: Option<f64>,
    /// Momentum coefficient on the applied parameter update; zero disables.
    pub momentum_beta: f64,
    /// Multiplier applied to α on each n*-floor retry.
    pub retry_shrink: f64,
    /// Retry budget per step.
    pub max_retries: usize,
    /// A run stops cleanly once α falls below this; steps that small are
    /// beneath parameter resolution and only chase rounding noise.
    pub alpha_stall: f64,
}

impl Default for VAFlowConfig {
    fn default() -> Self {
        VAFlowConfig {
            alpha0: 0.01,
            rho_targ: 0.1,
            m: 100,
            num: 100,
            approach: Approach::A,
            nstar_min: 10.0,
            alpha_max: None,
            momentum_beta: 0.0,
            retry_shrink: 0.5,
            max_retries: 8,
            alpha_stall: 1e-18,
        }
    }
}

impl VAFlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        fn fail(msg: String) -> Result<(), FlowError> {
            Err(FlowError::InvalidConfig(msg))
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return fail(format!(
                "alpha0 must be positive and finite, got {}",
                self.alpha0
            ));
        }
        if !(self.rho_targ > 0.0 && self.rho_targ.is_finite()) {
            return fail(format!("rho_targ must be positive, got {}", self.rho_targ));
        }
        if self.m < 10 {
            return fail(format!("m must be at least 10, got {}", self.m));
        }
        if self.nstar_min.is_nan() || self.nstar_min < 1.0 {
            return fail(format!("nstar_min must be >= 1, got {}", self.nstar_min));
        }
        if let Some(amax) = self.alpha_max {
            if !(amax > 0.0 && amax.is_finite()) {
                return fail(format!("alpha_max must be positive, got {amax}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum_beta) {
            return fail(format!(
                "momentum_beta must lie in [0, 1), got {}",
                self.momentum_beta
            ));
        }
        if !(self.retry_shrink > 0.0 && self.retry_shrink < 1.0) {
            return fail(format!(
                "retry_shrink must lie in (0, 1), got {}",
                self.retry_shrink
            ));
        }
        if self.alpha_stall.is_nan() || self.alpha_stall < 0.0 {
            return fail(format!(
                "alpha_stall must be >= 0, got {}",
                self.alpha_stall
            ));
        }
        Ok(())
    }
}

/// One iterate of the flow.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub theta: ParamVector,
    pub v: ParamVector,
    pub a: ParamVector,
    pub epsilon: f64,
    pub alpha: f64,
    /// The effective step count actually applied (after clamps).
    pub nstar: f64,
    /// Number of completed iterations.
    pub iteration: usize,
    /// Last applied parameter update; stays zero while momentum is off.
    pub momentum_buffer: ParamVector,
}

impl FlowState {
    /// The state before any iteration has run.
    pub fn initial(theta: ParamVector, config: &VAFlowConfig) -> Self {
        let dim = theta.dim();
        FlowState {
            theta,
            v: ParamVector::zeros(dim),
            a: ParamVector::zeros(dim),
            epsilon: config.alpha0 / config.m as f64,
            alpha: config.alpha0,
            nstar: 1.0,
            iteration: 0,
            momentum_buffer: ParamVector::zeros(dim),
        }
    }
}

/// What a single step produced.
#[derive(Debug, Clone)]
pub enum StepOutcome {
    Advanced(FlowState),
    /// ‖v‖ fell below the convergence tolerance; no update was applied.
    Converged {
        v_norm: f64,
    },
}

/// Why a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    /// All `num` iterations completed.
    Budget,
    /// ‖v‖ fell below `1e-12 · max(1, ‖θ‖)`.
    Converged,
    /// α fell below `alpha_stall`.
    Stalled,
    /// A step failed; the trace up to the failure is preserved.
    Failed(FlowError),
}

/// Result of a run: the last parameter value, one state per completed
/// iteration, and the reason the loop ended.
#[derive(Debug, Clone)]
pub struct FlowRun {
    pub final_theta: ParamVector,
    pub trace: Vec<FlowState>,
    pub stop: StopReason,
}

/// Executes one loop body: estimate the acceleration with `ε = α/M`, pick
/// `n*`, apply the compounded update and reset `α = n*·ε`.
///
/// Two safeguards wrap the plain iteration. If `n*` falls below
/// `config.nstar_min`, α is multiplied by `config.retry_shrink` and the step
/// restarts from the ε computation (shrinking ε raises `n*` for a smooth
/// field); after `config.max_retries` failed attempts the step reports
/// [`FlowError::StepFailed`]. If `n*` is unbounded, the step size is clamped
/// to `alpha_max` when one is configured and to `10·M` micro-steps otherwise.
pub fn vaflow_step<F: VectorField + ?Sized>(
    field: &F,
    state: &FlowState,
    config: &VAFlowConfig,
) -> Result<StepOutcome, FlowError> {
    assert!(state.alpha > 0.0, "step requires a positive alpha");
    let iteration = state.iteration + 1;
    let mut alpha = state.alpha;
    let mut retries = 0usize;
    loop {
        let epsilon = alpha / config.m as f64;
        if epsilon == 0.0 {
            // alpha shrank past the smallest representable micro-step
            return Err(FlowError::AlphaUnderflow { iteration });
        }
        let (v, a) = estimate_acceleration(field, &state.theta, epsilon)?;
        let v_norm = v.norm();
        if v_norm < VTOL_REL * state.theta.norm().max(1.0) {
            return Ok(StepOutcome::Converged { v_norm });
        }

        let alpha_cap_steps = config.alpha_max.map(|amax| (amax / epsilon).max(1.0));
        let n_eff = match config.approach.nstar(&v, &a, config.rho_targ, epsilon) {
            NStar::Converged => return Ok(StepOutcome::Converged { v_norm }),
            NStar::Unbounded => {
                alpha_cap_steps.unwrap_or(UNBOUNDED_NSTAR_M_FACTOR * config.m as f64)
            }
            NStar::Finite(n) => {
                if n < config.nstar_min {
                    if retries < config.max_retries {
                        retries += 1;
                        alpha *= config.retry_shrink;
                        continue;
                    }
                    return Err(FlowError::StepFailed {
                        iteration,
                        retries,
                        nstar: n,
                        nstar_min: config.nstar_min,
                        alpha,
                    });
                }
                match alpha_cap_steps {
                    Some(cap) => n.min(cap),
                    None => n,
                }
            }
        };

        let mut dtheta = compound_dtheta(&v, &a, n_eff, epsilon);
        if config.momentum_beta > 0.0 {
            dtheta = dtheta.add_scaled(config.momentum_beta, &state.momentum_buffer);
        }
        let theta = state.theta.add_scaled(1.0, &dtheta);
        if !theta.is_finite() {
            return Err(FlowError::NonFiniteParams { iteration });
        }
        let momentum_buffer = if config.momentum_beta > 0.0 {
            dtheta
        } else {
            ParamVector::zeros(theta.dim())
        };
        return Ok(StepOutcome::Advanced(FlowState {
            theta,
            v,
            a,
            epsilon,
            alpha: n_eff * epsilon,
            nstar: n_eff,
            iteration,
            momentum_buffer,
        }));
    }
}

/// Runs up to `config.num` iterations of [`vaflow_step`] from `theta0`,
/// invoking `observer` after each completed iteration.
///
/// The loop stops early when the field converges (‖v‖ below tolerance) or
/// when α stalls below `config.alpha_stall`. A failing step does not discard
/// the work done so far: the partial trace is returned with
/// [`StopReason::Failed`] carrying the error, annotated with its iteration.
pub fn vaflow_run<F: VectorField + ?Sized>(
    field: &F,
    theta0: &ParamVector,
    config: &VAFlowConfig,
    mut observer: impl FnMut(&FlowState),
) -> Result<FlowRun, FlowError> {
    config.validate()?;
    if field.dim() != theta0.dim() {
        return Err(FlowError::FieldDimensionMismatch {
            field_dim: field.dim(),
            param_dim: theta0.dim(),
        });
    }
    if !theta0.is_finite() {
        return Err(FlowError::NonFiniteParams { iteration: 0 });
    }

    let mut state = FlowState::initial(theta0.clone(), config);
    let mut trace = Vec::new();
    let mut stop = StopReason::Budget;
    for _ in 0..config.num {
        if state.alpha < config.alpha_stall {
            stop = StopReason::Stalled;
            break;
        }
        match vaflow_step(field, &state, config) {
            Ok(StepOutcome::Advanced(next)) => {
                observer(&next);
                trace.push(next.clone());
                state = next;
            }
            Ok(StepOutcome::Converged { .. }) => {
                stop = StopReason::Converged;
                break;
            }
            Err(e) => {
                stop = StopReason::Failed(e);
                break;
            }
        }
    }
    Ok(FlowRun {
        final_theta: state.theta,
        trace,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    /// v(θ) = b + Kθ with K given row-major.
    struct AffineField {
        dim: usize,
        k: Vec<f64>,
        b: Vec<f64>,
    }

    impl AffineField {
        fn new(dim: usize, k: Vec<f64>, b: Vec<f64>) -> Self {
            assert_eq!(k.len(), dim * dim);
            assert_eq!(b.len(), dim);
            AffineField { dim, k, b }
        }

        fn apply_k(&self, x: &ParamVector) -> ParamVector {
            (0..self.dim)
                .map(|r| {
                    (0..self.dim)
                        .map(|c| self.k[r * self.dim + c] * x[c])
                        .sum::<f64>()
                })
                .collect()
        }
    }

    impl VectorField for AffineField {
        fn dim(&self) -> usize {
            self.dim
        }
        fn eval(&self, theta: &ParamVector) -> ParamVector {
            let kx = self.apply_k(theta);
            (0..self.dim).map(|i| self.b[i] + kx[i]).collect()
        }
    }

    /// The elliptical bowl's descent field: v = −∇(θ₁²/c₁² + θ₂²/c₂²).
    fn ellipse_field(c1: f64, c2: f64) -> AffineField {
        AffineField::new(
            2,
            vec![-2.0 / (c1 * c1), 0.0, 0.0, -2.0 / (c2 * c2)],
            vec![0.0, 0.0],
        )
    }

    struct ConstField(Vec<f64>);
    impl VectorField for ConstField {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn eval(&self, _: &ParamVector) -> ParamVector {
            ParamVector::new(self.0.clone())
        }
    }

    fn ellipse_va() -> (ParamVector, ParamVector) {
        // Hand values at θ0 = (4, 1.5) with c = (6, 2):
        // v = −2(θ1/c1², θ2/c2²) and a = 4(θ1/c1⁴, θ2/c2⁴).
        let v = ParamVector::new(vec![-2.0 / 9.0, -0.75]);
        let a = ParamVector::new(vec![16.0 / 1296.0, 0.375]);
        (v, a)
    }

    #[test]
    fn acceleration_on_ellipse_matches_hand_values() {
        let field = ellipse_field(6.0, 2.0);
        let theta0 = ParamVector::new(vec![4.0, 1.5]);
        let (v, a) = estimate_acceleration(&field, &theta0, 1e-4).unwrap();
        let (v_expect, a_expect) = ellipse_va();
        assert_relative_eq!(v[0], v_expect[0], max_relative = 1e-14);
        assert_relative_eq!(v[1], v_expect[1], max_relative = 1e-14);
        // The field is affine, so the finite difference is exact up to rounding.
        assert_relative_eq!(a[0], a_expect[0], max_relative = 1e-8);
        assert_relative_eq!(a[1], a_expect[1], max_relative = 1e-8);
    }

    #[test]
    fn acceleration_of_constant_field_is_zero() {
        let field = ConstField(vec![1.0, 2.0]);
        for eps in [1e-6, 1e-3, 0.1] {
            let (v, a) = estimate_acceleration(&field, &ParamVector::zeros(2), eps).unwrap();
            assert_eq!(v.as_slice(), &[1.0, 2.0]);
            assert_eq!(a.as_slice(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn acceleration_reports_non_finite_field() {
        struct BadField;
        impl VectorField for BadField {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, _: &ParamVector) -> ParamVector {
                ParamVector::new(vec![f64::NAN])
            }
        }
        let err = estimate_acceleration(&BadField, &ParamVector::new(vec![1.0]), 1e-3);
        assert!(matches!(err, Err(FlowError::NonFiniteField { .. })));
    }

    #[test]
    fn nstar_a_on_ellipse_values() {
        let (v, a) = ellipse_va();
        match nstar_approach_a(&v, &a, 0.2, 0.01) {
            NStar::Finite(n) => assert_abs_diff_eq!(n, 84.39, epsilon = 0.01),
            other => panic!("expected finite n*, got {other:?}"),
        }
    }

    #[test]
    fn nstar_a_degenerates_to_single_step() {
        let (v, a) = ellipse_va();
        // rho → 0 at fixed ε collapses n* to 1.
        match nstar_approach_a(&v, &a, 1e-300, 0.01) {
            NStar::Finite(n) => assert_abs_diff_eq!(n, 1.0, epsilon = 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nstar_zero_acceleration_is_unbounded() {
        let v = ParamVector::new(vec![1.0, 0.0]);
        let a = ParamVector::zeros(2);
        assert_eq!(nstar_approach_a(&v, &a, 0.1, 0.01), NStar::Unbounded);
        assert_eq!(nstar_approach_b(&v, &a, 0.1, 0.01), NStar::Unbounded);
        assert_eq!(nstar_approach_c(&v, &a, 0.1, 0.01), NStar::Unbounded);
    }

    #[test]
    fn nstar_zero_velocity_signals_convergence() {
        let v = ParamVector::zeros(2);
        let a = ParamVector::new(vec![1.0, 0.0]);
        assert_eq!(nstar_approach_a(&v, &a, 0.1, 0.01), NStar::Converged);
        assert_eq!(nstar_approach_b(&v, &a, 0.1, 0.01), NStar::Converged);
        assert_eq!(nstar_approach_c(&v, &a, 0.1, 0.01), NStar::Converged);
    }

    #[test]
    fn nstar_b_on_ellipse_values() {
        let (v, a) = ellipse_va();
        match nstar_approach_b(&v, &a, 0.2, 0.01) {
            NStar::Finite(n) => assert_abs_diff_eq!(n, 87.18, epsilon = 0.01),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nstar_b_orthogonal_acceleration_is_unbounded() {
        let v = ParamVector::new(vec![1.0, 0.0]);
        let a = ParamVector::new(vec![0.0, 5.0]);
        assert_eq!(nstar_approach_b(&v, &a, 0.1, 0.01), NStar::Unbounded);
    }

    #[test]
    fn nstar_b_equals_a_in_one_dimension() {
        let v = ParamVector::new(vec![-0.7]);
        let a = ParamVector::new(vec![0.35]);
        let na = nstar_approach_a(&v, &a, 0.13, 0.02);
        let nb = nstar_approach_b(&v, &a, 0.13, 0.02);
        assert_eq!(na, nb);
    }

    #[test]
    fn nstar_c_on_ellipse_values() {
        let (v, a) = ellipse_va();
        match nstar_approach_c(&v, &a, 0.2, 0.01) {
            NStar::Finite(n) => assert_abs_diff_eq!(n, 41.70, epsilon = 0.01),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn compound_dtheta_first_order_limits() {
        let v = ParamVector::new(vec![2.0, -1.0]);
        let a = ParamVector::new(vec![0.5, 0.25]);
        // n = 1: the second term vanishes exactly.
        let one = compound_dtheta(&v, &a, 1.0, 0.1);
        assert_eq!(one.as_slice(), &[0.2, -0.1]);
        // a = 0: pure first-order move.
        let zero_a = compound_dtheta(&v, &ParamVector::zeros(2), 7.0, 0.1);
        assert_abs_diff_eq!(zero_a[0], 1.4, epsilon = 1e-15);
        assert_abs_diff_eq!(zero_a[1], -0.7, epsilon = 1e-15);
    }

    #[test]
    fn compound_v_formula() {
        let v = ParamVector::new(vec![1.0, 0.0]);
        let a = ParamVector::new(vec![0.0, 1.0]);
        assert_eq!(compound_v(&v, &a, 0.0, 0.5).as_slice(), &[1.0, 0.0]);
        assert_eq!(
            compound_v(&v, &ParamVector::zeros(2), 9.0, 0.5).as_slice(),
            &[1.0, 0.0]
        );
        // nε = 2
        assert_eq!(compound_v(&v, &a, 4.0, 0.5).as_slice(), &[1.0, 2.0]);
    }

    /// Literal micro-step recurrence used as the independent oracle for the
    /// compound formulas.
    fn literal_recurrence(
        v0: &ParamVector,
        a: &ParamVector,
        n: usize,
        eps: f64,
    ) -> (ParamVector, ParamVector) {
        let mut theta = ParamVector::zeros(v0.dim());
        let mut v = v0.clone();
        for _ in 0..n {
            theta = theta.add_scaled(eps, &v);
            v = v.add_scaled(eps, a);
        }
        (theta, v)
    }

    #[test]
    fn compound_matches_literal_recurrence() {
        let v = ParamVector::new(vec![0.3, -1.1, 0.7]);
        let a = ParamVector::new(vec![-0.2, 0.05, 0.4]);
        for n in [1usize, 2, 17, 84, 200] {
            let eps = 0.01;
            let (dtheta_lit, v_lit) = literal_recurrence(&v, &a, n, eps);
            let dtheta = compound_dtheta(&v, &a, n as f64, eps);
            let v_n = compound_v(&v, &a, n as f64, eps);
            for i in 0..3 {
                assert_relative_eq!(dtheta[i], dtheta_lit[i], max_relative = 1e-12);
                assert_relative_eq!(v_n[i], v_lit[i], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn continuous_update_ellipse_recommended_point() {
        let theta0 = ParamVector::new(vec![4.0, 1.5]);
        let (v, a) = ellipse_va();
        assert_eq!(
            continuous_update(&theta0, &v, &a, 0.0).as_slice(),
            theta0.as_slice()
        );
        let red_dot = continuous_update(&theta0, &v, &a, 0.834);
        assert_abs_diff_eq!(red_dot[0], 3.81896, epsilon = 1e-4);
        assert_abs_diff_eq!(red_dot[1], 1.00492, epsilon = 1e-4);
        // a = 0 reduces to a plain descent step.
        let gd = continuous_update(&theta0, &v, &ParamVector::zeros(2), 0.5);
        assert_abs_diff_eq!(gd[0], 4.0 + 0.5 * v[0], epsilon = 1e-15);
        assert_abs_diff_eq!(gd[1], 1.5 + 0.5 * v[1], epsilon = 1e-15);
    }

    #[test]
    fn predict_cf_third_order_accuracy() {
        // f = θ²/2 in one dimension: v = −θ, a = θ, exact θ(α) = 1 − α + α²/2.
        let v = ParamVector::new(vec![-1.0]);
        let a = ParamVector::new(vec![1.0]);
        let f0 = 0.5;
        assert_eq!(predict_cf(f0, &v, &a, 0.0), f0);
        for alpha in [0.1, 0.01, 0.001] {
            let theta_alpha = 1.0 - alpha + alpha * alpha / 2.0;
            let exact = theta_alpha * theta_alpha / 2.0;
            let predicted = predict_cf(f0, &v, &a, alpha);
            // The leading error term is α³/2.
            assert!((predicted - exact).abs() <= 0.6 * alpha.powi(3) + 1e-15);
            // And it beats the first-order prediction.
            let first_order = f0 - alpha * v.dot(&v);
            assert!((predicted - exact).abs() < (first_order - exact).abs());
        }
    }

    #[test]
    fn predict_cf_beats_first_order_on_ellipse() {
        let theta0 = ParamVector::new(vec![4.0, 1.5]);
        let (v, a) = ellipse_va();
        let f = |t: &ParamVector| t[0] * t[0] / 36.0 + t[1] * t[1] / 4.0;
        let alpha = 0.834;
        let truth = f(&continuous_update(&theta0, &v, &a, alpha));
        let second = predict_cf(f(&theta0), &v, &a, alpha);
        let first = f(&theta0) - alpha * v.dot(&v);
        assert!((second - truth).abs() < (first - truth).abs());
    }

    fn ellipse_demo_config() -> VAFlowConfig {
        VAFlowConfig {
            alpha0: 0.01,
            rho_targ: 0.2,
            num: 50,
            ..VAFlowConfig::default()
        }
    }

    #[test]
    fn step_on_ellipse_reaches_recommended_alpha() {
        let field = ellipse_field(6.0, 2.0);
        let config = ellipse_demo_config();
        let state = FlowState::initial(ParamVector::new(vec![4.0, 1.5]), &config);
        match vaflow_step(&field, &state, &config).unwrap() {
            StepOutcome::Advanced(next) => {
                assert_abs_diff_eq!(next.alpha, 0.834, epsilon = 0.01);
                assert_eq!(next.iteration, 1);
                assert_abs_diff_eq!(next.epsilon, 1e-4, epsilon = 1e-18);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn step_on_constant_field_clamps_unbounded_nstar() {
        let field = ConstField(vec![0.5, 0.5]);
        let config = VAFlowConfig::default();
        let state = FlowState::initial(ParamVector::zeros(2), &config);
        match vaflow_step(&field, &state, &config).unwrap() {
            StepOutcome::Advanced(next) => {
                // n clamped at 10·M, so alpha grows exactly tenfold.
                assert_abs_diff_eq!(next.nstar, 1000.0, epsilon = 1e-12);
                assert_abs_diff_eq!(next.alpha, 0.1, epsilon = 1e-15);
                // First-order move only.
                assert_abs_diff_eq!(next.theta[0], 0.1 * 0.5, epsilon = 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn step_in_one_dimension_never_overshoots() {
        // v = −θ from θ0 = 1: θ(α) = 1 − α + α²/2 stays in (0, 1].
        let field = AffineField::new(1, vec![-1.0], vec![0.0]);
        let config = VAFlowConfig::default();
        let state = FlowState::initial(ParamVector::new(vec![1.0]), &config);
        match vaflow_step(&field, &state, &config).unwrap() {
            StepOutcome::Advanced(next) => {
                assert!(next.theta[0] > 0.0 && next.theta[0] < 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn step_errors_after_retry_budget() {
        // The field jumps right at θ0, so every probe lands across the
        // discontinuity: a ≈ jump/ε and n* is pinned near 1 + 2ρ no matter
        // how far the retries shrink α.
        struct JumpField;
        impl VectorField for JumpField {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, theta: &ParamVector) -> ParamVector {
                ParamVector::new(vec![if theta[0] > 0.0 { 2.0 } else { 1.0 }])
            }
        }
        let config = VAFlowConfig::default();
        let state = FlowState::initial(ParamVector::new(vec![0.0]), &config);
        match vaflow_step(&JumpField, &state, &config) {
            Err(FlowError::StepFailed {
                iteration, retries, ..
            }) => {
                assert_eq!(iteration, 1);
                assert_eq!(retries, config.max_retries);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn step_reports_alpha_underflow() {
        let field = ellipse_field(6.0, 2.0);
        let config = VAFlowConfig {
            alpha0: 1e-323,
            alpha_stall: 0.0,
            ..VAFlowConfig::default()
        };
        let state = FlowState::initial(ParamVector::new(vec![4.0, 1.5]), &config);
        assert!(matches!(
            vaflow_step(&field, &state, &config),
            Err(FlowError::AlphaUnderflow { iteration: 1 })
        ));
    }

    #[test]
    fn step_field_evaluation_count_is_two() {
        use std::cell::Cell;
        struct CountingField(Cell<usize>);
        impl VectorField for CountingField {
            fn dim(&self) -> usize {
                2
            }
            fn eval(&self, theta: &ParamVector) -> ParamVector {
                self.0.set(self.0.get() + 1);
                ParamVector::new(vec![-theta[0], -theta[1]])
            }
        }
        let field = CountingField(Cell::new(0));
        let config = VAFlowConfig::default();
        let state = FlowState::initial(ParamVector::new(vec![1.0, 2.0]), &config);
        let out = vaflow_step(&field, &state, &config).unwrap();
        assert!(matches!(out, StepOutcome::Advanced(_)));
        assert_eq!(field.0.get(), 2);
    }

    #[test]
    fn run_zero_iterations_is_identity() {
        let field = ellipse_field(6.0, 2.0);
        let config = VAFlowConfig {
            num: 0,
            ..ellipse_demo_config()
        };
        let theta0 = ParamVector::new(vec![4.0, 1.5]);
        let run = vaflow_run(&field, &theta0, &config, |_| {}).unwrap();
        assert_eq!(run.final_theta.as_slice(), theta0.as_slice());
        assert!(run.trace.is_empty());
        assert_eq!(run.stop, StopReason::Budget);
    }

    #[test]
    fn run_on_ellipse_converges_deep() {
        let field = ellipse_field(6.0, 2.0);
        let config = ellipse_demo_config();
        let theta0 = ParamVector::new(vec![4.0, 1.5]);
        let f = |t: &ParamVector| t[0] * t[0] / 36.0 + t[1] * t[1] / 4.0;
        let run = vaflow_run(&field, &theta0, &config, |_| {}).unwrap();
        assert!(f(&run.final_theta) < 1e-6 * f(&theta0));
        assert_eq!(run.trace.len(), run.trace.last().unwrap().iteration);
    }

    #[test]
    fn run_observer_sees_every_iteration() {
        let field = ellipse_field(6.0, 2.0);
        let config = VAFlowConfig {
            num: 7,
            ..ellipse_demo_config()
        };
        let mut seen = Vec::new();
        let run = vaflow_run(&field, &ParamVector::new(vec![4.0, 1.5]), &config, |s| {
            seen.push(s.iteration)
        })
        .unwrap();
        assert_eq!(seen.len(), run.trace.len());
        assert_eq!(seen, (1..=seen.len()).collect::<Vec<_>>());
    }

    #[test]
    fn run_rejects_dimension_mismatch() {
        let field = ConstField(vec![1.0, 2.0, 3.0]);
        let err = vaflow_run(
            &field,
            &ParamVector::new(vec![0.0, 0.0]),
            &VAFlowConfig::default(),
            |_| {},
        );
        assert!(matches!(err, Err(FlowError::FieldDimensionMismatch { .. })));
    }

    #[test]
    fn run_preserves_partial_trace_on_failure() {
        // The field turns undefined below θ = 0.5; the descent from 1.0
        // reaches that region after a few good iterations, which survive.
        struct PartialField;
        impl VectorField for PartialField {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, theta: &ParamVector) -> ParamVector {
                let x = theta[0];
                ParamVector::new(vec![if x > 0.5 { -x } else { f64::NAN }])
            }
        }
        let config = VAFlowConfig {
            alpha0: 0.1,
            num: 200,
            ..VAFlowConfig::default()
        };
        let run = vaflow_run(&PartialField, &ParamVector::new(vec![1.0]), &config, |_| {}).unwrap();
        match run.stop {
            StopReason::Failed(FlowError::NonFiniteField { .. }) => {
                assert!(!run.trace.is_empty());
                assert!(run.trace.len() < config.num);
            }
            other => panic!("unexpected stop {other:?}"),
        }
    }

    #[test]
    fn momentum_buffer_tracks_applied_update() {
        let field = ellipse_field(6.0, 2.0);
        let config = VAFlowConfig {
            momentum_beta: 0.5,
            num: 3,
            ..ellipse_demo_config()
        };
        let run = vaflow_run(&field, &ParamVector::new(vec![4.0, 1.5]), &config, |_| {}).unwrap();
        // Buffer of iterate k equals θ_k − θ_{k−1}.
        let t0 = ParamVector::new(vec![4.0, 1.5]);
        let first = &run.trace[0];
        for i in 0..2 {
            assert_abs_diff_eq!(
                first.momentum_buffer[i],
                first.theta[i] - t0[i],
                epsilon = 1e-15
            );
        }
        // And with momentum off it stays zero.
        let plain = vaflow_run(
            &field,
            &ParamVector::new(vec![4.0, 1.5]),
            &ellipse_demo_config(),
            |_| {},
        )
        .unwrap();
        assert_eq!(plain.trace[1].momentum_buffer.norm(), 0.0);
    }

    proptest! {
        /// Compound formulas against the literal recurrence, random inputs.
        #[test]
        fn prop_compound_equals_recurrence(
            v in proptest::collection::vec(-2.0f64..2.0, 1..5),
            a in proptest::collection::vec(-2.0f64..2.0, 1..5),
            n in 1usize..=200,
            eps in 1e-4f64..0.1,
        ) {
            prop_assume!(v.len() == a.len());
            let v = ParamVector::new(v);
            let a = ParamVector::new(a);
            let (dtheta_lit, v_lit) = literal_recurrence(&v, &a, n, eps);
            let dtheta = compound_dtheta(&v, &a, n as f64, eps);
            let v_n = compound_v(&v, &a, n as f64, eps);
            let nf = n as f64;
            for i in 0..v.dim() {
                // The two update terms can cancel, so measure the error
                // against their magnitudes rather than the cancelled sum.
                let term_scale = nf * eps * v[i].abs()
                    + 0.5 * nf * (nf - 1.0) * eps * eps * a[i].abs();
                let scale = dtheta_lit[i].abs().max(term_scale).max(1e-9);
                prop_assert!((dtheta[i] - dtheta_lit[i]).abs() <= 1e-12 * scale);
                let vscale = v_lit[i].abs().max(v[i].abs() + nf * eps * a[i].abs()).max(1e-9);
                prop_assert!((v_n[i] - v_lit[i]).abs() <= 1e-12 * vscale);
            }
        }

        /// Plugging n* back into its metric recovers rho_targ.
        #[test]
        fn prop_metric_attainment(
            v in proptest::collection::vec(-3.0f64..3.0, 2..4),
            a in proptest::collection::vec(-3.0f64..3.0, 2..4),
            rho in 0.01f64..0.5,
            eps in 1e-5f64..0.05,
        ) {
            prop_assume!(v.len() == a.len());
            let v = ParamVector::new(v);
            let a = ParamVector::new(a);
            prop_assume!(v.norm() > 1e-6 && a.norm() > 1e-6);
            prop_assume!(v.dot(&a).abs() > 1e-6);

            if let NStar::Finite(n) = nstar_approach_a(&v, &a, rho, eps) {
                let rho_back = (n - 1.0) * eps * a.norm() / (2.0 * v.norm());
                prop_assert!((rho_back - rho).abs() <= 1e-12 * rho);
            }
            if let NStar::Finite(n) = nstar_approach_b(&v, &a, rho, eps) {
                let rho_back = (n - 1.0) * eps * v.dot(&a).abs() / (2.0 * v.dot(&v));
                prop_assert!((rho_back - rho).abs() <= 1e-12 * rho);
            }
            if let NStar::Finite(n) = nstar_approach_c(&v, &a, rho, eps) {
                let rho_back = n * eps * a.norm() / v.norm();
                prop_assert!((rho_back - rho).abs() <= 1e-12 * rho);
            }
        }

        /// n*_A = n*_B when a is parallel to v; n*_A − 1 = 2 n*_C always.
        #[test]
        fn prop_approach_consistency(
            v in proptest::collection::vec(-3.0f64..3.0, 1..5),
            scale in -2.0f64..2.0,
            rho in 0.01f64..0.5,
            eps in 1e-5f64..0.05,
        ) {
            let v = ParamVector::new(v);
            prop_assume!(v.norm() > 1e-6 && scale.abs() > 1e-6);
            let a = v.scaled(scale);

            let na = nstar_approach_a(&v, &a, rho, eps);
            let nb = nstar_approach_b(&v, &a, rho, eps);
            let nc = nstar_approach_c(&v, &a, rho, eps);
            match (na, nb, nc) {
                (NStar::Finite(na), NStar::Finite(nb), NStar::Finite(nc)) => {
                    prop_assert!((na - nb).abs() <= 1e-9 * na.abs());
                    prop_assert!(((na - 1.0) - 2.0 * nc).abs() <= 1e-9 * nc.abs().max(1.0));
                }
                _ => prop_assert!(false, "expected finite n* for parallel a"),
            }
        }

        /// ε never exceeds α/M for the step that was actually applied.
        #[test]
        fn prop_epsilon_bounded_by_entry_alpha(
            theta0 in proptest::collection::vec(0.5f64..4.0, 2..3),
            alpha0 in 1e-4f64..0.5,
        ) {
            let field = ellipse_field(6.0, 2.0);
            let config = VAFlowConfig { alpha0, rho_targ: 0.2, ..VAFlowConfig::default() };
            let state = FlowState::initial(ParamVector::new(theta0), &config);
            if let Ok(StepOutcome::Advanced(next)) = vaflow_step(&field, &state, &config) {
                prop_assert!(next.epsilon <= state.alpha / config.m as f64 + 1e-18);
            }
        }
    }
}
