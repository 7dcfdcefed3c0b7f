//! Planar N-link arm: forward kinematics, the analytic Jacobian, the
//! pseudoinverse-based steering field, and the two solvers compared in the
//! experiments.
//!
//! Angle convention: joint angles are *relative* (each measured against the
//! previous link), so link `i` has absolute heading `φᵢ = θ₁ + … + θᵢ`,
//! counterclockwise from the +x axis, with the base pinned at the origin.
//! This makes the Jacobian columns the classic suffix sums over links.

use crate::error::FlowError;
use crate::flow::{vaflow_step, FlowState, StepOutcome, StopReason, VAFlowConfig, VectorField};
use crate::linalg::{pinv, Matrix, DEFAULT_SIGMA_CUTOFF};
use crate::vector::ParamVector;

/// Joint angles in radians, one per link, relative convention.
pub type JointAngles = ParamVector;

/// A chain of rigid links in the plane, base at the origin.
#[derive(Debug, Clone)]
pub struct PlanarArm {
    link_lengths: Vec<f64>,
}

impl PlanarArm {
    pub fn new(link_lengths: Vec<f64>) -> Result<Self, FlowError> {
        if link_lengths.is_empty() {
            return Err(FlowError::InvalidConfig(
                "an arm needs at least one link".into(),
            ));
        }
        if link_lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(FlowError::InvalidConfig(format!(
                "link lengths must be positive and finite, got {link_lengths:?}"
            )));
        }
        Ok(PlanarArm { link_lengths })
    }

    /// `n` links of length 1.
    pub fn unit_links(n: usize) -> Self {
        PlanarArm::new(vec![1.0; n]).expect("unit links are valid")
    }

    pub fn link_count(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    /// Total reach `Σ lᵢ`, the radius of the workspace.
    pub fn total_reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }
}

/// End-effector position `r = Σ lᵢ (cos φᵢ, sin φᵢ)`.
pub fn forward_kinematics(arm: &PlanarArm, theta: &JointAngles) -> [f64; 2] {
    assert_eq!(
        arm.link_count(),
        theta.dim(),
        "angle count must match links"
    );
    let mut phi = 0.0;
    let mut x = 0.0;
    let mut y = 0.0;
    for (l, t) in arm.link_lengths.iter().zip(theta.iter()) {
        phi += t;
        x += l * phi.cos();
        y += l * phi.sin();
    }
    [x, y]
}

/// The 2×N Jacobian of [`forward_kinematics`]: column `j` is the suffix sum
/// `Σ_{i≥j} lᵢ (−sin φᵢ, cos φᵢ)`.
pub fn arm_jacobian(arm: &PlanarArm, theta: &JointAngles) -> Matrix {
    let n = arm.link_count();
    assert_eq!(n, theta.dim(), "angle count must match links");
    let mut phi = Vec::with_capacity(n);
    let mut acc = 0.0;
    for t in theta.iter() {
        acc += t;
        phi.push(acc);
    }
    // Build the suffix sums from the last column backwards.
    let mut jac = Matrix::zeros(2, n);
    let mut sx = 0.0;
    let mut sy = 0.0;
    for j in (0..n).rev() {
        sx += arm.link_lengths[j] * (-phi[j].sin());
        sy += arm.link_lengths[j] * phi[j].cos();
        jac.set(0, j, sx);
        jac.set(1, j, sy);
    }
    jac
}

/// A steering task: drive the end-effector of `arm` to `target`.
#[derive(Debug, Clone)]
pub struct IKProblem {
    pub arm: PlanarArm,
    pub target: [f64; 2],
    /// Largest end-effector displacement allowed per update.
    pub max_step: f64,
    /// Distance below which the target counts as reached.
    pub stop_tol: f64,
}

impl IKProblem {
    pub fn new(arm: PlanarArm, target: [f64; 2]) -> Self {
        IKProblem {
            arm,
            target,
            max_step: 0.1,
            stop_tol: 1e-6,
        }
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    pub fn with_stop_tol(mut self, stop_tol: f64) -> Self {
        self.stop_tol = stop_tol;
        self
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return Err(FlowError::InvalidConfig(format!(
                "max_step must be positive, got {}",
                self.max_step
            )));
        }
        if !(self.stop_tol > 0.0 && self.stop_tol.is_finite()) {
            return Err(FlowError::InvalidConfig(format!(
                "stop_tol must be positive, got {}",
                self.stop_tol
            )));
        }
        if !self.target.iter().all(|c| c.is_finite()) {
            return Err(FlowError::InvalidConfig(format!(
                "target must be finite, got {:?}",
                self.target
            )));
        }
        Ok(())
    }

    /// Distance from the end-effector at `theta` to the target.
    pub fn distance(&self, theta: &JointAngles) -> f64 {
        let r = forward_kinematics(&self.arm, theta);
        let dx = self.target[0] - r[0];
        let dy = self.target[1] - r[1];
        (dx * dx + dy * dy).sqrt()
    }
}

/// The steering field `v(θ) = G(θ)·ŝ`, where `ŝ` is the unit vector from the
/// end-effector to the target and `G` the Moore-Penrose inverse of the arm
/// Jacobian. Returns the zero vector once the target is within `stop_tol`.
#[derive(Debug, Clone)]
pub struct IkField<'a> {
    problem: &'a IKProblem,
}

pub fn ik_vector_field(problem: &IKProblem) -> IkField<'_> {
    IkField { problem }
}

impl VectorField for IkField<'_> {
    fn dim(&self) -> usize {
        self.problem.arm.link_count()
    }

    fn eval(&self, theta: &ParamVector) -> ParamVector {
        let n = self.dim();
        if !theta.is_finite() {
            // Surfaces upstream as a non-finite-field error with this θ.
            return ParamVector::new(vec![f64::NAN; n]);
        }
        let r = forward_kinematics(&self.problem.arm, theta);
        let s = [self.problem.target[0] - r[0], self.problem.target[1] - r[1]];
        let dist = (s[0] * s[0] + s[1] * s[1]).sqrt();
        if dist < self.problem.stop_tol {
            return ParamVector::zeros(n);
        }
        let s_hat = [s[0] / dist, s[1] / dist];
        let jac = arm_jacobian(&self.problem.arm, theta);
        let g = pinv(&jac, DEFAULT_SIGMA_CUTOFF).expect("finite angles give a finite jacobian");
        ParamVector::new(g.matvec(&s_hat))
    }
}

/// One row of an inverse-kinematics trace.
#[derive(Debug, Clone)]
pub struct IkRecord {
    pub iteration: usize,
    /// Distance to the target after the update.
    pub distance: f64,
    pub alpha: f64,
    pub nstar: f64,
    pub v_norm: f64,
    pub a_norm: f64,
    pub theta: JointAngles,
}

/// An inverse-kinematics run: per-iteration records plus the stop reason.
#[derive(Debug, Clone)]
pub struct IkRun {
    pub final_theta: JointAngles,
    pub trace: Vec<IkRecord>,
    pub stop: StopReason,
}

/// The classic first-order baseline: `dθ = G·(α·ŝ)` with the move magnitude
/// `α = min(‖s‖, max_step)`. Iterates exactly `num` times (zero motion once
/// within `stop_tol`), recording the distance after each update.
pub fn jacobian_pseudoinverse_run(
    problem: &IKProblem,
    theta0: &JointAngles,
    num: usize,
) -> Result<IkRun, FlowError> {
    problem.validate()?;
    let n = problem.arm.link_count();
    if theta0.dim() != n {
        return Err(FlowError::FieldDimensionMismatch {
            field_dim: n,
            param_dim: theta0.dim(),
        });
    }
    if !theta0.is_finite() {
        return Err(FlowError::NonFiniteParams { iteration: 0 });
    }
    let mut theta = theta0.clone();
    let mut trace = Vec::with_capacity(num);
    for iteration in 1..=num {
        let r = forward_kinematics(&problem.arm, &theta);
        let s = [problem.target[0] - r[0], problem.target[1] - r[1]];
        let dist = (s[0] * s[0] + s[1] * s[1]).sqrt();
        let (alpha_move, v) = if dist >= problem.stop_tol {
            let s_hat = [s[0] / dist, s[1] / dist];
            let jac = arm_jacobian(&problem.arm, &theta);
            let g = pinv(&jac, DEFAULT_SIGMA_CUTOFF)?;
            let v = ParamVector::new(g.matvec(&s_hat));
            let alpha_move = dist.min(problem.max_step);
            theta = theta.add_scaled(alpha_move, &v);
            if !theta.is_finite() {
                return Ok(IkRun {
                    final_theta: theta,
                    trace,
                    stop: StopReason::Failed(FlowError::NonFiniteParams { iteration }),
                });
            }
            (alpha_move, v)
        } else {
            (0.0, ParamVector::zeros(n))
        };
        trace.push(IkRecord {
            iteration,
            distance: problem.distance(&theta),
            alpha: alpha_move,
            nstar: 0.0,
            v_norm: v.norm(),
            a_norm: 0.0,
            theta: theta.clone(),
        });
    }
    Ok(IkRun {
        final_theta: theta,
        trace,
        stop: StopReason::Budget,
    })
}

/// Second-order flow over the steering field, with the per-step learning rate
/// capped at `min(max_step, ‖s‖)`.
///
/// The cap is expressed in end-effector units: `JG` is an orthogonal
/// projector, so the effector speed per unit α, `‖J·v‖ = ‖JG·ŝ‖`, is exactly
/// 1 away from singular poses and at most 1 at them. Bounding α therefore
/// bounds the predicted effector displacement by both the per-update limit
/// and the remaining distance, without ever inflating the parameter move
/// when the projector loses rank.
///
/// Runs at most `num` iterations; stops early when the target is reached,
/// the field converges, or α stalls.
pub fn vaflow_ik_run(
    problem: &IKProblem,
    theta0: &JointAngles,
    config: &VAFlowConfig,
    num: usize,
) -> Result<IkRun, FlowError> {
    problem.validate()?;
    config.validate()?;
    let n = problem.arm.link_count();
    if theta0.dim() != n {
        return Err(FlowError::FieldDimensionMismatch {
            field_dim: n,
            param_dim: theta0.dim(),
        });
    }
    if !theta0.is_finite() {
        return Err(FlowError::NonFiniteParams { iteration: 0 });
    }

    let field = ik_vector_field(problem);
    let mut state = FlowState::initial(theta0.clone(), config);
    let mut trace = Vec::new();
    let mut stop = StopReason::Budget;
    for _ in 0..num {
        let dist = problem.distance(&state.theta);
        if dist < problem.stop_tol {
            stop = StopReason::Converged;
            break;
        }
        if state.alpha < config.alpha_stall {
            stop = StopReason::Stalled;
            break;
        }
        let mut cap = problem.max_step.min(dist);
        if let Some(user_cap) = config.alpha_max {
            cap = cap.min(user_cap);
        }
        let step_config = VAFlowConfig {
            alpha_max: Some(cap),
            ..config.clone()
        };
        match vaflow_step(&field, &state, &step_config) {
            Ok(StepOutcome::Advanced(next)) => {
                trace.push(IkRecord {
                    iteration: next.iteration,
                    distance: problem.distance(&next.theta),
                    alpha: next.alpha,
                    nstar: next.nstar,
                    v_norm: next.v.norm(),
                    a_norm: next.a.norm(),
                    theta: next.theta.clone(),
                });
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
    Ok(IkRun {
        final_theta: state.theta,
        trace,
        stop,
    })
}

/// Starting pose used by the three-link experiment: it places the effector at
/// `(1.70711, 1.70711)`, the elbow-up pose of the comparison scenario.
pub fn three_link_start() -> JointAngles {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    ParamVector::new(vec![FRAC_PI_2, -FRAC_PI_4, -FRAC_PI_4])
}
