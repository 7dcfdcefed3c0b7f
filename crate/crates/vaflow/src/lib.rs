//! Second-order flow updates for gradient descent and inverse kinematics.
//!
//! The core idea: treat the iterative update rule of an algorithm as a vector
//! field `v(θ)` over parameter space, estimate the rate of change of `v` along
//! itself (the *acceleration* `a`) from a single extra field evaluation, and
//! compound many virtual micro-steps of size `ε` into one macroscopic update
//! `θ ← θ + nε·v + ½n(n−1)ε²·a`. The number of micro-steps `n*` is chosen each
//! iteration so that the second-order correction stays at a fixed fraction of
//! the first-order term, which yields an adaptive learning rate `α = n*·ε` at
//! O(N) cost per iteration.
//!
//! The [`flow`] module implements the update scheme itself; [`gd`] and [`ik`]
//! provide the two applications (cost-function descent and a planar arm
//! steered through a Jacobian pseudoinverse), together with the classic
//! first-order baselines they are compared against.

pub mod error;
pub mod flow;
pub mod gd;
pub mod ik;
pub mod linalg;
pub mod vector;

pub use error::{FlowError, LinalgError};
pub use flow::{
    compound_dtheta, compound_v, continuous_update, estimate_acceleration, nstar_approach_a,
    nstar_approach_b, nstar_approach_c, predict_cf, vaflow_run, vaflow_step, Approach, FlowRun,
    FlowState, NStar, StepOutcome, StopReason, VAFlowConfig, VectorField,
};
pub use vector::ParamVector;
