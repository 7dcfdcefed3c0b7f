//! The bundled experiments, registered by name and selected at runtime.
//!
//! Each experiment knows its defaults, applies the spec's overrides, runs the
//! algorithms it compares and writes CSV traces plus an SVG plot into the
//! spec's output directory. A failing algorithm run still leaves its partial
//! trace on disk, together with a `*_failures.json` manifest describing what
//! went wrong.

use crate::spec::ExperimentSpec;
use crate::svg::{emit_svg_plot, PlotStyle, Series};
use crate::trace::{emit_csv, fmt_real, TraceRecord};
use crate::CliError;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use vaflow::flow::StopReason;
use vaflow::gd::{
    adam_run, beale_cost, ellipse_cost, ellipse_exact_path, gd_field, AdamConfig, CostFunction,
    EllipseParams, GdRun, GdStop,
};
use vaflow::ik::{
    ik_vector_field, jacobian_pseudoinverse_run, three_link_start, vaflow_ik_run, IKProblem, IkRun,
    PlanarArm,
};
use vaflow::{
    continuous_update, vaflow_run, vaflow_step, FlowState, ParamVector, StepOutcome, VAFlowConfig,
    VectorField,
};

/// An experiment that can be listed and run by name.
pub trait Experiment {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// Default parameters, for `vaflow list`.
    fn default_params(&self) -> Vec<(&'static str, String)>;
    /// Runs the experiment, returning the files it wrote.
    fn run(&self, spec: &ExperimentSpec) -> Result<Vec<PathBuf>, CliError>;
}

/// All registered experiments.
pub fn registry() -> Vec<Box<dyn Experiment>> {
    vec![
        Box::new(EllipseDemo),
        Box::new(BealeCompare),
        Box::new(Ik3Compare),
    ]
}

pub fn find(name: &str) -> Option<Box<dyn Experiment>> {
    registry().into_iter().find(|e| e.name() == name)
}

/// Looks the experiment up by name and runs it.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<PathBuf>, CliError> {
    let experiment =
        find(&spec.name).ok_or_else(|| CliError::UnknownExperiment(spec.name.clone()))?;
    std::fs::create_dir_all(&spec.output_dir)?;
    experiment.run(spec)
}

// ---------------------------------------------------------------------------
// shared helpers

fn apply_flow_overrides(config: &mut VAFlowConfig, spec: &ExperimentSpec) -> Result<(), CliError> {
    let o = &spec.overrides;
    if let Some(alpha0) = o.alpha0 {
        config.alpha0 = alpha0;
    }
    if let Some(rho) = o.rho_targ {
        config.rho_targ = rho;
    }
    if let Some(m) = o.m {
        config.m = m;
    }
    if let Some(num) = o.num {
        config.num = num;
    }
    if let Some(approach) = o.approach()? {
        config.approach = approach;
    }
    if let Some(beta) = o.momentum_beta {
        config.momentum_beta = beta;
    }
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(())
}

fn theta0_override(
    spec: &ExperimentSpec,
    default: ParamVector,
    dim: usize,
) -> Result<ParamVector, CliError> {
    match &spec.overrides.theta0 {
        None => Ok(default),
        Some(components) => {
            if components.len() != dim {
                return Err(CliError::Usage(format!(
                    "theta0 needs {dim} components for this experiment, got {}",
                    components.len()
                )));
            }
            Ok(ParamVector::new(components.clone()))
        }
    }
}

fn write_curve_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| fmt_real(*x)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}

#[derive(Debug)]
struct FailureNote {
    algorithm: &'static str,
    error: String,
    completed_iterations: usize,
}

fn write_failure_manifest(
    dir: &Path,
    experiment: &str,
    notes: &[FailureNote],
) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{experiment}_failures.json"));
    let entries: Vec<serde_json::Value> = notes
        .iter()
        .map(|n| {
            serde_json::json!({
                "algorithm": n.algorithm,
                "error": n.error,
                "completed_iterations": n.completed_iterations,
            })
        })
        .collect();
    let text = serde_json::to_string_pretty(&entries)?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

fn gd_trace_records<C: CostFunction>(
    cost: &C,
    theta0: &ParamVector,
    alpha0: f64,
    flow_trace: &[FlowState],
) -> Vec<TraceRecord> {
    let mut records = Vec::with_capacity(flow_trace.len() + 1);
    records.push(TraceRecord {
        iteration: 0,
        metric: cost.value(theta0),
        alpha: alpha0,
        nstar: 0.0,
        v_norm: cost.grad(theta0).norm(),
        a_norm: 0.0,
        theta: theta0.as_slice().to_vec(),
    });
    for state in flow_trace {
        records.push(TraceRecord {
            iteration: state.iteration,
            metric: cost.value(&state.theta),
            alpha: state.alpha,
            nstar: state.nstar,
            v_norm: state.v.norm(),
            a_norm: state.a.norm(),
            theta: state.theta.as_slice().to_vec(),
        });
    }
    records
}

fn gd_run_records<C: CostFunction>(
    cost: &C,
    run: &GdRun,
    theta0: &ParamVector,
    alpha: f64,
) -> Vec<TraceRecord> {
    let mut records = Vec::with_capacity(run.trace.len() + 1);
    records.push(TraceRecord {
        iteration: 0,
        metric: cost.value(theta0),
        alpha,
        nstar: 0.0,
        v_norm: cost.grad(theta0).norm(),
        a_norm: 0.0,
        theta: theta0.as_slice().to_vec(),
    });
    for rec in &run.trace {
        records.push(TraceRecord {
            iteration: rec.iteration,
            metric: rec.cost,
            alpha,
            nstar: 0.0,
            v_norm: rec.grad_norm,
            a_norm: 0.0,
            theta: rec.theta.as_slice().to_vec(),
        });
    }
    records
}

fn ik_run_records(
    run: &IkRun,
    problem: &IKProblem,
    theta0: &ParamVector,
    alpha0: f64,
) -> Vec<TraceRecord> {
    let field = ik_vector_field(problem);
    let mut records = Vec::with_capacity(run.trace.len() + 1);
    records.push(TraceRecord {
        iteration: 0,
        metric: problem.distance(theta0),
        alpha: alpha0,
        nstar: 0.0,
        v_norm: field.eval(theta0).norm(),
        a_norm: 0.0,
        theta: theta0.as_slice().to_vec(),
    });
    for rec in &run.trace {
        records.push(TraceRecord {
            iteration: rec.iteration,
            metric: rec.distance,
            alpha: rec.alpha,
            nstar: rec.nstar,
            v_norm: rec.v_norm,
            a_norm: rec.a_norm,
            theta: rec.theta.as_slice().to_vec(),
        });
    }
    records
}

fn metric_series(name: &str, records: &[TraceRecord]) -> Series {
    Series::new(
        name,
        records
            .iter()
            .map(|r| (r.iteration as f64, r.metric))
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// ellipse-demo

/// Single-update close-up on the elliptical bowl: the straight first-order
/// ray, the quadratic flow curve, the exact descent path, and the update the
/// step-count rule recommends.
struct EllipseDemo;

const ELLIPSE_C: (f64, f64) = (6.0, 2.0);

impl EllipseDemo {
    fn config() -> VAFlowConfig {
        VAFlowConfig {
            alpha0: 0.01,
            rho_targ: 0.2,
            num: 1,
            ..VAFlowConfig::default()
        }
    }
}

impl Experiment for EllipseDemo {
    fn name(&self) -> &'static str {
        "ellipse-demo"
    }

    fn summary(&self) -> &'static str {
        "single-update comparison of the flow curve vs the first-order ray on an elliptical bowl"
    }

    fn default_params(&self) -> Vec<(&'static str, String)> {
        let c = Self::config();
        vec![
            ("c1,c2", format!("{},{}", ELLIPSE_C.0, ELLIPSE_C.1)),
            ("theta0", "4,1.5".into()),
            ("alpha0", c.alpha0.to_string()),
            ("rho_targ", c.rho_targ.to_string()),
            ("M", c.m.to_string()),
            ("approach", c.approach.to_string()),
            ("momentum_beta", c.momentum_beta.to_string()),
        ]
    }

    fn run(&self, spec: &ExperimentSpec) -> Result<Vec<PathBuf>, CliError> {
        spec.overrides.ensure_only(&[
            "alpha0",
            "rho_targ",
            "M",
            "approach",
            "momentum_beta",
            "theta0",
        ])?;
        let mut config = Self::config();
        apply_flow_overrides(&mut config, spec)?;
        let theta0 = theta0_override(spec, ParamVector::new(vec![4.0, 1.5]), 2)?;
        if theta0[0] == 0.0 || theta0[1] == 0.0 {
            return Err(CliError::Usage(
                "theta0 components must be nonzero so the exact path is defined".into(),
            ));
        }

        let params =
            EllipseParams::new(ELLIPSE_C.0, ELLIPSE_C.1).expect("built-in semi-axes are valid");
        let cost = ellipse_cost(params);
        let field = gd_field(cost);

        // One step gives the recommended alpha plus the (v, a) pair behind it.
        let state = FlowState::initial(theta0.clone(), &config);
        let next = match vaflow_step(&field, &state, &config) {
            Ok(StepOutcome::Advanced(next)) => next,
            Ok(StepOutcome::Converged { .. }) => {
                return Err(CliError::Usage(
                    "theta0 is already stationary; nothing to demonstrate".into(),
                ))
            }
            Err(e) => {
                let manifest = write_failure_manifest(
                    &spec.output_dir,
                    self.name(),
                    &[FailureNote {
                        algorithm: "vaflow",
                        error: e.to_string(),
                        completed_iterations: 0,
                    }],
                )?;
                return Err(CliError::RunFailed { manifest });
            }
        };
        let alpha_rec = next.alpha;
        let (v, a) = (&next.v, &next.a);

        // Both single-update curves over the same alpha range.
        let samples = 100;
        let alpha_hi = 1.2 * alpha_rec;
        let mut curve_rows = Vec::with_capacity(samples);
        let mut ray_rows = Vec::with_capacity(samples);
        for i in 0..samples {
            let alpha = alpha_hi * i as f64 / (samples - 1) as f64;
            let flow_pt = continuous_update(&theta0, v, a, alpha);
            let ray_pt = theta0.add_scaled(alpha, v);
            curve_rows.push(vec![alpha, flow_pt[0], flow_pt[1]]);
            ray_rows.push(vec![alpha, ray_pt[0], ray_pt[1]]);
        }
        let recommended = continuous_update(&theta0, v, a, alpha_rec);
        let path_points = ellipse_exact_path(&theta0, &params, 2000);

        let dir = &spec.output_dir;
        let name = self.name();
        let f_curve = dir.join(format!("{name}_vaflow_curve.csv"));
        let f_ray = dir.join(format!("{name}_gd_ray.csv"));
        let f_path = dir.join(format!("{name}_exact_path.csv"));
        let f_rec = dir.join(format!("{name}_recommended.csv"));
        let f_svg = dir.join(format!("{name}.svg"));

        write_curve_csv(&f_curve, "alpha,theta_0,theta_1", &curve_rows)?;
        write_curve_csv(&f_ray, "alpha,theta_0,theta_1", &ray_rows)?;
        write_curve_csv(
            &f_path,
            "theta_0,theta_1",
            &path_points
                .iter()
                .map(|p| vec![p[0], p[1]])
                .collect::<Vec<_>>(),
        )?;
        write_curve_csv(
            &f_rec,
            "alpha,theta_0,theta_1",
            &[vec![alpha_rec, recommended[0], recommended[1]]],
        )?;

        // Close-up plot in theta space; the exact path is windowed to the
        // part the curves cover.
        let theta1_end = curve_rows
            .iter()
            .chain(ray_rows.iter())
            .map(|r| r[1])
            .fold(f64::INFINITY, f64::min);
        let window: Vec<(f64, f64)> = path_points
            .iter()
            .filter(|p| (p[0] - theta1_end) * theta0[0].signum() >= -1e-12)
            .map(|p| (p[0], p[1]))
            .collect();
        emit_svg_plot(
            &[
                Series::new(
                    "first-order ray",
                    ray_rows.iter().map(|r| (r[1], r[2])).collect(),
                ),
                Series::new(
                    "flow curve",
                    curve_rows.iter().map(|r| (r[1], r[2])).collect(),
                ),
                Series::new("exact path", window),
            ],
            PlotStyle::Linear,
            &f_svg,
        )?;

        Ok(vec![f_curve, f_ray, f_path, f_rec, f_svg])
    }
}

// ---------------------------------------------------------------------------
// beale-compare

/// Full descent comparison on Beale's function: the adaptive flow against
/// bias-corrected Adam, both from (4, 3).
struct BealeCompare;

impl BealeCompare {
    fn config() -> VAFlowConfig {
        VAFlowConfig {
            alpha0: 4.8e-6,
            rho_targ: 0.1,
            num: 5000,
            ..VAFlowConfig::default()
        }
    }
}

impl Experiment for BealeCompare {
    fn name(&self) -> &'static str {
        "beale-compare"
    }

    fn summary(&self) -> &'static str {
        "descent comparison on Beale's function: adaptive flow vs Adam"
    }

    fn default_params(&self) -> Vec<(&'static str, String)> {
        let c = Self::config();
        let adam = AdamConfig::default();
        vec![
            ("theta0", "4,3".into()),
            ("alpha0", c.alpha0.to_string()),
            ("rho_targ", c.rho_targ.to_string()),
            ("M", c.m.to_string()),
            ("num", c.num.to_string()),
            ("approach", c.approach.to_string()),
            ("momentum_beta", c.momentum_beta.to_string()),
            ("adam alpha (fixed)", adam.alpha.to_string()),
        ]
    }

    fn run(&self, spec: &ExperimentSpec) -> Result<Vec<PathBuf>, CliError> {
        spec.overrides.ensure_only(&[
            "alpha0",
            "rho_targ",
            "M",
            "num",
            "approach",
            "momentum_beta",
            "theta0",
        ])?;
        let mut config = Self::config();
        apply_flow_overrides(&mut config, spec)?;
        let theta0 = theta0_override(spec, ParamVector::new(vec![4.0, 3.0]), 2)?;

        let cost = beale_cost();
        let field = gd_field(cost);
        let flow = vaflow_run(&field, &theta0, &config, |_| {})
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let flow_records = gd_trace_records(&cost, &theta0, config.alpha0, &flow.trace);

        let adam_config = AdamConfig::default();
        let adam = adam_run(&cost, &theta0, &adam_config, config.num);
        let adam_records = gd_run_records(&cost, &adam, &theta0, adam_config.alpha);

        let dir = &spec.output_dir;
        let name = self.name();
        let f_flow = dir.join(format!("{name}_vaflow.csv"));
        let f_adam = dir.join(format!("{name}_adam.csv"));
        let f_svg = dir.join(format!("{name}.svg"));
        emit_csv(&flow_records, &f_flow)?;
        emit_csv(&adam_records, &f_adam)?;
        emit_svg_plot(
            &[
                metric_series("vaflow", &flow_records),
                metric_series("adam", &adam_records),
            ],
            PlotStyle::LogY,
            &f_svg,
        )?;
        let mut files = vec![f_flow, f_adam, f_svg];

        let mut failures = Vec::new();
        if let StopReason::Failed(e) = &flow.stop {
            failures.push(FailureNote {
                algorithm: "vaflow",
                error: e.to_string(),
                completed_iterations: flow.trace.len(),
            });
        }
        if let GdStop::Failed(e) = &adam.stop {
            failures.push(FailureNote {
                algorithm: "adam",
                error: e.to_string(),
                completed_iterations: adam.trace.len(),
            });
        }
        if !failures.is_empty() {
            let manifest = write_failure_manifest(dir, name, &failures)?;
            files.push(manifest.clone());
            return Err(CliError::RunFailed { manifest });
        }
        Ok(files)
    }
}

// ---------------------------------------------------------------------------
// ik3-compare

/// Three-link arm steered toward a just-out-of-reach target: the flow
/// against the plain Jacobian-pseudoinverse stepper.
struct Ik3Compare;

impl Ik3Compare {
    fn config() -> VAFlowConfig {
        VAFlowConfig {
            alpha0: 0.01,
            rho_targ: 0.1,
            num: 300,
            ..VAFlowConfig::default()
        }
    }

    fn problem() -> IKProblem {
        IKProblem::new(PlanarArm::unit_links(3), [2.132, 2.132])
    }
}

impl Experiment for Ik3Compare {
    fn name(&self) -> &'static str {
        "ik3-compare"
    }

    fn summary(&self) -> &'static str {
        "3-link planar arm reaching for a target just beyond its range: flow vs pseudoinverse"
    }

    fn default_params(&self) -> Vec<(&'static str, String)> {
        let c = Self::config();
        let p = Self::problem();
        let theta0 = three_link_start();
        vec![
            ("link lengths", "1,1,1".into()),
            (
                "theta0",
                format!("{:.6},{:.6},{:.6}", theta0[0], theta0[1], theta0[2]),
            ),
            ("target", format!("{},{}", p.target[0], p.target[1])),
            ("max_step", p.max_step.to_string()),
            ("alpha0", c.alpha0.to_string()),
            ("rho_targ", c.rho_targ.to_string()),
            ("M", c.m.to_string()),
            ("num", c.num.to_string()),
            ("approach", c.approach.to_string()),
        ]
    }

    fn run(&self, spec: &ExperimentSpec) -> Result<Vec<PathBuf>, CliError> {
        spec.overrides.ensure_only(&[
            "alpha0",
            "rho_targ",
            "M",
            "num",
            "approach",
            "momentum_beta",
            "max_step",
            "target",
            "theta0",
        ])?;
        let mut config = Self::config();
        apply_flow_overrides(&mut config, spec)?;
        let mut problem = Self::problem();
        if let Some(target) = spec.overrides.target {
            problem.target = target;
        }
        if let Some(max_step) = spec.overrides.max_step {
            problem = problem.with_max_step(max_step);
        }
        problem
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let theta0 = theta0_override(spec, three_link_start(), 3)?;

        let flow = vaflow_ik_run(&problem, &theta0, &config, config.num)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let flow_records = ik_run_records(&flow, &problem, &theta0, config.alpha0);

        let baseline = jacobian_pseudoinverse_run(&problem, &theta0, config.num)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let baseline_records = ik_run_records(&baseline, &problem, &theta0, 0.0);

        let dir = &spec.output_dir;
        let name = self.name();
        let f_flow = dir.join(format!("{name}_vaflow.csv"));
        let f_base = dir.join(format!("{name}_jacobian-pinv.csv"));
        let f_svg = dir.join(format!("{name}.svg"));
        emit_csv(&flow_records, &f_flow)?;
        emit_csv(&baseline_records, &f_base)?;
        emit_svg_plot(
            &[
                metric_series("vaflow", &flow_records),
                metric_series("jacobian-pinv", &baseline_records),
            ],
            PlotStyle::Linear,
            &f_svg,
        )?;
        let mut files = vec![f_flow, f_base, f_svg];

        let mut failures = Vec::new();
        for (algorithm, stop, completed) in [
            ("vaflow", &flow.stop, flow.trace.len()),
            ("jacobian-pinv", &baseline.stop, baseline.trace.len()),
        ] {
            if let StopReason::Failed(e) = stop {
                failures.push(FailureNote {
                    algorithm,
                    error: e.to_string(),
                    completed_iterations: completed,
                });
            }
        }
        if !failures.is_empty() {
            let manifest = write_failure_manifest(dir, name, &failures)?;
            files.push(manifest.clone());
            return Err(CliError::RunFailed { manifest });
        }
        Ok(files)
    }
}
