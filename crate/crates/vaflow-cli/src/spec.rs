//! Experiment specifications: what to run, with which parameter overrides,
//! and where to write the artifacts. The JSON config file mirrors these
//! field names exactly.

use crate::CliError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use vaflow::Approach;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Reserved for randomized fixtures; the bundled experiments are fully
    /// deterministic and ignore it.
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentSpec {
    pub fn new(name: impl Into<String>) -> Self {
        ExperimentSpec {
            name: name.into(),
            overrides: Overrides::default(),
            output_dir: default_output_dir(),
            seed: 0,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Optional parameter overrides, type-checked against the algorithm configs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_targ: Option<f64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approach: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
}

impl Overrides {
    /// Applies one `key=value` pair from the command line.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--set expects key=value, got {assignment:?}"))
        })?;
        let usage = |msg: String| CliError::Usage(msg);
        let real = |v: &str| {
            v.parse::<f64>()
                .map_err(|e| usage(format!("value for {key}: {e}")))
        };
        match key {
            "alpha0" => self.alpha0 = Some(real(value)?),
            "rho_targ" => self.rho_targ = Some(real(value)?),
            "M" => {
                self.m = Some(
                    value
                        .parse()
                        .map_err(|e| usage(format!("value for M: {e}")))?,
                )
            }
            "num" => {
                self.num = Some(
                    value
                        .parse()
                        .map_err(|e| usage(format!("value for num: {e}")))?,
                )
            }
            "approach" => {
                value.parse::<Approach>().map_err(usage)?;
                self.approach = Some(value.to_string());
            }
            "momentum_beta" => self.momentum_beta = Some(real(value)?),
            "max_step" => self.max_step = Some(real(value)?),
            "target" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 2 {
                    return Err(usage(format!(
                        "target expects two comma-separated reals, got {value:?}"
                    )));
                }
                self.target = Some([real(parts[0])?, real(parts[1])?]);
            }
            "theta0" => {
                let components: Result<Vec<f64>, CliError> = value.split(',').map(real).collect();
                let components = components?;
                if components.is_empty() {
                    return Err(usage("theta0 needs at least one component".into()));
                }
                self.theta0 = Some(components);
            }
            other => {
                return Err(usage(format!(
                    "unknown override key {other:?} (known: alpha0, rho_targ, M, num, \
                     approach, momentum_beta, max_step, target, theta0)"
                )))
            }
        }
        Ok(())
    }

    /// Parsed approach override, if any.
    pub fn approach(&self) -> Result<Option<Approach>, CliError> {
        self.approach
            .as_deref()
            .map(|s| s.parse::<Approach>().map_err(CliError::Usage))
            .transpose()
    }

    /// Rejects overrides that the experiment has no use for.
    pub fn ensure_only(&self, allowed: &[&str]) -> Result<(), CliError> {
        let present: [(&str, bool); 9] = [
            ("alpha0", self.alpha0.is_some()),
            ("rho_targ", self.rho_targ.is_some()),
            ("M", self.m.is_some()),
            ("num", self.num.is_some()),
            ("approach", self.approach.is_some()),
            ("momentum_beta", self.momentum_beta.is_some()),
            ("max_step", self.max_step.is_some()),
            ("target", self.target.is_some()),
            ("theta0", self.theta0.is_some()),
        ];
        for (key, is_set) in present {
            if is_set && !allowed.contains(&key) {
                return Err(CliError::Usage(format!(
                    "override {key:?} does not apply to this experiment (accepted: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }
}
