//! Experiment configuration: a JSON document, overridden field by field by
//! command-line flags.

use ldp_sgd::model::{Objective, ObjectiveConfig};
use ldp_sgd::montecarlo::FitWindow;
use ldp_sgd::noise::{NoiseConfig, NoiseModel};
use ldp_sgd::sgd::StepSchedule;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

use crate::CliError;

pub const SEED_ENV: &str = "LDP_SGD_SEED";

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub p_min: Option<f64>,
    pub p_max: Option<f64>,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
}

impl FitConfig {
    pub fn window(&self) -> FitWindow {
        let d = FitWindow::default();
        FitWindow {
            p_min: self.p_min.unwrap_or(d.p_min),
            p_max: self.p_max.unwrap_or(d.p_max),
            k_min: self.k_min,
            k_max: self.k_max,
        }
    }
}

/// Query set for `tail`. Defaults to the Euclidean ball complement of the
/// first radius in `deltas`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    Ball { delta: f64 },
    Lp { p: f64, delta: f64 },
    HalfSpace { v: Vec<f64>, c: f64 },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: Option<ObjectiveConfig>,
    pub noise: Option<NoiseConfig>,
    /// Noise models compared by `compare`; falls back to `noise`.
    pub noises: Option<Vec<NoiseConfig>>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub x1: Option<Vec<f64>>,
    pub horizon: Option<usize>,
    pub record_at: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub lambdas: Option<Vec<Vec<f64>>>,
    pub zs: Option<Vec<Vec<f64>>>,
    pub deltas: Option<Vec<f64>>,
    pub ks: Option<Vec<usize>>,
    pub replications: Option<usize>,
    pub set: Option<SetConfig>,
    pub fit: Option<FitConfig>,
    /// Keep the initial-distance branch of the HPB exponent (default true).
    pub include_initial_branch: Option<bool>,
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: ExperimentConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            objective,
            noise,
            noises,
            a,
            b,
            x1,
            horizon,
            record_at,
            seed,
            lambdas,
            zs,
            deltas,
            ks,
            replications,
            set,
            fit,
            include_initial_branch,
            output
        );
        self
    }

    pub fn objective(&self) -> Result<Arc<dyn Objective>, CliError> {
        let spec = self
            .objective
            .as_ref()
            .ok_or_else(|| CliError::Config("no objective given".into()))?;
        Ok(spec.build()?)
    }

    pub fn noise_for(&self, obj: &dyn Objective) -> Result<Arc<dyn NoiseModel>, CliError> {
        let spec = self
            .noise
            .as_ref()
            .ok_or_else(|| CliError::Config("no noise model given".into()))?;
        Ok(spec.build(obj.dim())?)
    }

    /// Step schedule, checked against the objective's step-size condition.
    pub fn schedule_for(&self, obj: &dyn Objective) -> Result<StepSchedule, CliError> {
        let a = self.a.ok_or_else(|| CliError::Config("no step constant a given".into()))?;
        let s = StepSchedule::new(a, self.b.unwrap_or(1.0))?;
        s.validate_for(obj)?;
        Ok(s)
    }

    /// `x1`, defaulting to the origin.
    pub fn x1_for(&self, obj: &dyn Objective) -> Result<Vec<f64>, CliError> {
        let x1 = self.x1.clone().unwrap_or_else(|| vec![0.0; obj.dim()]);
        if x1.len() != obj.dim() {
            return Err(CliError::Config(format!(
                "x1 has {} entries, objective has dimension {}",
                x1.len(),
                obj.dim()
            )));
        }
        Ok(x1)
    }

    /// Flag, then config file, then the environment, then 0.
    pub fn seed(&self) -> Result<u64, CliError> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV} is not a u64: {v:?}"))),
            Err(_) => Ok(0),
        }
    }

    pub fn deltas(&self) -> Result<Vec<f64>, CliError> {
        let d = self.deltas.clone().unwrap_or_default();
        if d.is_empty() {
            return Err(CliError::Config("no radii (deltas) given".into()));
        }
        Ok(d)
    }

    pub fn ks(&self) -> Result<Vec<usize>, CliError> {
        let ks = self.ks.clone().unwrap_or_default();
        if ks.is_empty() {
            return Err(CliError::Config("no iteration indices (ks) given".into()));
        }
        Ok(ks)
    }

    pub fn replications(&self) -> Result<usize, CliError> {
        match self.replications {
            Some(n) if n > 0 => Ok(n),
            Some(_) => Err(CliError::Config("replications must be positive".into())),
            None => Err(CliError::Config("no replication count given".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_prefers_flags() {
        let file = ExperimentConfig::parse(r#"{"a": 2.0, "b": 3.0, "seed": 5}"#).unwrap();
        let flags = ExperimentConfig {
            b: Some(1.0),
            ..Default::default()
        };
        let c = file.overlay(flags);
        assert_eq!((c.a, c.b, c.seed), (Some(2.0), Some(1.0), Some(5)));
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(matches!(ExperimentConfig::parse(r#"{"alpha": 1}"#), Err(CliError::Config(_))));
    }

    #[test]
    fn full_document() {
        let c = ExperimentConfig::parse(
            r#"{
                "objective": {"type": "quadratic", "A": [[1.0]], "b": [0.0]},
                "noise": {"type": "gaussian", "sigma": [[1.0]]},
                "a": 2, "x1": [1.0], "ks": [10, 20], "deltas": [0.5],
                "set": {"type": "lp", "p": 1, "delta": 0.5},
                "fit": {"p_min": 1e-6}
            }"#,
        )
        .unwrap();
        let obj = c.objective().unwrap();
        assert_eq!(c.schedule_for(obj.as_ref()).unwrap().b(), 1.0);
        assert_eq!(c.fit.unwrap().window().p_min, 1e-6);
    }
}
