//! Run configuration: JSON on disk, dotted-path overrides on the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use infoplane_core::mi::TeacherBoundConfig;
use infoplane_core::student::StudentConfig;
use infoplane_core::teacher::TeacherConfig;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ZeroInfo,
    EstimatorCompare,
    IpTrajectory,
    BetaSweep,
    TrainTeacherOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        n_per_class: usize,
        side: usize,
        noise: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Average-pooling factor applied to each side.
        #[serde(default = "one")]
        pool: usize,
    },
}

fn one() -> usize {
    1
}

/// Which examples the per-epoch estimators see.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationSplit {
    #[default]
    HeldOut,
    Train,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: DataSource,
    /// Size of the evaluation set (capped by what is available).
    pub eval_size: usize,
    pub split: EstimationSplit,
    /// Seed for data generation; the run seed when absent.
    pub seed: Option<u64>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            source: DataSource::Synthetic {
                n_per_class: 100,
                side: 8,
                noise: 0.2,
            },
            eval_size: 1000,
            split: EstimationSplit::HeldOut,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherSpec {
    pub config: TeacherConfig,
    /// Reuse a saved teacher (`<dir>/teacher.json` + `.bin`) instead of training.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    pub direct: bool,
    pub teacher: bool,
    pub zy_lower: bool,
    /// Encoder draws per example for the `I(Z;Y)` bound.
    pub zy_samples: usize,
    pub teacher_bound: TeacherBoundConfig,
    /// Carry the inference network over from the previous epoch.
    pub warm_start: bool,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec {
            direct: true,
            teacher: true,
            zy_lower: true,
            zy_samples: 8,
            teacher_bound: TeacherBoundConfig::default(),
            warm_start: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub betas: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            betas: vec![1e-4, 1e-3, 1e-2, 1e-1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub teacher: TeacherSpec,
    #[serde(default)]
    pub student: StudentConfig,
    #[serde(default)]
    pub estimators: EstimatorSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/latest")
}

impl RunConfig {
    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, applies `key=value` overrides, and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.student.beta >= 0.0 && self.student.beta.is_finite()) {
            return bad(format!(
                "student.beta must be finite and >= 0, got {}",
                self.student.beta
            ));
        }
        if self.student.batch_size == 0 || self.teacher.config.batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.student.bottleneck_dim == 0 || self.teacher.config.latent_dim == 0 {
            return bad("bottleneck and latent dimensions must be positive".into());
        }
        for (name, lr) in [
            ("student", self.student.optimizer.lr),
            ("teacher", self.teacher.config.optimizer.lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name}.optimizer.lr must be positive, got {lr}"));
            }
        }
        match &self.dataset.source {
            DataSource::Synthetic {
                n_per_class,
                side,
                noise,
            } => {
                if *n_per_class == 0 || *side < 8 || !(0.0..=1.0).contains(noise) {
                    return bad(
                        "synthetic data needs n_per_class > 0, side >= 8, noise in [0, 1]".into(),
                    );
                }
            }
            DataSource::Idx {
                images,
                labels,
                pool,
            } => {
                for p in [images, labels] {
                    if !p.exists() {
                        return bad(format!("IDX file {} does not exist", p.display()));
                    }
                }
                if *pool == 0 {
                    return bad("dataset.source.pool must be >= 1".into());
                }
            }
        }
        if self.dataset.eval_size == 0 {
            return bad("dataset.eval_size must be positive".into());
        }
        if let Some(dir) = &self.teacher.checkpoint {
            if !dir.join("teacher.json").exists() {
                return bad(format!(
                    "teacher checkpoint {} has no teacher.json",
                    dir.display()
                ));
            }
        }
        let est = &self.estimators;
        if est.zy_lower && est.zy_samples == 0 {
            return bad("estimators.zy_samples must be positive".into());
        }
        if est.teacher && (est.teacher_bound.n_outer == 0 || est.teacher_bound.mc_samples == 0) {
            return bad("teacher bound needs n_outer > 0 and mc_samples > 0".into());
        }
        match self.experiment {
            ExperimentKind::BetaSweep => {
                if self.sweep.betas.len() < 2 {
                    return bad(format!(
                        "beta sweep needs at least 2 betas, got {}",
                        self.sweep.betas.len()
                    ));
                }
                if self
                    .sweep
                    .betas
                    .iter()
                    .any(|b| !(*b >= 0.0 && b.is_finite()))
                {
                    return bad("sweep betas must be finite and >= 0".into());
                }
            }
            ExperimentKind::EstimatorCompare if !(est.direct && est.teacher) => {
                return bad(
                    "estimator comparison needs both the direct and teacher estimators".into(),
                );
            }
            _ => {}
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses a `--set` value: JSON when it parses, a bare string otherwise.
fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies `a.b.c=value` to a JSON tree, creating intermediate objects.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override '{spec}' is not key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(HarnessError::Config(format!(
            "override key '{path}' is malformed"
        )));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| {
            HarnessError::Config(format!(
                "override '{path}': '{key}' is not inside an object"
            ))
        })?;
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| {
        HarnessError::Config(format!(
            "override '{path}' does not address an object field"
        ))
    })?;
    obj.insert(keys[keys.len() - 1].to_string(), parse_scalar(raw));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({"experiment": "ip-trajectory", "seed": 3})
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_value(minimal()).unwrap();
        assert_eq!(cfg.student.bottleneck_dim, 40);
        assert_eq!(cfg.teacher.config.latent_dim, 20);
        assert_eq!(cfg.estimators.teacher_bound.n_outer, 512);
        assert_eq!(cfg.dataset.eval_size, 1000);
    }

    #[test]
    fn seed_is_required() {
        let err = RunConfig::from_value(json!({"experiment": "zero-info"})).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn overrides_replace_and_create() {
        let mut v = minimal();
        apply_override(&mut v, "student.beta=0.01").unwrap();
        apply_override(&mut v, r#"student.optimizer={"kind":"sgd","lr":0.05}"#).unwrap();
        apply_override(&mut v, "estimators.teacher=false").unwrap();
        let cfg = RunConfig::from_value(v).unwrap();
        assert_eq!(cfg.student.beta, 0.01);
        assert_eq!(cfg.student.optimizer.kind.to_string(), "sgd");
        assert!(!cfg.estimators.teacher);
        let mut v = minimal();
        assert!(apply_override(&mut v, "seed.x=1").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut v = minimal();
        apply_override(&mut v, "student.beta=-1").unwrap();
        assert!(RunConfig::from_value(v).is_err());
        let mut v = json!({"experiment": "beta-sweep", "seed": 1});
        apply_override(&mut v, "sweep.betas=[0.1]").unwrap();
        assert!(RunConfig::from_value(v).is_err());
        let mut v = minimal();
        apply_override(&mut v, "student.unknown=1").unwrap();
        assert!(RunConfig::from_value(v).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::from_value(minimal()).unwrap();
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }
}
