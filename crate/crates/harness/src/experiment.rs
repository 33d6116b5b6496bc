//! Experiment orchestration: data, teacher, student, per-epoch estimation.

use std::cell::RefCell;
use std::path::{Path, PathBuf};

use serde_json::json;

use infoplane_core::data::{
    export_dataset, load_idx, make_synthetic_digits, make_zero_info, teacher_relabel,
    LabeledDataset,
};
use infoplane_core::error::ResultExt;
use infoplane_core::mi::{
    label_entropy, mi_xz_direct_upper, mi_xz_teacher_upper, mi_zy_lower, InferenceNet,
    TeacherBoundOutcome,
};
pub use infoplane_core::rng::derive_seed;
use infoplane_core::student::{train_student, EpochSnapshot};
use infoplane_core::teacher::{train_teacher, TeacherModel};

use crate::config::{DataSource, EstimationSplit, ExperimentKind, RunConfig};
use crate::error::{HarnessError, Result};
use crate::plot::emit_plots;
use crate::report::{write_comparison, write_sweep_summary, ComparisonReport, SweepRow};
use crate::trajectory::{min_of_bounds, write_text, InfoPlanePoint, TrajectoryWriter};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Training and evaluation images before any teacher is involved.
pub fn load_base(cfg: &RunConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let ds_seed = cfg.dataset.seed.unwrap_or(cfg.seed);
    let eval_size = cfg.dataset.eval_size;
    let (train, held_out) = match &cfg.dataset.source {
        DataSource::Synthetic {
            n_per_class,
            side,
            noise,
        } => {
            let train = make_synthetic_digits(*n_per_class, *side, *noise, ds_seed)?;
            let per_class = eval_size.div_ceil(10);
            let eval =
                make_synthetic_digits(per_class, *side, *noise, derive_seed(ds_seed, "eval-data"))?;
            (train, eval.head(eval_size))
        }
        DataSource::Idx {
            images,
            labels,
            pool,
        } => {
            let mut all = load_idx(images, labels)?;
            if *pool > 1 {
                all = all.average_pool(*pool)?;
            }
            if cfg.dataset.split == EstimationSplit::HeldOut {
                if all.len() <= eval_size {
                    return Err(HarnessError::Config(format!(
                        "IDX data has {} examples, too few to hold out {eval_size}",
                        all.len()
                    )));
                }
                let cut = all.len() - eval_size;
                let idx: Vec<usize> = (0..all.len()).collect();
                (all.subset(&idx[..cut]), all.subset(&idx[cut..]))
            } else {
                (all.clone(), all)
            }
        }
    };
    let eval = match cfg.dataset.split {
        EstimationSplit::HeldOut => held_out,
        EstimationSplit::Train => train.head(eval_size.min(train.len())),
    };
    Ok((train, eval))
}

/// Loads the configured checkpoint or trains a teacher, saving it under `dir`.
pub fn obtain_teacher(cfg: &RunConfig, base: &LabeledDataset, dir: &Path) -> Result<TeacherModel> {
    if let Some(ckpt) = &cfg.teacher.checkpoint {
        let (model, _) =
            TeacherModel::load(ckpt, "teacher").context(|| "loading teacher checkpoint")?;
        if model.data_dim() != base.dim() {
            return Err(HarnessError::Config(format!(
                "teacher checkpoint expects {} pixels, data has {}",
                model.data_dim(),
                base.dim()
            )));
        }
        return Ok(model);
    }
    let trained = train_teacher(&cfg.teacher.config, &base.images, cfg.seed)
        .context(|| "teacher training")?;
    create_dir(dir)?;
    let training = serde_json::to_value(&cfg.teacher.config).expect("config serializes");
    trained.model.save(dir, "teacher", cfg.seed, training)?;
    let mut curve = String::from("epoch,elbo\n");
    curve.push_str(&format!("0,{:?}\n", trained.initial_elbo));
    for (i, v) in trained.curve.iter().enumerate() {
        curve.push_str(&format!("{},{v:?}\n", i + 1));
    }
    write_text(&dir.join("teacher_curve.csv"), &curve)?;
    Ok(trained.model)
}

/// Student training and evaluation sets for the configured experiment.
pub fn prepare_datasets(
    cfg: &RunConfig,
    teacher: &TeacherModel,
    base_train: &LabeledDataset,
    base_eval: &LabeledDataset,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let train = teacher_relabel(teacher, base_train, cfg.seed)?;
    let eval = teacher_relabel(teacher, base_eval, cfg.seed)?;
    if cfg.experiment == ExperimentKind::ZeroInfo {
        return Ok((
            make_zero_info(&train, derive_seed(cfg.seed, "zero-info-train"))?,
            make_zero_info(&eval, derive_seed(cfg.seed, "zero-info-eval"))?,
        ));
    }
    Ok((train, eval))
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub points: Vec<InfoPlanePoint>,
}

fn write_status(dir: &Path, complete: bool, epochs: usize, error: Option<&str>) -> Result<()> {
    let status = json!({"complete": complete, "epochs_completed": epochs, "error": error});
    write_text(&dir.join("status.json"), &format!("{status:#}\n"))
}

/// Per-epoch estimators with the inference network carried between epochs.
struct Estimation<'a> {
    cfg: &'a RunConfig,
    teacher: &'a TeacherModel,
    eval: &'a LabeledDataset,
    h_y: f64,
    net: Option<InferenceNet>,
}

impl Estimation<'_> {
    fn fresh_net(&self) -> Result<InferenceNet> {
        Ok(InferenceNet::new(
            self.cfg.student.bottleneck_dim,
            self.teacher.latent_dim(),
            &self.cfg.estimators.teacher_bound.hidden,
            derive_seed(self.cfg.seed, "inference-net"),
        )?)
    }

    fn point(&mut self, snap: &EpochSnapshot) -> Result<InfoPlanePoint> {
        let est = &self.cfg.estimators;
        let student = snap.model.as_ref();
        let direct = if est.direct {
            mi_xz_direct_upper(student, &self.eval.images)?.value
        } else {
            f64::NAN
        };
        let teacher = if est.teacher {
            let net = match self.net.take() {
                Some(n) if est.warm_start => n,
                _ => self.fresh_net()?,
            };
            let out: TeacherBoundOutcome = mi_xz_teacher_upper(
                student,
                self.teacher,
                net,
                &est.teacher_bound,
                derive_seed(self.cfg.seed, "teacher-bound"),
            )?;
            self.net = Some(out.net);
            out.estimate.value
        } else {
            f64::NAN
        };
        let zy = if est.zy_lower {
            mi_zy_lower(
                student,
                self.eval,
                est.zy_samples,
                derive_seed(self.cfg.seed, "zy-lower"),
            )?
            .value
        } else {
            f64::NAN
        };
        let d = snap.diagnostics;
        Ok(InfoPlanePoint {
            epoch: snap.epoch,
            i_xz_direct: direct,
            i_xz_teacher: teacher,
            i_xz_min: min_of_bounds(&[direct, teacher]),
            i_zy_lower: zy,
            h_y: self.h_y,
            accuracy: d.eval_accuracy,
            mean_logdet_cov: d.mean_logdet_cov,
            grad_norm: d.encoder_grad_norm,
            beta: self.cfg.student.beta,
            optimizer: self.cfg.student.optimizer.kind.to_string(),
            seed: self.cfg.seed,
        })
    }
}

/// Trains the student on prepared data and logs one row per epoch into `dir`.
pub fn run_student_phase(
    cfg: &RunConfig,
    teacher: &TeacherModel,
    train: &LabeledDataset,
    eval: &LabeledDataset,
    dir: &Path,
) -> Result<RunOutcome> {
    create_dir(dir)?;
    write_text(&dir.join("config.json"), &format!("{}\n", cfg.to_json()))?;
    let mut writer = TrajectoryWriter::create(&dir.join("trajectory.csv"))?;
    let estimation = RefCell::new(Estimation {
        cfg,
        teacher,
        eval,
        h_y: label_entropy(eval)?,
        net: None,
    });
    let mut points = Vec::with_capacity(cfg.student.epochs);
    let mut failure: Option<HarnessError> = None;
    let result = train_student(&cfg.student, train, Some(eval), cfg.seed, |snap| {
        let step = estimation
            .borrow_mut()
            .point(snap)
            .and_then(|p| writer.push(&p).map(|_| p));
        match step {
            Ok(p) => {
                points.push(p);
                Ok(())
            }
            Err(HarnessError::Core(e)) => {
                Err(e.context(format!("estimation at epoch {}", snap.epoch)))
            }
            Err(other) => {
                let msg = other.to_string();
                failure = Some(other);
                Err(infoplane_core::Error::Contract(msg))
            }
        }
    });
    let trained = match result {
        Ok(t) => t,
        Err(e) => {
            let err = failure.unwrap_or(HarnessError::Core(e));
            write_status(dir, false, points.len(), Some(&err.to_string()))?;
            return Err(err);
        }
    };
    let ckpt = dir.join("checkpoints");
    create_dir(&ckpt)?;
    let training = serde_json::to_value(&cfg.student).expect("config serializes");
    trained.model.save(&ckpt, "student", cfg.seed, training)?;
    emit_plots(dir)?;
    write_status(dir, true, points.len(), None)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        points,
    })
}

/// Runs one configured experiment end to end.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutcome> {
    match cfg.experiment {
        ExperimentKind::BetaSweep => {
            return run_beta_sweep(cfg).map(|s| s.runs.into_iter().last().unwrap())
        }
        ExperimentKind::EstimatorCompare => return run_estimator_compare(cfg).map(|(run, _)| run),
        _ => {}
    }
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;
    let (base_train, base_eval) = load_base(cfg)?;
    let teacher = obtain_teacher(cfg, &base_train, &dir.join("checkpoints"))?;
    if cfg.experiment == ExperimentKind::TrainTeacherOnly {
        write_text(&dir.join("config.json"), &format!("{}\n", cfg.to_json()))?;
        write_status(&dir, true, 0, None)?;
        return Ok(RunOutcome {
            dir,
            points: vec![],
        });
    }
    let (train, eval) = prepare_datasets(cfg, &teacher, &base_train, &base_eval)?;
    run_student_phase(cfg, &teacher, &train, &eval, &dir)
}

pub struct SweepOutcome {
    pub dir: PathBuf,
    pub runs: Vec<RunOutcome>,
    pub summary: Vec<SweepRow>,
}

fn beta_label(beta: f64) -> String {
    format!("beta-{beta:e}")
}

/// One trajectory per β with a shared teacher, data and seed.
pub fn run_beta_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    if cfg.sweep.betas.len() < 2 {
        return Err(HarnessError::Config(
            "beta sweep needs at least 2 betas".into(),
        ));
    }
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;
    write_text(&dir.join("config.json"), &format!("{}\n", cfg.to_json()))?;
    let (base_train, base_eval) = load_base(cfg)?;
    let teacher_dir = dir.join("teacher");
    let teacher = obtain_teacher(cfg, &base_train, &teacher_dir)?;
    let (train, eval) = prepare_datasets(cfg, &teacher, &base_train, &base_eval)?;
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for (i, &beta) in cfg.sweep.betas.iter().enumerate() {
        let mut member = cfg.clone();
        member.experiment = ExperimentKind::IpTrajectory;
        member.student.beta = beta;
        member.output_dir = dir.join(format!("{i:02}-{}", beta_label(beta)));
        if member.teacher.checkpoint.is_none() {
            member.teacher.checkpoint = Some(teacher_dir.clone());
        }
        let run = run_student_phase(&member, &teacher, &train, &eval, &member.output_dir)
            .map_err(|e| annotate(e, &format!("sweep member beta={beta}")))?;
        summary.push(SweepRow::from_points(beta, &run.points));
        runs.push(run);
    }
    write_sweep_summary(&dir.join("summary.csv"), &summary)?;
    Ok(SweepOutcome { dir, runs, summary })
}

fn annotate(e: HarnessError, what: &str) -> HarnessError {
    match e {
        HarnessError::Core(c) => HarnessError::Core(c.context(what.to_string())),
        other => other,
    }
}

/// A trajectory with both bounds plus the crossover report.
pub fn run_estimator_compare(cfg: &RunConfig) -> Result<(RunOutcome, ComparisonReport)> {
    if !(cfg.estimators.direct && cfg.estimators.teacher) {
        return Err(HarnessError::Config(
            "estimator comparison needs both the direct and teacher estimators".into(),
        ));
    }
    let mut member = cfg.clone();
    member.experiment = ExperimentKind::IpTrajectory;
    let run = run_experiment(&member)?;
    let report = ComparisonReport::from_points(&run.points);
    write_comparison(&run.dir, &report)?;
    Ok((run, report))
}

/// Writes the datasets a run would train and evaluate on, as IDX plus sidecar.
pub fn generate_data(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;
    let (base_train, base_eval) = load_base(cfg)?;
    export_dataset(&dir, "base-train", &base_train)?;
    export_dataset(&dir, "base-eval", &base_eval)?;
    if cfg.experiment != ExperimentKind::TrainTeacherOnly {
        let teacher = obtain_teacher(cfg, &base_train, &dir.join("checkpoints"))?;
        let (train, eval) = prepare_datasets(cfg, &teacher, &base_train, &base_eval)?;
        export_dataset(&dir, "train", &train)?;
        export_dataset(&dir, "eval", &eval)?;
    }
    write_text(&dir.join("config.json"), &format!("{}\n", cfg.to_json()))?;
    Ok(dir)
}
