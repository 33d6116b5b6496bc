//! Sweep summary table and estimator comparison report.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::trajectory::{fmt_f64, write_text, InfoPlanePoint};

/// Summary of one β in a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub final_i_xz_min: f64,
    pub max_i_xz_min: f64,
    pub final_accuracy: f64,
}

impl SweepRow {
    pub fn from_points(beta: f64, points: &[InfoPlanePoint]) -> Self {
        let last = points.last();
        SweepRow {
            beta,
            final_i_xz_min: last.map_or(f64::NAN, |p| p.i_xz_min),
            max_i_xz_min: points
                .iter()
                .map(|p| p.i_xz_min)
                .filter(|v| v.is_finite())
                .fold(f64::NAN, f64::max),
            final_accuracy: last.map_or(f64::NAN, |p| p.accuracy),
        }
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("beta,final_i_xz_min,max_i_xz_min,final_accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(r.beta),
            fmt_f64(r.final_i_xz_min),
            fmt_f64(r.max_i_xz_min),
            fmt_f64(r.final_accuracy)
        ));
    }
    out
}

pub fn write_sweep_summary(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_text(path, &sweep_csv(rows))
}

/// First epoch where the direct bound is below the teacher bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crossover {
    Epoch(usize),
    None,
}

impl fmt::Display for Crossover {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Crossover::Epoch(e) => write!(f, "{e}"),
            Crossover::None => f.write_str("none"),
        }
    }
}

impl Serialize for Crossover {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Crossover::Epoch(e) => s.serialize_u64(*e as u64),
            Crossover::None => s.serialize_str("none"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub crossover_epoch: Crossover,
    pub epochs: usize,
    /// Epochs where the direct bound is the tighter one.
    pub direct_tighter_epochs: usize,
    pub teacher_tighter_epochs: usize,
    pub min_direct: f64,
    pub min_teacher: f64,
    pub final_direct: f64,
    pub final_teacher: f64,
}

impl ComparisonReport {
    pub fn from_points(points: &[InfoPlanePoint]) -> Self {
        let both: Vec<&InfoPlanePoint> = points
            .iter()
            .filter(|p| p.i_xz_direct.is_finite() && p.i_xz_teacher.is_finite())
            .collect();
        let crossover = both
            .iter()
            .find(|p| p.i_xz_direct < p.i_xz_teacher)
            .map_or(Crossover::None, |p| Crossover::Epoch(p.epoch));
        let direct_tighter = both
            .iter()
            .filter(|p| p.i_xz_direct < p.i_xz_teacher)
            .count();
        let min = |f: fn(&InfoPlanePoint) -> f64| {
            points
                .iter()
                .map(f)
                .filter(|v| v.is_finite())
                .fold(f64::NAN, f64::min)
        };
        let last = points.last();
        ComparisonReport {
            crossover_epoch: crossover,
            epochs: points.len(),
            direct_tighter_epochs: direct_tighter,
            teacher_tighter_epochs: both.len() - direct_tighter,
            min_direct: min(|p| p.i_xz_direct),
            min_teacher: min(|p| p.i_xz_teacher),
            final_direct: last.map_or(f64::NAN, |p| p.i_xz_direct),
            final_teacher: last.map_or(f64::NAN, |p| p.i_xz_teacher),
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "crossover_epoch: {}\nepochs: {}\ndirect_tighter_epochs: {}\nteacher_tighter_epochs: {}\n\
             min_direct: {}\nmin_teacher: {}\nfinal_direct: {}\nfinal_teacher: {}\n",
            self.crossover_epoch,
            self.epochs,
            self.direct_tighter_epochs,
            self.teacher_tighter_epochs,
            fmt_f64(self.min_direct),
            fmt_f64(self.min_teacher),
            fmt_f64(self.final_direct),
            fmt_f64(self.final_teacher),
        )
    }
}

/// Writes `comparison.json` and `comparison.txt` into `dir`.
pub fn write_comparison(dir: &Path, report: &ComparisonReport) -> Result<()> {
    let mut json = serde_json::to_value(report).expect("report serializes");
    // serde_json writes NaN as null; keep the CSV spelling instead.
    if let Some(obj) = json.as_object_mut() {
        for v in obj.values_mut() {
            if v.is_null() {
                *v = serde_json::Value::String("nan".into());
            }
        }
    }
    write_text(&dir.join("comparison.json"), &format!("{json:#}\n"))?;
    write_text(&dir.join("comparison.txt"), &report.to_text())
}
