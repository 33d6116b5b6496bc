//! Per-epoch information-plane records and their CSV form.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};

pub const COLUMNS: [&str; 12] = [
    "epoch",
    "i_xz_direct",
    "i_xz_teacher",
    "i_xz_min",
    "i_zy_lower",
    "h_y",
    "accuracy",
    "mean_logdet_cov",
    "grad_norm",
    "beta",
    "optimizer",
    "seed",
];

/// One row of `trajectory.csv`. Disabled estimators are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct InfoPlanePoint {
    pub epoch: usize,
    pub i_xz_direct: f64,
    pub i_xz_teacher: f64,
    pub i_xz_min: f64,
    pub i_zy_lower: f64,
    pub h_y: f64,
    pub accuracy: f64,
    pub mean_logdet_cov: f64,
    pub grad_norm: f64,
    pub beta: f64,
    pub optimizer: String,
    pub seed: u64,
}

/// Shortest representation that parses back to the same bits; `nan` for NaN.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:?}")
    }
}

/// Elementwise minimum of the finite upper bounds, NaN when none is finite.
pub fn min_of_bounds(bounds: &[f64]) -> f64 {
    bounds
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(
            f64::NAN,
            |acc, v| if acc.is_nan() || v < acc { v } else { acc },
        )
}

impl InfoPlanePoint {
    fn record(&self) -> Vec<String> {
        vec![
            self.epoch.to_string(),
            fmt_f64(self.i_xz_direct),
            fmt_f64(self.i_xz_teacher),
            fmt_f64(self.i_xz_min),
            fmt_f64(self.i_zy_lower),
            fmt_f64(self.h_y),
            fmt_f64(self.accuracy),
            fmt_f64(self.mean_logdet_cov),
            fmt_f64(self.grad_norm),
            fmt_f64(self.beta),
            self.optimizer.clone(),
            self.seed.to_string(),
        ]
    }
}

fn writer_builder() -> csv::WriterBuilder {
    let mut b = csv::WriterBuilder::new();
    b.terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Never);
    b
}

/// Appends rows to `trajectory.csv`, flushing after each so a crash keeps
/// every finished epoch.
pub struct TrajectoryWriter {
    inner: csv::Writer<File>,
    path: PathBuf,
}

impl TrajectoryWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut inner = writer_builder().from_writer(file);
        inner.write_record(COLUMNS).map_err(|e| csv_io(path, e))?;
        inner.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(TrajectoryWriter {
            inner,
            path: path.to_path_buf(),
        })
    }

    pub fn push(&mut self, p: &InfoPlanePoint) -> Result<()> {
        self.inner
            .write_record(p.record())
            .map_err(|e| csv_io(&self.path, e))?;
        self.inner
            .flush()
            .map_err(|e| HarnessError::io(&self.path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::io(path, std::io::Error::other(e.to_string()))
}

/// Serializes points to the exact bytes [`TrajectoryWriter`] would produce.
pub fn to_csv_string(points: &[InfoPlanePoint]) -> String {
    let mut w = writer_builder().from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for p in points {
        w.write_record(p.record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

pub fn read_trajectory(path: &Path) -> Result<Vec<InfoPlanePoint>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_trajectory(file, &path.display().to_string())
}

pub fn parse_trajectory<R: std::io::Read>(reader: R, name: &str) -> Result<Vec<InfoPlanePoint>> {
    let parse_err = |line: u64, message: String| HarnessError::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != COLUMNS {
        return Err(parse_err(
            1,
            format!("expected header {}", COLUMNS.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| {
                parse_err(
                    line,
                    format!("column {} is not a number: '{}'", COLUMNS[i], &rec[i]),
                )
            })
        };
        let int = |i: usize| -> Result<u64> {
            rec[i].parse::<u64>().map_err(|_| {
                parse_err(
                    line,
                    format!("column {} is not an integer: '{}'", COLUMNS[i], &rec[i]),
                )
            })
        };
        out.push(InfoPlanePoint {
            epoch: int(0)? as usize,
            i_xz_direct: f(1)?,
            i_xz_teacher: f(2)?,
            i_xz_min: f(3)?,
            i_zy_lower: f(4)?,
            h_y: f(5)?,
            accuracy: f(6)?,
            mean_logdet_cov: f(7)?,
            grad_norm: f(8)?,
            beta: f(9)?,
            optimizer: rec[10].to_string(),
            seed: int(11)?,
        });
    }
    Ok(out)
}

/// Writes a small text artifact.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| HarnessError::io(path, e))
}
