//! Deterministic SVG plots rendered from `trajectory.csv`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::trajectory::{read_trajectory, write_text, InfoPlanePoint};

const W: f64 = 640.0;
const H: f64 = 480.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Panel {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Panel {
    fn px(&self, v: f64) -> f64 {
        self.left + (v - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    fn py(&self, v: f64) -> f64 {
        self.top + self.height - (v - self.y.0) / (self.y.1 - self.y.0) * self.height
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let (l, t, w, h) = (self.left, self.top, self.width, self.height);
        let _ = writeln!(
            out,
            r##"<rect x="{l:.2}" y="{t:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#444"/>"##
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (xp, yp) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                out,
                r##"<text x="{xp:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"##,
                t + h + 15.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r##"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"##,
                l - 5.0,
                yp + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r##"<text class="xlabel" x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{xlabel}</text>"##,
            l + w / 2.0,
            t + h + 34.0
        );
        let (cx, cy) = (l - 48.0, t + h / 2.0);
        let _ = writeln!(
            out,
            r##"<text class="ylabel" x="{cx:.2}" y="{cy:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 {cx:.2} {cy:.2})">{ylabel}</text>"##
        );
    }

    fn polyline(&self, out: &mut String, pts: &[(f64, f64)], color: &str, class: &str) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r##"<polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"##,
            coords.join(" ")
        );
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">{title}</text>\n",
        W / 2.0
    )
}

fn finite_pairs(
    points: &[InfoPlanePoint],
    f: impl Fn(&InfoPlanePoint) -> (f64, f64),
) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(f)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect()
}

/// Blue at the first epoch to red at the last.
fn epoch_color(i: usize, n: usize) -> String {
    let f = if n > 1 {
        i as f64 / (n - 1) as f64
    } else {
        0.0
    };
    let r = (30.0 + 200.0 * f).round() as u8;
    let b = (220.0 - 190.0 * f).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

pub fn info_plane_svg(points: &[InfoPlanePoint]) -> String {
    let pairs = finite_pairs(points, |p| (p.i_xz_min, p.i_zy_lower));
    let panel = Panel {
        left: 80.0,
        top: 40.0,
        width: 520.0,
        height: 380.0,
        x: range(pairs.iter().map(|p| p.0)),
        y: range(pairs.iter().map(|p| p.1)),
    };
    let mut out = header("Information plane");
    panel.axes(
        &mut out,
        "I(X;Z) upper bound [nats]",
        "I(Z;Y) lower bound [nats]",
    );
    panel.polyline(&mut out, &pairs, "#888", "trajectory");
    let epochs: Vec<usize> = points
        .iter()
        .filter(|p| p.i_xz_min.is_finite() && p.i_zy_lower.is_finite())
        .map(|p| p.epoch)
        .collect();
    for (i, (&(x, y), e)) in pairs.iter().zip(&epochs).enumerate() {
        let _ = writeln!(
            out,
            r##"<circle class="marker" cx="{:.2}" cy="{:.2}" r="4" fill="{}"><title>epoch {e}</title></circle>"##,
            panel.px(x),
            panel.py(y),
            epoch_color(i, pairs.len())
        );
    }
    out.push_str("</svg>\n");
    out
}

type Series = (&'static str, fn(&InfoPlanePoint) -> f64);

fn series_panel(
    out: &mut String,
    panel_top: f64,
    panel_height: f64,
    points: &[InfoPlanePoint],
    series: &[Series],
    ylabel: &str,
) {
    let all = series
        .iter()
        .flat_map(|(_, f)| points.iter().map(f))
        .collect::<Vec<_>>();
    let panel = Panel {
        left: 80.0,
        top: panel_top,
        width: 400.0,
        height: panel_height,
        x: range(points.iter().map(|p| p.epoch as f64)),
        y: range(all.into_iter()),
    };
    panel.axes(out, "epoch", ylabel);
    for (k, (name, f)) in series.iter().enumerate() {
        let pairs = finite_pairs(points, |p| (p.epoch as f64, f(p)));
        let color = PALETTE[k % PALETTE.len()];
        panel.polyline(out, &pairs, color, name);
        let ly = panel_top + 12.0 + 18.0 * k as f64;
        let _ = writeln!(
            out,
            r##"<line x1="500" y1="{ly:.2}" x2="520" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="526" y="{:.2}" font-size="12">{name}</text>"##,
            ly + 4.0
        );
    }
}

pub fn mi_vs_epoch_svg(points: &[InfoPlanePoint]) -> String {
    let mut out = header("Mutual information per epoch");
    series_panel(
        &mut out,
        40.0,
        380.0,
        points,
        &[
            ("i_xz_direct", |p| p.i_xz_direct),
            ("i_xz_teacher", |p| p.i_xz_teacher),
            ("i_xz_min", |p| p.i_xz_min),
            ("i_zy_lower", |p| p.i_zy_lower),
        ],
        "nats",
    );
    out.push_str("</svg>\n");
    out
}

pub fn diagnostics_svg(points: &[InfoPlanePoint]) -> String {
    let mut out = header("Encoder diagnostics");
    series_panel(
        &mut out,
        40.0,
        160.0,
        points,
        &[("mean_logdet_cov", |p| p.mean_logdet_cov)],
        "log det cov",
    );
    series_panel(
        &mut out,
        270.0,
        160.0,
        points,
        &[("grad_norm", |p| p.grad_norm)],
        "grad norm",
    );
    out.push_str("</svg>\n");
    out
}

/// Reads `<dir>/trajectory.csv` and writes the three plots next to it.
pub fn emit_plots(dir: &Path) -> Result<()> {
    let points = read_trajectory(&dir.join("trajectory.csv"))?;
    write_text(&dir.join("info_plane.svg"), &info_plane_svg(&points))?;
    write_text(&dir.join("mi_vs_epoch.svg"), &mi_vs_epoch_svg(&points))?;
    write_text(&dir.join("diagnostics.svg"), &diagnostics_svg(&points))
}
