//! Self-contained SVG figures on a fixed canvas. Coordinates are printed
//! with two decimals so identical inputs give byte-identical files.

use std::fmt::Write as _;

use crate::data::LabeledBatch;
use crate::mlp::Batch;
use crate::recon::IsoMesh;

pub const POSITIVE_COLOR: &str = "#1f4fd1";
pub const NEGATIVE_COLOR: &str = "#d1281f";
const SERIES_COLORS: [&str; 4] = ["#222222", "#1f4fd1", "#d1281f", "#2a9d3c"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const PAD: f64 = 56.0;

struct Canvas {
    out: String,
    x: (f64, f64),
    y: (f64, f64),
}

impl Canvas {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let mut out = String::new();
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
        Canvas { out, x, y }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - PAD - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * PAD)
    }

    fn frame(&mut self, title: &str, xlabel: &str, ylabel: &str) {
        let (w, h) = (WIDTH - 2.0 * PAD, HEIGHT - 2.0 * PAD);
        writeln!(
            self.out,
            r##"<rect x="{PAD}" y="{PAD}" width="{w}" height="{h}" fill="none" stroke="#888"/>"##
        )
        .unwrap();
        writeln!(
            self.out,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        )
        .unwrap();
        writeln!(
            self.out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 14.0,
            escape(xlabel)
        )
        .unwrap();
        writeln!(
            self.out,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(ylabel)
        )
        .unwrap();
        for (v, anchor, x, y) in [
            (self.x.0, "start", PAD, HEIGHT - PAD + 16.0),
            (self.x.1, "end", WIDTH - PAD, HEIGHT - PAD + 16.0),
        ] {
            writeln!(self.out, r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{}</text>"#, tick(v)).unwrap();
        }
        for (v, y) in [(self.y.0, HEIGHT - PAD), (self.y.1, PAD + 10.0)] {
            writeln!(
                self.out,
                r#"<text x="{:.2}" y="{y:.2}" text-anchor="end">{}</text>"#,
                PAD - 4.0,
                tick(v)
            )
            .unwrap();
        }
    }

    fn path(&mut self, pts: &[(f64, f64)], closed: bool, color: &str, dash: Option<&str>) {
        if pts.len() < 2 {
            return;
        }
        let mut d = String::new();
        for (k, &(x, y)) in pts.iter().enumerate() {
            write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, self.px(x), self.py(y)).unwrap();
        }
        if closed {
            d.push('Z');
        }
        let dash = dash.map_or(String::new(), |s| format!(r#" stroke-dasharray="{s}""#));
        writeln!(
            self.out,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            d.trim_end()
        )
        .unwrap();
    }

    fn dot(&mut self, x: f64, y: f64, color: &str) {
        writeln!(
            self.out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}" stroke="black" stroke-width="0.5"/>"#,
            self.px(x),
            self.py(y)
        )
        .unwrap();
    }

    fn legend(&mut self, entries: &[(String, &str, Option<&str>, bool)]) {
        let x0 = WIDTH - PAD - 150.0;
        let h = 18.0 * entries.len() as f64 + 8.0;
        writeln!(
            self.out,
            r##"<rect x="{x0:.2}" y="{:.2}" width="146" height="{h:.2}" fill="white" fill-opacity="0.85" stroke="#888"/>"##,
            PAD + 4.0
        )
        .unwrap();
        for (k, (label, color, dash, marker)) in entries.iter().enumerate() {
            let y = PAD + 20.0 + 18.0 * k as f64;
            if *marker {
                writeln!(
                    self.out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}" stroke="black" stroke-width="0.5"/>"#,
                    x0 + 18.0,
                    y - 4.0
                )
                .unwrap();
            } else {
                let dash = dash.map_or(String::new(), |s| format!(r#" stroke-dasharray="{s}""#));
                writeln!(
                    self.out,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                    x0 + 8.0,
                    y - 4.0,
                    x0 + 28.0,
                    y - 4.0
                )
                .unwrap();
            }
            writeln!(self.out, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x0 + 36.0, escape(label)).unwrap();
        }
    }

    fn note(&mut self, text: &str) {
        writeln!(
            self.out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="#b35900" font-size="16">{}</text>"##,
            WIDTH / 2.0,
            HEIGHT / 2.0,
            escape(text)
        )
        .unwrap();
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    Some(if hi - lo > 0.0 {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    })
}

/// Line plot of named `(x, y)` series. Without any finite points the frame
/// is drawn with a warning annotation instead.
pub fn curves_svg(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts = || series.iter().flat_map(|(_, s)| s.iter());
    let xr = range(pts().map(|p| p.0));
    let yr = range(pts().filter(|p| p.0.is_finite()).map(|p| p.1));
    let (Some(xr), Some(yr)) = (xr, yr) else {
        let mut c = Canvas::new((0.0, 1.0), (0.0, 1.0));
        c.frame(title, xlabel, ylabel);
        c.note("warning: no data recorded for this run");
        return c.finish();
    };
    let mut c = Canvas::new(xr, yr);
    c.frame(title, xlabel, ylabel);
    let mut legend = Vec::new();
    for (k, (name, s)) in series.iter().enumerate() {
        let color = SERIES_COLORS[k % SERIES_COLORS.len()];
        let finite: Vec<(f64, f64)> = s.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        c.path(&finite, false, color, None);
        legend.push((name.clone(), color, None, false));
    }
    c.legend(&legend);
    c.finish()
}

/// Level-set contours over a 2D box, with optional labeled scatter (class 1
/// blue, class 0 red) and an optional unlabeled cloud.
pub struct ContourPlot<'a> {
    pub title: &'a str,
    pub bounds: [(f64, f64); 2],
    pub contours: &'a [IsoMesh],
    pub labeled: Option<&'a LabeledBatch>,
    pub cloud: Option<&'a Batch>,
}

fn level_style(level: f64) -> (&'static str, Option<&'static str>) {
    if level == 0.0 {
        ("#000000", None)
    } else if level > 0.0 {
        (POSITIVE_COLOR, Some("6 4"))
    } else {
        (NEGATIVE_COLOR, Some("6 4"))
    }
}

impl ContourPlot<'_> {
    pub fn svg(&self) -> String {
        let mut c = Canvas::new(self.bounds[0], self.bounds[1]);
        c.frame(self.title, "x0", "x1");
        let mut legend: Vec<(String, &str, Option<&str>, bool)> = Vec::new();
        for mesh in self.contours {
            let (color, dash) = level_style(mesh.level);
            for pl in &mesh.polylines {
                let pts: Vec<(f64, f64)> = pl
                    .indices
                    .iter()
                    .map(|&i| (mesh.vertices[i][0], mesh.vertices[i][1]))
                    .collect();
                c.path(&pts, pl.closed, color, dash);
            }
            legend.push((format!("level {}", mesh.level), color, dash, false));
        }
        if let Some(cloud) = self.cloud {
            for r in cloud.rows() {
                c.dot(r[0], r[1], "#555555");
            }
            legend.push(("cloud".into(), "#555555", None, true));
        }
        if let Some(data) = self.labeled {
            for i in 0..data.len() {
                let r = data.x.row(i);
                let color = if data.labels[i] == 1 { POSITIVE_COLOR } else { NEGATIVE_COLOR };
                c.dot(r[0], r[1], color);
            }
            legend.push(("class 1".into(), POSITIVE_COLOR, None, true));
            legend.push(("class 0".into(), NEGATIVE_COLOR, None, true));
        }
        c.legend(&legend);
        c.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_series_get_a_warning() {
        let s = curves_svg("loss", "epoch", "loss", &[]);
        assert!(s.contains("warning: no data"));
        assert!(s.ends_with("</svg>\n"));
        let one = curves_svg("loss", "epoch", "loss", &[("loss".into(), vec![(0.0, 1.0), (1.0, 0.5)])]);
        assert!(!one.contains("warning"));
        assert!(one.contains("<path d=\"M"));
    }

    #[test]
    fn scatter_uses_class_colors() {
        let data = crate::data::fig1_fixture();
        let plot = ContourPlot {
            title: "t",
            bounds: [(0.0, 0.5), (0.0, 0.5)],
            contours: &[],
            labeled: Some(&data),
            cloud: None,
        };
        let s = plot.svg();
        assert_eq!(s.matches(POSITIVE_COLOR).count(), 6 + 1);
        assert_eq!(s.matches(NEGATIVE_COLOR).count(), 10 + 1);
        assert_eq!(s, plot.svg());
    }
}
