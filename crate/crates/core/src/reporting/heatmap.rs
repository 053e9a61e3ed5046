//! Heatmap emission as CSV (source of truth) and SVG.

use std::fmt::Write as _;

use quick_xml::escape::escape;
use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::analytics::Matrix;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    pub title: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub value_range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapFormat {
    Csv,
    Svg,
}

impl HeatmapSpec {
    pub fn new(title: impl Into<String>, m: &Matrix, value_range: (f64, f64)) -> Result<Self, ReportError> {
        let spec = Self {
            title: title.into(),
            row_labels: m.row_labels.clone(),
            col_labels: m.col_labels.clone(),
            values: m.values.clone(),
            value_range,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Range `[0, 5]`, for similarity scores.
    pub fn similarity(title: impl Into<String>, m: &Matrix) -> Result<Self, ReportError> {
        Self::new(title, m, (0.0, 5.0))
    }

    /// Range `[0, observed max]`, for spreads and distances. An all-zero
    /// matrix gets `[0, 1]` so the range stays non-degenerate.
    pub fn spread(title: impl Into<String>, m: &Matrix) -> Result<Self, ReportError> {
        let hi = m.max().filter(|&v| v > 0.0).unwrap_or(1.0);
        Self::new(title, m, (0.0, hi))
    }

    /// Replaces numeric aspect-id row labels with `"<id> <name>"`.
    pub fn with_aspect_names(mut self, taxonomy: &Taxonomy) -> Self {
        for label in &mut self.row_labels {
            if let Some(cat) = label.parse().ok().and_then(|id| taxonomy.get(id)) {
                *label = format!("{} {}", cat.id, cat.name_en);
            }
        }
        self
    }

    pub fn check(&self) -> Result<(), ReportError> {
        if self.row_labels.is_empty() || self.col_labels.is_empty() {
            return Err(ReportError::EmptyMatrix);
        }
        let cols = self.col_labels.len();
        if self.values.len() != self.row_labels.len() || self.values.iter().any(|r| r.len() != cols) {
            return Err(ReportError::ShapeMismatch);
        }
        let (lo, hi) = self.value_range;
        if !(lo < hi) {
            return Err(ReportError::BadRange(lo, hi));
        }
        Ok(())
    }

    pub fn render(&self, format: HeatmapFormat) -> Result<String, ReportError> {
        self.check()?;
        Ok(match format {
            HeatmapFormat::Csv => self.to_csv(),
            HeatmapFormat::Svg => self.to_svg(),
        })
    }

    /// Header of column labels, then one row per aspect; missing cells are
    /// empty fields.
    fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = std::iter::once("aspect").chain(self.col_labels.iter().map(String::as_str));
        w.write_record(header).expect("in-memory write");
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            let cells = row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default());
            w.write_record(std::iter::once(label.clone()).chain(cells))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    fn to_svg(&self) -> String {
        const CELL_W: usize = 56;
        const CELL_H: usize = 26;
        const LABEL_W: usize = 340;
        const TOP: usize = 64;
        let (nr, nc) = (self.row_labels.len(), self.col_labels.len());
        let width = LABEL_W + nc * CELL_W + 16;
        let height = TOP + nr * CELL_H + 16;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
        );
        s.push_str(concat!(
            "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">",
            "<rect width=\"6\" height=\"6\" fill=\"#eeeeee\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#999999\" stroke-width=\"2\"/>",
            "</pattern></defs>\n"
        ));
        let _ = writeln!(
            s,
            r#"<text x="8" y="20" font-size="14" font-weight="bold">{}</text>"#,
            escape(self.title.as_str())
        );
        for (c, label) in self.col_labels.iter().enumerate() {
            let x = LABEL_W + c * CELL_W + CELL_W / 2;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
                TOP - 8,
                escape(label.as_str())
            );
        }
        for (r, (label, row)) in self.row_labels.iter().zip(&self.values).enumerate() {
            let y = TOP + r * CELL_H;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                LABEL_W - 6,
                y + CELL_H / 2 + 4,
                escape(label.as_str())
            );
            for (c, v) in row.iter().enumerate() {
                let x = LABEL_W + c * CELL_W;
                match v {
                    Some(v) => {
                        let t = self.position(*v);
                        let ink = if t > 0.55 { "#ffffff" } else { "#000000" };
                        let _ = writeln!(
                            s,
                            r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{}" stroke="#ffffff"/><text x="{}" y="{}" text-anchor="middle" fill="{ink}">{v:.2}</text>"##,
                            ramp(t),
                            x + CELL_W / 2,
                            y + CELL_H / 2 + 4,
                        );
                    }
                    None => {
                        let _ = writeln!(
                            s,
                            r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="url(#hatch)" stroke="#ffffff" data-missing="true"/>"##
                        );
                    }
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }

    fn position(&self, v: f64) -> f64 {
        let (lo, hi) = self.value_range;
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

/// Single-hue blue ramp from near-white to dark.
fn ramp(t: f64) -> String {
    const LO: [f64; 3] = [247.0, 251.0, 255.0];
    const HI: [f64; 3] = [8.0, 48.0, 107.0];
    let ch = |i: usize| (LO[i] + (HI[i] - LO[i]) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}
