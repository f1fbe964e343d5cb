//! Minimal, deterministic SVG charts from CSV columns.
//!
//! A chart spec (TOML) lays out panels on a grid; each panel plots one or
//! more `y` columns against an `x` column as lines or scatter points,
//! optionally split into one series per value of a `group_by` column.
//! Non-finite values are skipped. Output depends only on the inputs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const TITLE_HEIGHT: f64 = 32.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 42.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub title: String,
    /// File name of the SVG, relative to the output directory.
    pub output: String,
    #[serde(default = "default_columns")]
    pub columns: usize,
    #[serde(default = "default_panel_width")]
    pub panel_width: f64,
    #[serde(default = "default_panel_height")]
    pub panel_height: f64,
    #[serde(rename = "panel")]
    pub panels: Vec<PanelSpec>,
}

fn default_columns() -> usize {
    2
}
fn default_panel_width() -> f64 {
    440.0
}
fn default_panel_height() -> f64 {
    300.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesStyle {
    #[default]
    Line,
    Scatter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSpec {
    pub title: String,
    pub x: String,
    pub y: Vec<String>,
    #[serde(default)]
    pub style: SeriesStyle,
    /// Legend labels for the `y` columns (defaults to the column names).
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub group_by: Option<String>,
    #[serde(default)]
    pub x_label: Option<String>,
    #[serde(default)]
    pub y_label: Option<String>,
}

pub fn parse_spec(text: &str) -> Result<ChartSpec, CliError> {
    let spec: ChartSpec = toml::from_str(text).map_err(|e| CliError::Input(format!("chart spec: {e}")))?;
    if spec.panels.is_empty() {
        return Err(CliError::Input("chart spec: no [[panel]] blocks".into()));
    }
    if spec.columns == 0 || !(spec.panel_width > 100.0) || !(spec.panel_height > 100.0) {
        return Err(CliError::Input("chart spec: columns must be >= 1 and panel sizes > 100".into()));
    }
    for (i, p) in spec.panels.iter().enumerate() {
        if p.y.is_empty() {
            return Err(CliError::Input(format!("chart spec: panel {i} has no y columns")));
        }
        if !p.labels.is_empty() && p.labels.len() != p.y.len() {
            return Err(CliError::Input(format!("chart spec: panel {i} needs one label per y column")));
        }
    }
    Ok(spec)
}

pub fn load_spec(path: &Path) -> Result<ChartSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_spec(&text)
}

/// Header plus string cells.
struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(bytes: &[u8]) -> Result<Self, CliError> {
        let mut reader = csv::Reader::from_reader(bytes);
        let headers = reader
            .headers()
            .map_err(|e| CliError::Input(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| CliError::Input(e.to_string()))?;
        if rows.is_empty() {
            return Err(CliError::Input("no data rows".into()));
        }
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str, panel: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("missing column '{name}' (panel '{panel}')")))
    }

    fn number(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col].trim().parse().unwrap_or(f64::NAN)
    }
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn panel_series(table: &Table, panel: &PanelSpec) -> Result<Vec<Series>, CliError> {
    let x = table.column(&panel.x, &panel.title)?;
    let ys: Vec<usize> = panel
        .y
        .iter()
        .map(|y| table.column(y, &panel.title))
        .collect::<Result<_, _>>()?;
    let group = panel
        .group_by
        .as_deref()
        .map(|g| table.column(g, &panel.title))
        .transpose()?;
    let mut series: Vec<Series> = Vec::new();
    for (j, &y) in ys.iter().enumerate() {
        let base = panel.labels.get(j).cloned().unwrap_or_else(|| panel.y[j].clone());
        for row in 0..table.rows.len() {
            let label = match group {
                Some(g) if ys.len() == 1 => table.rows[row][g].clone(),
                Some(g) => format!("{base} ({})", table.rows[row][g]),
                None => base.clone(),
            };
            let point = (table.number(row, x), table.number(row, y));
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push(point),
                None => series.push(Series {
                    label,
                    points: vec![point],
                }),
            }
        }
    }
    Ok(series)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A "nice" tick step (1, 2 or 5 times a power of ten) giving about `target` ticks.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).clamp(0.0, 8.0) as usize;
    let s = format!("{v:.decimals$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        // Avoid "-0.00".
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        let pad = 0.5 * (1.0 + lo.abs()) * 0.1;
        return Some((lo - pad, hi + pad));
    }
    let pad = 0.04 * (hi - lo);
    Some((lo - pad, hi + pad))
}

fn render_panel(out: &mut String, panel: &PanelSpec, series: &[Series], left: f64, top: f64, w: f64, h: f64) {
    let (px, py) = (left + MARGIN_LEFT, top + MARGIN_TOP);
    let (pw, ph) = (w - MARGIN_LEFT - MARGIN_RIGHT, h - MARGIN_TOP - MARGIN_BOTTOM);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-weight="bold">{}</text>"#,
        px + pw / 2.0,
        top + 18.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{px:.2}" y="{py:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444"/>"##
    );
    let finite = |s: &Series| -> Vec<(f64, f64)> {
        s.points
            .iter()
            .copied()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect()
    };
    let all: Vec<(f64, f64)> = series.iter().flat_map(finite).collect();
    let (Some((x0, x1)), Some((y0, y1))) = (range(all.iter().map(|p| p.0)), range(all.iter().map(|p| p.1))) else {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">no finite data</text>"#,
            px + pw / 2.0,
            py + ph / 2.0
        );
        return;
    };
    let sx = |x: f64| px + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| py + ph - (y - y0) / (y1 - y0) * ph;
    for (lo, hi, vertical) in [(x0, x1, true), (y0, y1, false)] {
        let step = tick_step(hi - lo, 5.0);
        for k in (lo / step).ceil() as i64..=(hi / step).floor() as i64 {
            let t = k as f64 * step;
            let label = tick_label(t, step);
            if vertical {
                let x = sx(t);
                let _ = writeln!(
                    out,
                    r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"##,
                    py + ph,
                    py + ph + 4.0,
                    py + ph + 16.0
                );
            } else {
                let y = sy(t);
                let _ = writeln!(
                    out,
                    r##"<line x1="{:.2}" y1="{y:.2}" x2="{px:.2}" y2="{y:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
                    px - 4.0,
                    px - 6.0,
                    y + 4.0
                );
            }
        }
    }
    let x_label = panel.x_label.as_deref().unwrap_or(&panel.x);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        px + pw / 2.0,
        py + ph + 32.0,
        escape(x_label)
    );
    if let Some(y_label) = &panel.y_label {
        let (cx, cy) = (left + 14.0, py + ph / 2.0);
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 {cx:.2} {cy:.2})">{}</text>"#,
            escape(y_label)
        );
    }
    let mut legend_row = 0;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match panel.style {
            SeriesStyle::Line => {
                // Break the polyline at non-finite points.
                for run in s.points.split(|(x, y)| !(x.is_finite() && y.is_finite())) {
                    if run.is_empty() {
                        continue;
                    }
                    let pts: Vec<String> = run.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
                    // Later series are dashed so that coincident curves stay visible.
                    let dash = if i > 0 { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                        pts.join(" ")
                    );
                }
            }
            SeriesStyle::Scatter => {
                for (x, y) in finite(s) {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
                }
            }
        }
        if finite(s).is_empty() {
            continue;
        }
        let ly = py + 12.0 + 14.0 * legend_row as f64;
        legend_row += 1;
        let lx = px + pw - 120.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            ly - 9.0,
            lx + 14.0,
            ly,
            escape(&s.label)
        );
    }
}

/// Renders `spec` over the CSV in `csv_bytes`.
pub fn render_chart(spec: &ChartSpec, csv_bytes: &[u8]) -> Result<String, CliError> {
    let table = Table::parse(csv_bytes)?;
    let series: Vec<Vec<Series>> = spec
        .panels
        .iter()
        .map(|p| panel_series(&table, p))
        .collect::<Result<_, _>>()?;
    let rows = spec.panels.len().div_ceil(spec.columns);
    let cols = spec.columns.min(spec.panels.len());
    let width = cols as f64 * spec.panel_width;
    let height = TITLE_HEIGHT + rows as f64 * spec.panel_height;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15" font-weight="bold">{}</text>"#,
        width / 2.0,
        escape(&spec.title)
    );
    for (i, (panel, s)) in spec.panels.iter().zip(&series).enumerate() {
        let left = (i % spec.columns) as f64 * spec.panel_width;
        let top = TITLE_HEIGHT + (i / spec.columns) as f64 * spec.panel_height;
        render_panel(&mut out, panel, s, left, top, spec.panel_width, spec.panel_height);
    }
    out.push_str("</svg>\n");
    Ok(out)
}
