use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::ledger::{EpisodeRecord, RegretLedger};

pub const CSV_HEADER: &str = "episode,phase,agent_return,principal_return,welfare,terminal_pollution,seed";

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::input(format!("{}: {other:?}", path.display())),
    }
}

/// Writes one row per record. Floats use the shortest representation that
/// parses back to the same value.
pub fn emit_csv(ledger: &RegretLedger, path: &Path) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_HEADER.split(',')).map_err(|e| csv_err(path, e))?;
    for r in &ledger.records {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::input(format!("{}: unexpected header `{header}`", path.display())));
    }
    r.deserialize().map(|rec| rec.map_err(|e| csv_err(path, e))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Welfare,
    Pollution,
    Regret,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Welfare => "welfare",
            PlotKind::Pollution => "pollution",
            PlotKind::Regret => "regret",
        }
    }
}

/// One labelled line on a chart.
#[derive(Clone, Debug, PartialEq)]
pub struct SvgSeries {
    pub label: String,
    pub values: Vec<f64>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static SVG 1.1 line chart with one polyline per series.
pub fn render_svg(series: &[SvgSeries], kind: PlotKind) -> String {
    let (w, h, pad) = (720.0, 400.0, 50.0);
    let len = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let finite = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let x = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (len.max(2) - 1) as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r##"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="#444"/>"##,
        h - pad,
        w - pad
    );
    let _ = writeln!(out, r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, kind.name());
    let _ = writeln!(out, r#"<text x="4" y="{}" font-size="11">{hi:.3}</text>"#, pad + 4.0);
    let _ = writeln!(out, r#"<text x="4" y="{}" font-size="11">{lo:.3}</text>"#, h - pad);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">episode {len}</text>"#, w - pad, h - pad + 18.0);
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(j, &v)| format!("{:.2},{:.2}", x(j), y(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            w - pad - 120.0,
            pad + 16.0 * (i + 1) as f64,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn emit_svg(series: &[SvgSeries], path: &Path, kind: PlotKind) -> Result<()> {
    create_parent(path)?;
    fs::write(path, render_svg(series, kind)).map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_summary<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::input(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
