//! Artifact writers: JSON reports, CSV tables and an SVG plot of β.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use robinopt_core::optimize::HistoryEntry;
use robinopt_core::Mesh;

use crate::error::CliError;

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output {
        path: path.clone(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

/// Writes serializable rows with a header taken from the field names.
pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), CliError> {
    let path = dir.join(name);
    let fail = |e: csv::Error| CliError::Output {
        path: path.clone(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&path).map_err(fail)?;
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

#[derive(Serialize)]
struct HistoryRow {
    run: usize,
    seed: u64,
    iteration: usize,
    value: f64,
    pg_norm: f64,
    step: f64,
}

/// One block of rows per optimizer run.
pub fn write_history(dir: &Path, runs: &[(u64, &[HistoryEntry])]) -> Result<(), CliError> {
    let rows: Vec<HistoryRow> = runs
        .iter()
        .enumerate()
        .flat_map(|(run, (seed, hist))| {
            hist.iter().map(move |h| HistoryRow {
                run,
                seed: *seed,
                iteration: h.iteration,
                value: h.value,
                pg_norm: h.pg_norm,
                step: h.step,
            })
        })
        .collect();
    write_csv(dir, "history.csv", &rows)
}

/// beta.csv: edge index, arclength of the edge midpoint and one column per series.
pub fn write_beta(dir: &Path, mesh: &Mesh, series: &[(&str, &[f64])]) -> Result<(), CliError> {
    let path = dir.join("beta.csv");
    let fail = |e: csv::Error| CliError::Output {
        path: path.clone(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&path).map_err(fail)?;
    let mut header = vec!["edge".to_string(), "arclength".to_string()];
    header.extend(series.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header).map_err(fail)?;
    for (e, s) in mesh.edge_arclength().iter().enumerate() {
        let mut rec = vec![e.to_string(), s.to_string()];
        rec.extend(series.iter().map(|(_, v)| v[e].to_string()));
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

/// fields.csv: vertex, coordinates and one column per nodal field.
pub fn write_fields(dir: &Path, mesh: &Mesh, fields: &[(&str, &[f64])]) -> Result<(), CliError> {
    let path = dir.join("fields.csv");
    let fail = |e: csv::Error| CliError::Output {
        path: path.clone(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&path).map_err(fail)?;
    let mut header = vec!["vertex".to_string(), "x".to_string(), "y".to_string()];
    header.extend(fields.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header).map_err(fail)?;
    for (i, p) in mesh.vertices().iter().enumerate() {
        let mut rec = vec![i.to_string(), p[0].to_string(), p[1].to_string()];
        rec.extend(fields.iter().map(|(_, v)| v[i].to_string()));
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

const PALETTE: [&str; 4] = ["#1f5fa8", "#c0392b", "#27864a", "#7d3c98"];

/// Step plot of edgewise values against arclength, one polyline per series.
pub fn boundary_svg(mesh: &Mesh, series: &[(&str, &[f64])]) -> String {
    let (w, h, pad) = (720.0, 260.0, 40.0);
    let perimeter = mesh.perimeter();
    let lengths = mesh.edge_lengths();
    let top = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(1.0f64, f64::max);
    let x = |s: f64| pad + (w - 2.0 * pad) * s / perimeter;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v / top;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<path d="M{:.2} {:.2} H{:.2} M{:.2} {:.2} V{:.2}" stroke="black" fill="none"/>"#,
        pad,
        h - pad,
        w - pad,
        pad,
        h - pad,
        pad
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">arclength</text>"#,
        w / 2.0,
        h - 8.0
    );
    let _ = writeln!(out, r#"<text x="8" y="{:.2}" font-size="12">{top:.3}</text>"#, pad + 4.0);
    let _ = writeln!(out, r#"<text x="8" y="{:.2}" font-size="12">0</text>"#, h - pad);
    for (k, (name, values)) in series.iter().enumerate() {
        let mut pts = String::new();
        let mut s = 0.0;
        for (v, l) in values.iter().zip(&lengths) {
            let _ = write!(pts, "{:.2},{:.2} {:.2},{:.2} ", x(s), y(*v), x(s + l), y(*v));
            s += l;
        }
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<polyline points="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#,
            pts.trim_end()
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{color}">{name}</text>"#,
            w - pad - 120.0,
            pad + 14.0 * (k as f64 + 1.0)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_svg(dir: &Path, mesh: &Mesh, series: &[(&str, &[f64])]) -> Result<(), CliError> {
    let path = dir.join("boundary.svg");
    fs::write(&path, boundary_svg(mesh, series)).map_err(|e| CliError::io(&path, e))
}
