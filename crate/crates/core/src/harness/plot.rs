//! Mean ± sample-std curves across seeds, as merged CSV plus SVG.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::log::{read_log, LOG_HEADER};
use crate::error::{input_err, Result};

/// Metrics that get a plot; `steps` is the x axis.
const PLOTTED: &[&str] = &[
    "mean_ext_return",
    "mean_int_raw",
    "mean_int",
    "collisions_per_1k",
    "cluster_count",
    "predictor_loss",
    "predictor_accuracy",
    "entropy",
];

/// One metric of one run directory, aggregated over its seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedSeries {
    pub run: String,
    pub metric: String,
    /// `(steps, mean, sample std, seeds contributing)` per row index.
    pub points: Vec<(f64, f64, f64, usize)>,
}

/// Seed logs under a run directory: `dir/log.csv` or `dir/*/log.csv`.
fn seed_logs(dir: &Path) -> Result<Vec<PathBuf>> {
    let direct = dir.join("log.csv");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let mut logs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path().join("log.csv")))
        .filter(|p| p.is_file())
        .collect();
    logs.sort();
    if logs.is_empty() {
        return Err(input_err(format!("no log.csv under {}", dir.display())));
    }
    Ok(logs)
}

/// Aligns seeds by row and averages each metric; empty cells are skipped.
pub fn merge_runs(dir: &Path, metric: &str) -> Result<MergedSeries> {
    let col = LOG_HEADER
        .iter()
        .position(|h| *h == metric)
        .ok_or_else(|| input_err(format!("unknown metric `{metric}`")))?;
    let steps_col = LOG_HEADER.iter().position(|h| *h == "steps").expect("steps column");
    let mut seeds = Vec::new();
    for path in seed_logs(dir)? {
        let (header, rows) = read_log(&path)?;
        if header != LOG_HEADER {
            return Err(input_err(format!("{} has a different log schema", path.display())));
        }
        seeds.push(rows);
    }
    let len = seeds.iter().map(Vec::len).max().unwrap_or(0);
    let mut points = Vec::with_capacity(len);
    for r in 0..len {
        let rows: Vec<&Vec<Option<f64>>> = seeds.iter().filter_map(|s| s.get(r)).collect();
        let xs: Vec<f64> = rows.iter().filter_map(|row| row[steps_col]).collect();
        let vals: Vec<f64> = rows.iter().filter_map(|row| row[col]).filter(|v| v.is_finite()).collect();
        if vals.is_empty() || xs.is_empty() {
            continue;
        }
        let n = vals.len();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let x = xs.iter().sum::<f64>() / xs.len() as f64;
        points.push((x, mean, std, n));
    }
    let run = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(MergedSeries {
        run,
        metric: metric.to_string(),
        points,
    })
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

fn render_svg(metric: &str, series: &[MergedSeries]) -> String {
    let (w, h, pad) = (720.0, 420.0, 60.0);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, s, _) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - s);
        y1 = y1.max(m + s);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{b}" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">{metric}</text>"#, w / 2.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">steps</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(svg, r#"<text x="{pad}" y="{}" text-anchor="middle">{x0}</text>"#, h - pad + 15.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{x1}</text>"#, w - pad, h - pad + 15.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{y0:.3}</text>"#, pad - 4.0, h - pad);
    let _ = writeln!(svg, r#"<text x="{}" y="{pad}" text-anchor="end">{y1:.3}</text>"#, pad - 4.0);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1 + p.2))).collect();
        let lower: Vec<String> = s.points.iter().rev().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1 - p.2))).collect();
        let mean: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, mean.join(" "));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - pad + 5.0,
            pad + 15.0 * i as f64,
            s.run
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `<metric>.csv` and `<metric>.svg` into `out` for every plotted
/// metric; each run directory becomes one curve. Returns the files written.
pub fn emit_plots(run_dirs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    if run_dirs.is_empty() {
        return Err(input_err("at least one run directory is required"));
    }
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for metric in PLOTTED {
        let series = run_dirs
            .iter()
            .map(|d| merge_runs(d, metric))
            .collect::<Result<Vec<_>>>()?;
        let mut csv = String::from("steps,run,mean,std,n\n");
        for s in &series {
            for (x, m, sd, n) in &s.points {
                let _ = writeln!(csv, "{x},{},{m},{sd},{n}", s.run);
            }
        }
        let csv_path = out.join(format!("{metric}.csv"));
        std::fs::write(&csv_path, csv)?;
        let svg_path = out.join(format!("{metric}.svg"));
        std::fs::write(&svg_path, render_svg(metric, &series))?;
        written.push(csv_path);
        written.push(svg_path);
    }
    Ok(written)
}
