//! Post-hoc reporting over `simulate` output directories: a bandwidth and
//! parameter chart per client, and a default-vs-tuned totals table when the
//! input holds both a tuned run and a `--no-tuner` run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Svg,
    Ascii,
}

#[derive(Debug, Clone)]
struct Series {
    time_s: Vec<u64>,
    bw_mbps: Vec<f64>,
    mppr: Vec<u32>,
    mrif: Vec<u32>,
}

#[derive(Debug, Clone)]
struct Run {
    label: String,
    clients: Vec<(String, Series)>,
    total_mbps: f64,
    all_hold: bool,
}

fn parse_run(dir: &Path) -> Result<Option<Run>, CliError> {
    let ts_path = dir.join("timeseries.csv");
    let sum_path = dir.join("summary.csv");
    if !ts_path.is_file() || !sum_path.is_file() {
        return Ok(None);
    }
    let ts = fs::read_to_string(&ts_path)
        .map_err(|e| CliError::io(&ts_path.display().to_string(), e))?;
    let mut clients: Vec<(String, Series)> = Vec::new();
    let mut all_hold = true;
    for line in ts.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            continue;
        }
        let (time_s, id, mppr, mrif, bw, decision) =
            (cols[0], cols[1], cols[2], cols[3], cols[7], cols[8]);
        if decision != "hold" {
            all_hold = false;
        }
        let series = match clients.iter_mut().find(|(c, _)| c == id) {
            Some((_, s)) => s,
            None => {
                clients.push((
                    id.to_string(),
                    Series { time_s: vec![], bw_mbps: vec![], mppr: vec![], mrif: vec![] },
                ));
                &mut clients.last_mut().expect("just pushed").1
            }
        };
        series.time_s.push(time_s.parse().unwrap_or(0));
        series.bw_mbps.push(bw.parse().unwrap_or(0.0));
        series.mppr.push(mppr.parse().unwrap_or(0));
        series.mrif.push(mrif.parse().unwrap_or(0));
    }
    let summary = fs::read_to_string(&sum_path)
        .map_err(|e| CliError::io(&sum_path.display().to_string(), e))?;
    let total_mbps = summary
        .lines()
        .find(|l| l.starts_with("TOTAL,all,"))
        .and_then(|l| l.split(',').next_back())
        .and_then(|v| v.parse().ok())
        .unwrap_or(0.0);
    let label = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(Some(Run { label, clients, total_mbps, all_hold }))
}

fn collect_runs(in_dir: &Path) -> Result<Vec<Run>, CliError> {
    let mut runs = Vec::new();
    if let Some(run) = parse_run(in_dir)? {
        runs.push(run);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(in_dir)
        .map_err(|e| CliError::io(&in_dir.display().to_string(), e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        if let Some(run) = parse_run(&sub)? {
            runs.push(run);
        }
    }
    Ok(runs)
}

/// Improvement table shown when one run is an all-hold baseline.
fn totals_table(runs: &[Run]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "run totals:");
    for r in runs {
        let _ = writeln!(out, "  {:<24} {:>10.1} MB/s", r.label, r.total_mbps);
    }
    let default = runs.iter().find(|r| r.all_hold);
    let tuned = runs.iter().find(|r| !r.all_hold);
    if let (Some(d), Some(t)) = (default, tuned) {
        if d.total_mbps > 0.0 {
            let gain = (t.total_mbps - d.total_mbps) / d.total_mbps * 100.0;
            let _ = writeln!(
                out,
                "  improvement: {gain:+.2}% ({} over {})",
                t.label, d.label
            );
        }
    }
    out
}

pub fn cmd_report(in_dir: &Path, out_path: &Path, format: ReportFormat) -> Result<(), CliError> {
    let runs = collect_runs(in_dir)?;
    if runs.is_empty() {
        return Err(CliError::Io(format!(
            "{}: no simulate outputs found (need timeseries.csv and summary.csv)",
            in_dir.display()
        )));
    }
    let text = match format {
        ReportFormat::Svg => render_svg(&runs),
        ReportFormat::Ascii => render_ascii(&runs),
    };
    fs::write(out_path, text).map_err(|e| CliError::io(&out_path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// ASCII rendering
// ---------------------------------------------------------------------------

const ASCII_W: usize = 64;
const ASCII_H: usize = 12;

fn render_ascii(runs: &[Run]) -> String {
    let mut out = String::new();
    for run in runs {
        let _ = writeln!(out, "== run: {} ==", run.label);
        for (id, s) in &run.clients {
            let max_bw = s.bw_mbps.iter().copied().fold(1.0f64, f64::max);
            let _ = writeln!(out, "-- {id} (bandwidth, peak {max_bw:.1} MB/s) --");
            let mut grid = vec![vec![b' '; ASCII_W]; ASCII_H];
            let n = s.bw_mbps.len().max(1);
            for (i, bw) in s.bw_mbps.iter().enumerate() {
                let x = i * (ASCII_W - 1) / n.max(1);
                let y = ((bw / max_bw) * (ASCII_H - 1) as f64).round() as usize;
                let y = ASCII_H - 1 - y.min(ASCII_H - 1);
                grid[y][x] = b'*';
            }
            for row in grid {
                let _ = writeln!(out, "|{}|", String::from_utf8_lossy(&row));
            }
            let (first, last) = (s.time_s.first().unwrap_or(&0), s.time_s.last().unwrap_or(&0));
            let _ = writeln!(out, " t: {first}..{last} s");
            let _ = writeln!(
                out,
                " params end: mppr={} mrif={}",
                s.mppr.last().unwrap_or(&0),
                s.mrif.last().unwrap_or(&0)
            );
        }
    }
    out.push_str(&totals_table(runs));
    out
}

// ---------------------------------------------------------------------------
// SVG rendering
// ---------------------------------------------------------------------------

const PANEL_W: f64 = 720.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 40.0;

fn polyline(points: &[(f64, f64)], color: &str, width: f64) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>\n",
        pts.join(" ")
    )
}

fn render_svg(runs: &[Run]) -> String {
    let panels: usize = runs.iter().map(|r| r.clients.len()).sum();
    let width = PANEL_W + 2.0 * MARGIN;
    let height = panels as f64 * (PANEL_H + 2.0 * MARGIN) + 60.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");

    let mut top = 20.0;
    for run in runs {
        for (id, s) in &run.clients {
            let x0 = MARGIN;
            let y0 = top + 20.0;
            let max_bw = s.bw_mbps.iter().copied().fold(1.0f64, f64::max);
            let t_max = *s.time_s.last().unwrap_or(&1) as f64;
            let xs = |t: u64| x0 + (t as f64 / t_max.max(1.0)) * PANEL_W;
            let ys = |v: f64| y0 + PANEL_H - (v / max_bw) * PANEL_H;
            let _ = writeln!(
                out,
                "<text x=\"{x0}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"14\">{} / {} (peak {max_bw:.0} MB/s)</text>",
                top + 12.0,
                run.label,
                id
            );
            let _ = writeln!(
                out,
                "<rect x=\"{x0}\" y=\"{y0}\" width=\"{PANEL_W}\" height=\"{PANEL_H}\" fill=\"none\" stroke=\"#888\"/>"
            );
            let bw_pts: Vec<(f64, f64)> = s
                .time_s
                .iter()
                .zip(&s.bw_mbps)
                .map(|(t, bw)| (xs(*t), ys(*bw)))
                .collect();
            out.push_str(&polyline(&bw_pts, "#1f77b4", 1.5));
            // Parameter step lines on a log2 scale pinned to the panel.
            let log_top = 13.0; // 2^13 > 4096
            let ys_log = |v: u32| y0 + PANEL_H - ((v.max(1) as f64).log2() / log_top) * PANEL_H;
            let mppr_pts: Vec<(f64, f64)> =
                s.time_s.iter().zip(&s.mppr).map(|(t, v)| (xs(*t), ys_log(*v))).collect();
            let mrif_pts: Vec<(f64, f64)> =
                s.time_s.iter().zip(&s.mrif).map(|(t, v)| (xs(*t), ys_log(*v))).collect();
            out.push_str(&polyline(&mppr_pts, "#d62728", 1.0));
            out.push_str(&polyline(&mrif_pts, "#2ca02c", 1.0));
            let _ = writeln!(
                out,
                "<text x=\"{x0}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" fill=\"#555\">blue: MB/s, red: max_pages_per_rpc (log2), green: max_rpcs_in_flight (log2)</text>",
                y0 + PANEL_H + 16.0
            );
            top += PANEL_H + 2.0 * MARGIN;
        }
    }
    let mut y = top + 14.0;
    for line in totals_table(runs).lines() {
        let _ = writeln!(
            out,
            "<text x=\"{MARGIN}\" y=\"{y:.1}\" font-family=\"monospace\" font-size=\"13\">{}</text>",
            line.replace('<', "&lt;")
        );
        y += 16.0;
    }
    out.push_str("</svg>\n");
    out
}
