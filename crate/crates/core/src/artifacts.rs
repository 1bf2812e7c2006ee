//! File artifacts: CSV tables, JSON sidecars, run manifests, and the small
//! self-contained SVG charts. CSV is the authoritative output; every float
//! is printed with 17 significant digits so runs can be audited bit-for-bit.

use crate::analysis::BenchRow;
use crate::kernel::{KernelBranch, KernelGrid};
use crate::simulator::Trace;
use serde::Serialize;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

/// 17 significant digits: enough to reproduce any binary double exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// FNV-1a over the canonical JSON of a config, for run manifests.
pub fn config_hash(value: &impl Serialize) -> u64 {
    let json = serde_json::to_string(value).unwrap_or_default();
    let mut hash = 0xcbf29ce484222325u64;
    for byte in json.as_bytes() {
        hash ^= *byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Run manifest written next to every command's outputs, success or not.
#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub package_version: &'a str,
    pub format_version: u32,
    pub status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest<'_>) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(dir.join("manifest.json"), json)
}

/// Kernel values as `(s, q, branch, K)` rows.
pub fn kernel_to_csv(kernel: &KernelGrid) -> String {
    let n = kernel.grid().len();
    let h = kernel.grid().spacing();
    let mut out = String::from("s,q,branch,k\n");
    for i in 0..n {
        for j in i..n {
            let branch = match kernel.branch(i, j) {
                KernelBranch::One => 1,
                KernelBranch::Two => 2,
            };
            let _ = writeln!(
                out,
                "{},{},{branch},{}",
                fmt_float(i as f64 * h),
                fmt_float(j as f64 * h),
                fmt_float(kernel.value(i, j))
            );
        }
    }
    out
}

/// Kernel sidecar: grid spacing, convergence diagnostics and the analytic
/// bound when available.
#[derive(Serialize)]
pub struct KernelSidecar {
    pub spacing: f64,
    pub residual: f64,
    pub iterations_branch1: usize,
    pub iterations_branch2: usize,
    pub sup_abs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_bound: Option<f64>,
}

pub fn kernel_sidecar(kernel: &KernelGrid, bound: Option<f64>) -> KernelSidecar {
    KernelSidecar {
        spacing: kernel.grid().spacing(),
        residual: kernel.residual(),
        iterations_branch1: kernel.iterations().0,
        iterations_branch2: kernel.iterations().1,
        sup_abs: kernel.sup_abs(),
        analytic_bound: bound,
    }
}

/// Trace series as `(t, control, x_l2, u_l2)` rows.
pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out = String::from("t,control,x_l2,u_l2\n");
    for i in 0..trace.times.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_float(trace.times[i]),
            fmt_float(trace.control[i]),
            fmt_float(trace.x_l2[i]),
            fmt_float(trace.u_l2[i])
        );
    }
    out
}

/// State snapshots as `(t, s, x)` rows.
pub fn snapshots_to_csv(trace: &Trace) -> String {
    let mut out = String::from("t,s,x\n");
    for snap in &trace.snapshots {
        let h = 1.0 / (snap.x.len() - 1) as f64;
        for (i, &v) in snap.x.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt_float(snap.time),
                fmt_float(i as f64 * h),
                fmt_float(v)
            );
        }
    }
    out
}

/// Delay-line snapshots as `(t, s, r, u)` rows.
pub fn line_snapshots_to_csv(trace: &Trace) -> String {
    let mut out = String::from("t,s,r,u\n");
    for snap in &trace.snapshots {
        let hs = 1.0 / (snap.u.rows() - 1) as f64;
        let hr = 1.0 / (snap.u.cols() - 1) as f64;
        for i in 0..snap.u.rows() {
            for j in 0..snap.u.cols() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_float(snap.time),
                    fmt_float(i as f64 * hs),
                    fmt_float(j as f64 * hr),
                    fmt_float(snap.u.at(i, j))
                );
            }
        }
    }
    out
}

/// Generic `(t, value)` series.
pub fn series_to_csv(header: &str, series: &[(f64, f64)]) -> String {
    let mut out = format!("t,{header}\n");
    for (t, v) in series {
        let _ = writeln!(out, "{},{}", fmt_float(*t), fmt_float(*v));
    }
    out
}

/// Benchmark table rows.
pub fn bench_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "ds,analytic_setup_seconds,analytic_eval_seconds,neural_eval_seconds,speedup,repetitions\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_float(r.ds),
            fmt_float(r.analytic_setup_seconds),
            fmt_float(r.analytic_eval_seconds),
            fmt_float(r.neural_eval_seconds),
            fmt_float(r.speedup),
            r.repetitions
        );
    }
    out
}

/// Minimal line chart: one polyline per labeled series on a log-or-linear y
/// axis, no external dependencies.
pub fn svg_line_chart(
    title: &str,
    series: &[(&str, &[(f64, f64)])],
    log_y: bool,
) -> String {
    let width = 720.0;
    let height = 420.0;
    let margin = 60.0;
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    let transform = |y: f64| if log_y { y.abs().max(1e-16).log10() } else { y };
    for (_, pts) in series {
        for &(x, y) in *pts {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            let ty = transform(y);
            y_min = y_min.min(ty);
            y_max = y_max.max(ty);
        }
    }
    if !(x_max > x_min) {
        x_max = x_min + 1.0;
    }
    if !(y_max > y_min) {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| margin + (x - x_min) / (x_max - x_min) * (width - 2.0 * margin);
    let sy = |y: f64| height - margin - (transform(y) - y_min) / (y_max - y_min) * (height - 2.0 * margin);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        width / 2.0
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{margin}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>\n\
         <line x1=\"{margin}\" y1=\"{margin}\" x2=\"{margin}\" y2=\"{:.1}\" stroke=\"#333\"/>",
        height - margin,
        width - margin,
        height - margin,
        height - margin
    );
    for (idx, (label, pts)) in series.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let color = palette[idx % palette.len()];
        let mut path = String::new();
        for (k, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(
                path,
                "{}{:.2},{:.2} ",
                if k == 0 { "M" } else { "L" },
                sx(x),
                sy(y)
            );
        }
        let _ = writeln!(
            svg,
            "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{label}</text>",
            width - margin + 4.0,
            margin + 16.0 * idx as f64
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">t</text>",
        width / 2.0,
        height - margin / 3.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Minimal heatmap of a kernel on the triangle.
pub fn svg_kernel_heatmap(kernel: &KernelGrid, title: &str) -> String {
    let n = kernel.grid().len();
    let cell = (640.0 / n as f64).max(1.0);
    let width = cell * n as f64 + 120.0;
    let height = cell * n as f64 + 60.0;
    let sup = kernel.sup_abs().max(1e-12);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        width / 2.0
    );
    for i in 0..n {
        for j in i..n {
            let v = kernel.value(i, j) / sup;
            let (r, g, b) = if v >= 0.0 {
                (255.0 - 155.0 * v, 255.0 - 225.0 * v, 255.0)
            } else {
                (255.0, 255.0 + 225.0 * v, 255.0 + 155.0 * v)
            };
            let x = 60.0 + i as f64 * cell;
            let y = height - 30.0 - (j + 1) as f64 * cell;
            let _ = writeln!(
                svg,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"rgb({r:.0},{g:.0},{b:.0})\"/>"
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips_exactly() {
        for &v in &[
            0.1,
            -3.9338e-7,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -0.0,
        ] {
            let s = fmt_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s}");
        }
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        #[derive(Serialize)]
        struct C {
            a: u32,
            b: f64,
        }
        let h1 = config_hash(&C { a: 1, b: 0.5 });
        let h2 = config_hash(&C { a: 1, b: 0.5 });
        let h3 = config_hash(&C { a: 2, b: 0.5 });
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
    }

    #[test]
    fn svg_charts_are_well_formed_enough() {
        let pts = [(0.0, 1.0), (1.0, 0.1), (2.0, 0.01)];
        let svg = svg_line_chart("decay", &[("x", &pts)], true);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<path").count(), 1);
    }
}
