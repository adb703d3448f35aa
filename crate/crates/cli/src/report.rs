//! Cross-run report: one CSV row per finalized run and an error-vs-EDAP
//! scatter plot.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use dance_core::cosearch::FinalReport;

pub const FINAL_NAME: &str = "final.json";
pub const RUN_INFO_NAME: &str = "run.json";
pub const CSV_HEADER: &str = "run,accuracy_error,latency,energy,area,EDAP,dataflow,method";

/// Method tag used to group runs into plot series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dance,
    Edd,
    NoPenalty,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Dance => "dance",
            Method::Edd => "edd",
            Method::NoPenalty => "no-penalty",
        }
    }

    fn color(self) -> &'static str {
        match self {
            Method::Dance => "#1f77b4",
            Method::Edd => "#d62728",
            Method::NoPenalty => "#2ca02c",
        }
    }
}

/// Search settings recorded next to a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub method: Method,
    pub variant: String,
    pub lambda2: f64,
    pub warmup: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub run: String,
    pub method: Method,
    pub accuracy_error: f64,
    pub latency: f64,
    pub energy: f64,
    pub area: f64,
    pub dataflow: String,
}

impl ReportRow {
    pub fn edap(&self) -> f64 {
        self.latency * self.energy * self.area
    }

    pub fn from_final(run: &str, method: Method, f: &FinalReport) -> Self {
        Self {
            run: run.into(),
            method,
            accuracy_error: f.accuracy.map_or(f64::NAN, |a| 100.0 - a),
            latency: f.oracle.latency,
            energy: f.oracle.energy,
            area: f.oracle.area,
            dataflow: f.config.dataflow.short_name().into(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Collected {
    pub rows: Vec<ReportRow>,
    /// Run directories without a readable `final.json`, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

fn run_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn read_run(dir: &Path) -> Result<ReportRow> {
    let final_path = dir.join(FINAL_NAME);
    let text = std::fs::read_to_string(&final_path).with_context(|| format!("missing {}", final_path.display()))?;
    let report: FinalReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", final_path.display()))?;
    let info_path = dir.join(RUN_INFO_NAME);
    let method = match std::fs::read_to_string(&info_path) {
        Ok(t) => serde_json::from_str::<RunInfo>(&t)
            .with_context(|| format!("parsing {}", info_path.display()))?
            .method,
        Err(_) => Method::Dance,
    };
    Ok(ReportRow::from_final(&run_name(dir), method, &report))
}

/// Reads every run directory; unreadable ones are listed as skipped.
pub fn collect(run_dirs: &[PathBuf]) -> Collected {
    let mut out = Collected::default();
    for dir in run_dirs {
        match read_run(dir) {
            Ok(row) => out.rows.push(row),
            Err(e) => out.skipped.push((dir.clone(), format!("{e:#}"))),
        }
    }
    out
}

/// Values are written in shortest round-trip form so the EDAP column can be
/// recomputed exactly from the other three.
pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.run,
            r.accuracy_error,
            r.latency,
            r.energy,
            r.area,
            r.edap(),
            r.dataflow,
            r.method.tag()
        );
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Scatter of accuracy error (y) against EDAP on a log axis (x), one series
/// per method.
pub fn to_svg(rows: &[ReportRow]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 150.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 55.0;
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;

    let pts: Vec<(f64, f64, &ReportRow)> = rows
        .iter()
        .filter(|r| r.edap() > 0.0 && r.accuracy_error.is_finite())
        .map(|r| (r.edap().log10(), r.accuracy_error, r))
        .collect();
    let (mut x0, mut x1) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    x0 = x0.floor();
    x1 = x1.ceil().max(x0 + 1.0);
    let ymax = pts.iter().map(|p| p.1).fold(0.0_f64, f64::max);
    let ymax = if ymax <= 0.0 { 1.0 } else { (ymax * 1.1).ceil() };
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - y.max(0.0) / ymax * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut e = x0 as i64;
    while e <= x1 as i64 {
        let x = sx(e as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#999"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0
        );
        e += 1;
    }
    for i in 0..=4 {
        let v = ymax * i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#999"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">EDAP (log scale)</text>"#,
        LEFT + pw / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">accuracy error (%)</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    let mut methods: Vec<_> = pts.iter().map(|p| p.2.method).collect();
    methods.sort();
    methods.dedup();
    for m in &methods {
        let _ = writeln!(s, r#"<g class="series" data-method="{}">"#, m.tag());
        for (x, y, r) in pts.iter().filter(|p| p.2.method == *m) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{}"><title>{}</title></circle>"#,
                sx(*x),
                sy(*y),
                m.color(),
                escape(&r.run)
            );
        }
        s.push_str("</g>\n");
    }
    for (i, m) in methods.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = W - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            m.color(),
            x + 10.0,
            y + 4.0,
            m.tag()
        );
    }
    s.push_str("</svg>\n");
    s
}
