use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::experiment::{failure_histogram, ExperimentOutput, Split, TraceRecord};
use super::{two_proportion_z_test, SuccessTable, ZTest};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub traces: PathBuf,
    pub chart: PathBuf,
    pub failures: PathBuf,
}

/// `label,k,n,phat,lo,hi`, one row per condition, six decimals.
pub fn render_csv(table: &SuccessTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(["label", "k", "n", "phat", "lo", "hi"]).map_err(to_err)?;
    for r in &table.rows {
        w.write_record([
            r.label.clone(),
            r.k.to_string(),
            r.n.to_string(),
            format!("{:.6}", r.phat),
            format!("{:.6}", r.lo),
            format!("{:.6}", r.hi),
        ])
        .map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Git-style content hash: SHA-256 over `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::from("sha256:");
    for b in digest {
        write!(out, "{b:02x}").expect("string write");
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Bar chart of success rates with 95% Wilson whiskers. Each whisker carries
/// its endpoints to three decimals in `data-lo` / `data-hi`.
pub fn render_svg(table: &SuccessTable, title: &str) -> String {
    let (bar, gap, height, top, left) = (28.0, 14.0, 220.0, 40.0, 50.0);
    let width = left + table.rows.len() as f64 * (bar + gap) + gap;
    let y = |v: f64| top + height * (1.0 - v);
    let mut s = String::new();
    let total_h = top + height + 150.0;
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{total_h:.0}" font-family="sans-serif" font-size="10">"#).unwrap();
    writeln!(s, r#"<text x="{left}" y="20" font-size="13">{}</text>"#, escape(title)).unwrap();
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        writeln!(
            s,
            r##"<line x1="{left}" x2="{width:.1}" y1="{0:.1}" y2="{0:.1}" stroke="#ddd"/><text x="{1}" y="{2:.1}" text-anchor="end">{tick:.2}</text>"##,
            y(tick),
            left - 4.0,
            y(tick) + 3.0
        )
        .unwrap();
    }
    for (i, r) in table.rows.iter().enumerate() {
        let x = left + gap + i as f64 * (bar + gap);
        let cx = x + bar / 2.0;
        writeln!(
            s,
            r##"<rect x="{x:.1}" y="{:.1}" width="{bar}" height="{:.1}" fill="#4c78a8"><title>{} {}/{}</title></rect>"##,
            y(r.phat),
            height * r.phat,
            escape(&r.label),
            r.k,
            r.n
        )
        .unwrap();
        writeln!(
            s,
            r#"<path class="ci" data-label="{}" data-lo="{:.3}" data-hi="{:.3}" d="M{:.1} {:.1}H{:.1}M{cx:.1} {:.1}V{:.1}M{:.1} {:.1}H{:.1}" stroke="black" fill="none"/>"#,
            escape(&r.label),
            r.lo,
            r.hi,
            cx - 6.0,
            y(r.hi),
            cx + 6.0,
            y(r.hi),
            y(r.lo),
            cx - 6.0,
            y(r.lo),
            cx + 6.0
        )
        .unwrap();
        let ly = top + height + 8.0;
        writeln!(
            s,
            r#"<text x="{cx:.1}" y="{ly:.1}" transform="rotate(60 {cx:.1} {ly:.1})">{}</text>"#,
            escape(&r.label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped counts of failure classes per condition.
pub fn render_failure_svg(hist: &BTreeMap<String, BTreeMap<String, u64>>, order: &[String]) -> String {
    let classes: Vec<&str> = crate::sim::FailureClass::ALL.iter().map(|c| c.as_str()).collect();
    let colours = ["#54a24b", "#bab0ac", "#e45756", "#f58518", "#72b7b2"];
    let (bar, group_gap, height, top, left) = (12.0, 20.0, 200.0, 40.0, 50.0);
    let group = bar * classes.len() as f64 + group_gap;
    let width = left + order.len() as f64 * group + 120.0;
    let max = hist.values().flat_map(|m| m.values()).copied().max().unwrap_or(1).max(1) as f64;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{:.0}" font-family="sans-serif" font-size="10">"#, top + height + 60.0).unwrap();
    writeln!(s, r#"<text x="{left}" y="20" font-size="13">Failure causes</text>"#).unwrap();
    for (g, cond) in order.iter().enumerate() {
        let x0 = left + g as f64 * group;
        for (c, class) in classes.iter().enumerate() {
            let n = hist.get(cond).and_then(|m| m.get(*class)).copied().unwrap_or(0);
            let h = height * n as f64 / max;
            writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{bar}" height="{h:.1}" fill="{}" data-class="{class}" data-count="{n}"/>"#,
                x0 + c as f64 * bar,
                top + height - h,
                colours[c % colours.len()]
            )
            .unwrap();
        }
        writeln!(s, r#"<text x="{x0:.1}" y="{:.1}">{}</text>"#, top + height + 14.0, escape(cond)).unwrap();
    }
    for (c, class) in classes.iter().enumerate() {
        let ly = top + 12.0 * c as f64;
        let lx = width - 110.0;
        writeln!(s, r#"<rect x="{lx:.1}" y="{:.1}" width="8" height="8" fill="{}"/><text x="{:.1}" y="{ly:.1}">{class}</text>"#, ly - 8.0, colours[c % colours.len()], lx + 12.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Serialize)]
struct Comparison<'a> {
    a: &'a str,
    b: &'a str,
    #[serde(flatten)]
    test: ZTest,
}

#[derive(Serialize)]
struct TraceInfo<'a> {
    file: &'a str,
    records: usize,
    content_hash: String,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a super::ExperimentConfig,
    conditions: &'a [super::Condition],
    rows: &'a [super::SuccessRow],
    comparisons: Vec<Comparison<'a>>,
    failure_histogram: BTreeMap<String, BTreeMap<String, u64>>,
    traces: TraceInfo<'a>,
}

/// Seen against unseen within each condition, then neighbouring conditions
/// on the seen split.
fn comparisons(output: &ExperimentOutput) -> Result<Vec<Comparison<'_>>> {
    let table = &output.table;
    let mut pairs = Vec::new();
    for c in &output.conditions {
        let seen = format!("{}/{}", c.label, Split::Seen.as_str());
        let unseen = format!("{}/{}", c.label, Split::Unseen.as_str());
        pairs.push((seen, unseen));
    }
    for w in output.conditions.windows(2) {
        pairs.push((format!("{}/seen", w[0].label), format!("{}/seen", w[1].label)));
    }
    let mut out = Vec::new();
    for (a, b) in pairs {
        if let (Some(ra), Some(rb)) = (table.row(&a), table.row(&b)) {
            out.push(Comparison {
                a: &ra.label,
                b: &rb.label,
                test: two_proportion_z_test(ra.k, ra.n, rb.k, rb.n)?,
            });
        }
    }
    Ok(out)
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `traces.jsonl`, `summary.json`, `success.svg` and
/// `failures.svg` into `dir`.
pub fn emit_report(dir: &Path, output: &ExperimentOutput) -> Result<ReportFiles> {
    if output.table.rows.is_empty() {
        return Err(Error::Config("nothing to report: the table is empty".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        csv: dir.join("results.csv"),
        summary: dir.join("summary.json"),
        traces: dir.join("traces.jsonl"),
        chart: dir.join("success.svg"),
        failures: dir.join("failures.svg"),
    };
    let mut traces = String::new();
    for t in &output.traces {
        traces.push_str(&serde_json::to_string(t).map_err(|e| Error::Json { path: files.traces.clone(), source: e })?);
        traces.push('\n');
    }
    write(&files.traces, traces.as_bytes())?;
    write(&files.csv, render_csv(&output.table)?.as_bytes())?;
    let title = format!("Success rate ({:?} mode, 95% Wilson CI)", output.config.mode);
    write(&files.chart, render_svg(&output.table, &title).as_bytes())?;
    let hist = failure_histogram(&output.traces);
    let order: Vec<String> = output.conditions.iter().map(|c| c.label.clone()).collect();
    write(&files.failures, render_failure_svg(&hist, &order).as_bytes())?;
    let summary = Summary {
        config: &output.config,
        conditions: &output.conditions,
        rows: &output.table.rows,
        comparisons: comparisons(output)?,
        failure_histogram: hist,
        traces: TraceInfo {
            file: "traces.jsonl",
            records: output.traces.len(),
            content_hash: content_hash(traces.as_bytes()),
        },
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Json { path: files.summary.clone(), source: e })?;
    write(&files.summary, (json + "\n").as_bytes())?;
    Ok(files)
}

pub fn read_traces(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}
