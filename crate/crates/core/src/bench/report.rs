use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AblationReport, BenchError};
use crate::color::Color;
use crate::metrics::{CaseStatus, MetricsReport, Stat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Html,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Html];
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

fn write(path: PathBuf, contents: &[u8], written: &mut Vec<PathBuf>) -> Result<(), BenchError> {
    std::fs::write(&path, contents).map_err(|e| BenchError::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn csv_bytes(rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

fn stat_cells(s: Option<Stat>) -> [String; 2] {
    [num(s.map(|s| s.mean)), num(s.map(|s| s.std))]
}

/// Writes `report.json`, the table CSVs and `cases.html` into `dir`.
pub fn emit_report(report: &MetricsReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut written = Vec::new();
    if formats.contains(&ReportFormat::Json) {
        let mut json = serde_json::to_string_pretty(report).expect("report serializes");
        json.push('\n');
        write(dir.join("report.json"), json.as_bytes(), &mut written)?;
    }
    if formats.contains(&ReportFormat::Csv) {
        let label = report.metadata.label.clone();
        if let Some(c) = &report.completion {
            let k = |k: usize| c.by_k.iter().find(|m| m.k == k);
            let mut rows = vec![vec![
                "method".to_string(),
                "accuracy_1-color".into(),
                "accuracy_2-color".into(),
                "accuracy_3-color".into(),
                "distribution_1-color".into(),
                "distribution_2-color".into(),
                "distribution_3-color".into(),
            ]];
            let mut row = vec![label.clone()];
            row.extend((1..=3).map(|i| num(k(i).map(|m| m.accuracy))));
            row.extend((1..=3).map(|i| num(k(i).and_then(|m| m.distribution))));
            rows.push(row);
            let mut gt = vec!["Ground Truth".to_string(), "-".into(), "-".into(), "-".into()];
            gt.extend((1..=3).map(|i| num(k(i).and_then(|m| m.ground_truth_distribution))));
            rows.push(gt);
            write(dir.join("accuracy.csv"), &csv_bytes(rows), &mut written)?;

            let mut rows = vec![vec!["element".to_string(), "ratio".into(), "accuracy".into()]];
            for m in &c.by_kind {
                rows.push(vec![
                    m.kind.to_string(),
                    format!("{:.1}", m.ratio),
                    num(Some(m.accuracy)),
                ]);
            }
            rows.push(vec![label.clone(), "-".into(), num(k(1).map(|m| m.accuracy))]);
            write(dir.join("elements.csv"), &csv_bytes(rows), &mut written)?;
        }
        if let Some(g) = &report.generation {
            let header = [
                "method",
                "similarity_mean",
                "similarity_std",
                "diversity_mean",
                "diversity_std",
                "chamfer_mean",
                "chamfer_std",
            ];
            let mut rows = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
            let mut row = vec![label.clone()];
            row.extend(stat_cells(g.similarity));
            row.extend(stat_cells(g.diversity));
            row.extend(stat_cells(g.similarity_chamfer));
            rows.push(row);
            let mut gt = vec!["Ground Truth".to_string(), "-".into(), "-".into()];
            gt.extend(stat_cells(g.ground_truth_diversity));
            gt.extend(["-".to_string(), "-".to_string()]);
            rows.push(gt);
            write(dir.join("generation.csv"), &csv_bytes(rows), &mut written)?;
        }
    }
    if formats.contains(&ReportFormat::Html) {
        write(dir.join("cases.html"), render_html(report).as_bytes(), &mut written)?;
    }
    Ok(written)
}

/// Writes `ablation.json` and `ablation.csv`, one CSV row per arm.
pub fn emit_ablation(
    report: &AblationReport,
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut written = Vec::new();
    if formats.contains(&ReportFormat::Json) {
        let mut json = serde_json::to_string_pretty(report).expect("report serializes");
        json.push('\n');
        write(dir.join("ablation.json"), json.as_bytes(), &mut written)?;
    }
    if formats.contains(&ReportFormat::Csv) {
        let header = [
            "group",
            "arm",
            "task",
            "model",
            "representation",
            "profile",
            "structure",
            "exemplars",
            "accuracy_1-color",
            "accuracy_2-color",
            "accuracy_3-color",
            "distribution_1-color",
            "distribution_2-color",
            "distribution_3-color",
            "similarity_mean",
            "similarity_std",
            "diversity_mean",
            "diversity_std",
        ];
        let mut rows = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        let label = |v: &dyn erased::Label| v.label();
        for r in &report.rows {
            let mut row = vec![
                r.group.clone(),
                r.arm.clone(),
                label(&r.task),
                r.model.clone(),
                r.prompt.representation.to_string(),
                label(&r.prompt.profile),
                label(&r.prompt.structure),
                label(&r.prompt.exemplar_policy),
            ];
            let cell = |v: &[Option<f64>], i: usize| num(v.get(i).copied().flatten());
            row.extend((0..3).map(|i| cell(&r.accuracy, i)));
            row.extend((0..3).map(|i| cell(&r.distribution, i)));
            row.extend(stat_cells(r.similarity));
            row.extend(stat_cells(r.diversity));
            rows.push(row);
        }
        write(dir.join("ablation.csv"), &csv_bytes(rows), &mut written)?;
    }
    Ok(written)
}

mod erased {
    use serde::Serialize;

    /// The serde name of a unit enum variant.
    pub trait Label {
        fn label(&self) -> String;
    }

    impl<T: Serialize> Label for T {
        fn label(&self) -> String {
            match serde_json::to_value(self) {
                Ok(serde_json::Value::String(s)) => s,
                Ok(other) => other.to_string(),
                Err(_) => String::new(),
            }
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn swatches(colors: &[Color]) -> String {
    let mut s = String::new();
    for c in colors {
        let hex = c.to_hex();
        let _ = write!(
            s,
            r#"<span class="swatch" style="background:{hex}" title="{hex}"></span>"#
        );
    }
    s
}

/// A standalone page listing predicted and ground-truth colors per case.
pub fn render_html(report: &MetricsReport) -> String {
    let m = &report.metadata;
    let mut h = String::new();
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(h, "<title>{} cases</title>", escape(&m.label));
    h.push_str(concat!(
        "<style>\n",
        "body{font-family:sans-serif;margin:2em}\n",
        "table{border-collapse:collapse}\n",
        "td,th{border:1px solid #ccc;padding:4px 8px;text-align:left}\n",
        ".swatch{display:inline-block;width:24px;height:24px;margin-right:2px;border:1px solid #888}\n",
        "tr.wrong td.status{color:#b00}\n",
        "tr.failed td.status{color:#888}\n",
        "</style>\n</head>\n<body>\n",
    ));
    let _ = writeln!(h, "<h1>{}</h1>", escape(&m.label));
    let _ = writeln!(
        h,
        "<p>model {} &middot; representation {} &middot; templates {} &middot; seed {}{}</p>",
        escape(&m.model),
        m.prompt.representation,
        escape(&m.template_hash),
        m.seed,
        if report.incomplete {
            " &middot; <strong>incomplete</strong>"
        } else {
            ""
        }
    );
    h.push_str("<table>\n<thead><tr><th>case</th><th>input</th><th>predicted</th><th>ground truth</th><th>status</th></tr></thead>\n<tbody>\n");
    for c in &report.cases {
        let input = match (&c.k, &c.text) {
            (Some(k), _) => format!("{k} masked"),
            (None, Some(t)) => escape(t),
            (None, None) => String::new(),
        };
        let (class, status) = match &c.status {
            CaseStatus::Ok if c.k.is_none() => ("ok", "ok".to_string()),
            CaseStatus::Ok if c.correct() => ("correct", "correct".to_string()),
            CaseStatus::Ok => ("wrong", "wrong".to_string()),
            CaseStatus::ParseFailure(e) => ("failed", format!("unparseable: {}", escape(e))),
            CaseStatus::ProviderFailure(e) => ("failed", format!("provider: {}", escape(e))),
        };
        let _ = writeln!(
            h,
            "<tr class=\"{class}\"><td>{}</td><td>{input}</td><td>{}</td><td>{}</td><td class=\"status\">{status}</td></tr>",
            escape(&c.id),
            swatches(&c.predicted),
            swatches(&c.ground_truth),
        );
    }
    h.push_str("</tbody>\n</table>\n</body>\n</html>\n");
    h
}
