//! Markdown and CSV views of a report.

use std::fmt::Write as _;

use crate::domain::{Aggregate, EvalReport, Scheme, Setting, AVG_MODEL};
use crate::error::{Error, Result};

const SETTINGS: [Setting; 2] = [Setting::ZS, Setting::ID];

fn present_schemes(report: &EvalReport) -> Vec<Scheme> {
    Scheme::ALL
        .into_iter()
        .filter(|s| report.aggregates.iter().any(|a| a.scheme == *s))
        .collect()
}

/// Model names in first-seen order with `Avg` last.
fn models(report: &EvalReport) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for a in &report.aggregates {
        if a.model != AVG_MODEL && !out.contains(&a.model) {
            out.push(a.model.clone());
        }
    }
    if report.aggregates.iter().any(|a| a.model == AVG_MODEL) {
        out.push(AVG_MODEL.to_string());
    }
    out
}

/// Best and second-best distinct means in a row (lower is better).
fn podium(means: &[f64]) -> (Option<f64>, Option<f64>) {
    let mut v: Vec<f64> = means.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    (v.first().copied(), v.get(1).copied())
}

/// Results tables, one per setting: models as rows, schemes as columns with
/// `Raw` set apart, `mean ± std` per cell, the best mean in bold and the
/// second underlined. Each table is followed by the `Avg` improvement matrix.
pub fn render_markdown(report: &EvalReport) -> String {
    let schemes = present_schemes(report);
    let (normalized, raw): (Vec<Scheme>, Vec<Scheme>) = schemes.iter().partition(|s| **s != Scheme::Raw);
    let models = models(report);
    let mut out = String::new();

    for setting in SETTINGS {
        if !report.aggregates.iter().any(|a| a.setting == setting) {
            continue;
        }
        let _ = writeln!(out, "## {setting}\n");
        let mut header = String::from("| Model |");
        let mut rule = String::from("|---|");
        for s in &normalized {
            let _ = write!(header, " {s} |");
            rule.push_str("---:|");
        }
        if !raw.is_empty() {
            header.push_str(" | Raw |");
            rule.push_str("---|---:|");
        }
        let _ = writeln!(out, "{header}\n{rule}");

        for model in &models {
            let cells: Vec<Option<&Aggregate>> = schemes
                .iter()
                .map(|s| report.aggregate(model, *s, setting))
                .collect();
            if cells.iter().all(Option::is_none) {
                continue;
            }
            let means: Vec<f64> = cells.iter().flatten().map(|a| a.mean).collect();
            let (best, second) = podium(&means);
            let _ = write!(out, "| {model} |");
            for (s, cell) in schemes.iter().zip(&cells) {
                if *s == Scheme::Raw {
                    out.push_str(" |");
                }
                let text = match cell {
                    None => "n/a".to_string(),
                    Some(a) if model == AVG_MODEL => format!("{:.3}", a.mean),
                    Some(a) => format!("{:.3} ± {:.3}", a.mean, a.std),
                };
                let text = match cell.map(|a| a.mean) {
                    Some(m) if Some(m) == best => format!("**{text}**"),
                    Some(m) if Some(m) == second => format!("<u>{text}</u>"),
                    _ => text,
                };
                let _ = write!(out, " {text} |");
            }
            out.push('\n');
        }

        if let Some(t) = report.improvement(AVG_MODEL, setting) {
            let _ = writeln!(out, "\n### {setting} improvement Δ(r→m) in %, {AVG_MODEL}\n");
            let mut header = String::from("| r \\ m |");
            let mut rule = String::from("|---|");
            for s in &t.schemes {
                let _ = write!(header, " {s} |");
                rule.push_str("---:|");
            }
            let _ = writeln!(out, "{header}\n{rule}");
            for (r, row) in t.schemes.iter().zip(&t.delta) {
                let _ = write!(out, "| {r} |");
                for d in row {
                    match d {
                        Some(d) => {
                            let _ = write!(out, " {d:.1} |");
                        }
                        None => out.push_str(" n/a |"),
                    }
                }
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}

const CSV_HEADER: [&str; 6] = ["model", "setting", "scheme", "mean", "std", "variants"];

/// Aggregates as CSV with shortest round-trip number formatting.
pub fn render_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::BadStats(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for a in &report.aggregates {
        w.write_record([
            a.model.clone(),
            a.setting.to_string(),
            a.scheme.to_string(),
            a.mean.to_string(),
            a.std.to_string(),
            a.variants.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::BadStats(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Inverse of [`render_csv`].
pub fn parse_aggregates_csv(text: &str) -> Result<Vec<Aggregate>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let bad = |row: usize, msg: String| Error::BadSpec(format!("aggregates CSV row {row}: {msg}"));
    let header = r.headers().map_err(|e| bad(0, e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(0, format!("unexpected header {header:?}")));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| bad(i, e.to_string()))?;
            let num = |j: usize| rec[j].parse::<f64>().map_err(|e| bad(i, e.to_string()));
            let setting = match &rec[1] {
                "ZS" => Setting::ZS,
                "ID" => Setting::ID,
                s => return Err(bad(i, format!("unknown setting {s:?}"))),
            };
            Ok(Aggregate {
                model: rec[0].to_string(),
                setting,
                scheme: Scheme::parse(&rec[2]).ok_or_else(|| bad(i, format!("unknown scheme {:?}", &rec[2])))?,
                mean: num(3)?,
                std: num(4)?,
                variants: rec[5].parse().map_err(|e: std::num::ParseIntError| bad(i, e.to_string()))?,
            })
        })
        .collect()
}
