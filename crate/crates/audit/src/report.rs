//! Output artifacts. Every file starts with a provenance stamp and contains
//! no timestamps, so identical inputs give byte-identical outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use valence_core::{DecileReport, EffectSizeResult, ValNormScore};

use crate::error::AuditError;

#[derive(Debug, Clone, Serialize)]
pub struct Stamp {
    pub command: String,
    pub config_digest: String,
    pub seed: Option<u64>,
    pub taxonomy_version: String,
    pub model: String,
    pub layer: Option<u32>,
}

impl Stamp {
    pub fn for_layer(&self, layer: u32) -> Stamp {
        Stamp {
            layer: Some(layer),
            ..self.clone()
        }
    }

    /// `# key=value ...` line used at the top of CSV and text artifacts.
    pub fn comment_line(&self) -> String {
        format!(
            "# command={} config_digest={} seed={} taxonomy={} model={} layer={}\n",
            self.command,
            self.config_digest,
            opt(self.seed),
            self.taxonomy_version,
            self.model,
            opt(self.layer),
        )
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), AuditError> {
    fs::write(path, contents)
        .map_err(|e| AuditError::input(format!("cannot write {}: {e}", path.display())))
}

fn csv_body<R: Serialize>(rows: &[R]) -> Result<String, AuditError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| AuditError::input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `rows` as CSV preceded by the stamp comment.
pub fn write_csv<R: Serialize>(path: &Path, stamp: &Stamp, rows: &[R]) -> Result<(), AuditError> {
    let mut out = stamp.comment_line();
    out.push_str(&csv_body(rows)?);
    write_file(path, &out)
}

/// Reads a CSV written by [`write_csv`], skipping the stamp line.
pub fn read_csv_records(path: &Path) -> Result<Vec<csv::StringRecord>, AuditError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    Ok(rdr.records().collect::<Result<_, _>>()?)
}

/// One SC-WEAT result in the fixed CSV row schema.
#[derive(Debug, Clone, Serialize)]
pub struct EffectRow {
    pub test_name: String,
    pub model: String,
    pub layer: u32,
    pub method: String,
    pub d: f64,
    pub p_value: f64,
    pub exact: bool,
    pub n_a: usize,
    pub n_b: usize,
    pub seed: Option<u64>,
}

impl EffectRow {
    pub fn new(test_name: String, model: &str, layer: u32, r: &EffectSizeResult, seed: Option<u64>) -> Self {
        EffectRow {
            test_name,
            model: model.to_string(),
            layer,
            method: r.method.to_string(),
            d: r.d,
            p_value: r.p_value,
            exact: r.exact,
            n_a: r.n_a,
            n_b: r.n_b,
            seed,
        }
    }
}

/// Aligned table of differential valence associations, one row per bias.
pub fn bias_table(stamp: &Stamp, rows: &[(String, EffectSizeResult)]) -> String {
    let mut out = stamp.comment_line();
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(9).max(9);
    let _ = writeln!(out, "SC-WEAT Differential Valence Association");
    let _ = writeln!(out, "model: {}  layer: {}", stamp.model, opt(stamp.layer));
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>10}  {:<8}  {:>6}  {:>6}",
        "Bias Test", "d", "p", "p-source", "n_a", "n_b"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 48));
    for (name, r) in rows {
        let source = if r.exact {
            "exact"
        } else if r.approximated {
            "normal"
        } else {
            "sampled"
        };
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.2}  {:>10.3e}  {:<8}  {:>6}  {:>6}",
            name, r.d, r.p_value, source, r.n_a, r.n_b
        );
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ValNormRow {
    pub model: String,
    pub layer: u32,
    pub method: String,
    pub rho: f64,
    pub n_words: usize,
    pub lexicon_size: usize,
}

impl ValNormRow {
    pub fn new(model: &str, score: &ValNormScore, lexicon_size: usize) -> Self {
        ValNormRow {
            model: model.to_string(),
            layer: score.layer_index,
            method: score.method.to_string(),
            rho: score.rho,
            n_words: score.n_words,
            lexicon_size,
        }
    }
}

/// Whitespace-separated `layer projection cosine` series.
pub fn valnorm_plot_data(stamp: &Stamp, rows: &[ValNormRow]) -> String {
    let mut out = stamp.comment_line();
    out.push_str("# layer projection cosine\n");
    let mut layers: Vec<u32> = rows.iter().map(|r| r.layer).collect();
    layers.dedup();
    for layer in layers {
        let get = |m: &str| {
            rows.iter()
                .find(|r| r.layer == layer && r.method == m)
                .map_or_else(|| "nan".to_string(), |r| r.rho.to_string())
        };
        let _ = writeln!(out, "{layer} {} {}", get("projection"), get("cosine"));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DecileRow {
    pub category: String,
    pub top_pct: f64,
    pub bottom_pct: f64,
}

/// Categories ordered by top-subset share, descending, then by name.
pub fn decile_rows(report: &DecileReport) -> Vec<DecileRow> {
    let mut rows: Vec<DecileRow> = report
        .top
        .iter()
        .map(|(c, &top)| DecileRow {
            category: c.clone(),
            top_pct: top,
            bottom_pct: report.bottom.get(c).copied().unwrap_or(0.0),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.top_pct
            .total_cmp(&a.top_pct)
            .then_with(|| a.category.cmp(&b.category))
    });
    rows
}

pub fn decile_table(stamp: &Stamp, report: &DecileReport) -> String {
    let mut out = stamp.comment_line();
    let pct = 100.0 * report.q;
    let _ = writeln!(
        out,
        "Occurrences in the {pct}% most pleasant / unpleasant contexts ({} of {} each)",
        report.subset_size, report.total
    );
    let _ = writeln!(out, "{:<16}  {:>9}  {:>11}", "category", "pleasant", "unpleasant");
    for r in decile_rows(report) {
        let _ = writeln!(out, "{:<16}  {:>8.2}%  {:>10.2}%", r.category, r.top_pct, r.bottom_pct);
    }
    out
}

pub fn ranked_list(stamp: &Stamp, report: &DecileReport) -> String {
    let mut out = stamp.comment_line();
    out.push_str("rank\tcontext_id\tprojection\tsentence\n");
    for (i, r) in report.ranked.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", i + 1, r.context_id, r.projection, r.text);
    }
    out
}
