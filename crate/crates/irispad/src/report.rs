//! Experiment matrices, formatted tables, and score histograms.
//!
//! A matrix spec is a TOML file naming the (train, test) cells of an
//! intra-database, cross-database, or cross-spectrum grid and the score file
//! backing each. Missing score files mark the cell absent rather than
//! aborting the run, so partial experiments still render.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::scores::{read_scores, ScoreRecord};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub name: String,
    #[serde(default)]
    pub cells: Vec<CellSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSpec {
    pub train: String,
    pub test: String,
    pub scores: PathBuf,
}

impl MatrixSpec {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub train: String,
    pub test: String,
    pub scores_path: PathBuf,
    /// `None` marks an absent cell (score file missing or unreadable).
    pub report: Option<MetricsReport>,
    pub note: Option<String>,
}

/// Evaluates every cell; absent cells carry the failure note instead of
/// aborting the rest.
pub fn run_protocol_matrix(
    spec: &MatrixSpec,
    base_dir: &Path,
    threshold: f64,
    bpcer_target: f64,
) -> Vec<CellResult> {
    spec.cells
        .iter()
        .map(|cell| {
            let path = if cell.scores.is_absolute() {
                cell.scores.clone()
            } else {
                base_dir.join(&cell.scores)
            };
            let (report, note) = match read_scores(&path) {
                Ok(scores) => (
                    Some(MetricsReport::compute(&scores, threshold, bpcer_target)),
                    None,
                ),
                Err(e) => (None, Some(e.to_string())),
            };
            CellResult {
                train: cell.train.clone(),
                test: cell.test.clone(),
                scores_path: path,
                report,
                note,
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Machine-readable cell table. Absent metrics are empty fields.
pub fn matrix_csv(cells: &[CellResult]) -> String {
    let mut out = String::from(
        "train,test,n_bona_fide,n_attack,apcer,bpcer,hter,eer,eer_threshold,tdr,ccr,fdr\n",
    );
    for cell in cells {
        match &cell.report {
            Some(r) => {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    cell.train,
                    cell.test,
                    r.n_bona_fide,
                    r.n_attack,
                    fmt_opt(r.apcer),
                    fmt_opt(r.bpcer),
                    fmt_opt(r.hter),
                    fmt_opt(r.eer.map(|e| e.eer)),
                    fmt_opt(r.eer.map(|e| e.threshold)),
                    fmt_opt(r.tdr.map(|t| t.tdr)),
                    fmt_opt(r.ccr),
                    fmt_opt(r.fdr),
                ));
            }
            None => out.push_str(&format!("{},{},,,,,,,,,,\n", cell.train, cell.test)),
        }
    }
    out
}

/// Aligned human-readable table in the paper's train-row / test-column style.
pub fn matrix_text(name: &str, cells: &[CellResult]) -> String {
    let mut rows: Vec<[String; 6]> = vec![[
        "train".into(),
        "test".into(),
        "APCER".into(),
        "BPCER".into(),
        "HTER".into(),
        "EER".into(),
    ]];
    for cell in cells {
        let (a, b, h, e) = match &cell.report {
            Some(r) => (
                fmt_opt(r.apcer),
                fmt_opt(r.bpcer),
                fmt_opt(r.hter),
                fmt_opt(r.eer.map(|e| e.eer)),
            ),
            None => (
                "absent".into(),
                "absent".into(),
                "absent".into(),
                "absent".into(),
            ),
        };
        rows.push([cell.train.clone(), cell.test.clone(), a, b, h, e]);
    }
    let mut widths = [0usize; 6];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = format!("matrix: {name}\n");
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// The metrics block the CLI prints; absent metrics say so explicitly.
pub fn metrics_text(report: &MetricsReport) -> String {
    let line = |name: &str, v: Option<f64>, unit: &str| match v {
        Some(v) => format!("{name:<22} {v:.4}{unit}\n"),
        None => format!("{name:<22} absent\n"),
    };
    let mut out = String::new();
    out.push_str(&format!(
        "samples: {} bona fide, {} attack\n",
        report.n_bona_fide, report.n_attack
    ));
    out.push_str(&format!("threshold: {}\n", report.threshold));
    out.push_str(&line("APCER", report.apcer, "%"));
    out.push_str(&line("BPCER", report.bpcer, "%"));
    out.push_str(&line("HTER", report.hter, "%"));
    match report.eer {
        Some(e) => out.push_str(&format!(
            "{:<22} {:.4}% (threshold {:.6})\n",
            "EER", e.eer, e.threshold
        )),
        None => out.push_str(&format!("{:<22} absent\n", "EER")),
    }
    match report.tdr {
        Some(t) => out.push_str(&format!(
            "{:<22} {:.4}% (threshold {:.6}, BPCER {:.4}%)\n",
            format!("TDR@{}%BPCER", report.bpcer_target),
            t.tdr,
            t.threshold,
            t.achieved_bpcer
        )),
        None => out.push_str(&format!(
            "{:<22} absent\n",
            format!("TDR@{}%BPCER", report.bpcer_target)
        )),
    }
    out.push_str(&line("CCR", report.ccr, "%"));
    out.push_str(&line("FDR (unscaled)", report.fdr, ""));
    for (attack, apcer) in &report.apcer_by_type {
        out.push_str(&format!(
            "{:<22} {apcer:.4}%\n",
            format!("APCER[{}]", attack.as_str())
        ));
    }
    out
}

/// Per-class score histogram over `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bins: usize,
    pub bona_fide: Vec<usize>,
    pub attack: Vec<usize>,
    pub fdr: Option<f64>,
}

pub fn histogram(scores: &[ScoreRecord], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Config("histogram needs >= 1 bin".into()));
    }
    let mut bona_fide = vec![0usize; bins];
    let mut attack = vec![0usize; bins];
    for s in scores {
        let bin = ((s.score * bins as f64) as usize).min(bins - 1);
        match s.label {
            Label::BonaFide => bona_fide[bin] += 1,
            Label::Attack => attack[bin] += 1,
        }
    }
    Ok(Histogram {
        bins,
        bona_fide,
        attack,
        fdr: crate::metrics::fdr(scores),
    })
}

/// Binned counts per class, FDR recorded in the header comment.
pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = format!(
        "# fdr={}\nbin_low,bin_high,bona_fide,attack\n",
        h.fdr.map(|f| format!("{f:.6}")).unwrap_or_else(|| "absent".into())
    );
    for i in 0..h.bins {
        out.push_str(&format!(
            "{:.4},{:.4},{},{}\n",
            i as f64 / h.bins as f64,
            (i + 1) as f64 / h.bins as f64,
            h.bona_fide[i],
            h.attack[i],
        ));
    }
    out
}
