//! PAD score records: the unit of all metric computation.
//!
//! Scores live in `[0,1]` with bona-fide orientation (higher = more likely
//! bona fide). Score files are UTF-8 CSV with the header
//! `path,subject_id,label,attack_type,database,spectrum,frame,score`,
//! scores printed to 6 decimals.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{AttackType, Label, Spectrum};
use crate::error::{Error, Result};

pub const SCORE_HEADER: [&str; 8] = [
    "path",
    "subject_id",
    "label",
    "attack_type",
    "database",
    "spectrum",
    "frame",
    "score",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub path: String,
    pub subject_id: String,
    pub label: Label,
    pub attack_type: AttackType,
    pub database: String,
    pub spectrum: Spectrum,
    pub frame: Option<usize>,
    pub score: f64,
}

pub fn write_scores(path: impl AsRef<Path>, scores: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(SCORE_HEADER)
        .map_err(|e| Error::Input(e.to_string()))?;
    for s in scores {
        w.write_record([
            s.path.clone(),
            s.subject_id.clone(),
            s.label.as_str().to_string(),
            s.attack_type.as_str().to_string(),
            s.database.clone(),
            s.spectrum.as_str().to_string(),
            s.frame.map(|f| f.to_string()).unwrap_or_default(),
            format!("{:.6}", s.score),
        ])
        .map_err(|e| Error::Input(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let row = row.map_err(|e| perr(e.to_string()))?;
        if row.len() != SCORE_HEADER.len() {
            return Err(perr(format!("expected {} columns", SCORE_HEADER.len())));
        }
        let score: f64 = row[7]
            .parse()
            .map_err(|_| perr(format!("bad score `{}`", &row[7])))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(perr(format!("score {score} outside [0,1]")));
        }
        out.push(ScoreRecord {
            path: row[0].to_string(),
            subject_id: row[1].to_string(),
            label: Label::parse(&row[2]).map_err(|e| perr(e.to_string()))?,
            attack_type: AttackType::parse(&row[3]).map_err(|e| perr(e.to_string()))?,
            database: row[4].to_string(),
            spectrum: Spectrum::parse(&row[5]).map_err(|e| perr(e.to_string()))?,
            frame: if row[6].is_empty() {
                None
            } else {
                Some(row[6].parse().map_err(|_| perr(format!("bad frame `{}`", &row[6])))?)
            },
            score,
        });
    }
    Ok(out)
}

/// Collapses per-frame scores to one record per video path, using the mean
/// frame score. Records without a frame index pass through untouched.
pub fn aggregate_by_video(scores: &[ScoreRecord]) -> Vec<ScoreRecord> {
    let mut grouped: BTreeMap<String, Vec<&ScoreRecord>> = BTreeMap::new();
    let mut passthrough = Vec::new();
    for s in scores {
        if s.frame.is_some() {
            grouped.entry(s.path.clone()).or_default().push(s);
        } else {
            passthrough.push(s.clone());
        }
    }
    for (_, frames) in grouped {
        let mean = frames.iter().map(|s| s.score).sum::<f64>() / frames.len() as f64;
        let mut rec = frames[0].clone();
        rec.frame = None;
        rec.score = mean;
        passthrough.push(rec);
    }
    passthrough
}
