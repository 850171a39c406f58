use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{AttackType, Label, SampleRecord, Spectrum, Split};

pub const MANIFEST_HEADER: [&str; 8] = [
    "path",
    "subject_id",
    "label",
    "attack_type",
    "spectrum",
    "database",
    "sensor",
    "split",
];

/// A loaded manifest: validated records plus the directory they resolve
/// against.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub dir: PathBuf,
    pub records: Vec<SampleRecord>,
}

impl Manifest {
    pub fn abs_path(&self, record: &SampleRecord) -> PathBuf {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Loads and validates a manifest CSV. Rejects missing/extra columns, unknown
/// enum values, label/attack_type inconsistencies, and duplicate paths, each
/// with the offending line number. CRLF manifests parse identically to LF.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(parse_err(
            path,
            1,
            format!(
                "header mismatch: expected `{}`, got `{}`",
                MANIFEST_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let row = row.map_err(|e| parse_err(path, line, e.to_string()))?;
        if row.len() != MANIFEST_HEADER.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, got {}", MANIFEST_HEADER.len(), row.len()),
            ));
        }
        let record = SampleRecord {
            path: row[0].to_string(),
            subject_id: row[1].to_string(),
            label: Label::parse(&row[2]).map_err(|e| parse_err(path, line, e.to_string()))?,
            attack_type: AttackType::parse(&row[3])
                .map_err(|e| parse_err(path, line, e.to_string()))?,
            spectrum: Spectrum::parse(&row[4])
                .map_err(|e| parse_err(path, line, e.to_string()))?,
            database: row[5].to_string(),
            sensor: row[6].to_string(),
            split: Split::parse(&row[7]).map_err(|e| parse_err(path, line, e.to_string()))?,
            frame: None,
        };
        record
            .validate()
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        if !seen.insert(record.path.clone()) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate path `{}`", record.path),
            ));
        }
        records.push(record);
    }

    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Manifest { dir, records })
}

/// Writes records in the canonical column order.
pub fn write_manifest(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer
        .write_record(MANIFEST_HEADER)
        .map_err(|e| Error::Input(e.to_string()))?;
    for r in records {
        writer
            .write_record([
                r.path.as_str(),
                r.subject_id.as_str(),
                r.label.as_str(),
                r.attack_type.as_str(),
                r.spectrum.as_str(),
                r.database.as_str(),
                r.sensor.as_str(),
                r.split.as_str(),
            ])
            .map_err(|e| Error::Input(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
