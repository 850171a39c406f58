use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Label, SampleRecord};

/// A conjunction of `field=value` / `field!=value` terms over
/// [`SampleRecord`] fields, joined by `and` (or `&`). `*` matches everything.
///
/// Recognized fields: `subject_id`, `label`, `attack_type`, `spectrum`,
/// `database`, `sensor`, `split`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterExpr {
    terms: Vec<FilterTerm>,
    source: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct FilterTerm {
    field: String,
    value: String,
    negated: bool,
}

impl FilterExpr {
    pub fn parse(expr: &str) -> Result<Self> {
        let source = expr.to_string();
        let trimmed = expr.trim();
        if trimmed.is_empty() || trimmed == "*" {
            return Ok(FilterExpr {
                terms: Vec::new(),
                source,
            });
        }
        let mut terms = Vec::new();
        for raw in trimmed
            .split(|c| c == '&')
            .flat_map(|part| part.split(" and "))
        {
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let (field, value, negated) = if let Some((f, v)) = raw.split_once("!=") {
                (f, v, true)
            } else if let Some((f, v)) = raw.split_once('=') {
                (f, v, false)
            } else {
                return Err(Error::Config(format!(
                    "cannot parse filter term `{raw}` (expected field=value or field!=value)"
                )));
            };
            let field = field.trim().to_string();
            if !matches!(
                field.as_str(),
                "subject_id" | "label" | "attack_type" | "spectrum" | "database" | "sensor"
                    | "split"
            ) {
                return Err(Error::Config(format!("unknown filter field `{field}`")));
            }
            terms.push(FilterTerm {
                field,
                value: value.trim().to_string(),
                negated,
            });
        }
        Ok(FilterExpr { terms, source })
    }

    pub fn matches(&self, r: &SampleRecord) -> bool {
        self.terms.iter().all(|t| {
            let actual = match t.field.as_str() {
                "subject_id" => r.subject_id.as_str(),
                "label" => r.label.as_str(),
                "attack_type" => r.attack_type.as_str(),
                "spectrum" => r.spectrum.as_str(),
                "database" => r.database.as_str(),
                "sensor" => r.sensor.as_str(),
                "split" => r.split.as_str(),
                _ => unreachable!(),
            };
            (actual == t.value) != t.negated
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Declarative evaluation protocol: named train/test filters plus a fold
/// count (1 = fixed split, >1 = subject-disjoint cross-validation).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub name: String,
    pub train_filter: String,
    pub test_filter: String,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_folds() -> usize {
    1
}

impl ProtocolSpec {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let spec: ProtocolSpec =
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        // fail early on malformed filters
        FilterExpr::parse(&spec.train_filter)?;
        FilterExpr::parse(&spec.test_filter)?;
        Ok(spec)
    }

    pub fn select<'a>(
        &self,
        records: &'a [SampleRecord],
    ) -> Result<(Vec<&'a SampleRecord>, Vec<&'a SampleRecord>)> {
        let train = FilterExpr::parse(&self.train_filter)?;
        let test = FilterExpr::parse(&self.test_filter)?;
        Ok((
            records.iter().filter(|r| train.matches(r)).collect(),
            records.iter().filter(|r| test.matches(r)).collect(),
        ))
    }
}

/// Partitions subjects into `k` seeded groups; fold `i` tests on group `i`
/// and trains on the rest, so train/test subject sets are always disjoint and
/// every record lands in exactly one test fold.
pub fn make_subject_disjoint_folds(
    records: &[SampleRecord],
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<SampleRecord>, Vec<SampleRecord>)>> {
    if k < 2 {
        return Err(Error::Protocol(format!("fold count {k} must be >= 2")));
    }
    let subjects: BTreeSet<&str> = records.iter().map(|r| r.subject_id.as_str()).collect();
    if subjects.len() < k {
        return Err(Error::Protocol(format!(
            "{} distinct subjects cannot fill {k} folds",
            subjects.len()
        )));
    }
    let mut subjects: Vec<&str> = subjects.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);

    // spread subjects round-robin so group sizes differ by at most one
    let mut groups: Vec<HashSet<&str>> = vec![HashSet::new(); k];
    for (i, s) in subjects.iter().enumerate() {
        groups[i % k].insert(s);
    }

    let folds = groups
        .iter()
        .map(|test_subjects| {
            let (test, train): (Vec<_>, Vec<_>) = records
                .iter()
                .cloned()
                .partition(|r| test_subjects.contains(r.subject_id.as_str()));
            (train, test)
        })
        .collect();
    Ok(folds)
}

/// Seeded undersampling of the majority class down to the minority count.
/// Minority records are never touched, nothing is duplicated.
pub fn balance_by_undersampling(
    records: &[SampleRecord],
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    let bona_fide: Vec<&SampleRecord> = records
        .iter()
        .filter(|r| r.label == Label::BonaFide)
        .collect();
    let attacks: Vec<&SampleRecord> = records
        .iter()
        .filter(|r| r.label == Label::Attack)
        .collect();
    if bona_fide.is_empty() || attacks.is_empty() {
        return Err(Error::Protocol(
            "balancing requires both classes present".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (majority, minority) = if bona_fide.len() >= attacks.len() {
        (bona_fide, attacks)
    } else {
        (attacks, bona_fide)
    };
    let mut kept: Vec<&SampleRecord> = majority.clone();
    kept.shuffle(&mut rng);
    kept.truncate(minority.len());

    // preserve the original record order in the output
    let kept_paths: HashSet<&str> = kept.iter().map(|r| r.path.as_str()).collect();
    let minority_paths: HashSet<&str> = minority.iter().map(|r| r.path.as_str()).collect();
    Ok(records
        .iter()
        .filter(|r| kept_paths.contains(r.path.as_str()) || minority_paths.contains(r.path.as_str()))
        .cloned()
        .collect())
}
