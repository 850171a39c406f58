//! Iris presentation attack detection with pixel-wise binary supervision.
//!
//! This crate implements three detector variants over a truncated
//! densely-connected backbone — a binary-supervised baseline, pixel-wise
//! binary supervision (PBS), and attention-based PBS (A-PBS) — together with
//! the full experiment machinery around them: manifest-driven datasets with
//! subject-disjoint protocols, the published training recipe, ISO/IEC
//! 30107-3 metrics, cross-database evaluation matrices, and Score-CAM
//! explainability. A synthetic iris generator provides desk-scale data so
//! every pipeline stage is exercisable without licensed iris databases.
//!
//! The `irispad` binary exposes each stage as a subcommand; the long-form
//! guide lives in the `book/` directory of the repository.
//!
//! # Computing metrics from scores
//!
//! ```
//! use irispad::data::{AttackType, Label, Spectrum};
//! use irispad::metrics::MetricsReport;
//! use irispad::scores::ScoreRecord;
//!
//! let rec = |label, attack_type, score| ScoreRecord {
//!     path: "x.png".into(),
//!     subject_id: "s1".into(),
//!     label,
//!     attack_type,
//!     database: "demo".into(),
//!     spectrum: Spectrum::Nir,
//!     frame: None,
//!     score,
//! };
//! let scores = vec![
//!     rec(Label::BonaFide, AttackType::None, 0.9),
//!     rec(Label::BonaFide, AttackType::None, 0.8),
//!     rec(Label::Attack, AttackType::TexturedLens, 0.2),
//!     rec(Label::Attack, AttackType::Printout, 0.6),
//! ];
//! let report = MetricsReport::compute(&scores, 0.5, 0.2);
//! assert_eq!(report.apcer, Some(50.0)); // one of two attacks >= 0.5
//! assert_eq!(report.bpcer, Some(0.0));
//! assert_eq!(report.hter, Some(25.0));
//! ```
//!
//! # Selecting records with protocol filters
//!
//! ```
//! use irispad::data::{AttackType, FilterExpr, Label, SampleRecord, Spectrum, Split};
//!
//! let record = SampleRecord {
//!     path: "a.png".into(),
//!     subject_id: "s3".into(),
//!     label: Label::Attack,
//!     attack_type: AttackType::Replay,
//!     spectrum: Spectrum::Vis,
//!     database: "pavid".into(),
//!     sensor: "phone".into(),
//!     split: Split::Test,
//!     frame: None,
//! };
//! let filter = FilterExpr::parse("database=pavid & split=test & label=attack").unwrap();
//! assert!(filter.matches(&record));
//! let other = FilterExpr::parse("spectrum!=vis").unwrap();
//! assert!(!other.matches(&record));
//! ```

pub mod attention;
pub mod cam;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod report;
pub mod scores;
pub mod train;

pub use error::{Error, Result};
