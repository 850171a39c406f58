//! Manifest-driven dataset ingestion and protocol machinery.
//!
//! Datasets are described by UTF-8 CSV manifests with the header
//! `path,subject_id,label,attack_type,spectrum,database,sensor,split`.
//! Paths are relative to the manifest location. The licensed iris databases
//! never ship with this crate; the synthetic generator in [`synth`] produces
//! desk-scale stand-ins that exercise the same machinery.

mod augment;
mod images;
mod manifest;
mod protocol;
pub mod synth;
mod video;

pub use augment::Augmenter;
pub use images::{image_to_chw, load_image_chw, IMAGENET_MEAN, IMAGENET_STD};
pub use manifest::{load_manifest, write_manifest, Manifest, MANIFEST_HEADER};
pub use protocol::{
    balance_by_undersampling, make_subject_disjoint_folds, FilterExpr, ProtocolSpec,
};
pub use video::extract_video_frames;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    BonaFide,
    Attack,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::BonaFide => "bona_fide",
            Label::Attack => "attack",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bona_fide" => Ok(Label::BonaFide),
            "attack" => Ok(Label::Attack),
            other => Err(Error::Input(format!("unknown label `{other}`"))),
        }
    }
}

/// Soft/transparent lenses count as bona fide, so `None` is the only
/// attack_type compatible with a bona fide label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackType {
    None,
    TexturedLens,
    Printout,
    PrintLens,
    Replay,
}

impl AttackType {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackType::None => "none",
            AttackType::TexturedLens => "textured_lens",
            AttackType::Printout => "printout",
            AttackType::PrintLens => "print_lens",
            AttackType::Replay => "replay",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackType::None),
            "textured_lens" => Ok(AttackType::TexturedLens),
            "printout" => Ok(AttackType::Printout),
            "print_lens" => Ok(AttackType::PrintLens),
            "replay" => Ok(AttackType::Replay),
            other => Err(Error::Input(format!("unknown attack_type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spectrum {
    #[serde(rename = "nir")]
    Nir,
    #[serde(rename = "vis")]
    Vis,
}

impl Spectrum {
    pub fn as_str(self) -> &'static str {
        match self {
            Spectrum::Nir => "nir",
            Spectrum::Vis => "vis",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nir" => Ok(Spectrum::Nir),
            "vis" => Ok(Spectrum::Vis),
            other => Err(Error::Input(format!("unknown spectrum `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::Input(format!("unknown split `{other}`"))),
        }
    }
}

/// One image (or video frame) with its provenance fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub path: String,
    pub subject_id: String,
    pub label: Label,
    pub attack_type: AttackType,
    pub spectrum: Spectrum,
    pub database: String,
    pub sensor: String,
    pub split: Split,
    /// Frame index when the record was expanded from a video; not part of the
    /// manifest schema.
    #[serde(skip)]
    pub frame: Option<usize>,
}

impl SampleRecord {
    /// The label/attack_type consistency rule every record must satisfy.
    pub fn validate(&self) -> Result<()> {
        let bona_fide = self.label == Label::BonaFide;
        let no_attack = self.attack_type == AttackType::None;
        if bona_fide != no_attack {
            return Err(Error::Input(format!(
                "label `{}` inconsistent with attack_type `{}` for `{}`",
                self.label.as_str(),
                self.attack_type.as_str(),
                self.path
            )));
        }
        Ok(())
    }
}
