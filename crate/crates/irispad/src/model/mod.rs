//! The three network variants over the truncated backbone.
//!
//! - `baseline`: global average pool over the high-level features, then a
//!   fully-connected binary output;
//! - `pbs`: a 1x1 convolution turns the high-level features into a 14x14
//!   (input/16) intermediate map supervised pixel-wise, with the binary
//!   output read off the flattened map;
//! - `apbs`: the three tapped levels are refined by spatial attention,
//!   fused into the intermediate map, then classified like `pbs`.
//!
//! ```
//! use irispad::model::{BackboneSpec, ModelConfig, PadModel, Variant};
//!
//! let config = ModelConfig {
//!     variant: Variant::Apbs,
//!     input_size: 224,
//!     pretrained_init: false,
//!     pretrained_path: None,
//!     backbone: BackboneSpec::default(), // the full DenseNet-121-style trunk
//! };
//! assert_eq!(config.map_size(), 14);
//!
//! let model = PadModel::build(&config, 0).unwrap();
//! let image = vec![0.0f32; 3 * 224 * 224];
//! let pred = &model.predict(&[image]).unwrap()[0];
//! assert!((0.0..=1.0).contains(&pred.binary_probability));
//! assert_eq!(pred.intermediate_map.as_ref().unwrap().size, 14);
//! ```

mod backbone;

pub use backbone::{Backbone, BackboneSpec, ChannelWidths, LevelFeatures};

use std::path::PathBuf;

use candle_core::{DType, Device, Tensor};
use candle_nn::{conv2d, linear, Conv2d, Conv2dConfig, Linear, Module, VarBuilder, VarMap};
use serde::{Deserialize, Serialize};

use crate::attention::{refine, Level, LevelFusion, SpatialAttention};
use crate::error::{Error, Result};
use crate::nn::{seeded_init, BatchNorm2d};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    Pbs,
    Apbs,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Pbs => "pbs",
            Variant::Apbs => "apbs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "pbs" => Ok(Variant::Pbs),
            "apbs" => Ok(Variant::Apbs),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Reduction factor from input to intermediate map: two stride-2 stem stages
/// and two transitions.
pub const MAP_REDUCTION: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    #[serde(default)]
    pub pretrained_init: bool,
    #[serde(default)]
    pub pretrained_path: Option<PathBuf>,
    #[serde(default)]
    pub backbone: BackboneSpec,
}

fn default_input_size() -> usize {
    224
}

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        ModelConfig {
            variant,
            input_size: default_input_size(),
            pretrained_init: false,
            pretrained_path: None,
            backbone: BackboneSpec::default(),
        }
    }

    pub fn map_size(&self) -> usize {
        self.input_size / MAP_REDUCTION
    }

    /// Channel widths the configured backbone will actually produce,
    /// recorded for audit alongside checkpoints.
    pub fn channel_widths(&self) -> ChannelWidths {
        self.backbone.widths()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size % MAP_REDUCTION != 0 || self.input_size < 2 * MAP_REDUCTION {
            return Err(Error::Config(format!(
                "input_size {} must be a multiple of {MAP_REDUCTION} and at least {}",
                self.input_size,
                2 * MAP_REDUCTION
            )));
        }
        if self.pretrained_init && self.pretrained_path.is_none() {
            return Err(Error::PretrainedUnavailable(
                "pretrained_init set but no pretrained_path configured".into(),
            ));
        }
        Ok(())
    }
}

/// The intermediate supervision map of one sample, post-forward.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateMap {
    pub size: usize,
    pub values: Vec<f32>,
}

/// Per-sample forward result.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBundle {
    pub binary_logit: f32,
    pub binary_probability: f32,
    pub intermediate_map: Option<IntermediateMap>,
}

/// Batched forward result still on the graph, used by the trainer.
pub struct ForwardOutput {
    /// (N,) logits
    pub logits: Tensor,
    /// (N,) probabilities
    pub probabilities: Tensor,
    /// (N,1,m,m) intermediate maps; absent for the baseline variant
    pub map: Option<Tensor>,
    pub features: LevelFeatures,
}

enum Head {
    Baseline {
        fc: Linear,
    },
    Pbs {
        map_conv: Conv2d,
        fc: Linear,
    },
    Apbs {
        attn_low: SpatialAttention,
        attn_mid: SpatialAttention,
        attn_high: SpatialAttention,
        fusion: LevelFusion,
        fc: Linear,
    },
}

pub struct PadModel {
    config: ModelConfig,
    varmap: VarMap,
    device: Device,
    dtype: DType,
    backbone: Backbone,
    head: Head,
}

impl std::fmt::Debug for PadModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PadModel")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl PadModel {
    /// Builds a model with deterministic seeded initialization. When
    /// `pretrained_init` is set, backbone weights are loaded from
    /// `pretrained_path` afterwards; a missing file is a hard error, never a
    /// silent random init.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        Self::build_with_dtype(config, seed, DType::F32)
    }

    pub fn build_with_dtype(config: &ModelConfig, seed: u64, dtype: DType) -> Result<Self> {
        config.validate()?;
        let device = Device::Cpu;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, dtype, &device);

        let backbone = Backbone::new(config.backbone, vb.pp("backbone"))?;
        let widths = config.backbone.widths();
        let map_len = config.map_size() * config.map_size();

        let head = match config.variant {
            Variant::Baseline => Head::Baseline {
                fc: linear(widths.high, 1, vb.pp("head.fc"))?,
            },
            Variant::Pbs => Head::Pbs {
                map_conv: conv2d(
                    widths.high,
                    1,
                    1,
                    Conv2dConfig::default(),
                    vb.pp("head.map_conv"),
                )?,
                fc: linear(map_len, 1, vb.pp("head.fc"))?,
            },
            Variant::Apbs => Head::Apbs {
                attn_low: SpatialAttention::new(Level::Low.kernel_size(), vb.pp("head.attn.low"))?,
                attn_mid: SpatialAttention::new(Level::Mid.kernel_size(), vb.pp("head.attn.mid"))?,
                attn_high: SpatialAttention::new(
                    Level::High.kernel_size(),
                    vb.pp("head.attn.high"),
                )?,
                fusion: LevelFusion::new(
                    widths.low + widths.mid + widths.high,
                    config.map_size(),
                    vb.pp("head.fuse"),
                )?,
                fc: linear(map_len, 1, vb.pp("head.fc"))?,
            },
        };

        seeded_init(&varmap, seed)?;

        let model = PadModel {
            config: config.clone(),
            varmap,
            device,
            dtype,
            backbone,
            head,
        };
        if config.pretrained_init {
            model.load_pretrained_backbone()?;
        }
        Ok(model)
    }

    fn load_pretrained_backbone(&self) -> Result<()> {
        let path = self
            .config
            .pretrained_path
            .as_ref()
            .ok_or_else(|| {
                Error::PretrainedUnavailable("no pretrained_path configured".into())
            })?;
        if !path.exists() {
            return Err(Error::PretrainedUnavailable(format!(
                "weight file {} does not exist",
                path.display()
            )));
        }
        let tensors = candle_core::safetensors::load(path, &self.device)
            .map_err(|e| Error::PretrainedUnavailable(e.to_string()))?;
        let data = self.varmap.data().lock().unwrap();
        let mut matched = 0usize;
        for (name, var) in data.iter() {
            if !name.starts_with("backbone.") {
                continue;
            }
            if let Some(t) = tensors.get(name) {
                var.set(&t.to_dtype(self.dtype)?)?;
                matched += 1;
            }
        }
        if matched == 0 {
            return Err(Error::PretrainedUnavailable(format!(
                "{} contains no backbone.* tensors",
                path.display()
            )));
        }
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Every batch norm with its checkpoint name.
    pub fn batch_norms(&self) -> Vec<(String, &BatchNorm2d)> {
        self.backbone.batch_norms("backbone")
    }

    pub fn forward_t(&self, batch: &Tensor, train: bool) -> Result<ForwardOutput> {
        let (_, c, h, w) = batch.dims4().map_err(|_| {
            Error::Input(format!(
                "expected a N x 3 x S x S batch, got shape {:?}",
                batch.dims()
            ))
        })?;
        if c != 3 || h != self.config.input_size || w != self.config.input_size {
            return Err(Error::Input(format!(
                "batch shape {:?} does not match configured input size 3x{}x{}",
                batch.dims(),
                self.config.input_size,
                self.config.input_size
            )));
        }
        let features = self.backbone.forward_t(batch, train)?;
        let (logits, map) = match &self.head {
            Head::Baseline { fc } => {
                let (_, _, hh, _) = features.high.dims4()?;
                let pooled = features.high.avg_pool2d(hh)?.flatten_from(1)?;
                (fc.forward(&pooled)?.squeeze(1)?, None)
            }
            Head::Pbs { map_conv, fc } => {
                let map = map_conv.forward(&features.high)?;
                let logits = fc.forward(&map.flatten_from(1)?)?.squeeze(1)?;
                (logits, Some(map))
            }
            Head::Apbs {
                attn_low,
                attn_mid,
                attn_high,
                fusion,
                fc,
            } => {
                let refined_low = refine(&features.low, &attn_low.forward(&features.low)?)?;
                let refined_mid = refine(&features.mid, &attn_mid.forward(&features.mid)?)?;
                let refined_high = refine(&features.high, &attn_high.forward(&features.high)?)?;
                let map = fusion.forward(&refined_low, &refined_mid, &refined_high)?;
                let logits = fc.forward(&map.flatten_from(1)?)?.squeeze(1)?;
                (logits, Some(map))
            }
        };
        let probabilities = candle_nn::ops::sigmoid(&logits)?;
        Ok(ForwardOutput {
            logits,
            probabilities,
            map,
            features,
        })
    }

    /// Attention maps of one batch (A-PBS only), keyed by level.
    pub fn attention_maps(&self, batch: &Tensor) -> Result<Vec<(Level, Tensor)>> {
        match &self.head {
            Head::Apbs {
                attn_low,
                attn_mid,
                attn_high,
                ..
            } => {
                let features = self.backbone.forward_t(batch, false)?;
                Ok(vec![
                    (Level::Low, attn_low.forward(&features.low)?),
                    (Level::Mid, attn_mid.forward(&features.mid)?),
                    (Level::High, attn_high.forward(&features.high)?),
                ])
            }
            _ => Err(Error::Config(
                "attention maps only exist for the apbs variant".into(),
            )),
        }
    }

    /// Evaluation-mode forward over raw CHW image data, one bundle per
    /// sample, order preserving.
    pub fn predict(&self, images: &[Vec<f32>]) -> Result<Vec<PredictionBundle>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let s = self.config.input_size;
        let n = images.len();
        let mut flat = Vec::with_capacity(n * 3 * s * s);
        for img in images {
            if img.len() != 3 * s * s {
                return Err(Error::Input(format!(
                    "image has {} values, expected {}",
                    img.len(),
                    3 * s * s
                )));
            }
            flat.extend_from_slice(img);
        }
        let batch = Tensor::from_vec(flat, (n, 3, s, s), &self.device)?.to_dtype(self.dtype)?;
        let out = self.forward_t(&batch, false)?;
        let logits: Vec<f32> = out.logits.to_dtype(DType::F32)?.to_vec1()?;
        let probs: Vec<f32> = out.probabilities.to_dtype(DType::F32)?.to_vec1()?;
        let maps: Option<Vec<f32>> = match &out.map {
            Some(m) => Some(m.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?),
            None => None,
        };
        let m = self.config.map_size();
        Ok((0..n)
            .map(|i| PredictionBundle {
                binary_logit: logits[i],
                binary_probability: probs[i],
                intermediate_map: maps.as_ref().map(|all| IntermediateMap {
                    size: m,
                    values: all[i * m * m..(i + 1) * m * m].to_vec(),
                }),
            })
            .collect())
    }
}
