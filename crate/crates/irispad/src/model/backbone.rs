//! Truncated densely-connected feature extractor.
//!
//! The trunk is the stem (7x7/2 convolution, norm, relu, 2x2/2 max pool)
//! followed by dense block 1, transition 1, dense block 2 and transition 2.
//! Three taps feed the attention machinery: `low` after the stem pool
//! (input/4), `mid` after transition 1 (input/8), `high` after transition 2
//! (input/16). Each dense layer is the bottleneck form: norm-relu-1x1 conv
//! to `4 * growth` channels, norm-relu-3x3 conv to `growth` channels,
//! concatenated onto its input. Transitions halve both channels and spatial
//! size.

use candle_core::Tensor;
use candle_nn::{conv2d, conv2d_no_bias, Conv2d, Conv2dConfig, Module, VarBuilder};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{max_pool_2x2, BatchNorm2d};

/// Structural knobs of the trunk. The default matches the published
/// DenseNet121 truncation; tests and desk-scale runs shrink it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub init_features: usize,
    pub growth_rate: usize,
    pub block1_layers: usize,
    pub block2_layers: usize,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self::densenet121_trunk()
    }
}

impl BackboneSpec {
    pub fn densenet121_trunk() -> Self {
        BackboneSpec {
            init_features: 64,
            growth_rate: 32,
            block1_layers: 6,
            block2_layers: 12,
        }
    }

    /// A narrow trunk for fast CPU experiments and tests.
    pub fn reduced(init_features: usize, growth_rate: usize, b1: usize, b2: usize) -> Self {
        BackboneSpec {
            init_features,
            growth_rate,
            block1_layers: b1,
            block2_layers: b2,
        }
    }

    pub fn widths(&self) -> ChannelWidths {
        let low = self.init_features;
        let after_b1 = low + self.block1_layers * self.growth_rate;
        let mid = after_b1 / 2;
        let after_b2 = mid + self.block2_layers * self.growth_rate;
        let high = after_b2 / 2;
        ChannelWidths { low, mid, high }
    }
}

/// Channel counts at the three tap points, recorded for audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelWidths {
    pub low: usize,
    pub mid: usize,
    pub high: usize,
}

/// The three tapped activations of one forward pass.
#[derive(Debug, Clone)]
pub struct LevelFeatures {
    pub low: Tensor,
    pub mid: Tensor,
    pub high: Tensor,
}

struct DenseLayer {
    bn1: BatchNorm2d,
    conv1: Conv2d,
    bn2: BatchNorm2d,
    conv2: Conv2d,
}

impl DenseLayer {
    fn new(in_channels: usize, growth: usize, vb: VarBuilder) -> Result<Self> {
        let bottleneck = 4 * growth;
        Ok(DenseLayer {
            bn1: BatchNorm2d::new(in_channels, vb.pp("bn1"))?,
            conv1: conv2d_no_bias(
                in_channels,
                bottleneck,
                1,
                Conv2dConfig::default(),
                vb.pp("conv1"),
            )?,
            bn2: BatchNorm2d::new(bottleneck, vb.pp("bn2"))?,
            conv2: conv2d_no_bias(
                bottleneck,
                growth,
                3,
                Conv2dConfig {
                    padding: 1,
                    ..Default::default()
                },
                vb.pp("conv2"),
            )?,
        })
    }

    fn forward_t(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let h = self.bn1.forward_t(x, train)?.relu()?;
        let h = self.conv1.forward(&h)?;
        let h = self.bn2.forward_t(&h, train)?.relu()?;
        let new = self.conv2.forward(&h)?;
        Ok(Tensor::cat(&[x, &new], 1)?)
    }
}

struct Transition {
    bn: BatchNorm2d,
    conv: Conv2d,
}

impl Transition {
    fn new(in_channels: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Transition {
            bn: BatchNorm2d::new(in_channels, vb.pp("bn"))?,
            conv: conv2d_no_bias(
                in_channels,
                in_channels / 2,
                1,
                Conv2dConfig::default(),
                vb.pp("conv"),
            )?,
        })
    }

    fn forward_t(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let h = self.bn.forward_t(x, train)?.relu()?;
        let h = self.conv.forward(&h)?;
        Ok(h.avg_pool2d(2)?)
    }
}

pub struct Backbone {
    spec: BackboneSpec,
    stem_conv: Conv2d,
    stem_bn: BatchNorm2d,
    block1: Vec<DenseLayer>,
    trans1: Transition,
    block2: Vec<DenseLayer>,
    trans2: Transition,
}

impl Backbone {
    pub fn new(spec: BackboneSpec, vb: VarBuilder) -> Result<Self> {
        let stem_conv = conv2d(
            3,
            spec.init_features,
            7,
            Conv2dConfig {
                padding: 3,
                stride: 2,
                ..Default::default()
            },
            vb.pp("stem.conv"),
        )?;
        let stem_bn = BatchNorm2d::new(spec.init_features, vb.pp("stem.bn"))?;

        let mut block1 = Vec::new();
        let mut channels = spec.init_features;
        for i in 0..spec.block1_layers {
            block1.push(DenseLayer::new(
                channels,
                spec.growth_rate,
                vb.pp(format!("block1.{i}")),
            )?);
            channels += spec.growth_rate;
        }
        let trans1 = Transition::new(channels, vb.pp("trans1"))?;
        channels /= 2;

        let mut block2 = Vec::new();
        for i in 0..spec.block2_layers {
            block2.push(DenseLayer::new(
                channels,
                spec.growth_rate,
                vb.pp(format!("block2.{i}")),
            )?);
            channels += spec.growth_rate;
        }
        let trans2 = Transition::new(channels, vb.pp("trans2"))?;

        Ok(Backbone {
            spec,
            stem_conv,
            stem_bn,
            block1,
            trans1,
            block2,
            trans2,
        })
    }

    pub fn spec(&self) -> BackboneSpec {
        self.spec
    }

    pub fn forward_t(&self, x: &Tensor, train: bool) -> Result<LevelFeatures> {
        let h = self.stem_conv.forward(x)?;
        let h = self.stem_bn.forward_t(&h, train)?.relu()?;
        let low = max_pool_2x2(&h)?;

        let mut h = low.clone();
        for layer in &self.block1 {
            h = layer.forward_t(&h, train)?;
        }
        let mid = self.trans1.forward_t(&h, train)?;

        let mut h = mid.clone();
        for layer in &self.block2 {
            h = layer.forward_t(&h, train)?;
        }
        let high = self.trans2.forward_t(&h, train)?;

        Ok(LevelFeatures { low, mid, high })
    }

    /// All batch norms with their checkpoint names, for running-stat I/O.
    pub fn batch_norms(&self, prefix: &str) -> Vec<(String, &BatchNorm2d)> {
        let mut out = vec![(format!("{prefix}.stem.bn"), &self.stem_bn)];
        for (i, l) in self.block1.iter().enumerate() {
            out.push((format!("{prefix}.block1.{i}.bn1"), &l.bn1));
            out.push((format!("{prefix}.block1.{i}.bn2"), &l.bn2));
        }
        out.push((format!("{prefix}.trans1.bn"), &self.trans1.bn));
        for (i, l) in self.block2.iter().enumerate() {
            out.push((format!("{prefix}.block2.{i}.bn1"), &l.bn1));
            out.push((format!("{prefix}.block2.{i}.bn2"), &l.bn2));
        }
        out.push((format!("{prefix}.trans2.bn"), &self.trans2.bn));
        out
    }
}
