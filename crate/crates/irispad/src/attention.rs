//! Spatial attention and multi-level fusion.
//!
//! Each level's feature map is reduced to a 2-channel [average; max]
//! descriptor along the channel axis, convolved with a level-specific kernel
//! (low 7, mid 5, high 3; padding preserves the spatial size), and squashed
//! with a sigmoid into an attention map in `[0,1]`. The map rescales its
//! source feature per position, broadcast over channels. Refined features
//! from all three levels are average-pool downsampled to the supervision
//! size, concatenated, and reduced by a 1x1 convolution.
//!
//! ```
//! use candle_core::{DType, Device, Tensor};
//! use candle_nn::{VarBuilder, VarMap};
//! use irispad::attention::{refine, SpatialAttention};
//!
//! let varmap = VarMap::new();
//! let vb = VarBuilder::from_varmap(&varmap, DType::F32, &Device::Cpu);
//! let attn = SpatialAttention::new(7, vb).unwrap();
//!
//! let feature = Tensor::randn(0f32, 1f32, (2, 8, 16, 16), &Device::Cpu).unwrap();
//! let map = attn.forward(&feature).unwrap();
//! assert_eq!(map.dims(), &[2, 1, 16, 16]);
//! let refined = refine(&feature, &map).unwrap();
//! assert_eq!(refined.dims(), feature.dims());
//! ```

use candle_core::Tensor;
use candle_nn::{conv2d, Conv2d, Conv2dConfig, Module, VarBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Low,
    Mid,
    High,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Low, Level::Mid, Level::High];

    /// Larger kernels probe shallower, less abstract features.
    pub fn kernel_size(self) -> usize {
        match self {
            Level::Low => 7,
            Level::Mid => 5,
            Level::High => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Low => "low",
            Level::Mid => "mid",
            Level::High => "high",
        }
    }
}

/// One spatial attention module with a fixed odd kernel size.
#[derive(Debug)]
pub struct SpatialAttention {
    conv: Conv2d,
    kernel: usize,
}

impl SpatialAttention {
    pub fn new(kernel: usize, vb: VarBuilder) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "attention kernel must be odd, got {kernel}"
            )));
        }
        let conv = conv2d(
            2,
            1,
            kernel,
            Conv2dConfig {
                padding: (kernel - 1) / 2,
                ..Default::default()
            },
            vb,
        )?;
        Ok(SpatialAttention { conv, kernel })
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    /// (N,C,H,W) feature -> (N,1,H,W) attention map in [0,1].
    pub fn forward(&self, feature: &Tensor) -> Result<Tensor> {
        let avg = feature.mean_keepdim(1)?;
        let max = feature.max_keepdim(1)?;
        let descriptor = Tensor::cat(&[&avg, &max], 1)?;
        let response = self.conv.forward(&descriptor)?;
        Ok(candle_nn::ops::sigmoid(&response)?)
    }
}

/// `refined[n,c,h,w] = feature[n,c,h,w] * attn[n,1,h,w]`.
pub fn refine(feature: &Tensor, attn: &Tensor) -> Result<Tensor> {
    let (_, _, fh, fw) = feature.dims4()?;
    let (_, _, ah, aw) = attn.dims4()?;
    if (fh, fw) != (ah, aw) {
        return Err(Error::Input(format!(
            "attention map {ah}x{aw} does not match feature {fh}x{fw}"
        )));
    }
    Ok(feature.broadcast_mul(attn)?)
}

/// Average-pool downsample of a (N,C,H,W) tensor to `target`x`target`.
/// H must be an integer multiple of the target.
pub fn downsample_to(x: &Tensor, target: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if h == target && w == target {
        return Ok(x.clone());
    }
    if h % target != 0 || w % target != 0 {
        return Err(Error::Input(format!(
            "cannot pool {h}x{w} down to {target}x{target}"
        )));
    }
    let factor = h / target;
    Ok(x.avg_pool2d(factor)?)
}

/// The fusion stage: downsample each refined level, concatenate channels and
/// reduce to the single-channel intermediate map with a 1x1 convolution.
#[derive(Debug)]
pub struct LevelFusion {
    conv: Conv2d,
    pub target_size: usize,
}

impl LevelFusion {
    pub fn new(total_channels: usize, target_size: usize, vb: VarBuilder) -> Result<Self> {
        let conv = conv2d(total_channels, 1, 1, Conv2dConfig::default(), vb)?;
        Ok(LevelFusion { conv, target_size })
    }

    pub fn forward(&self, low: &Tensor, mid: &Tensor, high: &Tensor) -> Result<Tensor> {
        let pooled: Vec<Tensor> = [low, mid, high]
            .iter()
            .map(|t| downsample_to(t, self.target_size))
            .collect::<Result<_>>()?;
        let cat = Tensor::cat(&pooled.iter().collect::<Vec<_>>(), 1)?;
        Ok(self.conv.forward(&cat)?)
    }
}
