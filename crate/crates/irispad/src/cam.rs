//! Score-weighted class activation maps.
//!
//! Each channel activation at the target layer is upsampled to the input
//! size and min-max normalized into a mask; the input masked by it is
//! forwarded through the model. The explained class is the model's own
//! decision on the full image (bona fide or attack); channel weights are
//! the softmax of the masked input's predicted-class logit minus the
//! zero-input baseline logit. The saliency map is the rectified weighted
//! sum of the upsampled activations, min-max normalized. A constant map
//! normalizes to all zeros.

use std::path::Path;

use candle_core::{DType, Tensor};
use image::{DynamicImage, Rgb, RgbImage};

use crate::data::synth::Geometry;
use crate::error::{Error, Result};
use crate::model::PadModel;

/// Batch size for the masked forward passes.
pub const MASK_BATCH: usize = 32;

/// The activations Score-CAM can target: the three backbone taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetLayer {
    /// After the stem max pool (input/4).
    StemPool,
    /// After transition 1 (input/8).
    Transition1,
    /// After transition 2 (input/16); the default, closest to the score.
    Transition2,
}

impl TargetLayer {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stem" | "stem_pool" | "low" => Ok(TargetLayer::StemPool),
            "transition1" | "trans1" | "mid" => Ok(TargetLayer::Transition1),
            "transition2" | "trans2" | "high" => Ok(TargetLayer::Transition2),
            other => Err(Error::Config(format!(
                "unknown target layer `{other}` (expected stem|transition1|transition2)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TargetLayer::StemPool => "stem",
            TargetLayer::Transition1 => "transition1",
            TargetLayer::Transition2 => "transition2",
        }
    }
}

/// A saliency map over the input grid: `size * size` values in `[0,1]`,
/// min 0 and max 1 unless the map is constant (then all zeros).
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub size: usize,
    pub values: Vec<f32>,
}

fn min_max_normalize(values: &mut [f32]) {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in values.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi > lo {
        for v in values.iter_mut() {
            *v = (*v - lo) / (hi - lo);
        }
    } else {
        values.iter_mut().for_each(|v| *v = 0.0);
    }
}

pub fn score_cam(
    model: &PadModel,
    image: &[f32],
    layer: TargetLayer,
) -> Result<SaliencyMap> {
    let s = model.config().input_size;
    if image.len() != 3 * s * s {
        return Err(Error::Input(format!(
            "image has {} values, expected {}",
            image.len(),
            3 * s * s
        )));
    }
    let x = Tensor::from_vec(image.to_vec(), (1, 3, s, s), model.device())?
        .to_dtype(model.dtype())?;

    let features = model.forward_t(&x, false)?.features;
    let activations = match layer {
        TargetLayer::StemPool => &features.low,
        TargetLayer::Transition1 => &features.mid,
        TargetLayer::Transition2 => &features.high,
    };
    let upsampled = activations.upsample_nearest2d(s, s)?;
    let channels = upsampled.dim(1)?;
    let upsampled: Vec<f32> = upsampled
        .to_dtype(DType::F32)?
        .flatten_all()?
        .to_vec1()?;

    // per-channel min-max masks; constant channels give an all-zero mask
    let mut masks: Vec<Vec<f32>> = Vec::with_capacity(channels);
    for c in 0..channels {
        let mut mask = upsampled[c * s * s..(c + 1) * s * s].to_vec();
        min_max_normalize(&mut mask);
        masks.push(mask);
    }

    let forward_probs = |images: &[Vec<f32>]| -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(MASK_BATCH) {
            for p in model.predict(chunk)? {
                out.push(p.binary_probability);
            }
        }
        Ok(out)
    };

    // explain the class the model actually predicts for this image
    let full = forward_probs(&[image.to_vec()])?[0];
    let class_sign = if full < 0.5 { -1.0f64 } else { 1.0 };
    let logit_of = |p: f32| -> f64 {
        let p = (p as f64).clamp(1e-6, 1.0 - 1e-6);
        (p / (1.0 - p)).ln()
    };

    let baseline = class_sign * logit_of(forward_probs(&[vec![0f32; 3 * s * s]])?[0]);
    let masked_inputs: Vec<Vec<f32>> = masks
        .iter()
        .map(|mask| {
            let mut masked = vec![0f32; 3 * s * s];
            for c in 0..3 {
                for i in 0..s * s {
                    masked[c * s * s + i] = image[c * s * s + i] * mask[i];
                }
            }
            masked
        })
        .collect();
    let scores = forward_probs(&masked_inputs)?;

    // softmax over channels of the predicted-class logit deltas
    let deltas: Vec<f64> = scores
        .iter()
        .map(|&p| class_sign * logit_of(p) - baseline)
        .collect();
    let max_delta = deltas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = deltas.iter().map(|d| (d - max_delta).exp()).collect();
    let total: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();

    let mut values = vec![0f32; s * s];
    for (c, w) in weights.iter().enumerate() {
        for i in 0..s * s {
            values[i] += (*w as f32) * upsampled[c * s * s + i];
        }
    }
    values.iter_mut().for_each(|v| *v = v.max(0.0));
    min_max_normalize(&mut values);

    Ok(SaliencyMap { size: s, values })
}

/// Blue-green-red heat color for a saliency value in `[0,1]`.
fn heat(v: f32) -> [f32; 3] {
    let v = v.clamp(0.0, 1.0);
    [
        255.0 * v,
        255.0 * (1.0 - (2.0 * v - 1.0).abs()),
        255.0 * (1.0 - v),
    ]
}

/// Blends the heat-colored saliency onto the image: opacity 0 returns the
/// source pixels, opacity 1 the pure heat map.
pub fn overlay(
    image: &DynamicImage,
    saliency: &SaliencyMap,
    opacity: f32,
) -> Result<RgbImage> {
    if !(0.0..=1.0).contains(&opacity) {
        return Err(Error::Input(format!("opacity {opacity} outside [0,1]")));
    }
    let s = saliency.size as u32;
    let src = image
        .resize_exact(s, s, image::imageops::FilterType::Triangle)
        .to_rgb8();
    let mut out = RgbImage::new(s, s);
    for (x, y, p) in src.enumerate_pixels() {
        let h = heat(saliency.values[(y * s + x) as usize]);
        let mut blended = [0u8; 3];
        for c in 0..3 {
            let v = (1.0 - opacity) * p.0[c] as f32 + opacity * h[c];
            blended[c] = v.round().clamp(0.0, 255.0) as u8;
        }
        out.put_pixel(x, y, Rgb(blended));
    }
    Ok(out)
}

pub fn write_overlay(path: impl AsRef<Path>, image: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    image.save(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Mean saliency inside vs outside the iris annulus (pupil excluded), with
/// the geometry scaled from its source image size to the saliency grid.
pub fn annulus_means(
    saliency: &SaliencyMap,
    geometry: &Geometry,
    source_size: usize,
) -> (f64, f64) {
    let scale = saliency.size as f32 / source_size as f32;
    let (cx, cy) = (geometry.cx * scale, geometry.cy * scale);
    let (rp, ri) = (geometry.r_pupil * scale, geometry.r_iris * scale);
    let mut inside = (0.0f64, 0usize);
    let mut outside = (0.0f64, 0usize);
    for y in 0..saliency.size {
        for x in 0..saliency.size {
            let dx = x as f32 - cx;
            let dy = y as f32 - cy;
            let r = (dx * dx + dy * dy).sqrt();
            let v = saliency.values[y * saliency.size + x] as f64;
            if r >= rp && r <= ri {
                inside.0 += v;
                inside.1 += 1;
            } else {
                outside.0 += v;
                outside.1 += 1;
            }
        }
    }
    (
        inside.0 / inside.1.max(1) as f64,
        outside.0 / outside.1.max(1) as f64,
    )
}
