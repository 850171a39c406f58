use std::path::Path;

use image::imageops::FilterType;
use image::DynamicImage;

use crate::error::{Error, Result};

/// Normalization statistics of the backbone's pretraining corpus.
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Loads an image file, resizes it (bilinear) to `size`x`size`, replicates
/// grayscale to 3 channels, and normalizes with the backbone statistics.
/// Returns CHW-ordered values of length `3 * size * size`.
pub fn load_image_chw(path: impl AsRef<Path>, size: usize) -> Result<Vec<f32>> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Scoring {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(image_to_chw(&img, size))
}

/// Same pipeline for an already-decoded image (video frames, augmented crops).
pub fn image_to_chw(img: &DynamicImage, size: usize) -> Vec<f32> {
    let resized = img.resize_exact(size as u32, size as u32, FilterType::Triangle);
    let rgb = resized.to_rgb8();
    let mut out = vec![0f32; 3 * size * size];
    for (x, y, p) in rgb.enumerate_pixels() {
        for c in 0..3 {
            let v = p.0[c] as f32 / 255.0;
            out[c * size * size + y as usize * size + x as usize] =
                (v - IMAGENET_MEAN[c]) / IMAGENET_STD[c];
        }
    }
    out
}
