use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use image::codecs::gif::GifDecoder;
use image::{AnimationDecoder, DynamicImage};

use crate::error::{Error, Result};

/// Decodes every `stride`-th frame of an animated GIF (the container used for
/// desk-scale replay-attack videos). Frame indices are preserved so score
/// records can be aggregated back to the video level.
pub fn extract_video_frames(
    path: impl AsRef<Path>,
    stride: usize,
) -> Result<Vec<(usize, DynamicImage)>> {
    let path = path.as_ref();
    if stride == 0 {
        return Err(Error::Input("frame stride must be >= 1".into()));
    }
    let file = File::open(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let decoder = GifDecoder::new(BufReader::new(file)).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut frames = Vec::new();
    for (idx, frame) in decoder.into_frames().enumerate() {
        let frame = frame.map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            msg: format!("frame {idx}: {e}"),
        })?;
        if idx % stride == 0 {
            frames.push((idx, DynamicImage::ImageRgba8(frame.into_buffer())));
        }
    }
    if frames.is_empty() {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            msg: "video contains no frames".into(),
        });
    }
    Ok(frames)
}
