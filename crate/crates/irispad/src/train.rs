//! The published training recipe and evaluation scoring.
//!
//! Adaptive-moment descent (lr 1e-4, decay 1e-6) for at most 20 epochs with
//! the learning rate halved every 6 epochs, batch 64, horizontal-flip
//! augmentation, and the variant-appropriate loss: plain BCE for the
//! baseline, `0.2 * smooth_l1 + 0.8 * bce` for pbs/apbs. Scoring runs the
//! model in evaluation mode; the PAD score is the binary probability, with
//! videos expanded to strided frames.
//!
//! ```
//! use irispad::train::{lr_at_epoch, TrainConfig};
//!
//! let config = TrainConfig::default();
//! assert_eq!(lr_at_epoch(&config, 0), 1e-4);
//! assert_eq!(lr_at_epoch(&config, 5), 1e-4);
//! assert_eq!(lr_at_epoch(&config, 6), 5e-5);
//! assert_eq!(lr_at_epoch(&config, 12), 2.5e-5);
//! ```

use std::path::Path;
use std::time::Instant;

use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use image::DynamicImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{image_to_chw, load_image_chw, Augmenter, Label, SampleRecord};
use crate::error::{Error, Result};
use crate::loss::{bce_t, smooth_l1_t, DEFAULT_LAMBDA};
use crate::model::PadModel;
use crate::scores::ScoreRecord;

pub const DEFAULT_FRAME_STRIDE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr_init: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_epochs")]
    pub epochs_max: usize,
    #[serde(default = "default_halve")]
    pub lr_halve_every: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    1e-4
}
fn default_weight_decay() -> f64 {
    1e-6
}
fn default_epochs() -> usize {
    20
}
fn default_halve() -> usize {
    6
}
fn default_batch() -> usize {
    64
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_init: default_lr(),
            weight_decay: default_weight_decay(),
            epochs_max: default_epochs(),
            lr_halve_every: default_halve(),
            batch_size: default_batch(),
            lambda: default_lambda(),
            seed: 0,
        }
    }
}

/// `lr_init * 0.5^(epoch / halve_every)`, the published schedule.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> f64 {
    config.lr_init * 0.5f64.powi((epoch / config.lr_halve_every) as i32)
}

/// One line of the training log (serialized as JSON lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub mean_overall: f64,
    pub mean_bce: f64,
    pub mean_smooth_l1: f64,
    pub learning_rate: f64,
    pub wall_time_s: f64,
}

pub fn write_train_log(path: impl AsRef<Path>, log: &[TrainLogEntry]) -> Result<()> {
    let mut out = String::new();
    for entry in log {
        out.push_str(&serde_json::to_string(entry).map_err(|e| Error::Io(e.into()))?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_train_log(path: impl AsRef<Path>) -> Result<Vec<TrainLogEntry>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    text.lines()
        .map(|line| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.as_ref().to_path_buf(),
                line: 0,
                msg: e.to_string(),
            })
        })
        .collect()
}

fn resolve(dir: &Path, record: &SampleRecord) -> std::path::PathBuf {
    let p = Path::new(&record.path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// Trains `model` in place on `records` (paths relative to `dir`) and
/// returns the per-epoch log. With `epochs_max = 0` the model is left at its
/// initialization and the log is empty.
pub fn train(
    model: &PadModel,
    dir: &Path,
    records: &[SampleRecord],
    config: &TrainConfig,
) -> Result<Vec<TrainLogEntry>> {
    if records.is_empty() {
        return Err(Error::Protocol("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&config.lambda) {
        return Err(Error::Config(format!(
            "lambda {} outside [0,1]",
            config.lambda
        )));
    }
    let size = model.config().input_size;
    let map_size = model.config().map_size();

    // decode once; augmentation re-derives pixels per epoch
    let images: Vec<DynamicImage> = records
        .iter()
        .map(|r| {
            let path = resolve(dir, r);
            image::open(&path).map_err(|e| Error::Scoring {
                path,
                msg: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;

    let mut optimizer = AdamW::new(
        model.varmap().all_vars(),
        ParamsAdamW {
            lr: config.lr_init,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: config.weight_decay,
        },
    )?;
    let mut augmenter = Augmenter::new(config.seed ^ 0x9e37_79b9_7f4a_7c15, true);
    let mut log = Vec::new();

    for epoch in 0..config.epochs_max {
        let lr = lr_at_epoch(config, epoch);
        optimizer.set_learning_rate(lr);
        let started = Instant::now();

        let mut order: Vec<usize> = (0..records.len()).collect();
        let mut epoch_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut epoch_rng);

        let mut sum_overall = 0.0;
        let mut sum_bce = 0.0;
        let mut sum_sl1 = 0.0;
        let mut n_samples = 0usize;

        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let n = chunk.len();
            let mut pixels = Vec::with_capacity(n * 3 * size * size);
            let mut labels = Vec::with_capacity(n);
            for &i in chunk {
                let img = if augmenter.next_flip() {
                    images[i].fliph()
                } else {
                    images[i].clone()
                };
                pixels.extend_from_slice(&image_to_chw(&img, size));
                labels.push(match records[i].label {
                    Label::BonaFide => 1f32,
                    Label::Attack => 0f32,
                });
            }
            let batch = Tensor::from_vec(pixels, (n, 3, size, size), model.device())?
                .to_dtype(model.dtype())?;
            let label_t =
                Tensor::from_vec(labels.clone(), (n,), model.device())?.to_dtype(model.dtype())?;

            let output = model.forward_t(&batch, true)?;
            let bce = bce_t(&output.probabilities, &label_t)?;
            let (loss, sl1_value) = match &output.map {
                Some(map) => {
                    let mut target = Vec::with_capacity(n * map_size * map_size);
                    for &y in &labels {
                        target.extend(std::iter::repeat(y).take(map_size * map_size));
                    }
                    let target =
                        Tensor::from_vec(target, (n, 1, map_size, map_size), model.device())?
                            .to_dtype(model.dtype())?;
                    let sl1 = smooth_l1_t(map, &target)?;
                    let loss = ((&sl1 * config.lambda)? + (&bce * (1.0 - config.lambda))?)?;
                    let sl1_value = sl1.to_dtype(DType::F32)?.to_scalar::<f32>()? as f64;
                    (loss, sl1_value)
                }
                None => (bce.clone(), 0.0),
            };

            let overall = loss.to_dtype(DType::F32)?.to_scalar::<f32>()? as f64;
            let bce_value = bce.to_dtype(DType::F32)?.to_scalar::<f32>()? as f64;
            if !overall.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    msg: format!("non-finite loss {overall}"),
                });
            }
            optimizer.backward_step(&loss)?;

            sum_overall += overall * n as f64;
            sum_bce += bce_value * n as f64;
            sum_sl1 += sl1_value * n as f64;
            n_samples += n;
        }

        log.push(TrainLogEntry {
            epoch,
            mean_overall: sum_overall / n_samples as f64,
            mean_bce: sum_bce / n_samples as f64,
            mean_smooth_l1: sum_sl1 / n_samples as f64,
            learning_rate: lr,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }
    Ok(log)
}

fn is_video(path: &str) -> bool {
    Path::new(path)
        .extension()
        .map(|e| e.eq_ignore_ascii_case("gif"))
        .unwrap_or(false)
}

/// Evaluation-mode scoring. Video records (`.gif`) expand to every
/// `stride`-th frame, one [`ScoreRecord`] per frame; unreadable inputs abort
/// the run. Output order follows the input, frames in ascending order.
pub fn score(
    model: &PadModel,
    dir: &Path,
    records: &[SampleRecord],
    stride: usize,
    batch_size: usize,
) -> Result<Vec<ScoreRecord>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let size = model.config().input_size;

    let mut inputs: Vec<(SampleRecord, Vec<f32>)> = Vec::new();
    for record in records {
        let path = resolve(dir, record);
        if is_video(&record.path) {
            for (idx, frame) in crate::data::extract_video_frames(&path, stride)? {
                let mut r = record.clone();
                r.frame = Some(idx);
                inputs.push((r, image_to_chw(&frame, size)));
            }
        } else {
            inputs.push((record.clone(), load_image_chw(&path, size)?));
        }
    }

    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(batch_size) {
        let images: Vec<Vec<f32>> = chunk.iter().map(|(_, chw)| chw.clone()).collect();
        let predictions = model.predict(&images)?;
        for ((record, _), prediction) in chunk.iter().zip(predictions) {
            out.push(ScoreRecord {
                path: record.path.clone(),
                subject_id: record.subject_id.clone(),
                label: record.label,
                attack_type: record.attack_type,
                database: record.database.clone(),
                spectrum: record.spectrum,
                frame: record.frame,
                score: (prediction.binary_probability as f64).clamp(0.0, 1.0),
            });
        }
    }
    Ok(out)
}
