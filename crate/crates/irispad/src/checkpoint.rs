//! Model checkpoints.
//!
//! A checkpoint is a single safetensors file holding every trainable
//! variable plus each batch norm's running statistics (under
//! `<norm>.running_mean` / `<norm>.running_var`). The file metadata carries
//! the format version and the full [`ModelConfig`] as JSON, so a checkpoint
//! is self-describing: loading rebuilds the exact architecture without any
//! side channel.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device};
use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, PadModel, Variant};
use crate::nn::named_tensors;

pub const FORMAT_VERSION: &str = "1";

fn ck(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Writes the model's weights and running statistics to `path`.
pub fn save_model(model: &PadModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut entries: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();

    let mut push = |name: String, t: &candle_core::Tensor| -> Result<()> {
        let dims = t.dims().to_vec();
        let values: Vec<f32> = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        entries.push((name, dims, bytes));
        Ok(())
    };

    for (name, t) in named_tensors(model.varmap()) {
        push(name, &t)?;
    }
    for (name, bn) in model.batch_norms() {
        let (mean, var) = bn.running_stats();
        push(format!("{name}.running_mean"), &mean)?;
        push(format!("{name}.running_var"), &var)?;
    }

    let views: Vec<(&str, TensorView)> = entries
        .iter()
        .map(|(name, dims, bytes)| {
            TensorView::new(Dtype::F32, dims.clone(), bytes)
                .map(|v| (name.as_str(), v))
                .map_err(|e| ck(e.to_string()))
        })
        .collect::<Result<_>>()?;

    let mut metadata = HashMap::new();
    metadata.insert("format_version".to_string(), FORMAT_VERSION.to_string());
    metadata.insert(
        "model_config".to_string(),
        serde_json::to_string(model.config()).map_err(|e| ck(e.to_string()))?,
    );

    safetensors::serialize_to_file(views, &Some(metadata), path)
        .map_err(|e| ck(e.to_string()))?;
    Ok(())
}

/// Reads the [`ModelConfig`] stored in a checkpoint without loading weights.
pub fn read_config(path: impl AsRef<Path>) -> Result<ModelConfig> {
    let bytes = std::fs::read(path.as_ref())?;
    let (_, metadata) =
        SafeTensors::read_metadata(&bytes).map_err(|e| ck(e.to_string()))?;
    let meta = metadata
        .metadata()
        .as_ref()
        .ok_or_else(|| ck("checkpoint carries no metadata"))?;
    let version = meta
        .get("format_version")
        .ok_or_else(|| ck("checkpoint metadata lacks format_version"))?;
    if version != FORMAT_VERSION {
        return Err(ck(format!(
            "unsupported checkpoint format version `{version}` (expected {FORMAT_VERSION})"
        )));
    }
    let config_json = meta
        .get("model_config")
        .ok_or_else(|| ck("checkpoint metadata lacks model_config"))?;
    serde_json::from_str(config_json).map_err(|e| ck(format!("bad model_config: {e}")))
}

/// Rebuilds the model a checkpoint describes and restores every weight and
/// running statistic. When `expect_variant` is given, a checkpoint of a
/// different variant is a hard error.
pub fn load_model(
    path: impl AsRef<Path>,
    expect_variant: Option<Variant>,
) -> Result<PadModel> {
    let path = path.as_ref();
    let mut config = read_config(path)?;
    if let Some(expected) = expect_variant {
        if config.variant != expected {
            return Err(ck(format!(
                "checkpoint holds a `{}` model, expected `{}`",
                config.variant.as_str(),
                expected.as_str()
            )));
        }
    }
    // weights come from the checkpoint; never re-trigger pretrained loading
    config.pretrained_init = false;
    config.pretrained_path = None;

    let model = PadModel::build(&config, 0)?;
    let tensors = candle_core::safetensors::load(path, &Device::Cpu)
        .map_err(|e| ck(e.to_string()))?;

    {
        let data = model.varmap().data().lock().unwrap();
        for (name, var) in data.iter() {
            let t = tensors
                .get(name)
                .ok_or_else(|| ck(format!("checkpoint missing tensor `{name}`")))?;
            var.set(&t.to_dtype(model.dtype())?)?;
        }
    }
    for (name, bn) in model.batch_norms() {
        let mean = tensors
            .get(&format!("{name}.running_mean"))
            .ok_or_else(|| ck(format!("checkpoint missing `{name}.running_mean`")))?;
        let var = tensors
            .get(&format!("{name}.running_var"))
            .ok_or_else(|| ck(format!("checkpoint missing `{name}.running_var`")))?;
        bn.set_running_stats(mean, var)?;
    }
    Ok(model)
}
