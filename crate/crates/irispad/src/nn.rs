//! Small layer helpers on top of candle: a batch norm whose running
//! statistics can be saved and restored, and deterministic seeded
//! initialization of a whole variable map.

use candle_core::{Tensor, Var};
use candle_nn::{Init, VarBuilder, VarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Spatial batch normalization over (N,C,H,W) input.
///
/// `weight`/`bias` are trainable and live in the builder's variable map;
/// the running statistics are owned here so checkpoints can restore them
/// in place.
#[derive(Debug)]
pub struct BatchNorm2d {
    weight: Tensor,
    bias: Tensor,
    running_mean: Var,
    running_var: Var,
    eps: f64,
    momentum: f64,
}

impl BatchNorm2d {
    pub fn new(features: usize, vb: VarBuilder) -> Result<Self> {
        let weight = vb.get_with_hints(features, "weight", Init::Const(1.0))?;
        let bias = vb.get_with_hints(features, "bias", Init::Const(0.0))?;
        let dtype = weight.dtype();
        let device = weight.device().clone();
        Ok(BatchNorm2d {
            weight,
            bias,
            running_mean: Var::zeros(features, dtype, &device)?,
            running_var: Var::ones(features, dtype, &device)?,
            eps: 1e-5,
            momentum: 0.1,
        })
    }

    pub fn forward_t(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        if train {
            self.forward_train(x)
        } else {
            self.forward_eval(x)
        }
    }

    fn forward_train(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims4()?;
        let xt = x.transpose(0, 1)?.flatten_from(1)?.contiguous()?; // (C, N*H*W)
        let n = xt.dim(1)? as f64;

        let mean = xt.mean_keepdim(1)?;
        let centered = xt.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(1)?;

        let new_mean = ((self.running_mean.as_tensor() * (1.0 - self.momentum))?
            + (mean.flatten_all()?.detach() * self.momentum)?)?;
        self.running_mean.set(&new_mean)?;
        // unbiased correction for the running estimate
        let new_var = ((self.running_var.as_tensor() * (1.0 - self.momentum))?
            + (var.flatten_all()?.detach() * (self.momentum * n / (n - 1.0)))?)?;
        self.running_var.set(&new_var)?;

        let normalized = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        let out = normalized
            .broadcast_mul(&self.weight.reshape(((), 1))?)?
            .broadcast_add(&self.bias.reshape(((), 1))?)?;
        Ok(out
            .reshape((dims.1, dims.0, dims.2, dims.3))?
            .transpose(0, 1)?)
    }

    fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let c = self.weight.dim(0)?;
        let shape = (1, c, 1, 1);
        let mean = self.running_mean.as_tensor().reshape(shape)?;
        let var = self.running_var.as_tensor().reshape(shape)?;
        let out = x
            .broadcast_sub(&mean)?
            .broadcast_div(&(var + self.eps)?.sqrt()?)?
            .broadcast_mul(&self.weight.reshape(shape)?)?
            .broadcast_add(&self.bias.reshape(shape)?)?;
        Ok(out)
    }

    pub fn running_stats(&self) -> (Tensor, Tensor) {
        (
            self.running_mean.as_detached_tensor(),
            self.running_var.as_detached_tensor(),
        )
    }

    pub fn set_running_stats(&self, mean: &Tensor, var: &Tensor) -> Result<()> {
        self.running_mean.set(mean)?;
        self.running_var.set(var)?;
        Ok(())
    }
}

/// 2x2 stride-2 max pooling via reshape + max reductions.
///
/// Functionally identical to `Tensor::max_pool2d(2)`, but its backward pass
/// routes the full upstream gradient to the argmax position. The builtin
/// pooling backward scales gradients by the reciprocal kernel area, so it is
/// avoided in any graph that gets differentiated.
pub fn max_pool_2x2(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let windows = x.reshape((n, c, h / 2, 2, w / 2, 2))?;
    Ok(windows.max(5)?.max(3)?)
}

/// Overwrites every variable in the map with seeded values: uniform fan-in
/// scaling for conv/linear weights, ones for norm scales, zeros for biases.
/// Iteration is over sorted names, so the result depends only on the seed
/// and the variable set.
pub fn seeded_init(varmap: &VarMap, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = varmap.data().lock().unwrap();
    let mut names: Vec<&String> = data.keys().collect();
    names.sort();
    for name in names {
        let var = &data[name];
        let dims = var.dims().to_vec();
        let count: usize = dims.iter().product();
        let device = var.device().clone();
        let dtype = var.dtype();
        let values: Vec<f64> = match dims.len() {
            // norm scales are ones, every bias/scale vector starts neutral
            1 => {
                if name.ends_with("weight") {
                    vec![1.0; count]
                } else {
                    vec![0.0; count]
                }
            }
            2 => {
                let bound = 1.0 / (dims[1] as f64).sqrt();
                (0..count).map(|_| rng.gen_range(-bound..bound)).collect()
            }
            4 => {
                let fan_in = (dims[1] * dims[2] * dims[3]) as f64;
                let bound = 1.0 / fan_in.sqrt();
                (0..count).map(|_| rng.gen_range(-bound..bound)).collect()
            }
            _ => vec![0.0; count],
        };
        let t = Tensor::from_vec(values, dims, &device)?.to_dtype(dtype)?;
        var.set(&t)?;
    }
    Ok(())
}

/// Collects every trainable variable as a detached tensor, keyed by name.
pub fn named_tensors(varmap: &VarMap) -> std::collections::BTreeMap<String, Tensor> {
    let data = varmap.data().lock().unwrap();
    data.iter()
        .map(|(k, v)| (k.clone(), v.as_detached_tensor()))
        .collect()
}
