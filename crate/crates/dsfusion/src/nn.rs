//! Small neural-network building blocks shared by the codec, the
//! denoising network, the discriminator, and the classifiers.

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{Param, Real, Tensor};
use rand::Rng as _;
use rand_distr::StandardNormal;

/// He-normal initialization: N(0, sqrt(2/fan_in)).
pub fn he_init(rng: &mut Rng, n: usize, fan_in: usize) -> Vec<Real> {
    let std = (2.0 / fan_in as Real).sqrt();
    (0..n)
        .map(|_| rng.sample::<Real, _>(StandardNormal) * std)
        .collect()
}

pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Result<Conv2d> {
        let fan_in = c_in * k * k;
        Ok(Conv2d {
            weight: Param::new(
                format!("{name}.weight"),
                he_init(rng, c_out * c_in * k * k, fan_in),
                &[c_out, c_in, k, k],
            )?,
            bias: Param::new(format!("{name}.bias"), vec![0.0; c_out], &[c_out])?,
            stride,
            pad,
        })
    }

    /// Zero-initialized variant, used for output heads that should start
    /// as the identity-to-zero map.
    pub fn new_zeroed(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Conv2d> {
        Ok(Conv2d {
            weight: Param::new(
                format!("{name}.weight"),
                vec![0.0; c_out * c_in * k * k],
                &[c_out, c_in, k, k],
            )?,
            bias: Param::new(format!("{name}.bias"), vec![0.0; c_out], &[c_out])?,
            stride,
            pad,
        })
    }

    pub fn forward(&self, x: &Tensor, frozen: bool) -> Result<Tensor> {
        x.conv2d(&self.weight.tensor_for(frozen), self.stride, self.pad)?
            .add_channel(&self.bias.tensor_for(frozen))
    }

    /// A copy with the same weights and fresh optimizer state.
    pub fn clone_weights(&self) -> Result<Conv2d> {
        Ok(Conv2d {
            weight: Param::new(
                self.weight.name(),
                self.weight.data().to_vec(),
                self.weight.shape(),
            )?,
            bias: Param::new(self.bias.name(), self.bias.data().to_vec(), self.bias.shape())?,
            stride: self.stride,
            pad: self.pad,
        })
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub struct Linear {
    pub weight: Param, // [out × in]
    pub bias: Param,   // [out]
}

impl Linear {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut Rng) -> Result<Linear> {
        Ok(Linear {
            weight: Param::new(
                format!("{name}.weight"),
                he_init(rng, d_out * d_in, d_in),
                &[d_out, d_in],
            )?,
            bias: Param::new(format!("{name}.bias"), vec![0.0; d_out], &[d_out])?,
        })
    }

    pub fn new_zeroed(name: &str, d_in: usize, d_out: usize) -> Result<Linear> {
        Ok(Linear {
            weight: Param::new(
                format!("{name}.weight"),
                vec![0.0; d_out * d_in],
                &[d_out, d_in],
            )?,
            bias: Param::new(format!("{name}.bias"), vec![0.0; d_out], &[d_out])?,
        })
    }

    /// Applies to a 1-D vector: `W·x + b`.
    pub fn forward(&self, x: &Tensor, frozen: bool) -> Result<Tensor> {
        let d_in = x.numel();
        let d_out = self.weight.shape()[0];
        let col = x.reshape(&[d_in, 1])?;
        let y = self.weight.tensor_for(frozen).matmul(&col)?.reshape(&[d_out])?;
        y.add(&self.bias.tensor_for(frozen))
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub struct GroupNorm {
    pub gamma: Param,
    pub beta: Param,
    pub groups: usize,
}

impl GroupNorm {
    pub fn new(name: &str, channels: usize, groups: usize) -> Result<GroupNorm> {
        Ok(GroupNorm {
            gamma: Param::new(format!("{name}.gamma"), vec![1.0; channels], &[channels])?,
            beta: Param::new(format!("{name}.beta"), vec![0.0; channels], &[channels])?,
            groups,
        })
    }

    pub fn forward(&self, x: &Tensor, frozen: bool) -> Result<Tensor> {
        x.group_norm(
            self.groups,
            &self.gamma.tensor_for(frozen),
            &self.beta.tensor_for(frozen),
        )
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

/// Average-pools `[C×H×W]` down by an integer factor (no gradient path;
/// used only in score-time preprocessing).
pub fn avg_pool_image(x: &Tensor, factor: usize) -> Result<Tensor> {
    let s = x.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let (ho, wo) = (h / factor, w / factor);
    let mut out = vec![0.0; c * ho * wo];
    let norm = 1.0 / (factor * factor) as Real;
    for ch in 0..c {
        for y in 0..ho {
            for xo in 0..wo {
                let mut acc = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += x.data()[ch * h * w + (y * factor + dy) * w + xo * factor + dx];
                    }
                }
                out[ch * ho * wo + y * wo + xo] = acc * norm;
            }
        }
    }
    Tensor::from_vec(out, &[c, ho, wo])
}
