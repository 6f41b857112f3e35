//! Conditioned epsilon-prediction U-Net over latent feature maps.
//!
//! Residual conv blocks at each resolution receive FiLM scale/shift
//! computed from the concatenation of a sinusoidal timestep embedding and
//! a learned conditioning vector. No attention: the latents are small
//! enough that convolutions carry the context.

use crate::error::{Error, Result};
use crate::nn::{Conv2d, GroupNorm, Linear};
use crate::rng::Rng;
use crate::tensor::{Param, Real, Tensor};
use rand::Rng as _;
use rand_distr::StandardNormal;

/// Dimension of the raw sinusoidal timestep features.
const SIN_DIM: usize = 64;
/// Dimension of the processed timestep embedding.
const TIME_DIM: usize = 128;

#[derive(Clone, Copy, Debug)]
pub struct UNetConfig {
    pub latent_channels: usize,
    pub latent_hw: usize,
    pub base_width: usize,
    pub levels: usize,
    pub blocks_per_level: usize,
    pub cond_dim: usize,
    pub groups: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            latent_channels: 4,
            latent_hw: 16,
            base_width: 32,
            levels: 3,
            blocks_per_level: 2,
            cond_dim: 128,
            groups: 8,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Config("unet: need at least 2 levels".into()));
        }
        let down_factor = 1 << (self.levels - 1);
        if self.latent_hw % down_factor != 0 || self.latent_hw / down_factor < 2 {
            return Err(Error::Config(format!(
                "unet: latent size {} incompatible with {} levels",
                self.latent_hw, self.levels
            )));
        }
        if self.base_width % self.groups != 0 {
            return Err(Error::Config(format!(
                "unet: base width {} not divisible by {} norm groups",
                self.base_width, self.groups
            )));
        }
        Ok(())
    }

    fn width(&self, level: usize) -> usize {
        self.base_width << level
    }
}

/// The learned stand-in for an encoded prompt vector. Training fine-tunes
/// it alongside the denoiser; a prompt string can seed it for warm starts.
pub struct ConditioningVector {
    pub embedding: Param,
    pub trainable: bool,
}

impl ConditioningVector {
    pub fn new(dim: usize, rng: &mut Rng) -> Result<ConditioningVector> {
        let data = (0..dim)
            .map(|_| rng.sample::<Real, _>(StandardNormal) * 0.1)
            .collect();
        Ok(ConditioningVector {
            embedding: Param::new("cond.embedding", data, &[dim])?,
            trainable: true,
        })
    }

    /// Seeds the embedding deterministically from a prompt string.
    pub fn from_prompt(dim: usize, prompt: &str) -> Result<ConditioningVector> {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in prompt.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        let mut rng = crate::rng::substream(h, "cond-prompt");
        ConditioningVector::new(dim, &mut rng)
    }

    pub fn dim(&self) -> usize {
        self.embedding.shape()[0]
    }

    fn tensor_for(&self, frozen: bool) -> Tensor {
        self.embedding.tensor_for(frozen || !self.trainable)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.embedding]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.embedding]
    }
}

struct ResBlock {
    gn1: GroupNorm,
    conv1: Conv2d,
    film_scale: Linear,
    film_shift: Linear,
    gn2: GroupNorm,
    conv2: Conv2d,
    skip: Option<Conv2d>,
}

impl ResBlock {
    fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        emb_dim: usize,
        groups: usize,
        rng: &mut Rng,
    ) -> Result<ResBlock> {
        Ok(ResBlock {
            gn1: GroupNorm::new(&format!("{name}.gn1"), c_in, groups)?,
            conv1: Conv2d::new(&format!("{name}.conv1"), c_in, c_out, 3, 1, 1, rng)?,
            // zero-init keeps FiLM an identity until conditioning learns
            film_scale: Linear::new_zeroed(&format!("{name}.film_scale"), emb_dim, c_out)?,
            film_shift: Linear::new_zeroed(&format!("{name}.film_shift"), emb_dim, c_out)?,
            gn2: GroupNorm::new(&format!("{name}.gn2"), c_out, groups)?,
            conv2: Conv2d::new(&format!("{name}.conv2"), c_out, c_out, 3, 1, 1, rng)?,
            skip: if c_in == c_out {
                None
            } else {
                Some(Conv2d::new(&format!("{name}.skip"), c_in, c_out, 1, 1, 0, rng)?)
            },
        })
    }

    fn forward(&self, x: &Tensor, emb: &Tensor, frozen: bool) -> Result<Tensor> {
        let h = self.gn1.forward(x, frozen)?.silu();
        let h = self.conv1.forward(&h, frozen)?;
        let scale = self.film_scale.forward(emb, frozen)?.add_scalar(1.0);
        let shift = self.film_shift.forward(emb, frozen)?;
        let h = self.gn2.forward(&h, frozen)?;
        let h = h.mul_channel(&scale)?.add_channel(&shift)?;
        let h = h.silu();
        let h = self.conv2.forward(&h, frozen)?;
        let xs = match &self.skip {
            Some(conv) => conv.forward(x, frozen)?,
            None => x.clone(),
        };
        xs.add(&h)
    }

    fn params(&self) -> Vec<&Param> {
        let mut ps = Vec::new();
        ps.extend(self.gn1.params());
        ps.extend(self.conv1.params());
        ps.extend(self.film_scale.params());
        ps.extend(self.film_shift.params());
        ps.extend(self.gn2.params());
        ps.extend(self.conv2.params());
        if let Some(s) = &self.skip {
            ps.extend(s.params());
        }
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = Vec::new();
        ps.extend(self.gn1.params_mut());
        ps.extend(self.conv1.params_mut());
        ps.extend(self.film_scale.params_mut());
        ps.extend(self.film_shift.params_mut());
        ps.extend(self.gn2.params_mut());
        ps.extend(self.conv2.params_mut());
        if let Some(s) = &mut self.skip {
            ps.extend(s.params_mut());
        }
        ps
    }
}

struct DownLevel {
    blocks: Vec<ResBlock>,
    down: Option<Conv2d>,
}

struct UpLevel {
    up_conv: Conv2d,
    blocks: Vec<ResBlock>,
}

/// The denoising generator.
pub struct UNet {
    pub cfg: UNetConfig,
    t_lin1: Linear,
    t_lin2: Linear,
    in_conv: Conv2d,
    down: Vec<DownLevel>,
    up: Vec<UpLevel>,
    out_norm: GroupNorm,
    out_conv: Conv2d,
    param_count: usize,
}

impl UNet {
    pub fn new(cfg: UNetConfig, rng: &mut Rng) -> Result<UNet> {
        cfg.validate()?;
        let emb_dim = TIME_DIM + cfg.cond_dim;
        let t_lin1 = Linear::new("unet.time.lin1", SIN_DIM, TIME_DIM, rng)?;
        let t_lin2 = Linear::new("unet.time.lin2", TIME_DIM, TIME_DIM, rng)?;
        let in_conv = Conv2d::new(
            "unet.in_conv",
            cfg.latent_channels,
            cfg.base_width,
            3,
            1,
            1,
            rng,
        )?;

        let mut down = Vec::new();
        for level in 0..cfg.levels {
            let c = cfg.width(level);
            let mut blocks = Vec::new();
            for b in 0..cfg.blocks_per_level {
                blocks.push(ResBlock::new(
                    &format!("unet.down{level}.block{b}"),
                    c,
                    c,
                    emb_dim,
                    cfg.groups,
                    rng,
                )?);
            }
            let down_conv = if level + 1 < cfg.levels {
                Some(Conv2d::new(
                    &format!("unet.down{level}.down"),
                    c,
                    cfg.width(level + 1),
                    3,
                    2,
                    1,
                    rng,
                )?)
            } else {
                None
            };
            down.push(DownLevel {
                blocks,
                down: down_conv,
            });
        }

        let mut up = Vec::new();
        for level in (0..cfg.levels - 1).rev() {
            let c = cfg.width(level);
            let up_conv = Conv2d::new(
                &format!("unet.up{level}.upconv"),
                cfg.width(level + 1),
                c,
                3,
                1,
                1,
                rng,
            )?;
            let mut blocks = Vec::new();
            for b in 0..cfg.blocks_per_level {
                let c_in = if b == 0 { 2 * c } else { c };
                blocks.push(ResBlock::new(
                    &format!("unet.up{level}.block{b}"),
                    c_in,
                    c,
                    emb_dim,
                    cfg.groups,
                    rng,
                )?);
            }
            up.push(UpLevel { up_conv, blocks });
        }

        let out_norm = GroupNorm::new("unet.out_norm", cfg.base_width, cfg.groups)?;
        let out_conv = Conv2d::new_zeroed(
            "unet.out_conv",
            cfg.base_width,
            cfg.latent_channels,
            3,
            1,
            1,
        )?;

        let mut net = UNet {
            cfg,
            t_lin1,
            t_lin2,
            in_conv,
            down,
            up,
            out_norm,
            out_conv,
            param_count: 0,
        };
        net.param_count = net.params().iter().map(|p| p.data().len()).sum();
        Ok(net)
    }

    /// Total scalar parameter count, fixed at construction.
    pub fn param_count(&self) -> usize {
        self.param_count
    }

    fn time_embedding(&self, t: usize, frozen: bool) -> Result<Tensor> {
        let features = sinusoidal(t, SIN_DIM);
        let h = self.t_lin1.forward(&features, frozen)?.silu();
        self.t_lin2.forward(&h, frozen)
    }

    /// Predicts the injected noise for `z_t` at timestep `t`.
    pub fn forward(
        &self,
        z_t: &Tensor,
        t: usize,
        cond: &ConditioningVector,
        frozen: bool,
    ) -> Result<Tensor> {
        let want = [self.cfg.latent_channels, self.cfg.latent_hw, self.cfg.latent_hw];
        if z_t.shape() != want {
            return Err(Error::Dimension(format!(
                "unet: expected latent {want:?}, got {:?}",
                z_t.shape()
            )));
        }
        if cond.dim() != self.cfg.cond_dim {
            return Err(Error::Dimension(format!(
                "unet: conditioning dim {} != {}",
                cond.dim(),
                self.cfg.cond_dim
            )));
        }
        let temb = self.time_embedding(t, frozen)?;
        let emb = concat1d(&temb, &cond.tensor_for(frozen))?;

        let mut h = self.in_conv.forward(z_t, frozen)?;
        let mut skips = Vec::new();
        for level in &self.down {
            for block in &level.blocks {
                h = block.forward(&h, &emb, frozen)?;
            }
            if let Some(down) = &level.down {
                skips.push(h.clone());
                h = down.forward(&h, frozen)?;
            }
        }
        for level in &self.up {
            h = h.upsample2d(2)?;
            h = level.up_conv.forward(&h, frozen)?;
            let skip = skips.pop().expect("skip per up level");
            h = h.concat_channels(&skip)?;
            for block in &level.blocks {
                h = block.forward(&h, &emb, frozen)?;
            }
        }
        let h = self.out_norm.forward(&h, frozen)?.silu();
        self.out_conv.forward(&h, frozen)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut ps = Vec::new();
        ps.extend(self.t_lin1.params());
        ps.extend(self.t_lin2.params());
        ps.extend(self.in_conv.params());
        for level in &self.down {
            for b in &level.blocks {
                ps.extend(b.params());
            }
            if let Some(d) = &level.down {
                ps.extend(d.params());
            }
        }
        for level in &self.up {
            ps.extend(level.up_conv.params());
            for b in &level.blocks {
                ps.extend(b.params());
            }
        }
        ps.extend(self.out_norm.params());
        ps.extend(self.out_conv.params());
        ps
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = Vec::new();
        ps.extend(self.t_lin1.params_mut());
        ps.extend(self.t_lin2.params_mut());
        ps.extend(self.in_conv.params_mut());
        for level in &mut self.down {
            for b in &mut level.blocks {
                ps.extend(b.params_mut());
            }
            if let Some(d) = &mut level.down {
                ps.extend(d.params_mut());
            }
        }
        for level in &mut self.up {
            ps.extend(level.up_conv.params_mut());
            for b in &mut level.blocks {
                ps.extend(b.params_mut());
            }
        }
        ps.extend(self.out_norm.params_mut());
        ps.extend(self.out_conv.params_mut());
        ps
    }
}

/// Standard sinusoidal position features for an integer timestep.
fn sinusoidal(t: usize, dim: usize) -> Tensor {
    let half = dim / 2;
    let mut data = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000.0f64.ln()) * i as f64 / half as f64).exp() as Real;
        let arg = t as Real * freq;
        data[i] = arg.sin();
        data[half + i] = arg.cos();
    }
    Tensor::from_vec(data, &[dim]).expect("shape consistent")
}

fn concat1d(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (la, lb) = (a.numel(), b.numel());
    let a3 = a.reshape(&[la, 1, 1])?;
    let b3 = b.reshape(&[lb, 1, 1])?;
    a3.concat_channels(&b3)?.reshape(&[la + lb])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn tiny_unet() -> (UNet, ConditioningVector) {
        let mut rng = substream(5, "unet-init");
        let cfg = UNetConfig {
            latent_channels: 4,
            latent_hw: 8,
            base_width: 8,
            levels: 2,
            blocks_per_level: 1,
            cond_dim: 16,
            groups: 8,
        };
        let unet = UNet::new(cfg, &mut rng).unwrap();
        let cond = ConditioningVector::new(16, &mut rng).unwrap();
        (unet, cond)
    }

    #[test]
    fn output_shape_matches_input() {
        let (unet, cond) = tiny_unet();
        let mut rng = substream(6, "latent");
        let z = Tensor::randn(&[4, 8, 8], &mut rng);
        let eps = unet.forward(&z, 3, &cond, true).unwrap();
        assert_eq!(eps.shape(), z.shape());
        assert!(eps.is_finite());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (unet, cond) = tiny_unet();
        let z = Tensor::zeros(&[4, 16, 16]);
        assert!(unet.forward(&z, 0, &cond, true).is_err());
    }

    #[test]
    fn param_count_reported() {
        let (unet, _) = tiny_unet();
        let total: usize = unet.params().iter().map(|p| p.data().len()).sum();
        assert_eq!(unet.param_count(), total);
        assert!(total > 1000);
    }

    #[test]
    fn timestep_changes_output() {
        // FiLM layers start at zero, so perturb every parameter first;
        // otherwise the timestep has no pathway into the output.
        let (mut unet, cond) = tiny_unet();
        let mut rng = substream(7, "latent");
        for p in unet.params_mut() {
            let data = (0..p.data().len())
                .map(|_| rng.sample::<Real, _>(StandardNormal) * 0.2)
                .collect();
            p.set_data(data).unwrap();
        }
        let z = Tensor::randn(&[4, 8, 8], &mut rng);
        let a = unet.forward(&z, 1, &cond, true).unwrap();
        let b = unet.forward(&z, 7, &cond, true).unwrap();
        let l2: Real = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        assert!(l2 > 0.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut rng = substream(8, "unet-init");
        let cfg = UNetConfig {
            latent_hw: 6,
            levels: 3,
            ..UNetConfig::default()
        };
        assert!(UNet::new(cfg, &mut rng).is_err());
    }

    #[test]
    fn prompt_seeding_is_deterministic() {
        let a = ConditioningVector::from_prompt(32, "dragon R").unwrap();
        let b = ConditioningVector::from_prompt(32, "dragon R").unwrap();
        let c = ConditioningVector::from_prompt(32, "flame A").unwrap();
        assert_eq!(a.embedding.data(), b.embedding.data());
        assert_ne!(a.embedding.data(), c.embedding.data());
    }
}
