//! Convolutional autoencoder: 64×64 RGB images to 4×16×16 latents and
//! back. Trained once on the style corpus plus glyph renders, then frozen
//! for the rest of the pipeline.

use crate::error::{Error, Result};
use crate::nn::Conv2d;
use crate::rng::Rng;
use crate::tensor::{Param, Real, Tensor};
use rand::seq::SliceRandom;

pub const IMAGE_SIZE: usize = 64;
pub const LATENT_CHANNELS: usize = 4;
pub const LATENT_HW: usize = 16;

pub struct CodecParams {
    enc1: Conv2d, // 3 -> 16, /2
    enc2: Conv2d, // 16 -> 32, /2
    enc3: Conv2d, // 32 -> 32
    enc4: Conv2d, // 32 -> 4
    dec1: Conv2d, // 4 -> 32
    dec2: Conv2d, // 32 -> 32
    dec3: Conv2d, // 32 -> 16, after x2
    dec4: Conv2d, // 16 -> 3, after x2
    frozen: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct CodecTrainConfig {
    pub epochs: usize,
    pub lr: Real,
    pub batch_size: usize,
}

impl Default for CodecTrainConfig {
    fn default() -> Self {
        CodecTrainConfig {
            epochs: 30,
            lr: 1e-3,
            batch_size: 8,
        }
    }
}

impl CodecParams {
    pub fn new(rng: &mut Rng) -> Result<CodecParams> {
        Ok(CodecParams {
            enc1: Conv2d::new("codec.enc1", 3, 16, 3, 2, 1, rng)?,
            enc2: Conv2d::new("codec.enc2", 16, 32, 3, 2, 1, rng)?,
            enc3: Conv2d::new("codec.enc3", 32, 32, 3, 1, 1, rng)?,
            enc4: Conv2d::new("codec.enc4", 32, LATENT_CHANNELS, 3, 1, 1, rng)?,
            dec1: Conv2d::new("codec.dec1", LATENT_CHANNELS, 32, 3, 1, 1, rng)?,
            dec2: Conv2d::new("codec.dec2", 32, 32, 3, 1, 1, rng)?,
            dec3: Conv2d::new("codec.dec3", 32, 16, 3, 1, 1, rng)?,
            dec4: Conv2d::new("codec.dec4", 16, 3, 3, 1, 1, rng)?,
            frozen: false,
        })
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// A frozen copy sharing the same weights.
    pub fn clone_frozen(&self) -> Result<CodecParams> {
        Ok(CodecParams {
            enc1: self.enc1.clone_weights()?,
            enc2: self.enc2.clone_weights()?,
            enc3: self.enc3.clone_weights()?,
            enc4: self.enc4.clone_weights()?,
            dec1: self.dec1.clone_weights()?,
            dec2: self.dec2.clone_weights()?,
            dec3: self.dec3.clone_weights()?,
            dec4: self.dec4.clone_weights()?,
            frozen: true,
        })
    }

    fn check_image(image: &Tensor) -> Result<()> {
        if image.shape() != [3, IMAGE_SIZE, IMAGE_SIZE] {
            return Err(Error::Dimension(format!(
                "codec: expected [3×{IMAGE_SIZE}×{IMAGE_SIZE}] image, got {:?}",
                image.shape()
            )));
        }
        if image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Argument(
                "codec: image values must lie in [0,1]".into(),
            ));
        }
        Ok(())
    }

    fn forward_enc(&self, image: &Tensor, frozen: bool) -> Result<Tensor> {
        let h = self.enc1.forward(image, frozen)?.silu();
        let h = self.enc2.forward(&h, frozen)?.silu();
        let h = self.enc3.forward(&h, frozen)?.silu();
        self.enc4.forward(&h, frozen)
    }

    fn forward_dec(&self, latent: &Tensor, frozen: bool) -> Result<Tensor> {
        let h = self.dec1.forward(latent, frozen)?.silu();
        let h = self.dec2.forward(&h, frozen)?.silu();
        let h = h.upsample2d(2)?;
        let h = self.dec3.forward(&h, frozen)?.silu();
        let h = h.upsample2d(2)?;
        Ok(self.dec4.forward(&h, frozen)?.sigmoid())
    }

    /// Maps an image to its latent feature map. Always detached: encoding
    /// never records gradients, whether or not the codec is frozen.
    pub fn encode(&self, image: &Tensor) -> Result<Tensor> {
        Self::check_image(image)?;
        self.forward_enc(image, true)
    }

    /// Maps a latent back to image space, with outputs in [0,1]. Gradients
    /// flow through `latent` when it is tracked; the codec weights stay
    /// detached.
    pub fn decode(&self, latent: &Tensor) -> Result<Tensor> {
        if latent.shape() != [LATENT_CHANNELS, LATENT_HW, LATENT_HW] {
            return Err(Error::Dimension(format!(
                "codec: expected [{LATENT_CHANNELS}×{LATENT_HW}×{LATENT_HW}] latent, got {:?}",
                latent.shape()
            )));
        }
        if !latent.is_finite() {
            return Err(Error::Argument("codec: latent must be finite".into()));
        }
        self.forward_dec(latent, true)
    }

    /// One Adam update over all codec parameters.
    pub fn apply_step(&mut self, lr: Real) -> Result<()> {
        if self.frozen {
            return Err(Error::Contract(
                "codec is frozen; optimizer steps are forbidden".into(),
            ));
        }
        for p in self.params_mut() {
            p.step(lr)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut ps = Vec::new();
        for layer in [
            &self.enc1, &self.enc2, &self.enc3, &self.enc4, &self.dec1, &self.dec2, &self.dec3,
            &self.dec4,
        ] {
            ps.extend(layer.params());
        }
        ps
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = Vec::new();
        for layer in [
            &mut self.enc1,
            &mut self.enc2,
            &mut self.enc3,
            &mut self.enc4,
            &mut self.dec1,
            &mut self.dec2,
            &mut self.dec3,
            &mut self.dec4,
        ] {
            ps.extend(layer.params_mut());
        }
        ps
    }
}

/// Trains a fresh codec on `corpus` and returns it frozen, along with the
/// per-epoch reconstruction MSE curve.
pub fn train_codec(
    corpus: &[Tensor],
    cfg: &CodecTrainConfig,
    rng: &mut Rng,
) -> Result<(CodecParams, Vec<Real>)> {
    if corpus.is_empty() {
        return Err(Error::Config("codec training: empty corpus".into()));
    }
    if corpus.len() < 64 {
        return Err(Error::Config(format!(
            "codec training: need at least 64 images, got {}",
            corpus.len()
        )));
    }
    for img in corpus {
        CodecParams::check_image(img)?;
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config(
            "codec training: epochs and batch_size must be positive".into(),
        ));
    }

    let mut codec = CodecParams::new(rng)?;
    let mut epoch_mse = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    for _epoch in 0..cfg.epochs {
        indices.shuffle(rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in indices.chunks(cfg.batch_size) {
            let mut batch_loss: Option<Tensor> = None;
            for &i in batch {
                let latent = codec.forward_enc(&corpus[i], false)?;
                let recon = codec.forward_dec(&latent, false)?;
                let loss = recon.mse(&corpus[i])?;
                batch_loss = Some(match batch_loss {
                    Some(acc) => acc.add(&loss)?,
                    None => loss,
                });
            }
            let loss = batch_loss
                .expect("non-empty batch")
                .scale(1.0 / batch.len() as Real);
            if !loss.is_finite() {
                return Err(Error::Training("codec loss went non-finite".into()));
            }
            total += loss.item() * batch.len() as Real;
            count += batch.len();
            loss.backward()?;
            codec.apply_step(cfg.lr)?;
        }
        epoch_mse.push(total / count as Real);
    }
    codec.freeze();
    Ok((codec, epoch_mse))
}
