//! Latent-space discrimination and the alternating min-max trainer.
//!
//! The discriminator sees encoded glyph renders as real samples and the
//! generator's one-shot denoised style latents as fake samples. Training
//! alternates: ascent steps on the discriminator's binary cross-entropy
//! objective, descent steps on diffusion loss plus the (non-saturating)
//! adversarial term weighted by lambda.

use crate::codec::CodecParams;
use crate::diffusion::{
    diffusion_loss, forward_noise, predicted_z0, ConditioningVector, NoiseSchedule, UNet,
};
use crate::error::{Error, Result};
use crate::glyph::AugmentMode;
use crate::nn::{Conv2d, Linear};
use crate::rng::Rng;
use crate::tensor::{Param, Real, Tensor};
use rand::seq::SliceRandom;
use rand::Rng as _;

/// Logits are clamped to this magnitude before the sigmoid, so
/// probabilities stay strictly inside (0,1) and the BCE never sees log(0).
pub const LOGIT_CLAMP: Real = 20.0;

/// CNN over `[4×16×16]` latent feature maps producing one probability.
pub struct Discriminator {
    conv1: Conv2d,
    conv2: Conv2d,
    conv3: Conv2d,
    head: Linear,
    latent_channels: usize,
    latent_hw: usize,
    base_width: usize,
}

impl Discriminator {
    pub fn new(
        latent_channels: usize,
        latent_hw: usize,
        base_width: usize,
        rng: &mut Rng,
    ) -> Result<Discriminator> {
        if latent_hw % 8 != 0 {
            return Err(Error::Config(format!(
                "discriminator: latent size {latent_hw} must be divisible by 8"
            )));
        }
        let flat = 4 * base_width * (latent_hw / 8) * (latent_hw / 8);
        Ok(Discriminator {
            conv1: Conv2d::new("disc.conv1", latent_channels, base_width, 3, 2, 1, rng)?,
            conv2: Conv2d::new("disc.conv2", base_width, 2 * base_width, 3, 2, 1, rng)?,
            conv3: Conv2d::new("disc.conv3", 2 * base_width, 4 * base_width, 3, 2, 1, rng)?,
            // zero-initialized head: a fresh discriminator answers 0.5
            head: Linear::new_zeroed("disc.head", flat, 1)?,
            latent_channels,
            latent_hw,
            base_width,
        })
    }

    pub fn latent_channels(&self) -> usize {
        self.latent_channels
    }

    pub fn latent_hw(&self) -> usize {
        self.latent_hw
    }

    pub fn base_width(&self) -> usize {
        self.base_width
    }

    /// Clamped logit for one latent.
    pub fn logit(&self, latent: &Tensor, frozen: bool) -> Result<Tensor> {
        if latent.shape() != [self.latent_channels, self.latent_hw, self.latent_hw] {
            return Err(Error::Dimension(format!(
                "discriminator: expected [{}, {}, {}], got {:?}",
                self.latent_channels,
                self.latent_hw,
                self.latent_hw,
                latent.shape()
            )));
        }
        let h = self.conv1.forward(latent, frozen)?.silu();
        let h = self.conv2.forward(&h, frozen)?.silu();
        let h = self.conv3.forward(&h, frozen)?.silu();
        let flat = h.reshape(&[h.numel()])?;
        let logit = self.head.forward(&flat, frozen)?;
        Ok(logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut ps = Vec::new();
        ps.extend(self.conv1.params());
        ps.extend(self.conv2.params());
        ps.extend(self.conv3.params());
        ps.extend(self.head.params());
        ps
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = Vec::new();
        ps.extend(self.conv1.params_mut());
        ps.extend(self.conv2.params_mut());
        ps.extend(self.conv3.params_mut());
        ps.extend(self.head.params_mut());
        ps
    }

    fn apply_step(&mut self, lr: Real) -> Result<()> {
        for p in self.params_mut() {
            p.step(lr)?;
        }
        Ok(())
    }
}

/// `D(latent)`: probability the latent is a real glyph encoding,
/// strictly inside (0,1). Differentiable w.r.t. the latent and, when
/// `frozen` is false, the discriminator weights.
pub fn discriminate(d: &Discriminator, latent: &Tensor, frozen: bool) -> Result<Tensor> {
    if !latent.is_finite() {
        return Err(Error::Argument("discriminate: latent must be finite".into()));
    }
    Ok(d.logit(latent, frozen)?.sigmoid())
}

/// `log D(z_g) + log(1 − D(ẑ_s))`: the discriminator maximizes this, the
/// generator minimizes its second term.
pub fn discriminator_objective(
    d: &Discriminator,
    z_g: &Tensor,
    z_hat_s: &Tensor,
    frozen: bool,
) -> Result<Tensor> {
    let p_real = discriminate(d, z_g, frozen)?;
    let p_fake = discriminate(d, z_hat_s, frozen)?;
    let real_term = p_real.ln();
    let fake_term = p_fake.neg().add_scalar(1.0).ln();
    real_term.add(&fake_term)
}

/// The combined min-max value `l_diff + lambda·l_dis`.
pub fn fusion_objective(l_diff: Real, l_dis: Real, lambda: Real) -> Real {
    l_diff + lambda * l_dis
}

#[derive(Clone, Debug)]
pub struct FusionTrainConfig {
    pub lambda: Real,
    pub lr_generator: Real,
    pub lr_discriminator: Real,
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: AugmentMode,
    pub d_steps_per_g_step: usize,
    pub style_image_count: usize,
    pub seed: u64,
    pub timesteps: usize,
    pub beta_start: Real,
    pub beta_end: Real,
    pub unet: crate::diffusion::UNetConfig,
    pub disc_base_width: usize,
    /// Optional prompt string seeding the conditioning embedding.
    pub prompt: Option<String>,
}

impl Default for FusionTrainConfig {
    fn default() -> Self {
        FusionTrainConfig {
            lambda: 0.01,
            lr_generator: 1e-5,
            lr_discriminator: 1e-4,
            epochs: 200,
            batch_size: 8,
            mode: AugmentMode::SingleFont,
            d_steps_per_g_step: 1,
            style_image_count: 25,
            seed: 0,
            timesteps: 200,
            beta_start: 1e-4,
            beta_end: 0.02,
            unet: crate::diffusion::UNetConfig::default(),
            disc_base_width: 32,
            prompt: None,
        }
    }
}

impl FusionTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if self.lr_generator <= 0.0 || self.lr_discriminator <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.style_image_count < 1 {
            return Err(Error::Config("style_image_count must be >= 1".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

fn require_frozen(codec: &CodecParams) -> Result<()> {
    if !codec.frozen() {
        return Err(Error::Contract(
            "fusion training requires a frozen codec".into(),
        ));
    }
    Ok(())
}

/// One ascent step on the discriminator objective. Generator parameters
/// are untouched: the fake latents are predicted-z0 estimates computed
/// through a detached generator pass.
#[allow(clippy::too_many_arguments)]
pub fn train_step_d(
    d: &mut Discriminator,
    unet: &UNet,
    codec: &CodecParams,
    style_latents: &[Tensor],
    glyph_latents: &[Tensor],
    sched: &NoiseSchedule,
    cond: &ConditioningVector,
    lr_d: Real,
    rng: &mut Rng,
) -> Result<Real> {
    require_frozen(codec)?;
    if style_latents.is_empty() || style_latents.len() != glyph_latents.len() {
        return Err(Error::Argument(format!(
            "train_step_d: {} style vs {} glyph latents",
            style_latents.len(),
            glyph_latents.len()
        )));
    }
    let mut objective: Option<Tensor> = None;
    for (z_s, z_g) in style_latents.iter().zip(glyph_latents) {
        let t = rng.gen_range(0..sched.timesteps);
        let eps = Tensor::randn(&z_s.shape().to_vec(), rng);
        let z_bar = forward_noise(z_s, t, &eps, sched)?;
        let eps_hat = unet.forward(&z_bar, t, cond, true)?; // detached
        let z_hat = predicted_z0(&z_bar, t, &eps_hat, sched)?;
        let obj = discriminator_objective(d, z_g, &z_hat, false)?;
        objective = Some(match objective {
            Some(acc) => acc.add(&obj)?,
            None => obj,
        });
    }
    let objective = objective
        .expect("non-empty batch")
        .scale(1.0 / style_latents.len() as Real);
    let value = objective.item();
    if !value.is_finite() {
        return Err(Error::Training("discriminator objective non-finite".into()));
    }
    // ascent via descent on the negation
    objective.neg().backward()?;
    d.apply_step(lr_d)?;
    Ok(value)
}

/// One descent step on `L_diff + λ·(−log D(ẑ_s))`. Discriminator weights
/// are untouched; gradients flow through ε̂ into the denoiser and the
/// conditioning embedding. With λ = 0 the adversarial branch is skipped
/// entirely, making the step identical to plain diffusion fine-tuning.
#[allow(clippy::too_many_arguments)]
pub fn train_step_g(
    d: &Discriminator,
    unet: &mut UNet,
    cond: &mut ConditioningVector,
    codec: &CodecParams,
    style_latents: &[Tensor],
    sched: &NoiseSchedule,
    lambda: Real,
    lr_g: Real,
    rng: &mut Rng,
) -> Result<(Real, Real)> {
    require_frozen(codec)?;
    if style_latents.is_empty() {
        return Err(Error::Argument("train_step_g: empty batch".into()));
    }
    let inv_n = 1.0 / style_latents.len() as Real;
    let mut diff_acc: Option<Tensor> = None;
    let mut adv_acc: Option<Tensor> = None;
    for z_s in style_latents {
        let t = rng.gen_range(0..sched.timesteps);
        let eps = Tensor::randn(&z_s.shape().to_vec(), rng);
        let z_bar = forward_noise(z_s, t, &eps, sched)?;
        let eps_hat = unet.forward(&z_bar, t, cond, false)?;
        let l_diff = diffusion_loss(&eps_hat, &eps)?;
        diff_acc = Some(match diff_acc {
            Some(acc) => acc.add(&l_diff)?,
            None => l_diff,
        });
        if lambda > 0.0 {
            let z_hat = predicted_z0(&z_bar, t, &eps_hat, sched)?;
            let p_fake = discriminate(d, &z_hat, true)?; // frozen weights
            let l_adv = p_fake.ln().neg();
            adv_acc = Some(match adv_acc {
                Some(acc) => acc.add(&l_adv)?,
                None => l_adv,
            });
        }
    }
    let l_diff = diff_acc.expect("non-empty batch").scale(inv_n);
    let l_diff_val = l_diff.item();
    let (loss, l_adv_val) = match adv_acc {
        Some(adv) => {
            let l_adv = adv.scale(inv_n);
            let v = l_adv.item();
            (l_diff.add(&l_adv.scale(lambda))?, v)
        }
        None => (l_diff, 0.0),
    };
    if !loss.item().is_finite() {
        return Err(Error::Training("generator loss non-finite".into()));
    }
    loss.backward()?;
    for p in unet.params_mut() {
        p.step(lr_g)?;
    }
    if cond.trainable {
        cond.embedding.step(lr_g)?;
    }
    Ok((l_diff_val, l_adv_val))
}

/// Per-epoch averages of the three loss terms.
#[derive(Clone, Copy, Debug)]
pub struct EpochLosses {
    pub l_diff: Real,
    pub l_dis: Real,
    pub l_total: Real,
}

/// Everything a fusion run produces, before serialization.
pub struct FusionOutcome {
    pub unet: UNet,
    pub cond: ConditioningVector,
    pub discriminator: Discriminator,
    pub sched: NoiseSchedule,
    pub losses: Vec<EpochLosses>,
}

/// The alternating min-max loop over a style corpus.
///
/// `glyph_sampler` supplies one encoded glyph latent per call (an
/// augmented render pushed through the frozen codec); it draws from the
/// dedicated augment stream so discriminator-side randomness never
/// perturbs the generator's.
pub fn run_fusion_training(
    style_images: &[Tensor],
    codec: &CodecParams,
    cfg: &FusionTrainConfig,
    mut glyph_latent: impl FnMut(&CodecParams, &mut Rng) -> Result<Tensor>,
) -> Result<FusionOutcome> {
    cfg.validate()?;
    require_frozen(codec)?;
    if style_images.len() < cfg.style_image_count {
        return Err(Error::Config(format!(
            "fusion training: need {} style images, got {}",
            cfg.style_image_count,
            style_images.len()
        )));
    }
    let style_images = &style_images[..cfg.style_image_count];

    let sched = crate::diffusion::make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)?;
    let mut unet = UNet::new(cfg.unet, &mut crate::rng::substream(cfg.seed, "unet-init"))?;
    let mut cond = match &cfg.prompt {
        Some(p) if !p.is_empty() => ConditioningVector::from_prompt(cfg.unet.cond_dim, p)?,
        _ => ConditioningVector::new(
            cfg.unet.cond_dim,
            &mut crate::rng::substream(cfg.seed, "cond-init"),
        )?,
    };
    let mut disc = Discriminator::new(
        cfg.unet.latent_channels,
        cfg.unet.latent_hw,
        cfg.disc_base_width,
        &mut crate::rng::substream(cfg.seed, "disc-init"),
    )?;

    let style_latents: Vec<Tensor> = style_images
        .iter()
        .map(|img| codec.encode(img))
        .collect::<Result<_>>()?;

    let mut rng_shuffle = crate::rng::substream(cfg.seed, "shuffle");
    let mut rng_g = crate::rng::substream(cfg.seed, "noise-g");
    let mut rng_d = crate::rng::substream(cfg.seed, "noise-d");
    let mut rng_aug = crate::rng::substream(cfg.seed, "augment");

    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..style_latents.len()).collect();
    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng_shuffle);
        let mut sums = (0.0, 0.0);
        let mut batches = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            let batch: Vec<Tensor> = chunk.iter().map(|&i| style_latents[i].clone()).collect();
            let mut d_obj = 0.0;
            for _ in 0..cfg.d_steps_per_g_step {
                let glyphs: Vec<Tensor> = (0..batch.len())
                    .map(|_| glyph_latent(codec, &mut rng_aug))
                    .collect::<Result<_>>()?;
                d_obj = train_step_d(
                    &mut disc, &unet, codec, &batch, &glyphs, &sched, &cond,
                    cfg.lr_discriminator, &mut rng_d,
                )?;
            }
            let (l_diff, _l_adv) = train_step_g(
                &disc, &mut unet, &mut cond, codec, &batch, &sched, cfg.lambda,
                cfg.lr_generator, &mut rng_g,
            )?;
            sums.0 += l_diff;
            sums.1 += d_obj;
            batches += 1;
        }
        let l_diff = sums.0 / batches as Real;
        let l_dis = sums.1 / batches as Real;
        if !l_diff.is_finite() || !l_dis.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss at epoch {epoch}: l_diff={l_diff}, l_dis={l_dis}"
            )));
        }
        losses.push(EpochLosses {
            l_diff,
            l_dis,
            l_total: fusion_objective(l_diff, l_dis, cfg.lambda),
        });
    }
    Ok(FusionOutcome {
        unet,
        cond,
        discriminator: disc,
        sched,
        losses,
    })
}

/// Plain diffusion fine-tuning: the same generator loop with no
/// discriminator anywhere. With matching seeds this is bitwise equivalent
/// to [`run_fusion_training`] at λ = 0.
pub fn run_diffusion_training(
    style_images: &[Tensor],
    codec: &CodecParams,
    cfg: &FusionTrainConfig,
) -> Result<FusionOutcome> {
    cfg.validate()?;
    require_frozen(codec)?;
    if style_images.len() < cfg.style_image_count {
        return Err(Error::Config(format!(
            "diffusion training: need {} style images, got {}",
            cfg.style_image_count,
            style_images.len()
        )));
    }
    let style_images = &style_images[..cfg.style_image_count];

    let sched = crate::diffusion::make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)?;
    let mut unet = UNet::new(cfg.unet, &mut crate::rng::substream(cfg.seed, "unet-init"))?;
    let mut cond = match &cfg.prompt {
        Some(p) if !p.is_empty() => ConditioningVector::from_prompt(cfg.unet.cond_dim, p)?,
        _ => ConditioningVector::new(
            cfg.unet.cond_dim,
            &mut crate::rng::substream(cfg.seed, "cond-init"),
        )?,
    };
    // the discriminator exists only to satisfy the G-step signature; with
    // λ = 0 it is never evaluated
    let disc = Discriminator::new(
        cfg.unet.latent_channels,
        cfg.unet.latent_hw,
        cfg.disc_base_width,
        &mut crate::rng::substream(cfg.seed, "disc-init"),
    )?;

    let style_latents: Vec<Tensor> = style_images
        .iter()
        .map(|img| codec.encode(img))
        .collect::<Result<_>>()?;

    let mut rng_shuffle = crate::rng::substream(cfg.seed, "shuffle");
    let mut rng_g = crate::rng::substream(cfg.seed, "noise-g");

    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..style_latents.len()).collect();
    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng_shuffle);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            let batch: Vec<Tensor> = chunk.iter().map(|&i| style_latents[i].clone()).collect();
            let (l_diff, _) = train_step_g(
                &disc, &mut unet, &mut cond, codec, &batch, &sched, 0.0,
                cfg.lr_generator, &mut rng_g,
            )?;
            sum += l_diff;
            batches += 1;
        }
        let l_diff = sum / batches as Real;
        if !l_diff.is_finite() {
            return Err(Error::Training(format!(
                "non-finite diffusion loss at epoch {epoch}"
            )));
        }
        losses.push(EpochLosses {
            l_diff,
            l_dis: 0.0,
            l_total: l_diff,
        });
    }
    Ok(FusionOutcome {
        unet,
        cond,
        discriminator: disc,
        sched,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::tensor::checksum_all;
    use crate::tensor::gradcheck::{finite_diff, max_discrepancy};

    fn tiny_disc(seed: u64) -> Discriminator {
        Discriminator::new(4, 16, 8, &mut substream(seed, "disc-init")).unwrap()
    }

    #[test]
    fn fresh_discriminator_answers_half() {
        // zero-initialized final layer → output exactly 0.5 for any input
        let d = tiny_disc(1);
        let mut rng = substream(2, "probe");
        for _ in 0..3 {
            let z = Tensor::randn(&[4, 16, 16], &mut rng).scale(5.0);
            let p = discriminate(&d, &z, true).unwrap();
            assert_eq!(p.item(), 0.5);
        }
    }

    #[test]
    fn probability_bounded_for_extreme_inputs() {
        let mut rng = substream(3, "probe");
        let mut d = tiny_disc(3);
        // push the head away from zero so logits are extreme
        for p in d.params_mut() {
            let data = (0..p.data().len()).map(|i| ((i % 7) as Real - 3.0) * 2.0).collect();
            p.set_data(data).unwrap();
        }
        let z = Tensor::randn(&[4, 16, 16], &mut rng).scale(1e3);
        let p = discriminate(&d, &z, true).unwrap().item();
        assert!(p > 0.0 && p < 1.0, "p = {p}");
    }

    #[test]
    fn discriminate_gradient_wrt_latent_matches_finite_diff() {
        let mut d = tiny_disc(4);
        let mut rng = substream(5, "probe");
        // non-degenerate weights
        for p in d.params_mut() {
            let data = (0..p.data().len())
                .map(|_| rand::Rng::gen::<Real>(&mut rng) * 0.2 - 0.1)
                .collect();
            p.set_data(data).unwrap();
        }
        let z0: Vec<Real> = (0..4 * 16 * 16)
            .map(|_| rand::Rng::gen::<Real>(&mut rng) - 0.5)
            .collect();
        let z = Tensor::var(z0.clone(), &[4, 16, 16]).unwrap();
        let p = discriminate(&d, &z, true).unwrap();
        p.backward().unwrap();
        let analytic = z.grad().unwrap();
        let numeric = finite_diff(
            |vals| {
                let zt = Tensor::from_vec(vals.to_vec(), &[4, 16, 16]).unwrap();
                discriminate(&d, &zt, true).unwrap().item()
            },
            &z0,
            1e-4,
        );
        let worst = max_discrepancy(&analytic, &numeric, 1e-7);
        assert!(worst < 1e-3, "worst {worst}");
    }

    #[test]
    fn objective_analytic_values() {
        // D outputting exactly 0.5 on both → 2·ln(0.5)
        let d = tiny_disc(6);
        let mut rng = substream(7, "probe");
        let z_g = Tensor::randn(&[4, 16, 16], &mut rng);
        let z_f = Tensor::randn(&[4, 16, 16], &mut rng);
        let obj = discriminator_objective(&d, &z_g, &z_f, true).unwrap().item();
        assert!((obj - 2.0 * (0.5 as Real).ln()).abs() < 1e-12);
        assert!((obj + 1.3863).abs() < 1e-4);
    }

    #[test]
    fn objective_matches_formula_on_random_weights() {
        let mut d = tiny_disc(8);
        let mut rng = substream(9, "probe");
        for p in d.params_mut() {
            let data = (0..p.data().len())
                .map(|_| rand::Rng::gen::<Real>(&mut rng) * 0.4 - 0.2)
                .collect();
            p.set_data(data).unwrap();
        }
        let z_g = Tensor::randn(&[4, 16, 16], &mut rng);
        let z_f = Tensor::randn(&[4, 16, 16], &mut rng);
        let obj = discriminator_objective(&d, &z_g, &z_f, true).unwrap().item();
        let p_real = discriminate(&d, &z_g, true).unwrap().item();
        let p_fake = discriminate(&d, &z_f, true).unwrap().item();
        let direct = p_real.ln() + (1.0 - p_fake).ln();
        assert!((obj - direct).abs() < 1e-12);
        assert!(obj < 0.0, "objective is strictly negative with clamping");
    }

    #[test]
    fn fusion_objective_arithmetic() {
        assert_eq!(fusion_objective(0.7, -3.0, 0.0), 0.7);
        assert_eq!(fusion_objective(0.5, -1.0, 0.01), 0.49);
    }

    fn frozen_codec(seed: u64) -> CodecParams {
        let mut codec = CodecParams::new(&mut substream(seed, "codec")).unwrap();
        codec.freeze();
        codec
    }

    fn tiny_unet(seed: u64) -> (UNet, ConditioningVector) {
        let cfg = crate::diffusion::UNetConfig {
            latent_channels: 4,
            latent_hw: 16,
            base_width: 8,
            levels: 2,
            blocks_per_level: 1,
            cond_dim: 16,
            groups: 8,
        };
        let unet = UNet::new(cfg, &mut substream(seed, "unet-init")).unwrap();
        let cond = ConditioningVector::new(16, &mut substream(seed, "cond-init")).unwrap();
        (unet, cond)
    }

    #[test]
    fn d_step_leaves_generator_untouched_and_accepts_batch_of_one() {
        let codec = frozen_codec(10);
        let (unet, cond) = tiny_unet(11);
        let mut d = tiny_disc(12);
        let sched = crate::diffusion::make_schedule(16, 1e-3, 0.05).unwrap();
        let mut rng = substream(13, "noise-d");
        let z_s = vec![Tensor::randn(&[4, 16, 16], &mut rng)];
        let z_g = vec![Tensor::randn(&[4, 16, 16], &mut rng).add_scalar(1.0)];
        let g_sum_before = checksum_all(unet.params());
        let c_sum_before = cond.embedding.checksum();
        let d_sum_before = checksum_all(d.params());
        train_step_d(&mut d, &unet, &codec, &z_s, &z_g, &sched, &cond, 1e-3, &mut rng).unwrap();
        assert_eq!(g_sum_before, checksum_all(unet.params()));
        assert_eq!(c_sum_before, cond.embedding.checksum());
        assert_ne!(d_sum_before, checksum_all(d.params()));
    }

    #[test]
    fn g_step_leaves_discriminator_untouched() {
        let codec = frozen_codec(14);
        let (mut unet, mut cond) = tiny_unet(15);
        let d = tiny_disc(16);
        let sched = crate::diffusion::make_schedule(16, 1e-3, 0.05).unwrap();
        let mut rng = substream(17, "noise-g");
        let z_s = vec![
            Tensor::randn(&[4, 16, 16], &mut rng),
            Tensor::randn(&[4, 16, 16], &mut rng),
        ];
        let d_sum_before = checksum_all(d.params());
        let g_sum_before = checksum_all(unet.params());
        let (l_diff, l_adv) = train_step_g(
            &d, &mut unet, &mut cond, &codec, &z_s, &sched, 0.5, 1e-3, &mut rng,
        )
        .unwrap();
        assert_eq!(d_sum_before, checksum_all(d.params()));
        assert_ne!(g_sum_before, checksum_all(unet.params()));
        assert!(l_diff > 0.0);
        assert!(l_adv > 0.0);
    }

    #[test]
    fn unfrozen_codec_rejected() {
        let mut codec = CodecParams::new(&mut substream(18, "codec")).unwrap();
        let (unet, cond) = tiny_unet(19);
        let mut d = tiny_disc(20);
        let sched = crate::diffusion::make_schedule(8, 1e-3, 0.05).unwrap();
        let mut rng = substream(21, "noise");
        let z = vec![Tensor::zeros(&[4, 16, 16])];
        assert!(matches!(
            train_step_d(&mut d, &unet, &codec, &z, &z, &sched, &cond, 1e-3, &mut rng),
            Err(Error::Contract(_))
        ));
        codec.freeze();
        assert!(
            train_step_d(&mut d, &unet, &codec, &z, &z, &sched, &cond, 1e-3, &mut rng).is_ok()
        );
    }

    #[test]
    fn discriminator_objective_increases_over_training() {
        // 50 ascent steps against a frozen random generator separate two
        // synthetic populations.
        let codec = frozen_codec(22);
        let (unet, cond) = tiny_unet(23);
        let mut d = tiny_disc(24);
        let sched = crate::diffusion::make_schedule(16, 1e-3, 0.05).unwrap();
        let mut rng = substream(25, "noise-d");
        let mut pop_rng = substream(26, "pop");
        let z_s: Vec<Tensor> = (0..4).map(|_| Tensor::randn(&[4, 16, 16], &mut pop_rng)).collect();
        let z_g: Vec<Tensor> = (0..4)
            .map(|_| Tensor::randn(&[4, 16, 16], &mut pop_rng).scale(0.5).add_scalar(1.2))
            .collect();
        let mut first = 0.0;
        let mut last = 0.0;
        for step in 0..50 {
            let obj = train_step_d(
                &mut d, &unet, &codec, &z_s, &z_g, &sched, &cond, 2e-3, &mut rng,
            )
            .unwrap();
            if step == 0 {
                first = obj;
            }
            last = obj;
        }
        assert!(last > first, "objective did not increase: {first} -> {last}");
    }
}
