//! Noise schedule and the closed-form noising/denoising algebra.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Per-timestep β, α = 1−β, and ᾱ = Πα values.
#[derive(Clone, Debug)]
pub struct NoiseSchedule {
    pub timesteps: usize,
    pub beta: Vec<Real>,
    pub alpha: Vec<Real>,
    pub alpha_bar: Vec<Real>,
}

/// Linear β interpolation from `beta_start` to `beta_end` over `t_count`
/// steps, with ᾱ accumulated by running product.
pub fn make_schedule(t_count: usize, beta_start: Real, beta_end: Real) -> Result<NoiseSchedule> {
    if t_count < 1 {
        return Err(Error::Argument("schedule: need at least one timestep".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Argument(format!(
            "schedule: need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let mut beta = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let frac = if t_count == 1 {
            0.0
        } else {
            t as Real / (t_count - 1) as Real
        };
        beta.push(beta_start + (beta_end - beta_start) * frac);
    }
    let alpha: Vec<Real> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(t_count);
    let mut prod = 1.0;
    for a in &alpha {
        prod *= a;
        alpha_bar.push(prod);
    }
    Ok(NoiseSchedule {
        timesteps: t_count,
        beta,
        alpha,
        alpha_bar,
    })
}

impl NoiseSchedule {
    pub fn check_t(&self, t: usize) -> Result<()> {
        if t >= self.timesteps {
            return Err(Error::Argument(format!(
                "timestep {t} out of range 0..{}",
                self.timesteps
            )));
        }
        Ok(())
    }
}

/// `z_t = √ᾱ_t · z0 + √(1−ᾱ_t) · ε`, the closed form of iterating the
/// per-step noise injection up to `t`.
pub fn forward_noise(z0: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_t(t)?;
    if z0.shape() != eps.shape() {
        return Err(Error::Dimension(format!(
            "forward_noise: z0 {:?} vs eps {:?}",
            z0.shape(),
            eps.shape()
        )));
    }
    let ab = sched.alpha_bar[t];
    z0.scale(ab.sqrt()).add(&eps.scale((1.0 - ab).sqrt()))
}

/// Recovers the one-shot denoised estimate
/// `ẑ = (z_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t`; gradients flow through `eps_hat`.
pub fn predicted_z0(
    z_t: &Tensor,
    t: usize,
    eps_hat: &Tensor,
    sched: &NoiseSchedule,
) -> Result<Tensor> {
    sched.check_t(t)?;
    if z_t.shape() != eps_hat.shape() {
        return Err(Error::Dimension(format!(
            "predicted_z0: z_t {:?} vs eps_hat {:?}",
            z_t.shape(),
            eps_hat.shape()
        )));
    }
    let ab = sched.alpha_bar[t];
    let diff = z_t.sub(&eps_hat.scale((1.0 - ab).sqrt()))?;
    Ok(diff.scale(1.0 / ab.sqrt()))
}

/// Mean squared error between predicted and true noise (mean reduction).
pub fn diffusion_loss(eps_hat: &Tensor, eps: &Tensor) -> Result<Tensor> {
    if eps_hat.shape() != eps.shape() {
        return Err(Error::Dimension(format!(
            "diffusion_loss: {:?} vs {:?}",
            eps_hat.shape(),
            eps.shape()
        )));
    }
    eps_hat.mse(eps)
}
