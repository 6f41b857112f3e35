//! Denoising diffusion over codec latents: schedule, forward noising,
//! epsilon prediction, and samplers.

mod sampler;
mod schedule;
mod unet;

pub use sampler::{
    ddim_timesteps, sample_ddim, sample_ddim_from, sample_ddpm, sample_ddpm_chain,
};
pub use schedule::{diffusion_loss, forward_noise, make_schedule, predicted_z0, NoiseSchedule};
pub use unet::{ConditioningVector, UNet, UNetConfig};
