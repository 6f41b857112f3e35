//! Run configuration: flat `key = value` text with `#` comments.
//!
//! Every key has a default, so an empty file is a valid config. Unknown
//! keys are rejected, and validation failures name the offending key.

use crate::error::{Error, Result};
use crate::glyph::AugmentMode;
use crate::tensor::Real;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    // fusion training
    pub lambda: Real,
    pub lr_generator: Real,
    pub lr_discriminator: Real,
    /// Resolved from the mode when absent: 200 single-font, 300 multi-font.
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: AugmentMode,
    pub d_steps_per_g_step: usize,
    pub style_image_count: usize,
    pub seed: u64,
    pub text: String,
    pub prompt: String,
    // paths
    pub style_dir: String,
    /// Comma-separated font paths or builtin names.
    pub fonts: Vec<String>,
    pub output_dir: String,
    // geometry and schedule
    pub image_size: usize,
    pub timesteps: usize,
    pub beta_start: Real,
    pub beta_end: Real,
    // architecture
    pub unet_base_width: usize,
    pub unet_levels: usize,
    pub unet_blocks: usize,
    pub cond_dim: usize,
    pub disc_base_width: usize,
    // codec training
    pub codec_epochs: usize,
    pub codec_lr: Real,
    pub codec_batch: usize,
    // classifier training
    pub clf_epochs: usize,
    pub clf_samples_per_glyph: usize,
    pub clf_lr: Real,
    // sampling and evaluation
    pub sampler: SamplerKind,
    pub sampler_steps: usize,
    pub n_candidates: usize,
    pub blur_sigma: Real,
    pub stylize_position: usize,
    pub deterministic_mode: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    Ddpm,
    Ddim,
}

impl SamplerKind {
    fn parse(s: &str) -> Result<SamplerKind> {
        match s {
            "ddpm" => Ok(SamplerKind::Ddpm),
            "ddim" => Ok(SamplerKind::Ddim),
            other => Err(Error::Config(format!(
                "sampler: expected ddpm or ddim, got {other:?}"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerKind::Ddpm => "ddpm",
            SamplerKind::Ddim => "ddim",
        }
    }
}

pub const BUILTIN_FONT_NAMES: [&str; 5] =
    ["mono-a", "mono-bold", "mono-thin", "mono-slant", "mono-round"];

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lambda: 0.01,
            lr_generator: 1e-5,
            lr_discriminator: 1e-4,
            epochs: 200,
            batch_size: 8,
            mode: AugmentMode::SingleFont,
            d_steps_per_g_step: 1,
            style_image_count: 25,
            seed: 0,
            text: "A".to_string(),
            prompt: String::new(),
            style_dir: "assets/demo-style".to_string(),
            fonts: BUILTIN_FONT_NAMES.iter().map(|s| s.to_string()).collect(),
            output_dir: "out".to_string(),
            image_size: 64,
            timesteps: 200,
            beta_start: 1e-4,
            beta_end: 0.02,
            unet_base_width: 32,
            unet_levels: 3,
            unet_blocks: 2,
            cond_dim: 128,
            disc_base_width: 32,
            codec_epochs: 30,
            codec_lr: 1e-3,
            codec_batch: 8,
            clf_epochs: 6,
            clf_samples_per_glyph: 8,
            clf_lr: 2e-3,
            sampler: SamplerKind::Ddpm,
            sampler_steps: 50,
            n_candidates: 4,
            blur_sigma: 1.0,
            stylize_position: 0,
            deterministic_mode: true,
        }
    }
}

fn bad(key: &str, detail: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {detail}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| bad(key, format!("cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(bad(key, format!("expected a boolean, got {other:?}"))),
    }
}

/// Parses config text. `DSF_DETERMINISTIC=1` in the environment forces
/// deterministic mode regardless of the file.
pub fn parse_config(content: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut epochs_explicit = false;
    for (lineno, raw) in content.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got {line:?}",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "lambda" => cfg.lambda = parse_num(key, value)?,
            "lr_generator" => cfg.lr_generator = parse_num(key, value)?,
            "lr_discriminator" => cfg.lr_discriminator = parse_num(key, value)?,
            "epochs" => {
                cfg.epochs = parse_num(key, value)?;
                epochs_explicit = true;
            }
            "batch_size" => cfg.batch_size = parse_num(key, value)?,
            "mode" => cfg.mode = AugmentMode::parse(value)?,
            "d_steps_per_g_step" => cfg.d_steps_per_g_step = parse_num(key, value)?,
            "style_image_count" => cfg.style_image_count = parse_num(key, value)?,
            "seed" => cfg.seed = parse_num(key, value)?,
            "text" => cfg.text = value.to_string(),
            "prompt" => cfg.prompt = value.to_string(),
            "style_dir" => cfg.style_dir = value.to_string(),
            "fonts" => {
                cfg.fonts = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
            "output_dir" => cfg.output_dir = value.to_string(),
            "image_size" => cfg.image_size = parse_num(key, value)?,
            "timesteps" => cfg.timesteps = parse_num(key, value)?,
            "beta_start" => cfg.beta_start = parse_num(key, value)?,
            "beta_end" => cfg.beta_end = parse_num(key, value)?,
            "unet_base_width" => cfg.unet_base_width = parse_num(key, value)?,
            "unet_levels" => cfg.unet_levels = parse_num(key, value)?,
            "unet_blocks" => cfg.unet_blocks = parse_num(key, value)?,
            "cond_dim" => cfg.cond_dim = parse_num(key, value)?,
            "disc_base_width" => cfg.disc_base_width = parse_num(key, value)?,
            "codec_epochs" => cfg.codec_epochs = parse_num(key, value)?,
            "codec_lr" => cfg.codec_lr = parse_num(key, value)?,
            "codec_batch" => cfg.codec_batch = parse_num(key, value)?,
            "clf_epochs" => cfg.clf_epochs = parse_num(key, value)?,
            "clf_samples_per_glyph" => cfg.clf_samples_per_glyph = parse_num(key, value)?,
            "clf_lr" => cfg.clf_lr = parse_num(key, value)?,
            "sampler" => cfg.sampler = SamplerKind::parse(value)?,
            "sampler_steps" => cfg.sampler_steps = parse_num(key, value)?,
            "n_candidates" => cfg.n_candidates = parse_num(key, value)?,
            "blur_sigma" => cfg.blur_sigma = parse_num(key, value)?,
            "stylize_position" => cfg.stylize_position = parse_num(key, value)?,
            "deterministic_mode" => cfg.deterministic_mode = parse_bool(key, value)?,
            unknown => {
                return Err(Error::Config(format!(
                    "unknown key {unknown:?} at line {}",
                    lineno + 1
                )))
            }
        }
    }
    if !epochs_explicit && cfg.mode == AugmentMode::MultiFont {
        cfg.epochs = 300;
    }
    if std::env::var("DSF_DETERMINISTIC").as_deref() == Ok("1") {
        cfg.deterministic_mode = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(bad("lambda", "must be >= 0"));
        }
        if self.lr_generator <= 0.0 {
            return Err(bad("lr_generator", "must be > 0"));
        }
        if self.lr_discriminator <= 0.0 {
            return Err(bad("lr_discriminator", "must be > 0"));
        }
        if self.epochs == 0 {
            return Err(bad("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be >= 1"));
        }
        if self.style_image_count == 0 {
            return Err(bad("style_image_count", "must be >= 1"));
        }
        if self.text.is_empty() {
            return Err(bad("text", "must be non-empty"));
        }
        if self.fonts.is_empty() {
            return Err(bad("fonts", "must list at least one font"));
        }
        if self.image_size < 16 {
            return Err(bad("image_size", "must be >= 16"));
        }
        if self.image_size != 64 {
            return Err(bad("image_size", "only 64 is supported in this version"));
        }
        if self.timesteps == 0 {
            return Err(bad("timesteps", "must be >= 1"));
        }
        if !(self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end < 1.0) {
            return Err(bad("beta_start", "need 0 < beta_start <= beta_end < 1"));
        }
        if self.sampler_steps == 0 || self.sampler_steps > self.timesteps {
            return Err(bad("sampler_steps", "must be in 1..=timesteps"));
        }
        if self.n_candidates == 0 {
            return Err(bad("n_candidates", "must be >= 1"));
        }
        if self.blur_sigma < 0.0 {
            return Err(bad("blur_sigma", "must be >= 0"));
        }
        if self.stylize_position >= self.text.chars().count() {
            return Err(bad("stylize_position", "out of range for text"));
        }
        if self.mode == AugmentMode::MultiFont && self.fonts.len() < 2 {
            return Err(bad("fonts", "multi_font mode needs at least two fonts"));
        }
        Ok(())
    }

    /// Canonical serialization; `parse_config` of this text reproduces the
    /// config exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("lambda", format!("{}", self.lambda));
        kv("lr_generator", format!("{}", self.lr_generator));
        kv("lr_discriminator", format!("{}", self.lr_discriminator));
        kv("epochs", format!("{}", self.epochs));
        kv("batch_size", format!("{}", self.batch_size));
        kv("mode", self.mode.as_str().to_string());
        kv("d_steps_per_g_step", format!("{}", self.d_steps_per_g_step));
        kv("style_image_count", format!("{}", self.style_image_count));
        kv("seed", format!("{}", self.seed));
        kv("text", self.text.clone());
        if !self.prompt.is_empty() {
            kv("prompt", self.prompt.clone());
        }
        kv("style_dir", self.style_dir.clone());
        kv("fonts", self.fonts.join(","));
        kv("output_dir", self.output_dir.clone());
        kv("image_size", format!("{}", self.image_size));
        kv("timesteps", format!("{}", self.timesteps));
        kv("beta_start", format!("{}", self.beta_start));
        kv("beta_end", format!("{}", self.beta_end));
        kv("unet_base_width", format!("{}", self.unet_base_width));
        kv("unet_levels", format!("{}", self.unet_levels));
        kv("unet_blocks", format!("{}", self.unet_blocks));
        kv("cond_dim", format!("{}", self.cond_dim));
        kv("disc_base_width", format!("{}", self.disc_base_width));
        kv("codec_epochs", format!("{}", self.codec_epochs));
        kv("codec_lr", format!("{}", self.codec_lr));
        kv("codec_batch", format!("{}", self.codec_batch));
        kv("clf_epochs", format!("{}", self.clf_epochs));
        kv(
            "clf_samples_per_glyph",
            format!("{}", self.clf_samples_per_glyph),
        );
        kv("clf_lr", format!("{}", self.clf_lr));
        kv("sampler", self.sampler.as_str().to_string());
        kv("sampler_steps", format!("{}", self.sampler_steps));
        kv("n_candidates", format!("{}", self.n_candidates));
        kv("blur_sigma", format!("{}", self.blur_sigma));
        kv("stylize_position", format!("{}", self.stylize_position));
        kv(
            "deterministic_mode",
            format!("{}", self.deterministic_mode),
        );
        s
    }
}

/// Reads and validates a config file. Path-valued keys present in the
/// file must point at existing locations.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    let cfg = parse_config(&content)?;
    let explicit_style_dir = content
        .lines()
        .any(|l| l.trim_start().starts_with("style_dir"));
    if explicit_style_dir && !Path::new(&cfg.style_dir).is_dir() {
        return Err(bad(
            "style_dir",
            format!("{} is not a directory", cfg.style_dir),
        ));
    }
    Ok(cfg)
}

pub fn save_config(cfg: &RunConfig, path: impl AsRef<Path>) -> Result<()> {
    crate::image_io::write_atomic(path, cfg.to_text().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.lambda, 0.01);
        assert_eq!(cfg.style_image_count, 25);
        assert_eq!(cfg.lr_generator, 1e-5);
        assert_eq!(cfg.lr_discriminator, 1e-4);
    }

    #[test]
    fn negative_lambda_names_the_key() {
        match parse_config("lambda = -1") {
            Err(Error::Config(msg)) => assert!(msg.contains("lambda"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        match parse_config("lamda = 0.5") {
            Err(Error::Config(msg)) => assert!(msg.contains("lamda"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn bad_type_names_the_key() {
        match parse_config("epochs = soon") {
            Err(Error::Config(msg)) => assert!(msg.contains("epochs"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_spacing() {
        let cfg = parse_config("# a comment\n  lambda = 0.5  # trailing\n\nseed=9\n").unwrap();
        assert_eq!(cfg.lambda, 0.5);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn multi_font_defaults_to_300_epochs() {
        let cfg = parse_config("mode = multi_font").unwrap();
        assert_eq!(cfg.epochs, 300);
        let cfg = parse_config("mode = multi_font\nepochs = 42").unwrap();
        assert_eq!(cfg.epochs, 42);
    }

    #[test]
    fn roundtrip_identity() {
        let mut cfg = RunConfig::default();
        cfg.lambda = 0.125;
        cfg.seed = 1234567;
        cfg.text = "CAT".into();
        cfg.mode = AugmentMode::MultiFont;
        cfg.epochs = 17;
        cfg.beta_end = 0.033;
        cfg.sampler = SamplerKind::Ddim;
        cfg.prompt = "flame C".into();
        let back = parse_config(&cfg.to_text()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let mut cfg = RunConfig::default();
        cfg.blur_sigma = 2.5;
        cfg.style_dir = dir.path().to_string_lossy().into_owned();
        save_config(&cfg, &path).unwrap();
        let back = load_config(&path).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn explicit_missing_style_dir_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "style_dir = /nonexistent/path\n").unwrap();
        match load_config(&path) {
            Err(Error::Config(msg)) => assert!(msg.contains("style_dir"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
