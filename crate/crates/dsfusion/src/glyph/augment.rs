//! Training-time glyph augmentation.
//!
//! Single-font mode keeps one fixed font and randomizes the stroke color
//! per draw; multi-font mode additionally picks a random font per draw.

use super::{GlyphSpec, Rgb, StrokeFont, WHITE};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};
use rand::Rng as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugmentMode {
    SingleFont,
    MultiFont,
}

impl AugmentMode {
    pub fn parse(s: &str) -> Result<AugmentMode> {
        match s {
            "single_font" => Ok(AugmentMode::SingleFont),
            "multi_font" => Ok(AugmentMode::MultiFont),
            other => Err(Error::Config(format!(
                "mode: expected single_font or multi_font, got {other:?}"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AugmentMode::SingleFont => "single_font",
            AugmentMode::MultiFont => "multi_font",
        }
    }
}

pub struct AugmentPolicy {
    pub mode: AugmentMode,
    pub font_pool: Vec<StrokeFont>,
    pub randomize_color: bool,
    pub image_size: usize,
    pub background: Rgb,
}

impl AugmentPolicy {
    pub fn new(mode: AugmentMode, font_pool: Vec<StrokeFont>, image_size: usize) -> AugmentPolicy {
        AugmentPolicy {
            mode,
            font_pool,
            randomize_color: true,
            image_size,
            background: WHITE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            AugmentMode::SingleFont => {
                if self.font_pool.len() != 1 {
                    return Err(Error::Config(format!(
                        "single_font mode needs exactly one font, got {}",
                        self.font_pool.len()
                    )));
                }
            }
            AugmentMode::MultiFont => {
                if self.font_pool.len() < 2 {
                    return Err(Error::Config(format!(
                        "multi_font mode needs at least two fonts, got {}",
                        self.font_pool.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Uniform HSV draw with value ≥ 0.3, keeping contrast against light
/// backgrounds.
pub fn random_color(rng: &mut Rng) -> Rgb {
    let h: Real = rng.gen::<Real>();
    let s: Real = rng.gen::<Real>();
    let v: Real = 0.3 + 0.7 * rng.gen::<Real>();
    hsv_to_rgb(h, s, v)
}

fn hsv_to_rgb(h: Real, s: Real, v: Real) -> Rgb {
    let h6 = (h * 6.0).rem_euclid(6.0);
    let i = h6.floor() as usize % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, t],
    }
}

/// One augmented render of `text` under the policy. Every draw consumes
/// the same number of RNG values regardless of mode, so streams stay
/// aligned across configurations.
pub fn sample_augmented_glyph(
    policy: &AugmentPolicy,
    text: &str,
    rng: &mut Rng,
) -> Result<Tensor> {
    policy.validate()?;
    if policy.font_pool.is_empty() {
        return Err(Error::Config("augment: empty font pool".into()));
    }
    let font_idx = match policy.mode {
        AugmentMode::SingleFont => {
            let _ = rng.gen::<u64>(); // burn the draw the multi-font branch uses
            0
        }
        AugmentMode::MultiFont => rng.gen_range(0..policy.font_pool.len()),
    };
    let color = if policy.randomize_color {
        random_color(rng)
    } else {
        let _ = random_color(rng);
        super::BLACK
    };
    let font = policy.font_pool[font_idx].clone();
    if !font.supports(text) {
        return Err(Error::GlyphMissing(
            text.chars()
                .find(|c| *c != ' ' && !font.glyphs.contains_key(c))
                .unwrap_or('?'),
        ));
    }
    let spec = GlyphSpec::new(text, font, policy.image_size)
        .with_colors(color, policy.background);
    super::rasterize(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyph::builtin::builtin_fonts;
    use crate::rng::substream;

    #[test]
    fn single_font_fixed_font_varying_colors() {
        let fonts = builtin_fonts();
        let policy = AugmentPolicy::new(AugmentMode::SingleFont, vec![fonts[0].clone()], 32);
        let mut rng = substream(3, "augment");
        let a = sample_augmented_glyph(&policy, "A", &mut rng).unwrap();
        let b = sample_augmented_glyph(&policy, "A", &mut rng).unwrap();
        // same strokes, different colors → images differ
        assert_ne!(a.data(), b.data());
    }

    #[test]
    fn same_seed_same_image() {
        let fonts = builtin_fonts();
        let policy = AugmentPolicy::new(AugmentMode::MultiFont, fonts, 32);
        let mut r1 = substream(9, "augment");
        let mut r2 = substream(9, "augment");
        let a = sample_augmented_glyph(&policy, "K", &mut r1).unwrap();
        let b = sample_augmented_glyph(&policy, "K", &mut r2).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn multi_font_draws_every_font() {
        // With color randomization off, each draw is identified by matching
        // it against a fixed-color render of every pool font.
        let fonts = builtin_fonts();
        let n = fonts.len();
        let mut policy = AugmentPolicy::new(AugmentMode::MultiFont, fonts.clone(), 24);
        policy.randomize_color = false;
        let references: Vec<Vec<crate::tensor::Real>> = fonts
            .iter()
            .map(|f| {
                crate::glyph::rasterize(&crate::glyph::GlyphSpec::new("K", f.clone(), 24))
                    .unwrap()
                    .to_vec()
            })
            .collect();
        let mut rng = substream(11, "augment");
        let mut seen = vec![false; n];
        for _ in 0..1000 {
            let img = sample_augmented_glyph(&policy, "K", &mut rng).unwrap();
            let idx = references
                .iter()
                .position(|r| r.as_slice() == img.data())
                .expect("draw matches a pool font");
            seen[idx] = true;
        }
        assert!(seen.iter().all(|&s| s), "some font never drawn: {seen:?}");
    }

    #[test]
    fn mode_invariants_enforced() {
        let fonts = builtin_fonts();
        let bad_single = AugmentPolicy::new(AugmentMode::SingleFont, fonts.clone(), 32);
        assert!(bad_single.validate().is_err());
        let bad_multi = AugmentPolicy::new(AugmentMode::MultiFont, vec![fonts[0].clone()], 32);
        assert!(bad_multi.validate().is_err());
    }

    #[test]
    fn random_colors_keep_minimum_value() {
        let mut rng = substream(5, "augment");
        for _ in 0..200 {
            let [r, g, b] = random_color(&mut rng);
            let v = r.max(g).max(b);
            assert!(v >= 0.3 - 1e-12);
            assert!((0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&g) && (0.0..=1.0).contains(&b));
        }
    }
}
