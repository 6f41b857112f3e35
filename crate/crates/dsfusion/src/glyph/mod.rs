//! Stroke-font glyphs: the letterform source for every rendered image.
//!
//! Fonts are sets of polylines in the unit square (y grows downward).
//! Rasterization draws each stroke as a thick anti-aliased line, optionally
//! sheared for slant, and fits the result into the target box.

mod augment;
pub mod builtin;
mod compose;
mod font;
mod raster;

pub use augment::{random_color, sample_augmented_glyph, AugmentMode, AugmentPolicy};
pub use compose::{compose_word, dominant_color};
pub use font::{load_stroke_font, save_stroke_font, StrokeFont};
pub use raster::{
    foreground_fraction, mask_iou, rasterize, rasterize_coverage, rasterize_strip,
    segment_foreground,
};

use crate::error::{Error, Result};
use crate::tensor::Real;

/// RGB triple with components in [0,1].
pub type Rgb = [Real; 3];

pub const BLACK: Rgb = [0.0, 0.0, 0.0];
pub const WHITE: Rgb = [1.0, 1.0, 1.0];

/// A single polyline in unit-square coordinates.
pub type Polyline = Vec<(Real, Real)>;

/// Everything needed to render one piece of text as an image.
#[derive(Clone)]
pub struct GlyphSpec {
    pub text: String,
    pub font: StrokeFont,
    pub image_size: usize,
    pub foreground_color: Rgb,
    pub background_color: Rgb,
    pub thickness_scale: Real,
    pub slant: Real,
}

impl GlyphSpec {
    pub fn new(text: impl Into<String>, font: StrokeFont, image_size: usize) -> GlyphSpec {
        GlyphSpec {
            text: text.into(),
            font,
            image_size,
            foreground_color: BLACK,
            background_color: WHITE,
            thickness_scale: 1.0,
            slant: 0.0,
        }
    }

    pub fn with_colors(mut self, fg: Rgb, bg: Rgb) -> GlyphSpec {
        self.foreground_color = fg;
        self.background_color = bg;
        self
    }

    pub fn with_thickness_scale(mut self, s: Real) -> GlyphSpec {
        self.thickness_scale = s;
        self
    }

    pub fn with_slant(mut self, s: Real) -> GlyphSpec {
        self.slant = s;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.text.is_empty() {
            return Err(Error::Argument("glyph spec: empty text".into()));
        }
        if self.image_size < 16 {
            return Err(Error::Argument(format!(
                "glyph spec: image_size {} below minimum 16",
                self.image_size
            )));
        }
        if self.foreground_color == self.background_color {
            return Err(Error::Argument(
                "glyph spec: foreground equals background".into(),
            ));
        }
        if self.thickness_scale <= 0.0 {
            return Err(Error::Argument(
                "glyph spec: thickness_scale must be positive".into(),
            ));
        }
        Ok(())
    }
}
