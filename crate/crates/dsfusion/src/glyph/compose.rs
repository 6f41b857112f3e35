//! Word composition: one stylized letter displayed within its word.

use super::raster::{rasterize_strip, segment_foreground};
use super::{GlyphSpec, Rgb};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// The most common quantized color among foreground pixels, refined to the
/// mean of its histogram bucket. Falls back to mid-gray when segmentation
/// finds nothing.
pub fn dominant_color(image: &Tensor, background: Rgb) -> Result<Rgb> {
    const LEVELS: usize = 4;
    let mask = segment_foreground(image, background, 0.25)?;
    let s = image.shape();
    let hw = s[1] * s[2];
    let data = image.data();
    let mut counts = vec![0usize; LEVELS * LEVELS * LEVELS];
    let mut sums = vec![[0.0 as Real; 3]; LEVELS * LEVELS * LEVELS];
    for i in 0..hw {
        if mask.data()[i] < 0.5 {
            continue;
        }
        let rgb = [data[i], data[hw + i], data[2 * hw + i]];
        let bucket = rgb
            .iter()
            .map(|v| ((v * LEVELS as Real) as usize).min(LEVELS - 1))
            .fold(0, |acc, q| acc * LEVELS + q);
        counts[bucket] += 1;
        for c in 0..3 {
            sums[bucket][c] += rgb[c];
        }
    }
    let Some((bucket, &n)) = counts
        .iter()
        .enumerate()
        .max_by_key(|(_, &n)| n)
        .filter(|(_, &n)| n > 0)
    else {
        return Ok([0.5, 0.5, 0.5]);
    };
    Ok([
        sums[bucket][0] / n as Real,
        sums[bucket][1] / n as Real,
        sums[bucket][2] / n as Real,
    ])
}

/// Places `stylized` at `position` within a render of `word_spec`,
/// producing a `[3×S×(n·S)]` strip. The remaining letters use the word's
/// font, colored either by `color_override` or by the dominant color of
/// the stylized image.
pub fn compose_word(
    stylized: &Tensor,
    position: usize,
    word_spec: &GlyphSpec,
    color_override: Option<Rgb>,
) -> Result<Tensor> {
    word_spec.validate()?;
    let n = word_spec.text.chars().count();
    if position >= n {
        return Err(Error::Argument(format!(
            "compose_word: position {position} out of range for {n} letters"
        )));
    }
    let s = word_spec.image_size;
    if stylized.shape() != [3, s, s] {
        return Err(Error::Dimension(format!(
            "compose_word: stylized image must be [3×{s}×{s}], got {:?}",
            stylized.shape()
        )));
    }

    let fg = match color_override {
        Some(c) => c,
        None => dominant_color(stylized, word_spec.background_color)?,
    };
    let mut plain = word_spec.clone();
    plain.foreground_color = fg;
    let strip = rasterize_strip(&plain)?;

    let width = n * s;
    let mut data = strip.to_vec();
    for c in 0..3 {
        for y in 0..s {
            for x in 0..s {
                data[c * s * width + y * width + position * s + x] =
                    stylized.data()[c * s * s + y * s + x];
            }
        }
    }
    Tensor::from_vec(data, &[3, s, width])
}
