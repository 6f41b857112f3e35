//! Anti-aliased stroke rasterization.
//!
//! Strokes are drawn as capsules (distance-to-segment ≤ half thickness) on
//! a supersampled binary canvas, then box-filtered down to pixel coverage.
//! Each character is sheared by the slant factor first, then uniformly
//! scaled to fit its cell with a fixed margin.

use super::{GlyphSpec, Rgb};
use crate::error::Result;
use crate::tensor::{Real, Tensor};

/// Fraction of each cell left blank around a glyph.
pub const MARGIN: Real = 0.1;

/// Default supersampling factor (the 16x variant backs test oracles).
pub const SUPERSAMPLE: usize = 4;

struct Segment {
    x0: Real,
    y0: Real,
    x1: Real,
    y1: Real,
    halfwidth: Real,
}

fn dist2_point_segment(px: Real, py: Real, s: &Segment) -> Real {
    let (dx, dy) = (s.x1 - s.x0, s.y1 - s.y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 <= Real::EPSILON {
        0.0
    } else {
        (((px - s.x0) * dx + (py - s.y0) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (s.x0 + t * dx, s.y0 + t * dy);
    (px - cx) * (px - cx) + (py - cy) * (py - cy)
}

/// Collects the subpixel-space segments for one character placed in a cell
/// of `cell_w`×`cell_h` pixels whose top-left corner is at `(ox, 0)`.
fn char_segments(
    spec: &GlyphSpec,
    ch: char,
    ox: Real,
    cell_w: Real,
    cell_h: Real,
    ss: usize,
    out: &mut Vec<Segment>,
) -> Result<()> {
    let strokes = spec.font.strokes(ch)?;
    if strokes.is_empty() {
        return Ok(());
    }
    let thickness = spec.font.default_thickness * spec.thickness_scale;
    let half = thickness * 0.5;

    // shear, then measure the sheared extent (plus stroke margin)
    let shear = |x: Real, y: Real| (x + spec.slant * (1.0 - y), y);
    let mut min_x = Real::INFINITY;
    let mut max_x = Real::NEG_INFINITY;
    let mut min_y = Real::INFINITY;
    let mut max_y = Real::NEG_INFINITY;
    for line in strokes {
        for &(x, y) in line {
            let (sx, sy) = shear(x, y);
            min_x = min_x.min(sx - half);
            max_x = max_x.max(sx + half);
            min_y = min_y.min(sy - half);
            max_y = max_y.max(sy + half);
        }
    }
    let bbox_w = (max_x - min_x).max(1e-9);
    let bbox_h = (max_y - min_y).max(1e-9);

    let avail_w = cell_w * (1.0 - 2.0 * MARGIN);
    let avail_h = cell_h * (1.0 - 2.0 * MARGIN);
    let scale = (avail_w / bbox_w).min(avail_h / bbox_h);
    let off_x = ox + (cell_w - bbox_w * scale) * 0.5 - min_x * scale;
    let off_y = (cell_h - bbox_h * scale) * 0.5 - min_y * scale;

    let ssf = ss as Real;
    let halfwidth = half * scale * ssf;
    for line in strokes {
        let to_px = |&(x, y): &(Real, Real)| {
            let (sx, sy) = shear(x, y);
            ((sx * scale + off_x) * ssf, (sy * scale + off_y) * ssf)
        };
        if line.len() == 1 {
            let (x, y) = to_px(&line[0]);
            out.push(Segment {
                x0: x,
                y0: y,
                x1: x,
                y1: y,
                halfwidth,
            });
            continue;
        }
        for pair in line.windows(2) {
            let (x0, y0) = to_px(&pair[0]);
            let (x1, y1) = to_px(&pair[1]);
            out.push(Segment {
                x0,
                y0,
                x1,
                y1,
                halfwidth,
            });
        }
    }
    Ok(())
}

/// Renders per-pixel coverage (0..1) of the glyph strokes onto a canvas of
/// `width`×`height` pixels, one cell per character.
fn render_coverage(
    spec: &GlyphSpec,
    width: usize,
    height: usize,
    cell_w: Real,
    ss: usize,
) -> Result<Vec<Real>> {
    spec.validate()?;
    let mut segments = Vec::new();
    for (i, ch) in spec.text.chars().enumerate() {
        char_segments(
            spec,
            ch,
            i as Real * cell_w,
            cell_w,
            height as Real,
            ss,
            &mut segments,
        )?;
    }

    let (sw, sh) = (width * ss, height * ss);
    let mut hits = vec![0u8; sw * sh];
    for seg in &segments {
        let pad = seg.halfwidth + 1.0;
        let x_lo = ((seg.x0.min(seg.x1) - pad).floor().max(0.0)) as usize;
        let x_hi = ((seg.x0.max(seg.x1) + pad).ceil().min(sw as Real)) as usize;
        let y_lo = ((seg.y0.min(seg.y1) - pad).floor().max(0.0)) as usize;
        let y_hi = ((seg.y0.max(seg.y1) + pad).ceil().min(sh as Real)) as usize;
        let hw2 = seg.halfwidth * seg.halfwidth;
        for y in y_lo..y_hi {
            let py = y as Real + 0.5;
            let row = &mut hits[y * sw..(y + 1) * sw];
            for (x, cell) in row.iter_mut().enumerate().take(x_hi).skip(x_lo) {
                if *cell == 1 {
                    continue;
                }
                let px = x as Real + 0.5;
                if dist2_point_segment(px, py, seg) <= hw2 {
                    *cell = 1;
                }
            }
        }
    }

    let norm = 1.0 / (ss * ss) as Real;
    let mut coverage = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0u32;
            for sy in 0..ss {
                let row = &hits[(y * ss + sy) * sw..];
                for sx in 0..ss {
                    acc += u32::from(row[x * ss + sx]);
                }
            }
            coverage[y * width + x] = acc as Real * norm;
        }
    }
    Ok(coverage)
}

fn colorize(coverage: &[Real], width: usize, height: usize, fg: Rgb, bg: Rgb) -> Tensor {
    let mut data = vec![0.0; 3 * width * height];
    for c in 0..3 {
        let plane = &mut data[c * width * height..(c + 1) * width * height];
        for (o, &a) in plane.iter_mut().zip(coverage) {
            *o = bg[c] + a * (fg[c] - bg[c]);
        }
    }
    Tensor::from_vec(data, &[3, height, width]).expect("shape consistent")
}

/// Stroke coverage of the whole text fit into a square `S×S` canvas.
pub fn rasterize_coverage(spec: &GlyphSpec) -> Result<Tensor> {
    rasterize_coverage_with_ss(spec, SUPERSAMPLE)
}

pub(crate) fn rasterize_coverage_with_ss(spec: &GlyphSpec, ss: usize) -> Result<Tensor> {
    let s = spec.image_size;
    let n = spec.text.chars().count().max(1);
    let coverage = render_coverage(spec, s, s, s as Real / n as Real, ss)?;
    Tensor::from_vec(coverage, &[s, s])
}

/// Renders the spec as a `[3×S×S]` image: anti-aliased strokes in the
/// foreground color over the background color, pixel values in [0,1].
pub fn rasterize(spec: &GlyphSpec) -> Result<Tensor> {
    let s = spec.image_size;
    let coverage = rasterize_coverage(spec)?;
    Ok(colorize(
        coverage.data(),
        s,
        s,
        spec.foreground_color,
        spec.background_color,
    ))
}

/// Renders the text as a strip `[3×S×(n·S)]` with one square cell per
/// character, the layout [`compose_word`](super::compose_word) pastes into.
pub fn rasterize_strip(spec: &GlyphSpec) -> Result<Tensor> {
    let s = spec.image_size;
    let n = spec.text.chars().count().max(1);
    let coverage = render_coverage(spec, s * n, s, s as Real, SUPERSAMPLE)?;
    Ok(colorize(
        &coverage,
        s * n,
        s,
        spec.foreground_color,
        spec.background_color,
    ))
}

/// Binary mask of pixels whose color distance to `background` exceeds
/// `tau` (Euclidean in RGB).
pub fn segment_foreground(image: &Tensor, background: Rgb, tau: Real) -> Result<Tensor> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(crate::error::Error::Dimension(format!(
            "segment_foreground: expected [3×H×W], got {s:?}"
        )));
    }
    let (h, w) = (s[1], s[2]);
    let hw = h * w;
    let data = image.data();
    let mut mask = vec![0.0; hw];
    for i in 0..hw {
        let dr = data[i] - background[0];
        let dg = data[hw + i] - background[1];
        let db = data[2 * hw + i] - background[2];
        if (dr * dr + dg * dg + db * db).sqrt() > tau {
            mask[i] = 1.0;
        }
    }
    Tensor::from_vec(mask, &[h, w])
}

/// Intersection-over-union of two soft masks thresholded at 0.5.
pub fn mask_iou(a: &Tensor, b: &Tensor) -> Real {
    assert_eq!(a.shape(), b.shape(), "mask_iou: shape mismatch");
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x >= 0.5, y >= 0.5);
        if x && y {
            inter += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as Real / union as Real
    }
}

/// Mean coverage of a mask or coverage map.
pub fn foreground_fraction(mask: &Tensor) -> Real {
    mask.data().iter().sum::<Real>() / mask.numel() as Real
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyph::builtin::builtin_font;
    use crate::glyph::{GlyphSpec, BLACK, WHITE};
    use std::collections::BTreeMap;

    fn stroke_font(lines: Vec<super::super::Polyline>, thickness: Real) -> super::super::StrokeFont {
        let mut glyphs = BTreeMap::new();
        glyphs.insert('|', lines);
        super::super::StrokeFont::new("probe", glyphs, thickness).unwrap()
    }

    #[test]
    fn space_renders_uniform_background() {
        let font = builtin_font("mono-a").unwrap();
        let spec = GlyphSpec::new(" ", font, 32).with_colors(BLACK, [0.2, 0.4, 0.6]);
        let img = rasterize(&spec).unwrap();
        let hw = 32 * 32;
        for c in 0..3 {
            for i in 0..hw {
                assert!((img.data()[c * hw + i] - spec.background_color[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rasterize_is_deterministic() {
        let font = builtin_font("mono-a").unwrap();
        let spec = GlyphSpec::new("R", font, 64).with_slant(0.2);
        let a = rasterize(&spec).unwrap();
        let b = rasterize(&spec).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn color_swap_complements_in_hard_limit() {
        // with coverage α, swapping fg/bg maps each pixel v → 1-v exactly
        // when fg/bg are black/white
        let font = builtin_font("mono-a").unwrap();
        let spec = GlyphSpec::new("X", font.clone(), 32);
        let swapped = GlyphSpec::new("X", font, 32).with_colors(WHITE, BLACK);
        let a = rasterize(&spec).unwrap();
        let b = rasterize(&swapped).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x + y - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn vertical_stroke_fraction_matches_supersampling_oracle() {
        // Vertical unit stroke whose rendered width is ~25% of the canvas.
        // Geometry: sheared bbox is [t × (0.9+t)] around the stroke; the fit
        // rule scales it by 0.8·S/(0.9+t), so the drawn capsule has width
        // t·scale and segment length 0.9·scale. Width hits 0.25·S at
        // 0.8·t/(0.9+t) = 0.25, i.e. t ≈ 0.409.
        let t: Real = 0.409;
        let font = stroke_font(vec![vec![(0.5, 0.05), (0.5, 0.95)]], t);
        let s = 64usize;
        let spec = GlyphSpec::new("|", font, s);
        let cov4 = rasterize_coverage_with_ss(&spec, 4).unwrap();
        let cov16 = rasterize_coverage_with_ss(&spec, 16).unwrap();
        let f4 = foreground_fraction(&cov4);
        let f16 = foreground_fraction(&cov16);
        // 4x agrees with the dense oracle
        assert!((f4 - f16).abs() < 0.01, "4x {f4} vs 16x {f16}");
        // both agree with the analytic capsule area
        let scale = (0.8 * s as Real) / (0.9 + t);
        let len = 0.9 * scale;
        let width = t * scale;
        let area = len * width + std::f64::consts::PI as Real * (width / 2.0) * (width / 2.0);
        let expect = area / (s * s) as Real;
        assert!(
            (f16 - expect).abs() < 0.1 * expect,
            "measured {f16}, analytic {expect}"
        );
        // and the width really is ~25% of the canvas
        assert!((width / s as Real - 0.25).abs() < 0.02);
    }

    #[test]
    fn thickness_is_monotone_in_coverage() {
        let font = builtin_font("mono-a").unwrap();
        let mut last = 0.0;
        for scale in [0.5, 1.0, 1.5, 2.0] {
            let spec = GlyphSpec::new("H", font.clone(), 48).with_thickness_scale(scale);
            let f = foreground_fraction(&rasterize_coverage(&spec).unwrap());
            assert!(f >= last, "coverage dropped at thickness {scale}");
            last = f;
        }
    }

    #[test]
    fn segmentation_matches_rasterizer_coverage() {
        let font = builtin_font("mono-bold").unwrap();
        let spec = GlyphSpec::new("B", font, 64);
        let img = rasterize(&spec).unwrap();
        let mask = segment_foreground(&img, spec.background_color, 0.5).unwrap();
        let coverage = rasterize_coverage(&spec).unwrap();
        let iou = mask_iou(&mask, &coverage);
        assert!(iou > 0.95, "IoU {iou}");
    }

    #[test]
    fn segmentation_uniform_background_is_empty() {
        let img = Tensor::from_vec(vec![0.8; 3 * 16 * 16], &[3, 16, 16]).unwrap();
        let mask = segment_foreground(&img, [0.8, 0.8, 0.8], 0.3).unwrap();
        assert!(mask.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn segmentation_threshold_is_monotone() {
        let font = builtin_font("mono-a").unwrap();
        let spec = GlyphSpec::new("Q", font, 48).with_colors([0.9, 0.2, 0.1], WHITE);
        let img = rasterize(&spec).unwrap();
        let loose = segment_foreground(&img, WHITE, 0.05).unwrap();
        let tight = segment_foreground(&img, WHITE, 0.5).unwrap();
        for (l, t) in loose.data().iter().zip(tight.data()) {
            assert!(l >= t, "tau→0 mask must be a superset");
        }
    }

    #[test]
    fn missing_glyph_is_an_error() {
        let font = builtin_font("mono-a").unwrap();
        let spec = GlyphSpec::new("É", font, 32);
        assert!(rasterize(&spec).is_err());
    }
}
