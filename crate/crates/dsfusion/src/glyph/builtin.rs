//! Built-in stroke fonts.
//!
//! One hand-authored sans skeleton covers A–Z and 0–9; the bundled family
//! derives weight, slant, and corner-rounding variants from it. The
//! `assets/fonts/*.strokefont` files shipped with the repo are serialized
//! from these definitions.

use super::font::StrokeFont;
use super::Polyline;
use crate::tensor::Real;
use std::collections::BTreeMap;

type P = (Real, Real);

fn skeleton() -> Vec<(char, Vec<Vec<P>>)> {
    vec![
        ('A', vec![
            vec![(0.10, 0.95), (0.50, 0.05), (0.90, 0.95)],
            vec![(0.28, 0.62), (0.72, 0.62)],
        ]),
        ('B', vec![
            vec![(0.15, 0.05), (0.15, 0.95)],
            vec![(0.15, 0.05), (0.60, 0.05), (0.78, 0.14), (0.78, 0.36), (0.60, 0.48), (0.15, 0.48)],
            vec![(0.15, 0.48), (0.65, 0.48), (0.85, 0.58), (0.85, 0.82), (0.65, 0.95), (0.15, 0.95)],
        ]),
        ('C', vec![
            vec![(0.85, 0.20), (0.65, 0.06), (0.35, 0.06), (0.15, 0.22), (0.15, 0.78), (0.35, 0.94), (0.65, 0.94), (0.85, 0.80)],
        ]),
        ('D', vec![
            vec![(0.15, 0.05), (0.15, 0.95)],
            vec![(0.15, 0.05), (0.55, 0.05), (0.82, 0.25), (0.82, 0.75), (0.55, 0.95), (0.15, 0.95)],
        ]),
        ('E', vec![
            vec![(0.15, 0.05), (0.15, 0.95)],
            vec![(0.15, 0.05), (0.85, 0.05)],
            vec![(0.15, 0.50), (0.70, 0.50)],
            vec![(0.15, 0.95), (0.85, 0.95)],
        ]),
        ('F', vec![
            vec![(0.15, 0.05), (0.15, 0.95)],
            vec![(0.15, 0.05), (0.85, 0.05)],
            vec![(0.15, 0.50), (0.68, 0.50)],
        ]),
        ('G', vec![
            vec![(0.85, 0.20), (0.65, 0.06), (0.35, 0.06), (0.15, 0.22), (0.15, 0.78), (0.35, 0.94), (0.65, 0.94), (0.85, 0.80), (0.85, 0.55), (0.55, 0.55)],
        ]),
        ('H', vec![
            vec![(0.15, 0.05), (0.15, 0.95)],
            vec![(0.85, 0.05), (0.85, 0.95)],
            vec![(0.15, 0.50), (0.85, 0.50)],
        ]),
        ('I', vec![
            vec![(0.50, 0.05), (0.50, 0.95)],
            vec![(0.30, 0.05), (0.70, 0.05)],
            vec![(0.30, 0.95), (0.70, 0.95)],
        ]),
        ('J', vec![
            vec![(0.40, 0.05), (0.85, 0.05)],
            vec![(0.70, 0.05), (0.70, 0.72), (0.55, 0.93), (0.33, 0.93), (0.18, 0.78)],
        ]),
        ('K', vec![
            vec![(0.15, 0.05), (0.15, 0.95)],
            vec![(0.15, 0.52), (0.80, 0.05)],
            vec![(0.38, 0.44), (0.85, 0.95)],
        ]),
        ('L', vec![
            vec![(0.18, 0.05), (0.18, 0.95)],
            vec![(0.18, 0.95), (0.85, 0.95)],
        ]),
        ('M', vec![
            vec![(0.10, 0.95), (0.10, 0.05), (0.50, 0.55), (0.90, 0.05), (0.90, 0.95)],
        ]),
        ('N', vec![
            vec![(0.15, 0.95), (0.15, 0.05), (0.85, 0.95), (0.85, 0.05)],
        ]),
        ('O', vec![
            vec![(0.30, 0.06), (0.70, 0.06), (0.88, 0.25), (0.88, 0.75), (0.70, 0.94), (0.30, 0.94), (0.12, 0.75), (0.12, 0.25), (0.30, 0.06)],
        ]),
        ('P', vec![
            vec![(0.15, 0.05), (0.15, 0.95)],
            vec![(0.15, 0.05), (0.62, 0.05), (0.82, 0.16), (0.82, 0.38), (0.62, 0.52), (0.15, 0.52)],
        ]),
        ('Q', vec![
            vec![(0.30, 0.06), (0.70, 0.06), (0.88, 0.25), (0.88, 0.75), (0.70, 0.94), (0.30, 0.94), (0.12, 0.75), (0.12, 0.25), (0.30, 0.06)],
            vec![(0.62, 0.68), (0.90, 0.97)],
        ]),
        ('R', vec![
            vec![(0.15, 0.05), (0.15, 0.95)],
            vec![(0.15, 0.05), (0.62, 0.05), (0.82, 0.16), (0.82, 0.38), (0.62, 0.52), (0.15, 0.52)],
            vec![(0.50, 0.52), (0.85, 0.95)],
        ]),
        ('S', vec![
            vec![(0.82, 0.18), (0.62, 0.06), (0.35, 0.06), (0.17, 0.20), (0.20, 0.40), (0.45, 0.50), (0.72, 0.58), (0.85, 0.72), (0.80, 0.88), (0.60, 0.95), (0.32, 0.95), (0.14, 0.82)],
        ]),
        ('T', vec![
            vec![(0.10, 0.05), (0.90, 0.05)],
            vec![(0.50, 0.05), (0.50, 0.95)],
        ]),
        ('U', vec![
            vec![(0.15, 0.05), (0.15, 0.72), (0.30, 0.93), (0.70, 0.93), (0.85, 0.72), (0.85, 0.05)],
        ]),
        ('V', vec![
            vec![(0.10, 0.05), (0.50, 0.95), (0.90, 0.05)],
        ]),
        ('W', vec![
            vec![(0.08, 0.05), (0.28, 0.95), (0.50, 0.40), (0.72, 0.95), (0.92, 0.05)],
        ]),
        ('X', vec![
            vec![(0.12, 0.05), (0.88, 0.95)],
            vec![(0.88, 0.05), (0.12, 0.95)],
        ]),
        ('Y', vec![
            vec![(0.10, 0.05), (0.50, 0.50), (0.90, 0.05)],
            vec![(0.50, 0.50), (0.50, 0.95)],
        ]),
        ('Z', vec![
            vec![(0.12, 0.05), (0.88, 0.05), (0.12, 0.95), (0.88, 0.95)],
        ]),
        ('0', vec![
            vec![(0.32, 0.06), (0.68, 0.06), (0.85, 0.25), (0.85, 0.75), (0.68, 0.94), (0.32, 0.94), (0.15, 0.75), (0.15, 0.25), (0.32, 0.06)],
            vec![(0.32, 0.70), (0.68, 0.30)],
        ]),
        ('1', vec![
            vec![(0.30, 0.20), (0.55, 0.05), (0.55, 0.95)],
            vec![(0.30, 0.95), (0.80, 0.95)],
        ]),
        ('2', vec![
            vec![(0.15, 0.22), (0.30, 0.06), (0.65, 0.06), (0.83, 0.20), (0.83, 0.40), (0.15, 0.95), (0.85, 0.95)],
        ]),
        ('3', vec![
            vec![(0.15, 0.15), (0.35, 0.05), (0.65, 0.05), (0.80, 0.18), (0.80, 0.34), (0.60, 0.46), (0.40, 0.46)],
            vec![(0.60, 0.46), (0.82, 0.58), (0.82, 0.80), (0.65, 0.94), (0.35, 0.94), (0.15, 0.82)],
        ]),
        ('4', vec![
            vec![(0.65, 0.95), (0.65, 0.05), (0.12, 0.68), (0.88, 0.68)],
        ]),
        ('5', vec![
            vec![(0.80, 0.05), (0.20, 0.05), (0.17, 0.45), (0.55, 0.42), (0.80, 0.55), (0.82, 0.78), (0.65, 0.94), (0.35, 0.94), (0.15, 0.80)],
        ]),
        ('6', vec![
            vec![(0.75, 0.08), (0.45, 0.06), (0.20, 0.25), (0.14, 0.60), (0.20, 0.82), (0.42, 0.95), (0.62, 0.95), (0.80, 0.80), (0.80, 0.62), (0.62, 0.50), (0.38, 0.50), (0.16, 0.62)],
        ]),
        ('7', vec![
            vec![(0.12, 0.05), (0.88, 0.05), (0.40, 0.95)],
        ]),
        ('8', vec![
            vec![(0.50, 0.48), (0.30, 0.40), (0.22, 0.25), (0.30, 0.09), (0.50, 0.05), (0.70, 0.09), (0.78, 0.25), (0.70, 0.40), (0.50, 0.48)],
            vec![(0.50, 0.48), (0.27, 0.57), (0.18, 0.72), (0.27, 0.89), (0.50, 0.95), (0.73, 0.89), (0.82, 0.72), (0.73, 0.57), (0.50, 0.48)],
        ]),
        ('9', vec![
            vec![(0.25, 0.92), (0.55, 0.94), (0.80, 0.75), (0.86, 0.40), (0.80, 0.18), (0.58, 0.05), (0.38, 0.05), (0.20, 0.20), (0.20, 0.38), (0.38, 0.50), (0.62, 0.50), (0.84, 0.38)],
        ]),
    ]
}

fn clamp01(v: Real) -> Real {
    v.clamp(0.0, 1.0)
}

fn sheared(glyphs: &[(char, Vec<Vec<P>>)], shear: Real) -> Vec<(char, Vec<Vec<P>>)> {
    // x' = x + shear·(1-y), renormalized back into the unit square
    glyphs
        .iter()
        .map(|(ch, lines)| {
            let lines = lines
                .iter()
                .map(|line| {
                    line.iter()
                        .map(|&(x, y)| (clamp01((x + shear * (1.0 - y)) / (1.0 + shear)), y))
                        .collect()
                })
                .collect();
            (*ch, lines)
        })
        .collect()
}

fn rounded(glyphs: &[(char, Vec<Vec<P>>)], pull: Real) -> Vec<(char, Vec<Vec<P>>)> {
    // chamfer interior vertices by pulling toward both neighbors
    glyphs
        .iter()
        .map(|(ch, lines)| {
            let lines = lines
                .iter()
                .map(|line| {
                    if line.len() < 3 {
                        return line.clone();
                    }
                    let mut out: Polyline = vec![line[0]];
                    for i in 1..line.len() - 1 {
                        let (px, py) = line[i - 1];
                        let (cx, cy) = line[i];
                        let (nx, ny) = line[i + 1];
                        out.push((cx + (px - cx) * pull, cy + (py - cy) * pull));
                        out.push((cx + (nx - cx) * pull, cy + (ny - cy) * pull));
                    }
                    out.push(*line.last().expect("non-empty"));
                    out
                })
                .collect();
            (*ch, lines)
        })
        .collect()
}

fn build(name: &str, glyphs: Vec<(char, Vec<Vec<P>>)>, thickness: Real) -> StrokeFont {
    let map: BTreeMap<char, Vec<Polyline>> = glyphs.into_iter().collect();
    StrokeFont::new(name, map, thickness).expect("builtin fonts are valid")
}

/// The five bundled fonts, varying weight, slant, and corner shape.
pub fn builtin_fonts() -> Vec<StrokeFont> {
    let base = skeleton();
    vec![
        build("mono-a", base.clone(), 0.060),
        build("mono-bold", base.clone(), 0.125),
        build("mono-thin", base.clone(), 0.035),
        build("mono-slant", sheared(&base, 0.22), 0.060),
        build("mono-round", rounded(&base, 0.18), 0.085),
    ]
}

pub fn builtin_font(name: &str) -> Option<StrokeFont> {
    builtin_fonts().into_iter().find(|f| f.name == name)
}

/// The character set every bundled font covers.
pub const CHARSET: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fonts_cover_charset() {
        let fonts = builtin_fonts();
        assert_eq!(fonts.len(), 5);
        for font in &fonts {
            assert_eq!(font.glyphs.len(), 36, "font {}", font.name);
            for ch in CHARSET.chars() {
                assert!(font.strokes(ch).is_ok(), "{} missing {ch}", font.name);
            }
            font.validate().unwrap();
        }
    }

    #[test]
    fn variants_differ_from_base() {
        let a = builtin_font("mono-a").unwrap();
        let slant = builtin_font("mono-slant").unwrap();
        assert_ne!(a.glyphs[&'A'], slant.glyphs[&'A']);
        let bold = builtin_font("mono-bold").unwrap();
        assert!(bold.default_thickness > a.default_thickness);
    }
}
