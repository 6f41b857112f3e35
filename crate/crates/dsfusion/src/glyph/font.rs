//! The plain-text stroke-font format.
//!
//! ```text
//! strokefont v1 <name> <default_thickness>
//! glyph <char> <n_polylines>
//! <k> x1 y1 x2 y2 ... xk yk        (one line per polyline)
//! ```
//!
//! All coordinates live in the unit square, y growing downward.

use super::Polyline;
use crate::error::{Error, Result};
use crate::tensor::Real;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// A named set of polyline glyphs.
#[derive(Clone, Debug)]
pub struct StrokeFont {
    pub name: String,
    pub glyphs: BTreeMap<char, Vec<Polyline>>,
    pub default_thickness: Real,
}

impl StrokeFont {
    pub fn new(
        name: impl Into<String>,
        glyphs: BTreeMap<char, Vec<Polyline>>,
        default_thickness: Real,
    ) -> Result<StrokeFont> {
        let font = StrokeFont {
            name: name.into(),
            glyphs,
            default_thickness,
        };
        font.validate()?;
        Ok(font)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.default_thickness > 0.0 && self.default_thickness < 0.5) {
            return Err(Error::Argument(format!(
                "font {}: default_thickness {} outside (0, 0.5)",
                self.name, self.default_thickness
            )));
        }
        for (ch, lines) in &self.glyphs {
            if lines.is_empty() && *ch != ' ' {
                return Err(Error::Argument(format!(
                    "font {}: glyph {ch:?} has no polylines",
                    self.name
                )));
            }
            for line in lines {
                if line.is_empty() {
                    return Err(Error::Argument(format!(
                        "font {}: glyph {ch:?} has an empty polyline",
                        self.name
                    )));
                }
                for &(x, y) in line {
                    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                        return Err(Error::Argument(format!(
                            "font {}: glyph {ch:?} coordinate out of unit square",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Strokes for one character. The space character always renders empty.
    pub fn strokes(&self, ch: char) -> Result<&[Polyline]> {
        const EMPTY: &[Polyline] = &[];
        if ch == ' ' && !self.glyphs.contains_key(&' ') {
            return Ok(EMPTY);
        }
        self.glyphs
            .get(&ch)
            .map(Vec::as_slice)
            .ok_or(Error::GlyphMissing(ch))
    }

    pub fn supports(&self, text: &str) -> bool {
        text.chars().all(|c| c == ' ' || self.glyphs.contains_key(&c))
    }
}

/// Parses a stroke font from disk, validating structure and coordinates.
pub fn load_stroke_font(path: impl AsRef<Path>) -> Result<StrokeFont> {
    let content = std::fs::read_to_string(path.as_ref())?;
    parse_stroke_font(&content)
}

pub(crate) fn parse_stroke_font(content: &str) -> Result<StrokeFont> {
    let err = |line: usize, msg: &str| Error::Parse {
        line,
        msg: msg.to_string(),
    };
    let mut lines = content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, "missing header line"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("strokefont") || parts.next() != Some("v1") {
        return Err(err(hline, "expected header `strokefont v1 <name> <thickness>`"));
    }
    let name = parts
        .next()
        .ok_or_else(|| err(hline, "missing font name"))?
        .to_string();
    let thickness: Real = parts
        .next()
        .ok_or_else(|| err(hline, "missing default thickness"))?
        .parse()
        .map_err(|_| err(hline, "default thickness is not a number"))?;
    if !(thickness > 0.0 && thickness < 0.5) {
        return Err(err(hline, "default thickness outside (0, 0.5)"));
    }

    let mut glyphs: BTreeMap<char, Vec<Polyline>> = BTreeMap::new();
    while let Some((gline, gheader)) = lines.next() {
        let mut parts = gheader.split_whitespace();
        if parts.next() != Some("glyph") {
            return Err(err(gline, "expected `glyph <char> <n_polylines>`"));
        }
        let ch_str = parts.next().ok_or_else(|| err(gline, "missing glyph character"))?;
        let ch = if ch_str == "space" {
            ' '
        } else {
            let mut chars = ch_str.chars();
            let c = chars.next().ok_or_else(|| err(gline, "empty glyph character"))?;
            if chars.next().is_some() {
                return Err(err(gline, "glyph character must be a single char"));
            }
            c
        };
        let n: usize = parts
            .next()
            .ok_or_else(|| err(gline, "missing polyline count"))?
            .parse()
            .map_err(|_| err(gline, "polyline count is not an integer"))?;
        if glyphs.contains_key(&ch) {
            return Err(err(gline, "duplicate glyph"));
        }

        let mut polylines = Vec::with_capacity(n);
        for _ in 0..n {
            let (pline, pl) = lines
                .next()
                .ok_or_else(|| err(gline, "unexpected end of file inside glyph"))?;
            let mut nums = pl.split_whitespace();
            let k: usize = nums
                .next()
                .ok_or_else(|| err(pline, "missing point count"))?
                .parse()
                .map_err(|_| err(pline, "point count is not an integer"))?;
            if k == 0 {
                return Err(err(pline, "polyline must have at least one point"));
            }
            let mut points = Vec::with_capacity(k);
            for _ in 0..k {
                let x: Real = nums
                    .next()
                    .ok_or_else(|| err(pline, "too few coordinates"))?
                    .parse()
                    .map_err(|_| err(pline, "coordinate is not a number"))?;
                let y: Real = nums
                    .next()
                    .ok_or_else(|| err(pline, "too few coordinates"))?
                    .parse()
                    .map_err(|_| err(pline, "coordinate is not a number"))?;
                if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                    return Err(err(pline, "coordinate out of unit square"));
                }
                points.push((x, y));
            }
            if nums.next().is_some() {
                return Err(err(pline, "trailing data after polyline"));
            }
            polylines.push(points);
        }
        glyphs.insert(ch, polylines);
    }

    StrokeFont::new(name, glyphs, thickness).map_err(|e| match e {
        Error::Argument(msg) => Error::Parse { line: 0, msg },
        other => other,
    })
}

/// Serializes a font in the documented text format.
pub fn format_stroke_font(font: &StrokeFont) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "strokefont v1 {} {}",
        font.name, font.default_thickness
    )
    .expect("string write");
    for (ch, lines) in &font.glyphs {
        let ch_str = if *ch == ' ' {
            "space".to_string()
        } else {
            ch.to_string()
        };
        writeln!(out, "glyph {} {}", ch_str, lines.len()).expect("string write");
        for line in lines {
            let mut row = format!("{}", line.len());
            for (x, y) in line {
                write!(row, " {x} {y}").expect("string write");
            }
            writeln!(out, "{row}").expect("string write");
        }
    }
    out
}

pub fn save_stroke_font(font: &StrokeFont, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), format_stroke_font(font))?;
    Ok(())
}
