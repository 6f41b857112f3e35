//! Image file I/O: 8-bit RGB PNGs for images, binary PGM for masks.
//!
//! All writes go through a temp file in the target directory followed by a
//! rename, so readers never observe partial files.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use image::{ImageBuffer, Rgb as ImgRgb, RgbImage};
use std::path::{Path, PathBuf};

fn to_u8(v: Real) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Converts a `[3×H×W]` tensor in [0,1] to an 8-bit RGB buffer.
pub fn tensor_to_rgb(t: &Tensor) -> Result<RgbImage> {
    let s = t.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::Dimension(format!(
            "expected [3×H×W] image tensor, got {s:?}"
        )));
    }
    let (h, w) = (s[1], s[2]);
    let hw = h * w;
    let data = t.data();
    Ok(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        ImgRgb([to_u8(data[i]), to_u8(data[hw + i]), to_u8(data[2 * hw + i])])
    }))
}

/// Reads an image file into a `[3×H×W]` tensor with values in [0,1].
pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let img = image::open(path.as_ref())?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let hw = h * w;
    let mut data = vec![0.0; 3 * hw];
    for (x, y, px) in img.enumerate_pixels() {
        let i = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * hw + i] = px.0[c] as Real / 255.0;
        }
    }
    Tensor::from_vec(data, &[3, h, w])
}

/// Reads an image and bilinearly resizes it to `size`×`size`.
pub fn read_image_resized(path: impl AsRef<Path>, size: usize) -> Result<Tensor> {
    let img = image::open(path.as_ref())?.to_rgb8();
    let resized = image::imageops::resize(
        &img,
        size as u32,
        size as u32,
        image::imageops::FilterType::Triangle,
    );
    let hw = size * size;
    let mut data = vec![0.0; 3 * hw];
    for (x, y, px) in resized.enumerate_pixels() {
        let i = y as usize * size + x as usize;
        for c in 0..3 {
            data[c * hw + i] = px.0[c] as Real / 255.0;
        }
    }
    Tensor::from_vec(data, &[3, size, size])
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_else(|| ".tmp".into());
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Atomically writes `bytes` to `path` (temp file + rename).
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let tmp = temp_path(path);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes a `[3×H×W]` tensor as PNG, atomically.
pub fn write_png(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let img = tensor_to_rgb(t)?;
    let mut bytes: Vec<u8> = Vec::new();
    img.write_to(
        &mut std::io::Cursor::new(&mut bytes),
        image::ImageFormat::Png,
    )?;
    write_atomic(path, &bytes)
}

/// Writes an `[H×W]` mask as binary PGM (P5, maxval 255), atomically.
pub fn write_pgm(path: impl AsRef<Path>, mask: &Tensor) -> Result<()> {
    let s = mask.shape();
    if s.len() != 2 {
        return Err(Error::Dimension(format!(
            "expected [H×W] mask tensor, got {s:?}"
        )));
    }
    let (h, w) = (s[0], s[1]);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(mask.data().iter().map(|&v| to_u8(v)));
    write_atomic(path, &bytes)
}

/// Tiles images of identical shape into a grid (left-to-right, top-down).
pub fn contact_sheet(images: &[Tensor], columns: usize) -> Result<Tensor> {
    if images.is_empty() {
        return Err(Error::Argument("contact_sheet: no images".into()));
    }
    let s = images[0].shape().to_vec();
    for img in images {
        if img.shape() != s {
            return Err(Error::Dimension(
                "contact_sheet: images must share a shape".into(),
            ));
        }
    }
    let (h, w) = (s[1], s[2]);
    let cols = columns.max(1).min(images.len());
    let rows = images.len().div_ceil(cols);
    let (gh, gw) = (rows * h, cols * w);
    let mut data = vec![1.0; 3 * gh * gw];
    for (idx, img) in images.iter().enumerate() {
        let (r, c) = (idx / cols, idx % cols);
        for ch in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data[ch * gh * gw + (r * h + y) * gw + c * w + x] =
                        img.data()[ch * h * w + y * w + x];
                }
            }
        }
    }
    Tensor::from_vec(data, &[3, gh, gw])
}
