//! Procedural demo style corpus: warm "ember" blobs on white, 64×64.
//!
//! The palette is shared across the corpus (that is the style); blob
//! geometry varies per image so the corpus carries real diversity. The
//! PNGs under `assets/demo-style/` are generated by this module.

use crate::error::Result;
use crate::rng::{substream_indexed, Rng};
use crate::tensor::{Real, Tensor};
use rand::Rng as _;
use std::path::Path;

const SIZE: usize = 64;

fn warm_color(rng: &mut Rng) -> [Real; 3] {
    // reds through golds
    let h: Real = rng.gen::<Real>() * 0.12;
    let s: Real = 0.75 + 0.25 * rng.gen::<Real>();
    let v: Real = 0.75 + 0.25 * rng.gen::<Real>();
    let h6 = h * 6.0;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let t = v * (1.0 - (1.0 - f) * s);
    [v, t, p]
}

/// One corpus image, deterministic in (`seed`, `index`).
pub fn demo_style_image(seed: u64, index: u64) -> Tensor {
    let mut rng = substream_indexed(seed, "demo-style", index);
    let mut data = vec![1.0 as Real; 3 * SIZE * SIZE];
    let blob_count = rng.gen_range(3..=6);
    struct Blob {
        cx: Real,
        cy: Real,
        rx: Real,
        ry: Real,
        angle: Real,
        color: [Real; 3],
    }
    let blobs: Vec<Blob> = (0..blob_count)
        .map(|_| Blob {
            cx: 0.2 + 0.6 * rng.gen::<Real>(),
            cy: 0.2 + 0.6 * rng.gen::<Real>(),
            rx: 0.08 + 0.16 * rng.gen::<Real>(),
            ry: 0.08 + 0.16 * rng.gen::<Real>(),
            angle: rng.gen::<Real>() * std::f64::consts::PI as Real,
            color: warm_color(&mut rng),
        })
        .collect();
    for y in 0..SIZE {
        for x in 0..SIZE {
            let px = (x as Real + 0.5) / SIZE as Real;
            let py = (y as Real + 0.5) / SIZE as Real;
            for b in &blobs {
                let (dx, dy) = (px - b.cx, py - b.cy);
                let (c, s) = (b.angle.cos(), b.angle.sin());
                let u = (dx * c + dy * s) / b.rx;
                let v = (-dx * s + dy * c) / b.ry;
                let d2 = u * u + v * v;
                let alpha = (-d2 * 2.2).exp();
                if alpha > 0.02 {
                    for ch in 0..3 {
                        let i = ch * SIZE * SIZE + y * SIZE + x;
                        data[i] = data[i] * (1.0 - alpha) + b.color[ch] * alpha;
                    }
                }
            }
        }
    }
    // light speckle texture inside the blobs
    for _ in 0..160 {
        let x = rng.gen_range(0..SIZE);
        let y = rng.gen_range(0..SIZE);
        let gain: Real = 0.85 + 0.3 * rng.gen::<Real>();
        for ch in 0..3 {
            let i = ch * SIZE * SIZE + y * SIZE + x;
            if data[i] < 0.95 {
                data[i] = (data[i] * gain).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::from_vec(data, &[3, SIZE, SIZE]).expect("shape consistent")
}

/// Generates `n` corpus images.
pub fn demo_style_corpus(seed: u64, n: usize) -> Vec<Tensor> {
    (0..n as u64).map(|i| demo_style_image(seed, i)).collect()
}

/// Writes the corpus as `style_000.png`… under `dir`.
pub fn write_demo_corpus(dir: impl AsRef<Path>, seed: u64, n: usize) -> Result<()> {
    std::fs::create_dir_all(dir.as_ref())?;
    for i in 0..n {
        let img = demo_style_image(seed, i as u64);
        crate::image_io::write_png(dir.as_ref().join(format!("style_{i:03}.png")), &img)?;
    }
    Ok(())
}
