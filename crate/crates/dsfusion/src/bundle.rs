//! Checkpoint container and the model bundle.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "DSFB"
//! version u32      currently 1
//! count   u32      number of sections
//! section ×count:
//!     name_len u32 | name bytes | payload_len u64 | payload | sha256(payload)
//! sha256 of every preceding byte (32 bytes)
//! ```
//!
//! Loads verify magic, version, both checksum layers, and exact length
//! before any state is constructed; writes go through a temp file and
//! rename, so a bundle on disk is always complete.

use crate::adversary::Discriminator;
use crate::codec::CodecParams;
use crate::config::RunConfig;
use crate::diffusion::{ConditioningVector, NoiseSchedule, UNet, UNetConfig};
use crate::error::{Error, Result};
use crate::rank::GlyphClassifier;
use crate::rng::substream;
use crate::tensor::{Param, Real};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DSFB";
pub const VERSION: u32 = 1;

// ---------------------------------------------------------------- container

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Writer {
        Writer { buf: Vec::new() }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn real(&mut self, v: Real) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Reader<'a> {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("len 4")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("len 8")))
    }

    fn real(&mut self) -> Result<Real> {
        let n = std::mem::size_of::<Real>();
        Ok(Real::from_le_bytes(
            self.take(n)?.try_into().expect("real width"),
        ))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Serializes named sections into the container format.
pub fn write_container(sections: &[(&str, Vec<u8>)]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(sections.len() as u32);
    for (name, payload) in sections {
        w.u32(name.len() as u32);
        w.bytes(name.as_bytes());
        w.u64(payload.len() as u64);
        w.bytes(payload);
        w.bytes(&Sha256::digest(payload));
    }
    let file_hash = Sha256::digest(&w.buf);
    w.bytes(&file_hash);
    w.buf
}

/// Parses and fully verifies a container, returning its named sections.
pub fn read_container(bytes: &[u8]) -> Result<Vec<(String, Vec<u8>)>> {
    if bytes.len() < 4 + 4 + 4 + 32 {
        return Err(Error::Format("file too short for a bundle".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let expect: [u8; 32] = trailer.try_into().expect("len 32");
    let got: [u8; 32] = Sha256::digest(body).into();
    if expect != got {
        return Err(Error::Corruption("file hash mismatch".into()));
    }

    let mut r = Reader::new(body);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, not a bundle file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported bundle version {version} (expected {VERSION})"
        )));
    }
    let count = r.u32()? as usize;
    let mut sections = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Format("section name is not UTF-8".into()))?;
        let payload_len = r.u64()? as usize;
        let payload = r.take(payload_len)?.to_vec();
        let stored: [u8; 32] = r.take(32)?.try_into().expect("len 32");
        let computed: [u8; 32] = Sha256::digest(&payload).into();
        if stored != computed {
            return Err(Error::Corruption(format!(
                "section {name:?} checksum mismatch"
            )));
        }
        sections.push((name, payload));
    }
    if !r.done() {
        return Err(Error::Format("trailing bytes after last section".into()));
    }
    Ok(sections)
}

// ------------------------------------------------------------- param blobs

fn write_params(params: &[&Param]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(params.len() as u32);
    for p in params {
        w.u32(p.name().len() as u32);
        w.bytes(p.name().as_bytes());
        w.u32(p.shape().len() as u32);
        for &d in p.shape() {
            w.u32(d as u32);
        }
        for &v in p.data() {
            w.real(v);
        }
    }
    w.buf
}

fn read_params_into(r: &mut Reader, params: Vec<&mut Param>) -> Result<()> {
    let count = r.u32()? as usize;
    if count != params.len() {
        return Err(Error::Format(format!(
            "parameter count mismatch: file has {count}, model has {}",
            params.len()
        )));
    }
    for p in params {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        if name != p.name() {
            return Err(Error::Format(format!(
                "parameter order mismatch: file {name:?}, model {:?}",
                p.name()
            )));
        }
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        if shape != p.shape() {
            return Err(Error::Format(format!(
                "parameter {name:?} shape mismatch: file {shape:?}, model {:?}",
                p.shape()
            )));
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(r.real()?);
        }
        p.set_data(data)?;
    }
    Ok(())
}

// ------------------------------------------------------------ model bundle

/// All trained state of one fusion run.
pub struct ModelBundle {
    pub codec: CodecParams,
    pub unet: UNet,
    pub cond: ConditioningVector,
    pub discriminator: Discriminator,
    pub sched: NoiseSchedule,
    pub config: RunConfig,
}

fn unet_config_payload(cfg: &UNetConfig) -> Vec<u8> {
    let mut w = Writer::new();
    for v in [
        cfg.latent_channels,
        cfg.latent_hw,
        cfg.base_width,
        cfg.levels,
        cfg.blocks_per_level,
        cfg.cond_dim,
        cfg.groups,
    ] {
        w.u32(v as u32);
    }
    w.buf
}

fn read_unet_config(r: &mut Reader) -> Result<UNetConfig> {
    Ok(UNetConfig {
        latent_channels: r.u32()? as usize,
        latent_hw: r.u32()? as usize,
        base_width: r.u32()? as usize,
        levels: r.u32()? as usize,
        blocks_per_level: r.u32()? as usize,
        cond_dim: r.u32()? as usize,
        groups: r.u32()? as usize,
    })
}

impl ModelBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let codec_payload = {
            let mut w = Writer::new();
            w.buf.push(u8::from(self.codec.frozen()));
            w.bytes(&write_params(&self.codec.params()));
            w.buf
        };
        let unet_payload = {
            let mut w = Writer::new();
            w.bytes(&unet_config_payload(&self.unet.cfg));
            w.bytes(&write_params(&self.unet.params()));
            w.buf
        };
        let cond_payload = {
            let mut w = Writer::new();
            w.buf.push(u8::from(self.cond.trainable));
            w.bytes(&write_params(&self.cond.params()));
            w.buf
        };
        let disc_payload = {
            let mut w = Writer::new();
            w.u32(self.discriminator.latent_channels() as u32);
            w.u32(self.discriminator.latent_hw() as u32);
            w.u32(self.discriminator.base_width() as u32);
            w.bytes(&write_params(&self.discriminator.params()));
            w.buf
        };
        let sched_payload = {
            let mut w = Writer::new();
            w.u32(self.sched.timesteps as u32);
            for arr in [&self.sched.beta, &self.sched.alpha, &self.sched.alpha_bar] {
                for &v in arr {
                    w.real(v);
                }
            }
            w.buf
        };
        let config_payload = self.config.to_text().into_bytes();
        write_container(&[
            ("codec", codec_payload),
            ("unet", unet_payload),
            ("conditioning", cond_payload),
            ("discriminator", disc_payload),
            ("schedule", sched_payload),
            ("config", config_payload),
        ])
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelBundle> {
        let sections = read_container(bytes)?;
        let get = |name: &str| -> Result<&Vec<u8>> {
            sections
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, p)| p)
                .ok_or_else(|| Error::Format(format!("missing section {name:?}")))
        };

        let codec = {
            let payload = get("codec")?;
            let mut r = Reader::new(payload);
            let frozen = r.take(1)?[0] != 0;
            let mut codec = CodecParams::new(&mut substream(0, "bundle-load"))?;
            read_params_into(&mut r, codec.params_mut())?;
            if !r.done() {
                return Err(Error::Format("codec section has trailing bytes".into()));
            }
            if frozen {
                codec.freeze();
            }
            codec
        };

        let unet = {
            let payload = get("unet")?;
            let mut r = Reader::new(payload);
            let cfg = read_unet_config(&mut r)?;
            let mut unet = UNet::new(cfg, &mut substream(0, "bundle-load"))?;
            read_params_into(&mut r, unet.params_mut())?;
            if !r.done() {
                return Err(Error::Format("unet section has trailing bytes".into()));
            }
            unet
        };

        let cond = {
            let payload = get("conditioning")?;
            let mut r = Reader::new(payload);
            let trainable = r.take(1)?[0] != 0;
            let mut cond =
                ConditioningVector::new(unet.cfg.cond_dim, &mut substream(0, "bundle-load"))?;
            read_params_into(&mut r, cond.params_mut())?;
            if !r.done() {
                return Err(Error::Format(
                    "conditioning section has trailing bytes".into(),
                ));
            }
            cond.trainable = trainable;
            cond
        };

        let discriminator = {
            let payload = get("discriminator")?;
            let mut r = Reader::new(payload);
            let latent_channels = r.u32()? as usize;
            let latent_hw = r.u32()? as usize;
            let base_width = r.u32()? as usize;
            let mut disc = Discriminator::new(
                latent_channels,
                latent_hw,
                base_width,
                &mut substream(0, "bundle-load"),
            )?;
            read_params_into(&mut r, disc.params_mut())?;
            if !r.done() {
                return Err(Error::Format(
                    "discriminator section has trailing bytes".into(),
                ));
            }
            disc
        };

        let sched = {
            let payload = get("schedule")?;
            let mut r = Reader::new(payload);
            let t = r.u32()? as usize;
            let mut arrays = Vec::new();
            for _ in 0..3 {
                let mut a = Vec::with_capacity(t);
                for _ in 0..t {
                    a.push(r.real()?);
                }
                arrays.push(a);
            }
            if !r.done() {
                return Err(Error::Format("schedule section has trailing bytes".into()));
            }
            let alpha_bar = arrays.pop().expect("three arrays");
            let alpha = arrays.pop().expect("two arrays");
            let beta = arrays.pop().expect("one array");
            NoiseSchedule {
                timesteps: t,
                beta,
                alpha,
                alpha_bar,
            }
        };

        let config = {
            let payload = get("config")?;
            let text = String::from_utf8(payload.clone())
                .map_err(|_| Error::Format("config section is not UTF-8".into()))?;
            crate::config::parse_config(&text)?
        };

        Ok(ModelBundle {
            codec,
            unet,
            cond,
            discriminator,
            sched,
            config,
        })
    }
}

/// Writes the bundle atomically.
pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    crate::image_io::write_atomic(path, &bundle.to_bytes())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let bytes = std::fs::read(path.as_ref())?;
    ModelBundle::from_bytes(&bytes)
}

// ------------------------------------------------------------- codec file

/// Standalone codec checkpoint (the `train-codec` stage output).
pub fn save_codec(codec: &CodecParams, config: &RunConfig, path: impl AsRef<Path>) -> Result<()> {
    let payload = {
        let mut w = Writer::new();
        w.buf.push(u8::from(codec.frozen()));
        w.bytes(&write_params(&codec.params()));
        w.buf
    };
    let bytes = write_container(&[
        ("codec", payload),
        ("config", config.to_text().into_bytes()),
    ]);
    crate::image_io::write_atomic(path, &bytes)
}

pub fn load_codec(path: impl AsRef<Path>) -> Result<CodecParams> {
    let bytes = std::fs::read(path.as_ref())?;
    let sections = read_container(&bytes)?;
    let payload = sections
        .iter()
        .find(|(n, _)| n == "codec")
        .map(|(_, p)| p)
        .ok_or_else(|| Error::Format("missing section \"codec\"".into()))?;
    let mut r = Reader::new(payload);
    let frozen = r.take(1)?[0] != 0;
    let mut codec = CodecParams::new(&mut substream(0, "bundle-load"))?;
    read_params_into(&mut r, codec.params_mut())?;
    if !r.done() {
        return Err(Error::Format("codec section has trailing bytes".into()));
    }
    if frozen {
        codec.freeze();
    }
    Ok(codec)
}

// -------------------------------------------------------- classifier file

pub fn save_classifier(clf: &GlyphClassifier, path: impl AsRef<Path>) -> Result<()> {
    let payload = write_params(&clf.params());
    let bytes = write_container(&[("glyph-classifier", payload)]);
    crate::image_io::write_atomic(path, &bytes)
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<GlyphClassifier> {
    let bytes = std::fs::read(path.as_ref())?;
    let sections = read_container(&bytes)?;
    let payload = sections
        .iter()
        .find(|(n, _)| n == "glyph-classifier")
        .map(|(_, p)| p)
        .ok_or_else(|| Error::Format("missing section \"glyph-classifier\"".into()))?;
    let mut r = Reader::new(payload);
    let mut clf = GlyphClassifier::new(&mut substream(0, "bundle-load"))?;
    read_params_into(&mut r, clf.params_mut())?;
    if !r.done() {
        return Err(Error::Format("classifier section has trailing bytes".into()));
    }
    Ok(clf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::checksum_all;

    fn sample_bundle(seed: u64) -> ModelBundle {
        let mut codec = CodecParams::new(&mut substream(seed, "codec")).unwrap();
        codec.freeze();
        let cfg = UNetConfig {
            latent_channels: 4,
            latent_hw: 16,
            base_width: 8,
            levels: 2,
            blocks_per_level: 1,
            cond_dim: 16,
            groups: 8,
        };
        let unet = UNet::new(cfg, &mut substream(seed, "unet")).unwrap();
        let cond = ConditioningVector::new(16, &mut substream(seed, "cond")).unwrap();
        let disc = Discriminator::new(4, 16, 8, &mut substream(seed, "disc")).unwrap();
        let sched = crate::diffusion::make_schedule(24, 1e-4, 0.02).unwrap();
        ModelBundle {
            codec,
            unet,
            cond,
            discriminator: disc,
            sched,
            config: RunConfig::default(),
        }
    }

    #[test]
    fn roundtrip_is_bitwise_identical() {
        let bundle = sample_bundle(3);
        let bytes = bundle.to_bytes();
        let back = ModelBundle::from_bytes(&bytes).unwrap();
        assert_eq!(
            checksum_all(bundle.codec.params()),
            checksum_all(back.codec.params())
        );
        assert_eq!(
            checksum_all(bundle.unet.params()),
            checksum_all(back.unet.params())
        );
        assert_eq!(
            checksum_all(bundle.discriminator.params()),
            checksum_all(back.discriminator.params())
        );
        assert_eq!(bundle.cond.embedding.data(), back.cond.embedding.data());
        assert_eq!(bundle.sched.beta, back.sched.beta);
        assert_eq!(bundle.sched.alpha_bar, back.sched.alpha_bar);
        assert_eq!(bundle.config, back.config);
        assert!(back.codec.frozen());
        // serialization itself is stable
        assert_eq!(bytes, back.to_bytes());
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let bundle = sample_bundle(4);
        let bytes = bundle.to_bytes();
        // striding keeps the test fast while still covering header,
        // payload, checksum, and trailer regions
        let mut checked = 0;
        for i in (0..bytes.len()).step_by(97) {
            let mut corrupt = bytes.clone();
            corrupt[i] ^= 0x40;
            assert!(
                ModelBundle::from_bytes(&corrupt).is_err(),
                "flip at byte {i} went undetected"
            );
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn truncation_is_a_format_error() {
        let bundle = sample_bundle(5);
        let bytes = bundle.to_bytes();
        for cut in [0, 3, 16, bytes.len() / 2, bytes.len() - 1] {
            match ModelBundle::from_bytes(&bytes[..cut]) {
                Err(Error::Format(_)) | Err(Error::Corruption(_)) => {}
                Err(other) => panic!("truncation at {cut} gave unexpected error {other:?}"),
                Ok(_) => panic!("truncation at {cut} loaded successfully"),
            }
        }
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let bundle = sample_bundle(6);
        let mut bytes = bundle.to_bytes();
        bytes[0] = b'X';
        // fix the trailer so only the magic is wrong
        let n = bytes.len();
        let hash: [u8; 32] = Sha256::digest(&bytes[..n - 32]).into();
        bytes[n - 32..].copy_from_slice(&hash);
        assert!(matches!(
            ModelBundle::from_bytes(&bytes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn file_roundtrip_and_atomicity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.dsfb");
        let bundle = sample_bundle(7);
        save_bundle(&bundle, &path).unwrap();
        let back = load_bundle(&path).unwrap();
        assert_eq!(
            checksum_all(bundle.unet.params()),
            checksum_all(back.unet.params())
        );
        // no temp files left behind
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn classifier_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.dsfb");
        let clf = GlyphClassifier::new(&mut substream(8, "clf")).unwrap();
        save_classifier(&clf, &path).unwrap();
        let back = load_classifier(&path).unwrap();
        assert_eq!(checksum_all(clf.params()), checksum_all(back.params()));
    }
}
