//! End-to-end pipeline stages behind the CLI subcommands.
//!
//! Every stage reads its inputs from a [`RunConfig`], writes its artifacts
//! under `output_dir`, and derives all randomness from the config seed via
//! named sub-streams, so a full train → sample → rank → eval run is
//! reproducible bit for bit.

use crate::adversary::{run_fusion_training, FusionOutcome, FusionTrainConfig};
use crate::bundle::{
    load_bundle, load_classifier, load_codec, save_bundle, save_classifier, save_codec,
    ModelBundle,
};
use crate::codec::{train_codec, CodecParams, CodecTrainConfig};
use crate::config::{RunConfig, SamplerKind};
use crate::diffusion::{sample_ddim_from, sample_ddpm_chain};
use crate::error::{Error, Result};
use crate::glyph::builtin::{builtin_font, CHARSET};
use crate::glyph::{
    compose_word, load_stroke_font, mask_iou, rasterize, rasterize_coverage,
    sample_augmented_glyph, segment_foreground, AugmentMode, AugmentPolicy, GlyphSpec, Rgb,
    StrokeFont, WHITE,
};
use crate::image_io::{contact_sheet, read_image_resized, write_atomic, write_png};
use crate::rank::{
    glyph_score, ocr_accuracy, rank_candidates, train_glyph_classifier, Candidate,
    ClassifierTrainConfig, GlyphClassifier, StyleScorer,
};
use crate::rng::{substream, substream_indexed};
use crate::tensor::{Real, Tensor};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Threshold used when segmenting generated images against the white
/// demo background.
pub const SEGMENT_TAU: Real = 0.3;

// ------------------------------------------------------------ shared setup

/// Resolves each font entry as a file path first, then as a builtin name.
pub fn resolve_fonts(cfg: &RunConfig) -> Result<Vec<StrokeFont>> {
    cfg.fonts
        .iter()
        .map(|entry| {
            if Path::new(entry).is_file() {
                load_stroke_font(entry)
            } else if let Some(font) = builtin_font(entry) {
                Ok(font)
            } else {
                Err(Error::Config(format!(
                    "fonts: {entry:?} is neither a file nor a builtin font name"
                )))
            }
        })
        .collect()
}

pub fn augment_policy(cfg: &RunConfig, fonts: &[StrokeFont]) -> Result<AugmentPolicy> {
    let pool = match cfg.mode {
        AugmentMode::SingleFont => vec![fonts
            .first()
            .ok_or_else(|| Error::Config("fonts: empty pool".into()))?
            .clone()],
        AugmentMode::MultiFont => fonts.to_vec(),
    };
    let policy = AugmentPolicy::new(cfg.mode, pool, cfg.image_size);
    policy.validate()?;
    Ok(policy)
}

/// Loads `.png` images from a directory in filename order, resized to the
/// pipeline's 64×64 working resolution.
pub fn load_style_images(dir: impl AsRef<Path>, at_least: usize) -> Result<Vec<Tensor>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "style_dir: {} is not a directory",
            dir.display()
        )));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|x| x.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.len() < at_least {
        return Err(Error::Config(format!(
            "style_dir: need at least {at_least} readable images, found {}",
            paths.len()
        )));
    }
    paths.iter().map(|p| read_image_resized(p, 64)).collect()
}

fn csv(path: impl AsRef<Path>, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
    writeln!(text, "{header}").expect("string write");
    for row in rows {
        writeln!(text, "{row}").expect("string write");
    }
    write_atomic(path, text.as_bytes())
}

fn fmt_real(v: Real) -> String {
    format!("{v:.6}")
}

// ------------------------------------------------------------ codec stage

/// Style corpus plus glyph renders, so both latent populations are
/// in-distribution for the codec.
pub fn assemble_codec_corpus(
    cfg: &RunConfig,
    fonts: &[StrokeFont],
    style_images: &[Tensor],
) -> Result<Vec<Tensor>> {
    let mut corpus: Vec<Tensor> = style_images.to_vec();
    let policy = augment_policy(cfg, fonts)?;
    let mut rng = substream(cfg.seed, "codec-corpus");
    for font in &policy.font_pool {
        for ch in CHARSET.chars() {
            let spec = GlyphSpec::new(ch.to_string(), font.clone(), cfg.image_size)
                .with_colors(crate::glyph::random_color(&mut rng), WHITE);
            corpus.push(rasterize(&spec)?);
        }
        for _ in 0..4 {
            corpus.push(sample_augmented_glyph(&policy, &cfg.text, &mut rng)?);
        }
    }
    Ok(corpus)
}

pub fn codec_path(cfg: &RunConfig) -> PathBuf {
    Path::new(&cfg.output_dir).join("codec.dsfb")
}

pub fn bundle_path(cfg: &RunConfig) -> PathBuf {
    Path::new(&cfg.output_dir).join("bundle.dsfb")
}

pub fn classifier_path(cfg: &RunConfig) -> PathBuf {
    Path::new(&cfg.output_dir).join("classifier.dsfb")
}

pub fn samples_dir(cfg: &RunConfig) -> PathBuf {
    Path::new(&cfg.output_dir).join("samples")
}

/// Trains the codec on style corpus + glyph renders, freezes it, writes
/// the checkpoint and the per-epoch MSE log.
pub fn cmd_train_codec(cfg: &RunConfig) -> Result<CodecParams> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let fonts = resolve_fonts(cfg)?;
    let style_images = load_style_images(&cfg.style_dir, cfg.style_image_count)?;
    let corpus = assemble_codec_corpus(cfg, &fonts, &style_images)?;
    let train_cfg = CodecTrainConfig {
        epochs: cfg.codec_epochs,
        lr: cfg.codec_lr,
        batch_size: cfg.codec_batch,
    };
    let mut rng = substream(cfg.seed, "codec");
    let (codec, epoch_mse) = train_codec(&corpus, &train_cfg, &mut rng)?;
    let rows: Vec<String> = epoch_mse
        .iter()
        .enumerate()
        .map(|(e, m)| format!("{e},{}", fmt_real(*m)))
        .collect();
    csv(
        Path::new(&cfg.output_dir).join("codec_losses.csv"),
        "epoch,mse",
        &rows,
    )?;
    save_codec(&codec, cfg, codec_path(cfg))?;
    Ok(codec)
}

// ----------------------------------------------------------- train stage

fn fusion_config(cfg: &RunConfig) -> FusionTrainConfig {
    FusionTrainConfig {
        lambda: cfg.lambda,
        lr_generator: cfg.lr_generator,
        lr_discriminator: cfg.lr_discriminator,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        mode: cfg.mode,
        d_steps_per_g_step: cfg.d_steps_per_g_step,
        style_image_count: cfg.style_image_count,
        seed: cfg.seed,
        timesteps: cfg.timesteps,
        beta_start: cfg.beta_start,
        beta_end: cfg.beta_end,
        unet: crate::diffusion::UNetConfig {
            latent_channels: crate::codec::LATENT_CHANNELS,
            latent_hw: crate::codec::LATENT_HW,
            base_width: cfg.unet_base_width,
            levels: cfg.unet_levels,
            blocks_per_level: cfg.unet_blocks,
            cond_dim: cfg.cond_dim,
            groups: 8,
        },
        disc_base_width: cfg.disc_base_width,
        prompt: if cfg.prompt.is_empty() {
            None
        } else {
            Some(cfg.prompt.clone())
        },
    }
}

fn write_losses_csv(path: impl AsRef<Path>, outcome: &FusionOutcome) -> Result<()> {
    let rows: Vec<String> = outcome
        .losses
        .iter()
        .enumerate()
        .map(|(e, l)| {
            format!(
                "{e},{},{},{}",
                fmt_real(l.l_diff),
                fmt_real(l.l_dis),
                fmt_real(l.l_total)
            )
        })
        .collect();
    csv(path, "epoch,l_diff,l_dis,l_total", &rows)
}

/// The alternating min-max run: loads the style corpus and frozen codec,
/// trains, persists loss curves and the bundle, and returns the bundle.
pub fn train_dsfusion(
    style_dir: impl AsRef<Path>,
    policy: &AugmentPolicy,
    text: &str,
    cfg: &RunConfig,
) -> Result<ModelBundle> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let codec_file = codec_path(cfg);
    if !codec_file.is_file() {
        return Err(Error::Config(format!(
            "codec checkpoint {} not found; run train-codec first",
            codec_file.display()
        )));
    }
    let codec = load_codec(&codec_file)?;
    let style_images = load_style_images(style_dir, cfg.style_image_count)?;
    let fusion_cfg = fusion_config(cfg);
    let outcome = run_fusion_training(&style_images, &codec, &fusion_cfg, |codec, rng| {
        let image = sample_augmented_glyph(policy, text, rng)?;
        codec.encode(&image)
    })?;
    write_losses_csv(Path::new(&cfg.output_dir).join("losses.csv"), &outcome)?;
    let bundle = ModelBundle {
        codec,
        unet: outcome.unet,
        cond: outcome.cond,
        discriminator: outcome.discriminator,
        sched: outcome.sched,
        config: cfg.clone(),
    };
    save_bundle(&bundle, bundle_path(cfg))?;
    Ok(bundle)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<ModelBundle> {
    let fonts = resolve_fonts(cfg)?;
    let policy = augment_policy(cfg, &fonts)?;
    train_dsfusion(&cfg.style_dir, &policy, &cfg.text, cfg)
}

// ---------------------------------------------------------- sample stage

/// Draws one latent per chain index and decodes it.
pub fn sample_images(bundle: &ModelBundle, cfg: &RunConfig, n: usize) -> Result<Vec<Tensor>> {
    (0..n)
        .map(|i| {
            let mut rng = substream_indexed(cfg.seed, "sampler", i as u64);
            let latent = match cfg.sampler {
                SamplerKind::Ddpm => {
                    sample_ddpm_chain(&bundle.unet, &bundle.sched, &bundle.cond, &mut rng)?
                }
                SamplerKind::Ddim => sample_ddim_from(
                    &bundle.unet,
                    &bundle.sched,
                    &bundle.cond,
                    cfg.sampler_steps,
                    Tensor::randn(
                        &[
                            bundle.unet.cfg.latent_channels,
                            bundle.unet.cfg.latent_hw,
                            bundle.unet.cfg.latent_hw,
                        ],
                        &mut rng,
                    ),
                )?,
            };
            bundle.codec.decode(&latent)
        })
        .collect()
}

/// Emits `n_candidates` PNGs, a manifest, and a contact sheet.
pub fn cmd_sample(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let bundle = load_bundle(bundle_path(cfg))?;
    let dir = samples_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    let images = sample_images(&bundle, cfg, cfg.n_candidates)?;
    let mut paths = Vec::new();
    let mut manifest = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let path = dir.join(format!("candidate_{i:02}.png"));
        write_png(&path, img)?;
        manifest.push(format!(
            "candidate_{i:02}.png,{},{}",
            cfg.seed, i
        ));
        paths.push(path);
    }
    csv(dir.join("manifest.csv"), "file,seed,chain", &manifest)?;
    let sheet = contact_sheet(&images, 4)?;
    write_png(dir.join("contact_sheet.png"), &sheet)?;
    Ok(paths)
}

// ------------------------------------------------------ classifier stage

/// Loads the cached classifier or trains and caches one.
pub fn ensure_classifier(cfg: &RunConfig) -> Result<GlyphClassifier> {
    let path = classifier_path(cfg);
    if path.is_file() {
        return load_classifier(&path);
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let fonts = resolve_fonts(cfg)?;
    let clf_cfg = ClassifierTrainConfig {
        epochs: cfg.clf_epochs,
        samples_per_glyph: cfg.clf_samples_per_glyph,
        lr: cfg.clf_lr,
        batch_size: 32,
    };
    let mut rng = substream(cfg.seed, "classifier");
    let clf = train_glyph_classifier(&fonts, &clf_cfg, &mut rng)?;
    save_classifier(&clf, &path)?;
    Ok(clf)
}

fn target_char(cfg: &RunConfig) -> Result<char> {
    cfg.text
        .chars()
        .nth(cfg.stylize_position)
        .ok_or_else(|| Error::Config("stylize_position out of range".into()))
}

/// Loads candidate PNGs in manifest (filename) order.
pub fn load_candidates(cfg: &RunConfig) -> Result<Vec<(PathBuf, Tensor)>> {
    let dir = samples_dir(cfg);
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|_| {
            Error::Config(format!(
                "samples directory {} not found; run sample first",
                dir.display()
            ))
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().starts_with("candidate_"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config("no candidates found; run sample first".into()));
    }
    paths
        .into_iter()
        .map(|p| Ok((p.clone(), read_image_resized(&p, 64)?)))
        .collect()
}

// ------------------------------------------------------------ rank stage

/// Scores all sampled candidates, writes the rank report (and optional
/// scatter CSV), and re-tiles the contact sheet in rank order.
pub fn cmd_rank(cfg: &RunConfig, scatter_csv: bool) -> Result<Vec<Candidate>> {
    let bundle = load_bundle(bundle_path(cfg))?;
    let clf = ensure_classifier(cfg)?;
    let style_images = load_style_images(&cfg.style_dir, cfg.style_image_count)?;
    let scorer = StyleScorer::fit(&bundle.codec, &style_images[..cfg.style_image_count])?;
    let target = target_char(cfg)?;

    let files = load_candidates(cfg)?;
    let mut candidates = Vec::new();
    for (i, (_, image)) in files.iter().enumerate() {
        candidates.push(Candidate {
            glyph_score: glyph_score(&clf, image, target, 0.0)?,
            style_score: scorer.score(image)?,
            image: image.clone(),
            seed: i as u64,
        });
    }
    let (ordered, front) = rank_candidates(&candidates)?;

    let mut rows = Vec::new();
    for (rank, &idx) in ordered.iter().enumerate() {
        let c = &candidates[idx];
        rows.push(format!(
            "{rank},{},{},{},{},{}",
            files[idx].0.file_name().expect("file name").to_string_lossy(),
            fmt_real(c.glyph_score),
            fmt_real(c.style_score),
            fmt_real(c.glyph_score + c.style_score),
            u8::from(front.contains(&idx)),
        ));
    }
    csv(
        Path::new(&cfg.output_dir).join("rank_report.csv"),
        "rank,file,glyph_score,style_score,score_sum,pareto",
        &rows,
    )?;

    if scatter_csv {
        let rows: Vec<String> = candidates
            .iter()
            .map(|c| format!("{},{}", fmt_real(c.glyph_score), fmt_real(c.style_score)))
            .collect();
        csv(
            Path::new(&cfg.output_dir).join("scatter.csv"),
            "glyph_score,style_score",
            &rows,
        )?;
    }

    let ranked_images: Vec<Tensor> = ordered.iter().map(|&i| candidates[i].image.clone()).collect();
    write_png(
        Path::new(&cfg.output_dir).join("rank_sheet.png"),
        &contact_sheet(&ranked_images, 4)?,
    )?;
    Ok(ordered.into_iter().map(|i| candidates[i].clone()).collect())
}

// ------------------------------------------------------------ eval stage

/// OCR and style metrics over the sampled candidates, one CSV row.
pub fn cmd_eval(cfg: &RunConfig, method_tag: &str) -> Result<(Real, Real, Real)> {
    let bundle = load_bundle(bundle_path(cfg))?;
    let clf = ensure_classifier(cfg)?;
    let style_images = load_style_images(&cfg.style_dir, cfg.style_image_count)?;
    let scorer = StyleScorer::fit(&bundle.codec, &style_images[..cfg.style_image_count])?;
    let target = target_char(cfg)?;

    let files = load_candidates(cfg)?;
    let images: Vec<Tensor> = files.iter().map(|(_, t)| t.clone()).collect();
    let labels = vec![target; images.len()];
    let ocr = ocr_accuracy(&images, &labels, &clf, 0.0)?;
    let ocr_blurred = ocr_accuracy(&images, &labels, &clf, cfg.blur_sigma)?;
    let style_mean = images
        .iter()
        .map(|img| scorer.score(img))
        .sum::<Result<Real>>()?
        / images.len() as Real;

    csv(
        Path::new(&cfg.output_dir).join("eval.csv"),
        "method_tag,ocr,ocr_blurred,style_score",
        &[format!(
            "{method_tag},{},{},{}",
            fmt_real(ocr),
            fmt_real(ocr_blurred),
            fmt_real(style_mean)
        )],
    )?;
    Ok((ocr, ocr_blurred, style_mean))
}

// --------------------------------------------------------- compose stage

pub fn cmd_compose(
    cfg: &RunConfig,
    stylized_path: impl AsRef<Path>,
    word: &str,
    position: usize,
    color_override: Option<Rgb>,
    out: impl AsRef<Path>,
) -> Result<()> {
    let fonts = resolve_fonts(cfg)?;
    let stylized = read_image_resized(stylized_path, cfg.image_size)?;
    let spec = GlyphSpec::new(word, fonts[0].clone(), cfg.image_size);
    let composed = compose_word(&stylized, position, &spec, color_override)?;
    write_png(out, &composed)
}

// ------------------------------------------------------ render-glyph stage

pub fn cmd_render_glyph(
    cfg: &RunConfig,
    fg: Rgb,
    bg: Rgb,
    out: impl AsRef<Path>,
    mask_out: Option<&Path>,
) -> Result<()> {
    let fonts = resolve_fonts(cfg)?;
    let spec = GlyphSpec::new(cfg.text.clone(), fonts[0].clone(), cfg.image_size)
        .with_colors(fg, bg);
    write_png(out, &rasterize(&spec)?)?;
    if let Some(mask_path) = mask_out {
        let coverage = rasterize_coverage(&spec)?;
        crate::image_io::write_pgm(mask_path, &coverage)?;
    }
    Ok(())
}

// -------------------------------------------------------------- ablations

/// The clean glyph mask candidates are compared against.
pub fn glyph_mask(cfg: &RunConfig) -> Result<Tensor> {
    let fonts = resolve_fonts(cfg)?;
    let spec = GlyphSpec::new(cfg.text.clone(), fonts[0].clone(), cfg.image_size);
    rasterize_coverage(&spec)
}

/// Mean IoU between segmented decoded samples and the glyph mask.
pub fn mean_sample_iou(bundle: &ModelBundle, cfg: &RunConfig, n: usize) -> Result<Real> {
    let mask = glyph_mask(cfg)?;
    let images = sample_images(bundle, cfg, n)?;
    let mut total = 0.0;
    for img in &images {
        let seg = segment_foreground(img, WHITE, SEGMENT_TAU)?;
        total += mask_iou(&seg, &mask);
    }
    Ok(total / n as Real)
}

/// Mean pairwise L2 distance between decoded samples.
pub fn sample_diversity(images: &[Tensor]) -> Real {
    let n = images.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let d2: Real = images[i]
                .data()
                .iter()
                .zip(images[j].data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += d2.sqrt();
            pairs += 1;
        }
    }
    total / pairs as Real
}

/// Trains at each λ with identical seeds and measures glyph-mask IoU of
/// the decoded samples. Returns per-λ means; rows land in
/// `ablate_lambda.csv`.
pub fn ablate_lambda(
    cfg: &RunConfig,
    lambdas: &[Real],
    seeds: &[u64],
    samples_per_run: usize,
) -> Result<Vec<(Real, Real)>> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for &lambda in lambdas {
        let mut total = 0.0;
        for &seed in seeds {
            let mut run_cfg = cfg.clone();
            run_cfg.lambda = lambda;
            run_cfg.seed = seed;
            run_cfg.output_dir = format!(
                "{}/ablate_lambda_{}_s{}",
                cfg.output_dir,
                fmt_real(lambda),
                seed
            );
            std::fs::create_dir_all(&run_cfg.output_dir)?;
            cmd_train_codec(&run_cfg)?;
            let bundle = cmd_train(&run_cfg)?;
            let iou = mean_sample_iou(&bundle, &run_cfg, samples_per_run)?;
            rows.push(format!("{},{seed},{}", fmt_real(lambda), fmt_real(iou)));
            total += iou;
        }
        means.push((lambda, total / seeds.len() as Real));
    }
    csv(
        Path::new(&cfg.output_dir).join("ablate_lambda.csv"),
        "lambda,seed,mean_iou",
        &rows,
    )?;
    Ok(means)
}

/// Trains at each style-image count with the total generator step budget
/// equalized, and measures decoded-sample diversity.
pub fn ablate_style_count(
    cfg: &RunConfig,
    counts: &[usize],
    seeds: &[u64],
    samples_per_run: usize,
) -> Result<Vec<(usize, Real)>> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let max_count = counts.iter().copied().max().unwrap_or(1);
    let base_batches = max_count.div_ceil(cfg.batch_size);
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for &count in counts {
        let mut total = 0.0;
        for &seed in seeds {
            let mut run_cfg = cfg.clone();
            run_cfg.style_image_count = count;
            run_cfg.seed = seed;
            // keep the number of optimizer steps comparable across counts
            let batches = count.div_ceil(run_cfg.batch_size);
            run_cfg.epochs = (cfg.epochs * base_batches).div_ceil(batches);
            run_cfg.output_dir =
                format!("{}/ablate_count_{count}_s{seed}", cfg.output_dir);
            std::fs::create_dir_all(&run_cfg.output_dir)?;
            cmd_train_codec(&run_cfg)?;
            let bundle = cmd_train(&run_cfg)?;
            let images = sample_images(&bundle, &run_cfg, samples_per_run)?;
            let div = sample_diversity(&images);
            rows.push(format!("{count},{seed},{}", fmt_real(div)));
            total += div;
        }
        means.push((count, total / seeds.len() as Real));
    }
    csv(
        Path::new(&cfg.output_dir).join("ablate_style_count.csv"),
        "style_image_count,seed,diversity",
        &rows,
    )?;
    Ok(means)
}
