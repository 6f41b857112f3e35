//! Command-line pipeline driver: render glyphs, train the codec and the
//! fusion model, sample candidates, rank and evaluate them, compose words,
//! and run the two ablations.

use clap::{Args, Parser, Subcommand};
use dsfusion::config::{load_config, RunConfig, SamplerKind};
use dsfusion::error::Result;
use dsfusion::glyph::Rgb;
use dsfusion::pipeline;
use dsfusion::tensor::Real;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dsfusion",
    about = "Glyph stylization via discriminator-steered latent diffusion",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration file (key = value lines); defaults apply when
    /// omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the config output directory.
    #[arg(long)]
    output_dir: Option<String>,

    /// Override the style image directory.
    #[arg(long)]
    style_dir: Option<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(dir) = &self.style_dir {
            cfg.style_dir = dir.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize the configured text to a PNG (and optional PGM mask).
    RenderGlyph {
        #[command(flatten)]
        common: Common,
        /// Text to render (overrides the config).
        #[arg(long)]
        text: Option<String>,
        /// Foreground color as `r,g,b` in [0,1].
        #[arg(long, default_value = "0,0,0")]
        fg: String,
        /// Background color as `r,g,b` in [0,1].
        #[arg(long, default_value = "1,1,1")]
        bg: String,
        /// Stroke thickness multiplier.
        #[arg(long)]
        thickness_scale: Option<Real>,
        /// Shear factor applied before fitting.
        #[arg(long)]
        slant: Option<Real>,
        #[arg(long, default_value = "glyph.png")]
        out: PathBuf,
        /// Also write the coverage mask here (PGM).
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Train the image codec and freeze it.
    TrainCodec {
        #[command(flatten)]
        common: Common,
    },
    /// Run the alternating discriminator/generator training loop.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override the discriminator weight lambda.
        #[arg(long)]
        lambda: Option<Real>,
    },
    /// Sample candidate images from a trained bundle.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Number of candidates (overrides the config).
        #[arg(long)]
        n: Option<usize>,
        /// Sampler kind: ddpm or ddim.
        #[arg(long)]
        sampler: Option<String>,
        /// DDIM step count.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Score sampled candidates and report the Pareto front.
    Rank {
        #[command(flatten)]
        common: Common,
        /// Also emit the raw score pairs for external plotting.
        #[arg(long)]
        scatter_csv: bool,
    },
    /// OCR and style metrics over sampled candidates.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Label for the report row.
        #[arg(long, default_value = "run")]
        tag: String,
    },
    /// Place a stylized letter within a rendered word.
    Compose {
        #[command(flatten)]
        common: Common,
        /// Path to the stylized letter image.
        #[arg(long)]
        stylized: PathBuf,
        /// The word to compose.
        #[arg(long)]
        word: String,
        /// Which letter of the word the stylized image replaces.
        #[arg(long, default_value_t = 0)]
        position: usize,
        /// Plain-letter color as `r,g,b`; dominant color when omitted.
        #[arg(long)]
        color: Option<String>,
        #[arg(long, default_value = "composed.png")]
        out: PathBuf,
    },
    /// Train at several lambda values and compare glyph-mask IoU.
    AblateLambda {
        #[command(flatten)]
        common: Common,
        /// Comma-separated lambda values.
        #[arg(long, default_value = "0,0.01,1.0")]
        lambdas: String,
        /// Comma-separated seeds.
        #[arg(long, default_value = "7,8,9")]
        seeds: String,
        /// Decoded samples per run.
        #[arg(long, default_value_t = 8)]
        samples: usize,
    },
    /// Train at several style-image counts and compare sample diversity.
    AblateStyleCount {
        #[command(flatten)]
        common: Common,
        /// Comma-separated corpus sizes.
        #[arg(long, default_value = "2,25")]
        counts: String,
        /// Comma-separated seeds.
        #[arg(long, default_value = "7")]
        seeds: String,
        /// Decoded samples per run.
        #[arg(long, default_value_t = 8)]
        samples: usize,
    },
}

fn parse_rgb(s: &str) -> Result<Rgb> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(dsfusion::Error::Argument(format!(
            "color: expected r,g,b got {s:?}"
        )));
    }
    let mut rgb = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        rgb[i] = p
            .parse()
            .map_err(|_| dsfusion::Error::Argument(format!("color component {p:?}")))?;
        if !(0.0..=1.0).contains(&rgb[i]) {
            return Err(dsfusion::Error::Argument(
                "color components must lie in [0,1]".into(),
            ));
        }
    }
    Ok(rgb)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| dsfusion::Error::Argument(format!("{what}: cannot parse {p:?}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::RenderGlyph {
            common,
            text,
            fg,
            bg,
            thickness_scale,
            slant,
            out,
            mask_out,
        } => {
            let mut cfg = common.load()?;
            if let Some(t) = text {
                cfg.text = t;
                cfg.stylize_position = 0;
            }
            cfg.validate()?;
            let fg = parse_rgb(&fg)?;
            let bg = parse_rgb(&bg)?;
            // thickness and slant live on the render, not the run config
            let fonts = pipeline::resolve_fonts(&cfg)?;
            let mut spec = dsfusion::glyph::GlyphSpec::new(
                cfg.text.clone(),
                fonts[0].clone(),
                cfg.image_size,
            )
            .with_colors(fg, bg);
            if let Some(t) = thickness_scale {
                spec = spec.with_thickness_scale(t);
            }
            if let Some(s) = slant {
                spec = spec.with_slant(s);
            }
            dsfusion::image_io::write_png(&out, &dsfusion::glyph::rasterize(&spec)?)?;
            if let Some(mask_path) = mask_out {
                let coverage = dsfusion::glyph::rasterize_coverage(&spec)?;
                dsfusion::image_io::write_pgm(&mask_path, &coverage)?;
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::TrainCodec { common } => {
            let cfg = common.load()?;
            pipeline::cmd_train_codec(&cfg)?;
            println!("wrote {}", pipeline::codec_path(&cfg).display());
            Ok(())
        }
        Command::Train { common, lambda } => {
            let mut cfg = common.load()?;
            if let Some(l) = lambda {
                cfg.lambda = l;
                cfg.validate()?;
            }
            let bundle = pipeline::cmd_train(&cfg)?;
            println!(
                "trained {} parameters; wrote {}",
                bundle.unet.param_count(),
                pipeline::bundle_path(&cfg).display()
            );
            Ok(())
        }
        Command::Sample {
            common,
            n,
            sampler,
            steps,
        } => {
            let mut cfg = common.load()?;
            if let Some(n) = n {
                cfg.n_candidates = n;
            }
            if let Some(s) = sampler {
                cfg.sampler = match s.as_str() {
                    "ddpm" => SamplerKind::Ddpm,
                    "ddim" => SamplerKind::Ddim,
                    other => {
                        return Err(dsfusion::Error::Argument(format!(
                            "sampler: expected ddpm or ddim, got {other:?}"
                        )))
                    }
                };
            }
            if let Some(s) = steps {
                cfg.sampler_steps = s;
            }
            cfg.validate()?;
            let paths = pipeline::cmd_sample(&cfg)?;
            println!("wrote {} candidates", paths.len());
            Ok(())
        }
        Command::Rank {
            common,
            scatter_csv,
        } => {
            let cfg = common.load()?;
            let ranked = pipeline::cmd_rank(&cfg, scatter_csv)?;
            println!("ranked {} candidates", ranked.len());
            Ok(())
        }
        Command::Eval { common, tag } => {
            let cfg = common.load()?;
            let (ocr, ocr_blurred, style) = pipeline::cmd_eval(&cfg, &tag)?;
            println!("ocr {ocr:.2} ocr_blurred {ocr_blurred:.2} style {style:.4}");
            Ok(())
        }
        Command::Compose {
            common,
            stylized,
            word,
            position,
            color,
            out,
        } => {
            let cfg = common.load()?;
            let color = color.as_deref().map(parse_rgb).transpose()?;
            pipeline::cmd_compose(&cfg, &stylized, &word, position, color, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::AblateLambda {
            common,
            lambdas,
            seeds,
            samples,
        } => {
            let cfg = common.load()?;
            let lambdas: Vec<Real> = parse_list(&lambdas, "lambdas")?;
            let seeds: Vec<u64> = parse_list(&seeds, "seeds")?;
            let means = pipeline::ablate_lambda(&cfg, &lambdas, &seeds, samples)?;
            for (lambda, iou) in means {
                println!("lambda {lambda}: mean_iou {iou:.4}");
            }
            Ok(())
        }
        Command::AblateStyleCount {
            common,
            counts,
            seeds,
            samples,
        } => {
            let cfg = common.load()?;
            let counts: Vec<usize> = parse_list(&counts, "counts")?;
            let seeds: Vec<u64> = parse_list(&seeds, "seeds")?;
            let means = pipeline::ablate_style_count(&cfg, &counts, &seeds, samples)?;
            for (count, diversity) in means {
                println!("count {count}: diversity {diversity:.4}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
