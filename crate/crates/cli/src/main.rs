use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use loopanim::alss::{AlssConfig, AlssSampler};
use loopanim::harness::{
    ablate_routing, gen_dataset, generate_frames, load_manifest, read_frame, read_frames, read_mask, write_frames,
    DatasetSpec, GenerateOptions, SamplerSetup, ABLATION_HEADER,
};
use loopanim::metrics::{evaluate_video, BlockMeanEmbedder, REPORT_HEADER};
use loopanim::model::{trainable_mask, Checkpoint, EmbeddingProviders, NetConfig, ParamGroup, RoutingConfig, UNetLite};
use loopanim::schedule::{LatentInit, NoiseSchedule};
use loopanim::trainstage::{
    checkpoint_path, loss_log_path, run_stage, smoothed_endpoints, RunOutput, StageConfig, TrainState,
};
use loopanim::{Error, Result, Stage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "loopanim", version, about = "Loopable image-to-video diffusion at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print loop index sequences, one JSON record per line.
    AlssSample {
        #[arg(long)]
        f: usize,
        #[arg(long, default_value_t = 6)]
        s: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Render a synthetic dataset and its manifest.
    GenData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one training stage.
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        stage: u8,
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint to resume or to start this stage from.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `manifest` from the config.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample a video from one image and write numbered frames.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value = "")]
        caption: String,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 25)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// gaussian | degraded
        #[arg(long, default_value = "gaussian")]
        init: LatentInit,
    },
    /// Score a directory of frames against the input image.
    Evaluate {
        #[arg(long)]
        video_dir: PathBuf,
        #[arg(long)]
        input_image: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        video_id: Option<String>,
        #[arg(long)]
        clip: Option<usize>,
    },
    /// Train and evaluate under one or all routing presets.
    AblateRouting {
        /// Preset 0..=4; omit to run all of them.
        #[arg(long)]
        preset: Option<usize>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        iterations: Option<u64>,
        /// Number of manifest videos to generate from.
        #[arg(long, default_value_t = 2)]
        eval_count: usize,
        #[arg(long, default_value_t = 25)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parameter counts per group and trainable totals per stage.
    Params {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        ctx_dim: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Capacity { .. } => 1,
        Error::Data(_) | Error::Io { .. } | Error::Checkpoint(_) | Error::Provider(_) | Error::Dimension(_) => 2,
        Error::Training(_) | Error::Contract(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::AlssSample { f, s, seed, count } => alss_sample(f, s, seed, count),
        Command::GenData { spec, out } => {
            let manifest = gen_dataset(&DatasetSpec::from_file(&spec)?, &out)?;
            println!("{}", manifest.display());
            Ok(())
        }
        Command::Train {
            stage,
            config,
            resume,
            out,
            manifest,
            iterations,
            seed,
        } => train(stage, &config, resume.as_deref(), out, manifest, iterations, seed),
        Command::Generate {
            checkpoint,
            image,
            caption,
            mask,
            out,
            steps,
            seed,
            init,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let image = read_frame(&image)?;
            let mask = mask.map(|p| read_mask(&p)).transpose()?;
            let opts = GenerateOptions { steps, init, seed };
            let frames = generate_frames(
                &ckpt.net,
                &SamplerSetup::from_checkpoint(&ckpt),
                &image,
                &caption,
                mask.as_ref(),
                &NoiseSchedule::default(),
                &opts,
            )?;
            write_frames(&out, &frames)?;
            println!("{} frames written to {}", frames.len(), out.display());
            Ok(())
        }
        Command::Evaluate {
            video_dir,
            input_image,
            report,
            video_id,
            clip,
        } => {
            let frames = read_frames(&video_dir)?;
            let input = read_frame(&input_image)?;
            let id = video_id.unwrap_or_else(|| {
                video_dir.file_name().map_or("video".into(), |n| n.to_string_lossy().into_owned())
            });
            let rec = evaluate_video(&id, clip, &frames, &input, &BlockMeanEmbedder::default())?;
            let text = format!("{REPORT_HEADER}\n{}\n", rec.csv());
            fs::write(&report, &text).map_err(|e| Error::io(&report, e))?;
            print!("{text}");
            Ok(())
        }
        Command::AblateRouting {
            preset,
            config,
            manifest,
            report,
            iterations,
            eval_count,
            steps,
            seed,
        } => {
            let mut cfg = StageConfig::from_file(&config)?;
            if let Some(n) = iterations {
                cfg.iterations = n;
            }
            let manifest = manifest.or(cfg.manifest.clone()).ok_or_else(no_manifest)?;
            let videos = load_manifest(&manifest)?;
            let providers = EmbeddingProviders::toy(cfg.net.ctx_dim);
            let train = videos.iter().map(|v| v.to_training(&providers)).collect::<Result<Vec<_>>>()?;
            let presets: Vec<usize> = match preset {
                Some(p) => vec![p],
                None => (0..RoutingConfig::PRESET_COUNT).collect(),
            };
            let opts = GenerateOptions {
                steps,
                seed,
                ..Default::default()
            };
            let eval = &videos[..eval_count.min(videos.len())];
            let mut text = format!("{ABLATION_HEADER}\n");
            for p in presets {
                for rec in ablate_routing(
                    &cfg,
                    p,
                    &train,
                    eval,
                    &BlockMeanEmbedder::default(),
                    &NoiseSchedule::default(),
                    &opts,
                )? {
                    text.push_str(&rec.csv());
                    text.push('\n');
                }
            }
            fs::write(&report, &text).map_err(|e| Error::io(&report, e))?;
            print!("{text}");
            Ok(())
        }
        Command::Params {
            checkpoint,
            channels,
            ctx_dim,
            seed,
        } => {
            let net = match checkpoint {
                Some(p) => Checkpoint::load(&p)?.net,
                None => {
                    let d = NetConfig::default();
                    let cfg = NetConfig {
                        channels: channels.unwrap_or(d.channels),
                        ctx_dim: ctx_dim.unwrap_or(d.ctx_dim),
                    };
                    UNetLite::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed))?
                }
            };
            let report = net.param_report();
            println!("group,count");
            for g in ParamGroup::ALL {
                println!("{},{}", g.name(), report.count(g));
            }
            println!("total,{}", report.total);
            for s in Stage::ALL {
                println!("stage{}_trainable,{}", s.number(), report.trainable_total(&trainable_mask(s)));
            }
            Ok(())
        }
    }
}

fn no_manifest() -> Error {
    Error::Config("no manifest given (use --manifest or the `manifest` config key)".into())
}

fn alss_sample(f: usize, s: usize, seed: u64, count: usize) -> Result<()> {
    let sampler = AlssSampler::new(AlssConfig::new(s, f)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let seq = sampler.sample(&mut rng);
        println!("{}", serde_json::to_string(&seq).map_err(|e| Error::Data(e.to_string()))?);
    }
    Ok(())
}

fn train(
    stage: u8,
    config: &Path,
    resume: Option<&Path>,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
    iterations: Option<u64>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = StageConfig::from_file(config)?;
    if cfg.stage.number() != stage {
        return Err(Error::Config(format!(
            "--stage {stage} disagrees with stage {} in {}",
            cfg.stage,
            config.display()
        )));
    }
    if let Some(n) = iterations {
        cfg.iterations = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out
        .or(cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory (use --out or `output_dir`)".into()))?;
    let manifest = manifest.or(cfg.manifest.clone()).ok_or_else(no_manifest)?;
    let providers = EmbeddingProviders::toy(cfg.net.ctx_dim);
    let data = load_manifest(&manifest)?
        .iter()
        .map(|v| v.to_training(&providers))
        .collect::<Result<Vec<_>>>()?;
    let mut state = match resume {
        Some(p) => TrainState::from_checkpoint(&cfg, Checkpoint::load(p)?)?,
        None => TrainState::fresh(&cfg)?,
    };
    let log = run_stage(
        &cfg,
        &mut state,
        &data,
        &NoiseSchedule::default(),
        &RunOutput {
            dir: Some(out.clone()),
            stop_at: None,
        },
    )?;
    let window = (log.len() / 10).clamp(1, 100);
    if let Some((first, last)) = smoothed_endpoints(&log, window) {
        println!("stage {} smoothed loss {first:.5} -> {last:.5} over {} iterations", cfg.stage, log.len());
    }
    println!("checkpoint {}", checkpoint_path(&out, cfg.stage).display());
    println!("loss log {}", loss_log_path(&out, cfg.stage).display());
    Ok(())
}
