//! Subcommand definitions and implementations.

use std::fs::{self, File, OpenOptions};
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lde_core::checkpoint::{configs_to_text, theta_tensors, Checkpoint};
use lde_core::data::synth_dataset;
use lde_core::error::Error as CoreError;
use lde_core::gradcheck::verification_suite;
use lde_core::loss::{psnr, ssim_value, PerceptualNet, SsimParams};
use lde_core::model::{light_enhancer_param_formula, EnhanceMode, LdeModel, ModelConfig};
use lde_core::train::{
    eval_cross_reconstruction, train_disentangle, train_enhance, TrainConfig, TrainState,
};

use crate::dataset::{load_dataset, save_dataset};
use crate::files::{load_checkpoint, load_configs, save_checkpoint};
use crate::png_io::{load_png, save_png};

#[derive(Parser)]
#[command(
    name = "lden",
    version,
    about = "Latent-disentanglement low-light enhancer: synthesize data, train both stages, enhance and evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic paired dataset (low/ and normal/ PNG trees)
    Synth {
        /// Output dataset directory
        #[arg(long)]
        out: PathBuf,
        /// Number of pairs
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// Square image size in pixels
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Generator seed
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Stage 1: train the disentanglement and reconstruction modules
    TrainDis {
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Stage 2: train an enhancer on top of a stage-1 checkpoint
    TrainEnh {
        #[command(flatten)]
        train: TrainArgs,
        /// Which enhancer to train
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        mode: EnhanceMode,
    },
    /// Enhance one PNG or every PNG in a directory
    Enhance {
        /// Trained checkpoint
        #[arg(long)]
        ckpt: PathBuf,
        /// Input image or directory
        #[arg(long = "in")]
        input: PathBuf,
        /// Output image or directory
        #[arg(long)]
        out: PathBuf,
        /// Enhancer to run (defaults to what the checkpoint trained)
        #[arg(long, value_parser = parse_mode)]
        mode: Option<EnhanceMode>,
    },
    /// PSNR/SSIM table over a paired directory (optionally enhancing first)
    Eval {
        /// Paired dataset directory
        #[arg(long)]
        data: PathBuf,
        /// Enhance the low images through this checkpoint before comparing
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<EnhanceMode>,
    },
    /// Cross-reconstruction report: the four component-swap PSNR rows
    SwapEval {
        /// Stage-1 (or later) checkpoint
        #[arg(long)]
        ckpt: PathBuf,
        /// Paired dataset directory
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the finite-difference gradient verification suite
    GradCheck,
    /// Parameter counts per submodule
    ParamCount {
        /// Optional config file with a [model] section
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sweep the light enhancer width and report totals
        #[arg(long)]
        sweep_light: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Paired dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint path (a .trace file is written alongside)
    #[arg(long)]
    out: PathBuf,
    /// Config file with [model] / [train] sections
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the training seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override total optimization steps
    #[arg(long)]
    steps: Option<usize>,
    /// Checkpoint to start from (stage 2 requires a stage-1 checkpoint)
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn parse_mode(s: &str) -> std::result::Result<EnhanceMode, String> {
    EnhanceMode::parse(s).map_err(|e| e.to_string())
}

pub fn dispatch(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Synth { out, count, size, seed } => synth(&out, count, size, seed),
        Cmd::TrainDis { train } => train_dis_cmd(train),
        Cmd::TrainEnh { train, mode } => train_enh_cmd(train, mode),
        Cmd::Enhance { ckpt, input, out, mode } => enhance_cmd(&ckpt, &input, &out, mode),
        Cmd::Eval { data, ckpt, mode } => eval_cmd(&data, ckpt.as_deref(), mode),
        Cmd::SwapEval { ckpt, data } => swap_eval_cmd(&ckpt, &data),
        Cmd::GradCheck => grad_check_cmd(),
        Cmd::ParamCount { config, sweep_light } => param_count_cmd(config.as_deref(), sweep_light),
    }
}

fn print_resolved(model: &ModelConfig, train: &TrainConfig) {
    println!("resolved configuration (seed {}):", train.seed);
    for line in configs_to_text(model, train).lines() {
        println!("  {line}");
    }
}

fn synth(out: &Path, count: usize, size: usize, seed: u64) -> Result<i32> {
    println!("synthesizing {count} pairs of {size}x{size} (seed {seed}) into {}", out.display());
    let pairs = synth_dataset(count, size, seed)?;
    save_dataset(out, &pairs)?;
    println!("wrote {} pairs", pairs.len());
    Ok(0)
}

/// Merge config file and flag overrides into the effective configs.
fn resolve_configs(args: &TrainArgs) -> Result<(ModelConfig, TrainConfig)> {
    let (model, mut train) = match &args.config {
        Some(path) => {
            let file = crate::files::load_config_file(path)?;
            (file.model.unwrap_or_default(), file.train.unwrap_or_default())
        }
        None => (ModelConfig::default(), TrainConfig::default()),
    };
    if let Some(seed) = args.seed {
        train.seed = seed;
    }
    if let Some(steps) = args.steps {
        train.total_steps = steps;
    }
    train.validate()?;
    Ok((model, train))
}

struct TraceFile {
    file: File,
    started: Instant,
}

impl TraceFile {
    fn create(ckpt_out: &Path) -> Result<Self> {
        let path = ckpt_out.with_extension("trace");
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok(TraceFile { file, started: Instant::now() })
    }

    fn line(&mut self, step: usize, lr: f64, fields: &[(&str, f64)]) {
        let mut s = format!("step={step} lr={lr}");
        for (k, v) in fields {
            s.push_str(&format!(" {k}={v}"));
        }
        s.push_str(&format!(" wall_ms={:.1}\n", self.started.elapsed().as_secs_f64() * 1e3));
        let _ = self.file.write_all(s.as_bytes());
    }
}

/// Save the last-good checkpoint even when training aborts mid-run.
fn finish_training(
    result: std::result::Result<(), CoreError>,
    model: &LdeModel<f32>,
    cfg: &TrainConfig,
    state: &TrainState,
    stage: &str,
    out: &Path,
) -> Result<i32> {
    let ck = Checkpoint::capture(model, cfg, state, stage);
    save_checkpoint(&ck, out)?;
    match result {
        Ok(()) => {
            println!("saved checkpoint to {}", out.display());
            Ok(0)
        }
        Err(e) => {
            eprintln!("error: {e}; last-good checkpoint saved to {}", out.display());
            Ok(1)
        }
    }
}

fn train_dis_cmd(args: TrainArgs) -> Result<i32> {
    let data = load_dataset(&args.data)?;

    let (mut model, cfg, mut state) = match &args.resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            if ck.stage != "dis" {
                bail!("--resume expects a stage-1 checkpoint, got stage '{}'", ck.stage);
            }
            let (model, state) = ck.restore()?;
            let mut cfg = ck.train.clone();
            if let Some(steps) = args.steps {
                cfg.total_steps = steps;
            }
            println!("resuming stage 1 from step {}", state.step);
            (model, cfg, state)
        }
        None => {
            let (model_cfg, cfg) = resolve_configs(&args)?;
            let model = LdeModel::<f32>::new(model_cfg, cfg.seed)?;
            let state = TrainState::fresh(&model, &cfg);
            (model, cfg, state)
        }
    };
    cfg.validate()?;
    print_resolved(&model.config, &cfg);

    let mut trace = TraceFile::create(&args.out)?;
    let result = train_disentangle(&mut model, &data, &cfg, &mut state, |r| {
        trace.line(
            r.step,
            r.lr,
            &[("l_cc", r.l_cc), ("l_recon", r.l_recon), ("total", r.total)],
        );
        if r.step % 50 == 0 || r.step + 1 == cfg.total_steps {
            println!(
                "step {:4}  lr {:.3e}  l_cc {:.5}  l_recon {:.5}  total {:.5}",
                r.step, r.lr, r.l_cc, r.l_recon, r.total
            );
        }
    })
    .map(|_| ());
    finish_training(result, &model, &cfg, &state, "dis", &args.out)
}

fn train_enh_cmd(args: TrainArgs, mode: EnhanceMode) -> Result<i32> {
    let data = load_dataset(&args.data)?;
    let resume = args
        .resume
        .as_ref()
        .ok_or_else(|| anyhow!("train-enh requires --resume with a stage-1 checkpoint"))?;
    let ck = load_checkpoint(resume)?;
    let stage_tag = format!("enh-{}", mode.as_str());

    let (mut model, cfg, mut state) = if ck.stage == stage_tag {
        // continue an interrupted stage-2 run
        let (model, state) = ck.restore()?;
        let mut cfg = ck.train.clone();
        if let Some(steps) = args.steps {
            cfg.total_steps = steps;
        }
        println!("resuming stage 2 ({}) from step {}", mode.as_str(), state.step);
        (model, cfg, state)
    } else if ck.stage == "dis" {
        // stage-2 inherits the stage-1 training regime unless a config file
        // overrides it; the architecture always comes from the checkpoint
        let (model, _) = ck.restore()?;
        let mut cfg = ck.train.clone();
        if let Some(path) = &args.config {
            let file = crate::files::load_config_file(path)?;
            if let Some(m) = file.model {
                if m != model.config {
                    bail!("config file [model] section conflicts with the checkpoint's architecture");
                }
            }
            if let Some(t) = file.train {
                cfg = t;
            }
        }
        match args.seed {
            Some(seed) => cfg.seed = seed,
            // a fresh stream for stage 2, still derived from the run
            None => cfg.seed = ck.train.seed.wrapping_add(1),
        }
        if let Some(steps) = args.steps {
            cfg.total_steps = steps;
        }
        let state = TrainState::fresh(&model, &cfg);
        (model, cfg, state)
    } else {
        bail!(
            "--resume expects a stage-1 ('dis') or matching stage-2 checkpoint, got '{}'",
            ck.stage
        );
    };
    cfg.validate()?;
    print_resolved(&model.config, &cfg);
    println!("training the {} enhancer; disentangle/reconstruction frozen", mode.as_str());

    let mut trace = TraceFile::create(&args.out)?;
    let result = train_enhance(&mut model, &data, &cfg, &mut state, mode, |r| {
        trace.line(
            r.step,
            r.lr,
            &[
                ("l1", r.l1),
                ("ssim", r.ssim),
                ("perceptual", r.perceptual),
                ("total", r.total),
            ],
        );
        if r.step % 50 == 0 || r.step + 1 == cfg.total_steps {
            println!(
                "step {:4}  lr {:.3e}  l1 {:.5}  ssim {:.4}  perceptual {:.6}  total {:.5}",
                r.step, r.lr, r.l1, r.ssim, r.perceptual, r.total
            );
        }
    })
    .map(|_| ());
    finish_training(result, &model, &cfg, &state, &stage_tag, &args.out)
}

fn mode_for_checkpoint(ck: &Checkpoint, flag: Option<EnhanceMode>) -> EnhanceMode {
    flag.unwrap_or(match ck.stage.as_str() {
        "enh-light" => EnhanceMode::Light,
        _ => EnhanceMode::Full,
    })
}

fn enhance_cmd(ckpt: &Path, input: &Path, out: &Path, mode: Option<EnhanceMode>) -> Result<i32> {
    let ck = load_checkpoint(ckpt)?;
    let mode = mode_for_checkpoint(&ck, mode);
    let (model, _) = ck.restore()?;
    print_resolved(&model.config, &ck.train);
    println!("enhancer mode: {}", mode.as_str());

    if input.is_dir() {
        fs::create_dir_all(out)?;
        let mut names: Vec<PathBuf> = fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "png").unwrap_or(false))
            .collect();
        names.sort();
        if names.is_empty() {
            bail!("no .png files under {}", input.display());
        }
        for path in names {
            let img = load_png(&path)?;
            let enhanced = model.enhance_image(&img, mode)?;
            let target = out.join(path.file_name().unwrap());
            save_png(&enhanced, &target)?;
            println!("{} -> {}", path.display(), target.display());
        }
    } else {
        let img = load_png(input)?;
        let enhanced = model.enhance_image(&img, mode)?;
        save_png(&enhanced, out)?;
        println!("{} -> {}", input.display(), out.display());
    }
    Ok(0)
}

fn eval_cmd(data: &Path, ckpt: Option<&Path>, mode: Option<EnhanceMode>) -> Result<i32> {
    let pairs = load_dataset(data)?;
    let model = match ckpt {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            let m = mode_for_checkpoint(&ck, mode);
            let (model, _) = ck.restore()?;
            println!("evaluating enhanced output ({} mode)", m.as_str());
            Some((model, m))
        }
        None => {
            println!("evaluating raw low vs normal pairs");
            None
        }
    };
    let ssim_params = SsimParams::default();
    let mut sum_psnr = 0.0;
    let mut sum_ssim = 0.0;
    println!("{:<16} {:>10} {:>8}", "pair", "psnr_db", "ssim");
    for pair in &pairs {
        let candidate = match &model {
            Some((m, mode)) => m.enhance_image(&pair.low, *mode)?,
            None => pair.low.clone(),
        };
        let p = psnr(&candidate, &pair.normal)?;
        let s = ssim_value(&candidate, &pair.normal, &ssim_params)?;
        sum_psnr += p;
        sum_ssim += s;
        println!("{:<16} {:>10.3} {:>8.4}", pair.id, p, s);
    }
    let n = pairs.len() as f64;
    println!("{:<16} {:>10.3} {:>8.4}", "mean", sum_psnr / n, sum_ssim / n);
    Ok(0)
}

fn swap_eval_cmd(ckpt: &Path, data: &Path) -> Result<i32> {
    let pairs = load_dataset(data)?;
    let ck = load_checkpoint(ckpt)?;
    let (model, _) = ck.restore()?;
    print_resolved(&model.config, &ck.train);
    let report = eval_cross_reconstruction(&model, &pairs)?;
    println!("cross-reconstruction over {} pairs:", pairs.len());
    for (label, value) in &report.rows {
        println!("  {label:<28} {value:>8.2} dB");
    }
    Ok(0)
}

fn grad_check_cmd() -> Result<i32> {
    let entries = verification_suite()?;
    let mut worst: Option<&lde_core::gradcheck::SuiteEntry> = None;
    let mut all_pass = true;
    for e in &entries {
        println!(
            "[{}] {:<26} max rel err {:.3e} (tolerance {:.0e})",
            if e.passed() { "PASS" } else { "FAIL" },
            e.name,
            e.max_rel_error,
            e.threshold
        );
        if !e.passed() {
            all_pass = false;
        }
        let ratio = e.max_rel_error / e.threshold;
        if worst.map(|w| ratio > w.max_rel_error / w.threshold).unwrap_or(true) {
            worst = Some(e);
        }
    }
    if all_pass {
        println!("all {} gradient checks passed", entries.len());
        Ok(0)
    } else {
        let w = worst.unwrap();
        eprintln!(
            "error: gradient verification failed; worst offender {} at {:.3e}",
            w.name, w.max_rel_error
        );
        Ok(1)
    }
}

fn param_count_cmd(config: Option<&Path>, sweep_light: bool) -> Result<i32> {
    let model_cfg = match config {
        Some(path) => load_configs(path)?.0,
        None => ModelConfig::default(),
    };
    let model = LdeModel::<f32>::new(model_cfg.clone(), 0)?;
    println!("parameter counts (channels={}, light_channels={}):", model_cfg.channels, model_cfg.light_channels);
    for (name, count) in model.param_breakdown() {
        println!("  {name:<8} {count:>10}");
    }
    if sweep_light {
        println!("\nlight enhancer width sweep (formula = hand enumeration of the topology):");
        println!("  {:>6} {:>10} {:>12}", "width", "params", "vs 0.05M");
        for c in [16usize, 32, 64, 96, 104, 108, 112, 128] {
            let n = light_enhancer_param_formula(c, c);
            println!("  {c:>6} {n:>10} {:>11.1}%", 100.0 * (n as f64 - 50_000.0) / 50_000.0);
        }
    }
    Ok(0)
}

/// Fixed perceptual-extractor weights as a standalone container, the form
/// they ship in under `assets/theta.ldec`.
pub fn theta_checkpoint() -> Checkpoint {
    Checkpoint::for_tensors(theta_tensors(&PerceptualNet::<f32>::fixed()))
}
