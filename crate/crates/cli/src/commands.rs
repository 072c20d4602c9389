use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use footfall_core::audio::{read_wav, resample, write_wav, AudioClip};
use footfall_core::corpus;
use footfall_core::dsp::{control_proxy, ControlSignal};
use footfall_core::manifest::load_manifest;
use footfall_core::metrics::{embed_clips, loudness_normalized, EvalReport, Kernel, MfccStatsEmbedder};
use footfall_core::model::Checkpoint;
use footfall_core::training::{build_dataset, train_stage1, train_stage2, StageOutput};
use log::info;

use crate::config::EngineConfig;
use crate::engine::{EngineKind, Engines, GrfRequest, GrfSpec, SynthRequest};
use crate::service;

#[derive(Debug, Parser)]
#[command(name = "footfall", version, about = "Controllable footstep synthesis: analysis, training, synthesis and evaluation")]
pub struct Cli {
    /// Engine configuration (TOML).
    #[arg(long, global = true, env = "PROVE_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Control proxy of a WAV file, as JSON.
    Analyze(AnalyzeArgs),
    /// Sample the GRF generator, as JSON.
    Grf(GrfArgs),
    /// Render with the procedural baseline.
    SynthPa(SynthArgs),
    /// Train the audio autoencoder.
    TrainStage1(Stage1Args),
    /// Train the control encoder against a stage-1 checkpoint.
    TrainStage2(Stage2Args),
    /// Render with a trained model.
    Synth(SynthArgs),
    /// FAD and MMD between two directories of WAV files.
    Eval(EvalArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Write the synthetic footstep corpus with its manifest.
    Corpus(CorpusArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output file; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    /// Step period in seconds.
    #[arg(long)]
    pub period: Option<f64>,
    /// Heel, roll and ball fractions of a period.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub fractions: Option<Vec<f64>>,
    /// Start, heel, valley, ball and end levels.
    #[arg(long, value_delimiter = ',', num_args = 5)]
    pub levels: Option<Vec<f64>>,
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Seconds.
    #[arg(long)]
    pub duration: Option<f64>,
}

impl CurveArgs {
    fn spec(&self) -> GrfSpec {
        GrfSpec {
            step_period: self.period,
            segment_fractions: self.fractions.as_ref().map(|v| [v[0], v[1], v[2]]),
            levels: self.levels.as_ref().map(|v| [v[0], v[1], v[2], v[3], v[4]]),
            jitter: self.jitter,
        }
    }
}

#[derive(Debug, Args)]
pub struct GrfArgs {
    #[command(flatten)]
    pub curve: CurveArgs,
    /// Jitter seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub surface: String,
    /// Explicit control curve (control-signal JSON) instead of the GRF generator.
    #[arg(long, conflicts_with_all = ["period", "fractions", "levels", "jitter"])]
    pub gamma: Option<PathBuf>,
    #[command(flatten)]
    pub curve: CurveArgs,
    #[arg(long, default_value_t = 0)]
    pub grf_seed: u64,
    /// Control-noise seed (learned engine only).
    #[arg(long, default_value_t = 0)]
    pub u_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub synth_seed: u64,
    /// Trained checkpoint (learned engine only).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Stage1Args {
    /// Dataset manifest (JSON lines of `{path, label}`).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace; `<out>.loss.csv` if omitted.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Overrides `train.steps`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct Stage2Args {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub common: Stage1Args,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub set_a: PathBuf,
    #[arg(long)]
    pub set_b: PathBuf,
    #[arg(long, default_value = "a")]
    pub name_a: String,
    #[arg(long, default_value = "b")]
    pub name_b: String,
    /// Overrides `eval.kernel`.
    #[arg(long)]
    pub kernel: Option<KernelArg>,
    /// RBF bandwidth; median pairwise distance if omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Built UI bundle served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub per_surface: usize,
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    let config = EngineConfig::resolve(cli.config.as_deref())?;
    info!("config hash {}", config.hash());
    match cli.command {
        Command::Analyze(a) => analyze(&config, &a),
        Command::Grf(a) => grf(config, &a),
        Command::SynthPa(a) => synth(config, &a, EngineKind::Pa),
        Command::TrainStage1(a) => stage1(&config, &a),
        Command::TrainStage2(a) => stage2(&config, &a),
        Command::Synth(a) => synth(config, &a, EngineKind::Learned),
        Command::Eval(a) => eval(&config, &a),
        Command::Serve(a) => serve(config, &a),
        Command::Corpus(a) => {
            info!("corpus seed {}", a.seed);
            let manifest = corpus::write_corpus(&a.out, a.per_surface, a.duration, a.seed)?;
            println!("{}", manifest.display());
            Ok(())
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.write_all(b"\n")?;
            Ok(())
        }
    }
}

/// Control proxy of a clip at any rate, resampled to the analysis rate.
pub fn analyze_clip(clip: &AudioClip<f32>, config: &EngineConfig) -> Result<ControlSignal<f32>> {
    let analysis = config.model.analysis;
    let clip = resample(clip, analysis.sample_rate)?;
    Ok(control_proxy(&clip, &analysis)?)
}

fn analyze(config: &EngineConfig, a: &AnalyzeArgs) -> Result<()> {
    let clip = read_wav::<f32>(&a.input)?;
    let signal = analyze_clip(&clip, config)?;
    emit(&signal.to_json()?, a.out.as_deref())
}

fn grf(config: EngineConfig, a: &GrfArgs) -> Result<()> {
    info!("grf seed {}", a.seed);
    let spec = a.curve.spec();
    let req = GrfRequest {
        step_period: spec.step_period,
        segment_fractions: spec.segment_fractions,
        levels: spec.levels,
        jitter: spec.jitter,
        duration: a.curve.duration,
        seed: a.seed,
    };
    let curve = Engines::new(config, None)?.grf(&req)?;
    emit(&curve.to_json()?, a.out.as_deref())
}

fn synth(config: EngineConfig, a: &SynthArgs, engine: EngineKind) -> Result<()> {
    info!(
        "engine {engine:?}, seeds: grf {}, u {}, synth {}",
        a.grf_seed, a.u_seed, a.synth_seed
    );
    let checkpoint = match (engine, &a.checkpoint) {
        (EngineKind::Learned, Some(p)) => Some(Checkpoint::<f32>::load(p).with_context(|| format!("loading {}", p.display()))?),
        (EngineKind::Learned, None) => bail!("synth needs --checkpoint"),
        (EngineKind::Pa, _) => None,
    };
    let engines = Engines::new(config, checkpoint)?;
    let mut req = SynthRequest::new(&a.surface);
    req.engine = engine;
    req.duration = a.curve.duration;
    req.grf_seed = a.grf_seed;
    req.u_seed = a.u_seed;
    req.synth_seed = a.synth_seed;
    match &a.gamma {
        Some(path) => {
            let signal = ControlSignal::<f64>::from_json(&std::fs::read_to_string(path)?)?;
            if signal.dims != 1 || signal.control_rate != engines.control_rate() {
                bail!(
                    "{}: expected one channel at {} Hz, got {} at {} Hz",
                    path.display(),
                    engines.control_rate(),
                    signal.dims,
                    signal.control_rate
                );
            }
            req.gamma = Some(signal.values);
        }
        None => req.grf = Some(a.curve.spec()),
    }
    let out = engines.render(&req)?;
    write_wav(&a.out, &out.audio)?;
    info!("wrote {} ({} samples)", a.out.display(), out.audio.len());
    Ok(())
}

fn loss_path(a: &Stage1Args) -> PathBuf {
    a.loss_csv.clone().unwrap_or_else(|| {
        let mut name = a.out.clone().into_os_string();
        name.push(".loss.csv");
        PathBuf::from(name)
    })
}

fn train_settings(config: &EngineConfig, a: &Stage1Args) -> footfall_core::training::TrainConfig {
    let mut train = config.train.clone();
    if let Some(s) = a.steps {
        train.steps = s;
    }
    if let Some(s) = a.seed {
        train.seed = s;
    }
    info!("training seed {}, {} steps", train.seed, train.steps);
    train
}

fn save_stage(out: &StageOutput<f32>, a: &Stage1Args) -> Result<()> {
    out.checkpoint.save(&a.out)?;
    let csv = loss_path(a);
    out.trace.save(&csv)?;
    if let (Some(first), Some(last)) = (out.trace.initial(), out.trace.losses.last()) {
        info!("loss {first:.5} -> {last:.5}");
    }
    info!("wrote {} and {}", a.out.display(), csv.display());
    Ok(())
}

fn stage1(config: &EngineConfig, a: &Stage1Args) -> Result<()> {
    let train = train_settings(config, a);
    let manifest = load_manifest(&a.manifest)?;
    let items = build_dataset::<f32>(&manifest, &config.model.analysis, train.seed)?;
    info!("{} items, vocabulary {:?}", items.len(), manifest.vocabulary());
    let out = train_stage1(&items, manifest.vocabulary(), &config.model, &train)?;
    save_stage(&out, a)
}

fn stage2(config: &EngineConfig, a: &Stage2Args) -> Result<()> {
    let train = train_settings(config, &a.common);
    let stage1 = Checkpoint::<f32>::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let manifest = load_manifest(&a.common.manifest)?;
    let items = build_dataset::<f32>(&manifest, &stage1.config.analysis, train.seed)?;
    info!("{} items, vocabulary {:?}", items.len(), manifest.vocabulary());
    let out = train_stage2(&items, manifest.vocabulary(), &stage1, &train)?;
    save_stage(&out, &a.common)
}

/// WAV files directly inside `dir`, in name order.
pub fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

fn load_set(dir: &Path, rate: u32, rms: f64) -> Result<Vec<AudioClip<f64>>> {
    let mut clips = Vec::new();
    for path in wav_files(dir)? {
        match read_wav::<f64>(&path) {
            Ok(c) => clips.push(loudness_normalized(&resample(&c, rate)?, rms)),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if clips.is_empty() {
        bail!("no readable WAV files in {}", dir.display());
    }
    Ok(clips)
}

fn eval(config: &EngineConfig, a: &EvalArgs) -> Result<()> {
    if a.name_a == a.name_b {
        bail!("set names must differ");
    }
    let kernel = match (a.kernel, config.eval.kernel) {
        (Some(KernelArg::Linear), _) => Kernel::Linear,
        (Some(KernelArg::Rbf), _) => Kernel::Rbf { bandwidth: a.bandwidth },
        (None, Kernel::Rbf { bandwidth }) => Kernel::Rbf {
            bandwidth: a.bandwidth.or(bandwidth),
        },
        (None, k) => k,
    };
    let embedder = MfccStatsEmbedder::default();
    let rate = config.model.sample_rate;
    let rms = config.eval.loudness_rms;
    let sets = [
        embed_clips(&a.name_a, &load_set(&a.set_a, rate, rms)?, &embedder)?,
        embed_clips(&a.name_b, &load_set(&a.set_b, rate, rms)?, &embedder)?,
    ];
    let report = EvalReport::compute(&sets, kernel, config.hash())?;
    print!("{}", report.table());
    if let Some(p) = &a.out {
        std::fs::write(p, report.to_json()?)?;
    }
    if let Some(p) = &a.csv {
        std::fs::write(p, report.to_csv())?;
    }
    Ok(())
}

fn serve(config: EngineConfig, a: &ServeArgs) -> Result<()> {
    let checkpoint = match &a.checkpoint {
        Some(p) => Some(Checkpoint::<f32>::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    let engines = Arc::new(Engines::new(config, checkpoint)?);
    if engines.model().is_none() {
        log::warn!("no checkpoint: learned synthesis will answer 503");
    }
    let app = service::router(engines, a.static_dir.clone());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.addr).await?;
        info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}
