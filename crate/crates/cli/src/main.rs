use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ferkit::convnet::synthetic_bundle;
use ferkit::dataset::{build_design_matrix, scan_corpus, Corpus, DesignMatrix, MatrixOptions};
use ferkit::evaluator::{grid_csv, make_folds, run_experiment_grid, run_loso, ExperimentSpec, MatrixSources, DEFAULT_C_GRID};
use ferkit::facedetect::{detect, parse_cascade};
use ferkit::pipeline::Recognizer;
use ferkit::svm::{load_model, save_model, train_multiclass, TrainingSet};
use ferkit::tensorio::{self, Tensor, WeightBundle};
use ferkit::{Cascade, DetectParams, Emotion, ImagePlane, LayerTap, Network, Strategy, SvmConfig};

const EXIT_INTERNAL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_MISSING: u8 = 3;

/// Facial expression recognition from pretrained convnet features.
#[derive(Parser)]
#[command(name = "ferkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the feature vector of one image to an NTC1 file.
    Extract(ExtractArgs),
    /// Print detected faces as `x y side`, largest first.
    Detect(DetectArgs),
    /// Train a model on a CK+ tree.
    Train(TrainArgs),
    /// Leave-one-participant-out evaluation of one configuration.
    Eval(EvalArgs),
    /// Run the layer x strategy x C grid and write a CSV report.
    Grid(GridArgs),
    /// Classify one image.
    Classify(ClassifyArgs),
    /// Serve frames over WebSocket.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct WeightsArg {
    /// NTC1 network parameters, or `synthetic:<seed>` for random weights.
    #[arg(long)]
    weights: String,
}

#[derive(Args, Clone)]
struct DetectorArgs {
    /// Haar cascade XML.
    #[arg(long)]
    cascade: Option<PathBuf>,
    #[arg(long, default_value_t = 1.3)]
    scale_factor: f64,
    #[arg(long, default_value_t = 3)]
    min_neighbors: usize,
    /// Smallest face side in pixels; 0 means the cascade window.
    #[arg(long)]
    min_size: Option<usize>,
}

impl DetectorArgs {
    fn params(&self, default_min_size: usize) -> anyhow::Result<DetectParams> {
        DetectParams::new(self.scale_factor, self.min_neighbors, self.min_size.unwrap_or(default_min_size))
            .map_err(|e| coded(EXIT_INPUT, e.into()))
    }

    fn cascade(&self) -> anyhow::Result<Cascade> {
        let path = self
            .cascade
            .as_ref()
            .ok_or_else(|| coded(EXIT_INPUT, anyhow!("--cascade is required unless face detection is off")))?;
        load(parse_cascade(path))
    }
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// Root of the CK+ image tree.
    #[arg(long)]
    images: PathBuf,
    /// Root of the CK+ emotion label tree.
    #[arg(long)]
    labels: PathBuf,
    /// Directory for feature caches.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::Ovo)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 1e-6)]
    c: f64,
    /// Disable inverse-frequency label weights.
    #[arg(long)]
    unweighted: bool,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self) -> SvmConfig {
        SvmConfig {
            c: self.c,
            strategy: self.strategy.into(),
            weighted: !self.unweighted,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Ovo,
    Ova,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Ovo => Strategy::OneVsOne,
            StrategyArg::Ova => Strategy::OneVsAll,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TapArg {
    Layer5,
    Layer6,
}

impl From<TapArg> for LayerTap {
    fn from(t: TapArg) -> Self {
        match t {
            TapArg::Layer5 => LayerTap::Layer5,
            TapArg::Layer6 => LayerTap::Layer6,
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    weights: WeightsArg,
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long, value_enum, default_value_t = TapArg::Layer5)]
    tap: TapArg,
    #[arg(long)]
    no_face_detection: bool,
    /// Output NTC1 file holding tensor `features`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    weights: WeightsArg,
    #[command(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = TapArg::Layer5)]
    tap: TapArg,
    #[arg(long)]
    no_face_detection: bool,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    weights: WeightsArg,
    #[command(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = TapArg::Layer5)]
    tap: TapArg,
    #[arg(long)]
    no_face_detection: bool,
    /// Write the confusion matrix as CSV here.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaceDetectionArg {
    On,
    Off,
    Both,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    weights: WeightsArg,
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [TapArg::Layer5, TapArg::Layer6])]
    taps: Vec<TapArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [StrategyArg::Ovo, StrategyArg::Ova])]
    strategies: Vec<StrategyArg>,
    /// Comma-separated C values.
    #[arg(long, value_delimiter = ',')]
    c: Vec<f64>,
    #[arg(long, value_enum, default_value_t = FaceDetectionArg::Both)]
    face_detection: FaceDetectionArg,
    #[arg(long)]
    unweighted: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV report path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    weights: WeightsArg,
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = TapArg::Layer5)]
    tap: TapArg,
    #[arg(long)]
    no_face_detection: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    weights: WeightsArg,
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = TapArg::Layer5)]
    tap: TapArg,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8765)]
    port: u16,
}

#[derive(Debug)]
struct Coded {
    code: u8,
    error: anyhow::Error,
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for Coded {}

fn coded(code: u8, error: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(Coded { code, error })
}

/// Input errors for anything the user handed us that was unreadable or malformed.
fn load<T>(r: ferkit::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| {
        let code = match e {
            ferkit::Error::Io { .. }
            | ferkit::Error::Format(_)
            | ferkit::Error::Topology(_)
            | ferkit::Error::CorruptData(_)
            | ferkit::Error::Parse(_)
            | ferkit::Error::UnsupportedCascade(_)
            | ferkit::Error::Decode { .. }
            | ferkit::Error::Shape(_) => EXIT_INPUT,
            _ => EXIT_INTERNAL,
        };
        coded(code, e.into())
    })
}

fn network(arg: &WeightsArg) -> anyhow::Result<Network> {
    let bundle = match arg.weights.strip_prefix("synthetic:") {
        Some(seed) => {
            let seed = seed
                .parse()
                .map_err(|_| coded(EXIT_INPUT, anyhow!("bad synthetic seed {seed:?}")))?;
            log::warn!("using random synthetic weights (seed {seed})");
            synthetic_bundle(seed)
        }
        None => load(tensorio::load_bundle(&arg.weights))?,
    };
    load(Network::from_bundle(&bundle))
}

fn scan(corpus: &CorpusArgs) -> anyhow::Result<Corpus> {
    for root in [&corpus.images, &corpus.labels] {
        if !root.is_dir() {
            return Err(coded(
                EXIT_MISSING,
                anyhow!("dataset directory {} not found", root.display()),
            ));
        }
    }
    let c = load(scan_corpus(&corpus.images, &corpus.labels))?;
    log::info!(
        "{} labelled sequences from {} participants",
        c.sequences.len(),
        c.participants().len()
    );
    if !c.report.skipped.is_empty() {
        log::warn!("scan report:\n{}", c.report);
    }
    if c.sequences.is_empty() {
        return Err(coded(EXIT_MISSING, anyhow!("no labelled sequences under {}", corpus.images.display())));
    }
    Ok(c)
}

fn matrix(
    corpus: &Corpus,
    net: &Network,
    cascade: Option<&Cascade>,
    params: &DetectParams,
    tap: LayerTap,
    cache_dir: Option<&Path>,
) -> anyhow::Result<DesignMatrix> {
    let cache = match cache_dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let fd = if cascade.is_some() { "face" } else { "full" };
            Some(dir.join(format!("features_{tap}_{fd}.ntc")))
        }
        None => None,
    };
    let opts = MatrixOptions {
        tap,
        face_detection: cascade.map(|c| (c, params)),
        cache: cache.as_deref(),
    };
    let m = load(build_design_matrix(corpus, net, &opts))?;
    if !m.dropped.is_empty() {
        log::warn!("{} sequences dropped", m.dropped.len());
    }
    if !m.fallbacks.is_empty() {
        log::warn!("{} sequences used the full frame (no face found)", m.fallbacks.len());
    }
    Ok(m)
}

fn extract(args: ExtractArgs) -> anyhow::Result<()> {
    let net = network(&args.weights)?;
    let img = load(ImagePlane::load(&args.image))?.to_gray();
    let input = if args.no_face_detection {
        img
    } else {
        let cascade = args.detector.cascade()?;
        let params = args.detector.params(0)?;
        ferkit::facedetect::crop_largest_face(&img, &cascade, &params)
            .map(|(_, crop)| crop)
            .ok_or_else(|| coded(EXIT_INPUT, anyhow!("no face found in {}", args.image.display())))?
    };
    let fv = load(net.extract(&input, args.tap.into()))?;
    let mut bundle = WeightBundle::new();
    load(Tensor::vector("features", fv.into_values()).and_then(|t| bundle.insert(t)))?;
    load(tensorio::save_bundle(&bundle, &args.out))?;
    Ok(())
}

fn detect_cmd(args: DetectArgs) -> anyhow::Result<()> {
    let cascade = args.detector.cascade()?;
    let params = args.detector.params(0)?;
    let img = load(ImagePlane::load(&args.image))?.to_gray();
    for f in detect(&img, &cascade, &params) {
        println!("{} {} {}", f.x, f.y, f.side);
    }
    Ok(())
}

fn cascade_unless(off: bool, d: &DetectorArgs) -> anyhow::Result<Option<Cascade>> {
    if off {
        Ok(None)
    } else {
        d.cascade().map(Some)
    }
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let corpus = scan(&args.corpus)?;
    let net = network(&args.weights)?;
    let cascade = cascade_unless(args.no_face_detection, &args.detector)?;
    let params = args.detector.params(0)?;
    let m = matrix(&corpus, &net, cascade.as_ref(), &params, args.tap.into(), args.corpus.cache_dir.as_deref())?;
    let xs = m.features_f64();
    let ts = load(TrainingSet::from_rows(&xs, &m.labels))?;
    let model = load(train_multiclass(&ts, &args.solver.config()))?;
    load(save_model(&model, &args.out))?;
    println!("trained {} binaries on {} rows", model.binaries.len(), m.len());
    Ok(())
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let corpus = scan(&args.corpus)?;
    let net = network(&args.weights)?;
    let cascade = cascade_unless(args.no_face_detection, &args.detector)?;
    let params = args.detector.params(0)?;
    let m = matrix(&corpus, &net, cascade.as_ref(), &params, args.tap.into(), args.corpus.cache_dir.as_deref())?;
    let plan = load(make_folds(&m.participants))?;
    plan.assert_valid(&m.participants);
    let out = load(run_loso(&m.features_f64(), &m.labels, &plan, &args.solver.config()))?;
    for note in &out.notes {
        log::info!("{note}");
    }
    let cm = out.confusion;
    match cm.macro_accuracy() {
        Ok(acc) => println!("macro accuracy {acc:.2} over {} folds", out.folds),
        Err(e) => println!("macro accuracy undefined: {e}"),
    }
    for (e, r) in Emotion::ALL.iter().zip(cm.recalls()) {
        match r {
            Some(r) => println!("{:<10} {r:.1}", e.name()),
            None => println!("{:<10} -", e.name()),
        }
    }
    if let Some(path) = args.confusion {
        fs::write(&path, cm.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn grid(args: GridArgs) -> anyhow::Result<()> {
    let corpus = scan(&args.corpus)?;
    let net = network(&args.weights)?;
    let flags: &[bool] = match args.face_detection {
        FaceDetectionArg::On => &[true],
        FaceDetectionArg::Off => &[false],
        FaceDetectionArg::Both => &[true, false],
    };
    let cascade = if flags.contains(&true) {
        Some(args.detector.cascade()?)
    } else {
        None
    };
    let params = args.detector.params(0)?;
    let taps: Vec<LayerTap> = args.taps.iter().map(|&t| t.into()).collect();
    let mut sources = MatrixSources::new();
    for &tap in &taps {
        for &fd in flags {
            let c = if fd { cascade.as_ref() } else { None };
            let m = matrix(&corpus, &net, c, &params, tap, args.corpus.cache_dir.as_deref())?;
            sources.insert((tap, fd), m);
        }
    }
    let c_values = if args.c.is_empty() {
        DEFAULT_C_GRID.to_vec()
    } else {
        args.c.clone()
    };
    let mut specs = Vec::new();
    for &tap in &taps {
        for &s in &args.strategies {
            for &fd in flags {
                specs.push(ExperimentSpec {
                    tap,
                    strategy: s.into(),
                    c_values: c_values.clone(),
                    weighted: !args.unweighted,
                    face_detection: fd,
                });
            }
        }
    }
    let base = SvmConfig {
        seed: args.seed,
        ..SvmConfig::default()
    };
    let rows = load(run_experiment_grid(&specs, &sources, &base))?;
    fs::write(&args.out, grid_csv(&rows)).with_context(|| format!("writing {}", args.out.display()))?;
    println!("{} rows written to {}", rows.len(), args.out.display());
    Ok(())
}

fn recognizer(
    weights: &WeightsArg,
    detector: &DetectorArgs,
    model: &Path,
    tap: TapArg,
    need_cascade: bool,
    default_min_size: usize,
) -> anyhow::Result<Recognizer> {
    let net = network(weights)?;
    let model = load(load_model(model))?;
    let cascade = if need_cascade || detector.cascade.is_some() {
        Some(detector.cascade()?)
    } else {
        None
    };
    let params = detector.params(default_min_size)?;
    load(Recognizer::new(net, cascade, params, model, tap.into()))
}

fn classify(args: ClassifyArgs) -> anyhow::Result<()> {
    let rec = recognizer(&args.weights, &args.detector, &args.model, args.tap, !args.no_face_detection, 0)?;
    let img = load(ImagePlane::load(&args.image))?;
    let c = load(rec.classify(&img, !args.no_face_detection))?
        .ok_or_else(|| coded(EXIT_INPUT, anyhow!("no face found in {}", args.image.display())))?;
    println!("{}", c.emotion.name());
    if let Some(f) = c.face {
        println!("face {} {} {}", f.x, f.y, f.side);
    }
    for e in Emotion::ALL {
        println!("{} {}", e.name(), c.scores[e.id()]);
    }
    Ok(())
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = ferkit_service::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        log::info!("listening on ws://{addr}");
        let slot = ferkit_service::empty_slot();
        let loading = {
            let slot = slot.clone();
            tokio::task::spawn_blocking(move || {
                let rec = recognizer(&args.weights, &args.detector, &args.model, args.tap, true, 150)?;
                let _ = slot.set(rec);
                log::info!("engine ready");
                anyhow::Ok(())
            })
        };
        let server = tokio::spawn(ferkit_service::serve(listener, slot, ferkit_service::ServeConfig::default()));
        loading.await.context("engine loader panicked")??;
        server.await.context("server task panicked")??;
        Ok(())
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("FERKIT_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(a) => extract(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Grid(a) => grid(a),
        Command::Classify(a) => classify(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<Coded>().map_or(EXIT_INTERNAL, |c| c.code);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
