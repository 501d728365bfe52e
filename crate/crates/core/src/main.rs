use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mxr_unet::io::{
    load_checkpoint, load_loss_network, load_pairs, pair_dataset, read_rgb, save_checkpoint, write_cube, write_rgb,
    RunConfig, Track,
};
use mxr_unet::loss::LossNetwork;
use mxr_unet::metrics::{evaluate_dataset, predict};
use mxr_unet::nn::Module;
use mxr_unet::raster::{Raster, Sample};
use mxr_unet::selftest::{run_suite, SelftestOptions, SUITES};
use mxr_unet::train::{fit, AdamW, EpochRecord, IterRecord, NormalizationStats, TrainObserver};
use mxr_unet::{build_unet, bench, EncoderDepth, Error, ModelConfig, MxrUnet, Result};

/// RGB to hyperspectral reconstruction with MXR-U-Nets.
#[derive(Parser)]
#[command(name = "mxr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a TOML run configuration.
    Train(TrainArgs),
    /// Reconstruct cubes from PPM images.
    Infer(InferArgs),
    /// Report MRAE/RMSE over a dataset.
    Eval(EvalArgs),
    /// Measure forward latency.
    Bench(BenchArgs),
    /// Run the built-in invariant suites.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Load weights (and normalization statistics) from this checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Encoder depth of a freshly initialised model.
    #[arg(long, default_value_t = 50, value_parser = parse_depth)]
    depth: u32,
    #[arg(long = "width-mult", default_value_t = 1.0)]
    width_mult: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn load(&self) -> Result<(MxrUnet<f32>, NormalizationStats)> {
        match &self.checkpoint {
            Some(path) => {
                let loaded = load_checkpoint(path, None)?;
                let stats = loaded.stats.unwrap_or_else(|| {
                    let cfg = &loaded.model.config;
                    NormalizationStats::identity(cfg.in_channels, cfg.out_channels)
                });
                Ok((loaded.model, stats))
            }
            None => {
                let cfg = ModelConfig::new(EncoderDepth::try_from(self.depth)?, self.width_mult);
                let model = build_unet(&cfg, self.seed)?;
                let stats = NormalizationStats::identity(cfg.in_channels, cfg.out_channels);
                Ok((model, stats))
            }
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (TOML); relative paths resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured worker thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Directory for the `.hsc` outputs.
    #[arg(long)]
    out: PathBuf,
    /// Also write a false-colour PPM (bands 25, 15, 5) per image.
    #[arg(long)]
    preview: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Input PPM files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Dataset root with `rgb/` and `cubes/`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = TrackArg::Clean)]
    track: TrackArg,
    /// Skip unreadable pairs with a warning instead of aborting.
    #[arg(long)]
    skip_unreadable: bool,
    /// Clip predictions to [0, 1] (for unit-range datasets).
    #[arg(long)]
    clamp: bool,
    /// Print line-delimited records instead of a table.
    #[arg(long)]
    records: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TrackArg {
    Clean,
    Real,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 50, value_parser = parse_depth)]
    depth: u32,
    #[arg(long = "width-mult", default_value_t = 1.0)]
    width_mult: f64,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SelftestArgs {
    /// Run only these suites (1-9); all by default.
    #[arg(long = "suite")]
    suites: Vec<u8>,
    /// Thread count for the latency suite.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Input size for the latency suite.
    #[arg(long, default_value_t = 256)]
    size: usize,
}

fn parse_depth(s: &str) -> std::result::Result<u32, String> {
    let d: u32 = s.parse().map_err(|e| format!("{e}"))?;
    EncoderDepth::try_from(d).map(|_| d).map_err(|_| "expected 18, 34 or 50".into())
}

fn set_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))
}

fn load_dataset(root: &Path, skip: bool) -> Result<Vec<Sample>> {
    let list = pair_dataset(root)?;
    for u in &list.unmatched {
        eprintln!("warning: {}: {u} has no counterpart", root.display());
    }
    let (samples, skipped) = load_pairs(&list.pairs, skip)?;
    for (stem, e) in skipped {
        eprintln!("warning: skipping {stem}: {e}");
    }
    if samples.is_empty() {
        return Err(Error::Config(format!("no readable pairs under {}", root.display())));
    }
    Ok(samples)
}

struct RunObserver {
    log: File,
    checkpoint: PathBuf,
    stats: NormalizationStats,
}

impl TrainObserver for RunObserver {
    fn on_iter(&mut self, rec: &IterRecord) {
        let _ = writeln!(self.log, "{rec}");
    }

    fn on_epoch(&mut self, rec: &EpochRecord, model: &MxrUnet<f32>, opt: &AdamW<f32>) -> Result<()> {
        writeln!(self.log, "{rec}").map_err(|e| Error::io("train.log", e))?;
        println!("{rec}");
        save_checkpoint(model, Some(&self.stats), Some(opt), &self.checkpoint)
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(o) = args.out {
        cfg.output_dir = o;
    }
    cfg.train.seed = cfg.seed;
    set_threads(cfg.threads)?;

    let train = load_dataset(&cfg.data.train, cfg.data.skip_unreadable)?;
    let val = match &cfg.data.val {
        Some(v) => load_dataset(v, cfg.data.skip_unreadable)?,
        None => Vec::new(),
    };
    let stats = NormalizationStats::compute(train.iter().map(|s| (&s.rgb, &s.cube)))?;
    let model = build_unet::<f32>(&cfg.model, cfg.seed)?;
    let loss_net = match &cfg.loss_network {
        Some(p) => load_loss_network(p)?,
        None => LossNetwork::seeded(cfg.model.out_channels, cfg.seed)?,
    };
    if loss_net.in_channels() != cfg.model.out_channels {
        return Err(Error::Config(format!(
            "loss network takes {} channels, model produces {}",
            loss_net.in_channels(),
            cfg.model.out_channels
        )));
    }

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()?).map_err(|e| Error::io(out.join("config.toml"), e))?;
    let log_path = out.join("train.log");
    let mut log = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(
        log,
        "kind=run seed={} track={} depth={} width_mult={} train_images={} val_images={} params={}",
        cfg.seed,
        cfg.track,
        cfg.model.encoder_depth.layers(),
        cfg.model.width_multiplier,
        train.len(),
        val.len(),
        model.count_params()
    )
    .map_err(|e| Error::io(&log_path, e))?;
    println!(
        "training {} on {} images ({} val), {} params, seed {}",
        cfg.model.encoder_depth,
        train.len(),
        val.len(),
        model.count_params(),
        cfg.seed
    );
    let mut observer = RunObserver { log, checkpoint: out.join("checkpoint.mxrw"), stats: stats.clone() };
    let mut opt = AdamW::new(cfg.train.optimizer);
    fit(&model, &train, &val, &stats, &loss_net, &cfg.train, &mut opt, &mut observer)?;
    save_checkpoint(&model, Some(&stats), Some(&opt), out.join("checkpoint.mxrw"))?;
    println!("wrote {}", out.join("checkpoint.mxrw").display());
    Ok(())
}

fn infer(args: InferArgs) -> Result<()> {
    set_threads(args.threads)?;
    let (model, stats) = args.model.load()?;
    for input in &args.inputs {
        let rgb = read_rgb(input)?;
        let cube = predict(&model, &rgb, &stats)?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("output");
        let path = args.out.join(format!("{stem}.hsc"));
        write_cube(&cube, &path)?;
        println!("{} -> {} ({}x{}x{})", input.display(), path.display(), cube.channels(), cube.height(), cube.width());
        if args.preview && cube.channels() >= 26 {
            let n = cube.height() * cube.width();
            let mut data = Vec::with_capacity(3 * n);
            for band in [25, 15, 5] {
                data.extend_from_slice(cube.channel(band));
            }
            write_rgb(&Raster::new(3, cube.height(), cube.width(), data)?, args.out.join(format!("{stem}.preview.ppm")))?;
        }
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    set_threads(args.threads)?;
    let (model, stats) = args.model.load()?;
    let samples = load_dataset(&args.data, args.skip_unreadable)?;
    let report = evaluate_dataset(&model, &samples, &stats, args.clamp)?;
    let track = match args.track {
        TrackArg::Clean => Track::Clean,
        TrackArg::Real => Track::Real,
    };
    if args.records {
        println!("kind=run track={track} model={} seed={}", model.config.encoder_depth, args.model.seed);
        print!("{}", report.records());
    } else {
        println!("track: {track}, model: {}", model.config.encoder_depth);
        print!("{}", report.table());
    }
    Ok(())
}

fn bench_cmd(args: BenchArgs) -> Result<()> {
    let cfg = ModelConfig::new(EncoderDepth::try_from(args.depth)?, args.width_mult);
    let model = build_unet::<f32>(&cfg, args.seed)?;
    let rep = bench::benchmark_latency(&model, args.size, args.warmup, args.runs, args.threads)?;
    println!("{}", rep.summary());
    for (i, t) in rep.times.iter().enumerate() {
        println!("kind=run index={i} seconds={t:.6}");
    }
    Ok(())
}

fn selftest(args: SelftestArgs) -> Result<bool> {
    let opts = SelftestOptions { threads: args.threads, latency_size: args.size };
    let ids: Vec<u8> = if args.suites.is_empty() { SUITES.iter().map(|(i, _)| *i).collect() } else { args.suites };
    let mut passed = 0;
    for &id in &ids {
        let r = run_suite(id, &opts)?;
        println!("{r}");
        passed += r.passed as usize;
    }
    println!("selftest: {passed}/{} suites passed", ids.len());
    Ok(passed == ids.len())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::Infer(a) => infer(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Bench(a) => bench_cmd(a).map(|_| true),
        Command::Selftest(a) => selftest(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
