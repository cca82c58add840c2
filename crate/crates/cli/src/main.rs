use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use svreg::data::{read_table, Dataset, Standardization};
use svreg::harness::{self, BenchMethod, ExperimentConfig, Manifest, Target};
use svreg::index::Method;
use svreg::pipeline::Pipeline;
use svreg::regression::{Predictor, SvrModel};
use svreg::synthetic::{DistKind, DistributionSpec, FunctionSpec, Problem};
use svreg::{Error, ErrorClass, Result};

/// Single-index regression: simulate data, fit and apply models, run the
/// benchmark suites.
#[derive(Parser)]
#[command(name = "svreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset.
    Simulate(SimulateArgs),
    /// Fit a model to a CSV dataset.
    Fit(FitArgs),
    /// Apply a fitted model to a CSV of predictors.
    Predict(PredictArgs),
    /// Run a Monte Carlo benchmark.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Index error of SIR, SAVE and SVR per cell.
    Index(BenchArgs),
    /// Error against sample size, with fitted log-log slopes.
    Rate(BenchArgs),
    /// Regression error over a grid of levels and scales.
    Heatmap(BenchArgs),
}

/// Accepts the lowercase names used in config files.
fn named<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

fn function(s: &str) -> std::result::Result<FunctionSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML or JSON file with any of the fields below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gaussian, s1 or s2.
    #[arg(long, value_parser = named::<DistKind>)]
    dist: Option<DistKind>,
    #[arg(long)]
    d: Option<usize>,
    /// f1, f2, f3[:seed], linear or poly:c0,c1,...
    #[arg(long, value_parser = function)]
    func: Option<FunctionSpec>,
    /// Noise level as a fraction of |f(-4) - f(4)|.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Index direction, comma separated; normalized before use.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    direction: Option<Vec<f64>>,
    /// Data CSV; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Ground truth and settings as JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    dist: DistKind,
    d: usize,
    function: FunctionSpec,
    noise: f64,
    n: usize,
    seed: u64,
    direction: Option<Vec<f64>>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            dist: DistKind::Gaussian,
            d: 10,
            function: FunctionSpec::new(svreg::synthetic::FunctionKind::F1),
            noise: 0.01,
            n: 1000,
            seed: 0,
            direction: None,
        }
    }
}

#[derive(Serialize)]
struct SimulateManifest<'a> {
    config: &'a SimulateConfig,
    direction: &'a [f64],
    sigma: f64,
    config_hash: String,
}

#[derive(Args)]
struct FitArgs {
    /// Training data with header x1,...,xd,y.
    #[arg(long)]
    data: PathBuf,
    /// TOML or JSON pipeline settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = named::<Method>)]
    method: Option<Method>,
    /// Slicing level l; automatic when absent.
    #[arg(long)]
    level: Option<u32>,
    /// Link partition scale j; automatic when absent.
    #[arg(long)]
    scale: Option<u32>,
    #[arg(long)]
    degree: Option<usize>,
    /// whiten, coordinate or none.
    #[arg(long, value_parser = named::<Standardization>)]
    standardize: Option<Standardization>,
    /// Restrict the link estimate to |t| <= sqrt(2 d ln n).
    #[arg(long)]
    truncate: bool,
    /// Model JSON; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Fit summary as JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitManifest<'a> {
    data: &'a Path,
    n: usize,
    d: usize,
    pipeline: &'a Pipeline,
    level_l: u32,
    scale_j: u32,
    direction: Vec<f64>,
    training_mse: f64,
    warnings: Vec<String>,
    wall_seconds: f64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Predictors with header x1,...,xd and an optional y column.
    #[arg(long)]
    data: PathBuf,
    /// Predictions CSV (row, prediction); stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct PredictManifest<'a> {
    model: &'a Path,
    data: &'a Path,
    rows: usize,
    /// Mean squared error against the `y` column, when present.
    mse: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML or JSON experiment config; applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// planar, index-rate, regression-rate or heatmap.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_delimiter = ',', value_parser = named::<DistKind>)]
    settings: Option<Vec<DistKind>>,
    #[arg(long, value_delimiter = ',')]
    d_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ';', value_parser = function)]
    functions: Option<Vec<FunctionSpec>>,
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = named::<BenchMethod>)]
    methods: Option<Vec<BenchMethod>>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    l_grid: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    j_grid: Option<Vec<u32>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    trim: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_n: Option<usize>,
    /// Measure MSE against the noiseless regression function.
    #[arg(long)]
    denoised: bool,
    /// index_error or regression_mse (rate sweeps).
    #[arg(long, value_parser = named::<Target>)]
    target: Option<Target>,
    #[arg(long)]
    threads: Option<usize>,
    /// Long-format results; stdout when neither this nor the config sets it.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Run manifest; defaults to the CSV path with a `.json` extension.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

/// Runs `write` against the file at `path`, or stdout.
fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_csv(open(path)?).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg: SimulateConfig = match &args.config {
        Some(p) => harness::read_config(p)?,
        None => SimulateConfig::default(),
    };
    if let Some(v) = args.dist {
        cfg.dist = v;
    }
    if let Some(v) = args.d {
        cfg.d = v;
    }
    if let Some(v) = args.func {
        cfg.function = v;
    }
    if let Some(v) = args.noise {
        cfg.noise = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.direction.is_some() {
        cfg.direction = args.direction;
    }
    if cfg.n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let dist = match cfg.dist {
        DistKind::Gaussian => DistributionSpec::gaussian(cfg.d),
        DistKind::S1 => DistributionSpec::s1(),
        DistKind::S2 => DistributionSpec::s2(),
    };
    cfg.d = dist.d;
    let problem = Problem::new(dist, cfg.function.clone(), cfg.direction.clone(), cfg.noise)?;
    let sample = problem.sample(cfg.n, cfg.seed)?;
    emit(args.output.as_deref(), |w| sample.data.write_csv(w))?;
    if let Some(path) = &args.manifest {
        let body = serde_json::to_vec(&cfg)?;
        write_json(
            path,
            &SimulateManifest {
                config: &cfg,
                direction: &problem.v,
                sigma: problem.sigma,
                config_hash: harness::blob_hash(&body),
            },
        )?;
    }
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let start = std::time::Instant::now();
    let mut p: Pipeline = match &args.config {
        Some(path) => harness::read_config(path)?,
        None => Pipeline::default(),
    };
    if let Some(v) = args.method {
        p.method = v;
    }
    if args.level.is_some() {
        p.level_l = args.level;
    }
    if args.scale.is_some() {
        p.scale_j = args.scale;
    }
    if let Some(v) = args.degree {
        p.degree_m = v;
    }
    if let Some(v) = args.standardize {
        p.standardize = v;
    }
    p.truncate |= args.truncate;
    let ds = read_dataset(&args.data)?;
    let model = p.fit(&ds)?;
    let json = model.to_json()?;
    emit(args.output.as_deref(), |w| {
        w.write_all(json.as_bytes())?;
        writeln!(w)?;
        Ok(())
    })?;
    let direction = model.original_direction()?;
    let warnings: Vec<String> = model
        .piecewise
        .direction
        .diagnostics
        .warnings
        .iter()
        .map(|w| w.to_string())
        .collect();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &args.manifest {
        write_json(
            path,
            &FitManifest {
                data: &args.data,
                n: ds.n(),
                d: ds.dim(),
                pipeline: &p,
                level_l: model.piecewise.direction.level_l,
                scale_j: model.piecewise.scale_j,
                direction,
                training_mse: svreg::regression::mse(&model, &ds, None),
                warnings,
                wall_seconds: start.elapsed().as_secs_f64(),
            },
        )?;
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.model).map_err(|e| {
        Error::Io(io::Error::new(
            e.kind(),
            format!("{}: {e}", args.model.display()),
        ))
    })?;
    let model = SvrModel::from_json(&text)?;
    let table = read_table(open(&args.data)?)?;
    let d = model.mean.len();
    if table.d != d {
        return Err(Error::InvalidInput(format!(
            "model expects {d} predictors, {} has {}",
            args.data.display(),
            table.d
        )));
    }
    let preds: Vec<f64> = table.x.chunks_exact(d).map(|x| model.predict(x)).collect();
    emit(args.output.as_deref(), |w| {
        writeln!(w, "row,prediction")?;
        for (i, p) in preds.iter().enumerate() {
            writeln!(w, "{},{p:?}", i + 1)?;
        }
        Ok(())
    })?;
    let mse = table.y.as_ref().map(|y| {
        preds
            .iter()
            .zip(y)
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / y.len() as f64
    });
    if let Some(m) = mse {
        eprintln!("mse: {m:e}");
    }
    if let Some(path) = &args.manifest {
        write_json(
            path,
            &PredictManifest {
                model: &args.model,
                data: &args.data,
                rows: preds.len(),
                mse,
            },
        )?;
    }
    Ok(())
}

/// Preset, then config file, then flags.
fn bench_config(args: &BenchArgs, default_preset: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, args.preset.as_deref().or(default_preset)) {
        (Some(path), None) => ExperimentConfig::from_path(path)?,
        (Some(path), Some(name)) => {
            // Fields set in the file win over the preset.
            let mut base = serde_json::to_value(ExperimentConfig::preset(name)?)?;
            let overlay: serde_json::Value = harness::read_config(path)?;
            if let (Some(b), Some(o)) = (base.as_object_mut(), overlay.as_object()) {
                for (k, v) in o {
                    b.insert(k.clone(), v.clone());
                }
            }
            serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?
        }
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = &args.$field {
                cfg.$field = v.clone();
            }
        };
    }
    set!(settings);
    set!(d_grid);
    set!(functions);
    set!(noise);
    set!(methods);
    set!(n_grid);
    set!(l_grid);
    set!(j_grid);
    set!(replicates);
    set!(trim);
    set!(test_n);
    set!(target);
    if let Some(v) = args.seed {
        cfg.base_seed = v;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    cfg.denoised |= args.denoised;
    if args.csv.is_some() {
        cfg.output.csv = args.csv.clone();
    }
    if args.manifest.is_some() {
        cfg.output.manifest = args.manifest.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn bench(cmd: BenchCommand) -> Result<()> {
    let (cfg, result) = match cmd {
        BenchCommand::Index(a) => {
            let cfg = bench_config(&a, None)?;
            let r = harness::run_index_benchmark(&cfg)?;
            (cfg, r)
        }
        BenchCommand::Rate(a) => {
            let cfg = bench_config(&a, None)?;
            let r = harness::run_rate_sweep(&cfg)?;
            (cfg, r)
        }
        BenchCommand::Heatmap(a) => {
            let cfg = bench_config(&a, Some("heatmap"))?;
            let r = harness::run_heatmap(&cfg)?;
            (cfg, r)
        }
    };
    emit(cfg.output.csv.as_deref(), |w| {
        harness::write_csv(&result, w)
    })?;
    let manifest_path = cfg
        .output
        .manifest
        .clone()
        .or_else(|| cfg.output.csv.as_ref().map(|p| p.with_extension("json")));
    if let Some(path) = manifest_path {
        let mut w = create(&path)?;
        harness::write_manifest(&Manifest::new(&cfg, &result), &mut w)?;
        w.flush()?;
    }
    for s in &result.slopes {
        match s.slope {
            Some(v) => eprintln!(
                "slope {:?} d={} {} {}: {v:.3}",
                s.dist,
                s.d,
                s.func,
                s.method.as_str()
            ),
            None => eprintln!(
                "slope {:?} d={} {} {}: undefined",
                s.dist,
                s.d,
                s.func,
                s.method.as_str()
            ),
        }
    }
    let failed: usize = result.records.iter().map(|r| r.failed).sum();
    if failed > 0 {
        eprintln!("{failed} replicate evaluations failed; see the `failed` column");
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Bench(b) => bench(b),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
