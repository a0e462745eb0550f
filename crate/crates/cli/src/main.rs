use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use bwb_core::geom::{synthesize_surface, ParamBox, PlanformParams};
use bwb_core::invert::Method;
use bwb_core::io::{file_sha256, read_results, write_surface_fields, RunManifest};
use bwb_core::pipeline::{self, PipelineConfig, Profile, WorkDir};
use bwb_core::{Error, Result};

/// Inverse design of blended-wing-body planforms.
#[derive(Debug, Parser)]
#[command(name = "bwb", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Work directory holding data, models, results and manifests.
    #[arg(long, global = true, default_value = "bwb_work")]
    dir: PathBuf,
    /// Preset of dataset sizes, model widths, T, K and step counts.
    #[arg(long, global = true, default_value = "desk")]
    profile: Profile,
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads over conditions; defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// TOML file overriding profile settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample train and test planforms and flight conditions, label them with the oracle.
    GenData {
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// Write surface point clouds of planforms as VTK files.
    GenGeom {
        /// Comma-separated b1,b2,b3,c2,c3,c4,s1,s3,x3; repeatable.
        #[arg(long = "params", value_delimiter = ';')]
        params: Vec<String>,
        /// Export the best candidate of every condition of this method's results.
        #[arg(long)]
        from_results: Option<Method>,
        #[arg(long, default_value_t = 24)]
        n_chord: usize,
        #[arg(long, default_value_t = 12)]
        n_span: usize,
    },
    /// Train the L/D surrogate and the FiLM field surrogate.
    TrainSurrogate,
    /// Train the conditional diffusion model.
    TrainDiffusion,
    /// Run the inverse-design methods over the evaluation conditions.
    Invert {
        /// Methods to run; all three by default.
        #[arg(long = "method")]
        methods: Vec<Method>,
        /// Number of test conditions to invert.
        #[arg(long)]
        conditions: Option<usize>,
    },
    /// Compute accuracy, diversity and recovery metrics from the result files.
    Eval,
    /// Write the method summary table and print it.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::GenGeom { .. } => "gen-geom",
            Command::TrainSurrogate => "train-surrogate",
            Command::TrainDiffusion => "train-diffusion",
            Command::Invert { .. } => "invert",
            Command::Eval => "eval",
            Command::Report => "report",
        }
    }
}

fn build_config(g: &Global, cmd: &Command) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::profile(g.profile, g.seed);
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_toml(&text)?;
    }
    match cmd {
        Command::GenData { n_train, n_test } => {
            if let Some(n) = n_train {
                cfg.data.n_train = *n;
            }
            if let Some(n) = n_test {
                cfg.data.n_test = *n;
            }
        }
        Command::Invert {
            conditions: Some(n), ..
        } => cfg.invert.conditions = *n,
        _ => {}
    }
    Ok(cfg)
}

/// Files a command reads, hashed into its manifest.
fn inputs(cmd: &Command, wd: &WorkDir, config: Option<&Path>) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = config.into_iter().map(Path::to_path_buf).collect();
    let cases = [wd.train_cases(), wd.test_cases()];
    match cmd {
        Command::GenData { .. } => {}
        Command::GenGeom { .. } => v.extend(Method::ALL.map(|m| wd.results(m))),
        Command::TrainSurrogate | Command::TrainDiffusion => v.extend(cases),
        Command::Invert { .. } => {
            v.extend(cases);
            v.extend([wd.ld_checkpoint(), wd.cdm_checkpoint()]);
        }
        Command::Eval | Command::Report => {
            v.extend(cases);
            v.extend(Method::ALL.map(|m| wd.results(m)));
            v.push(wd.metrics());
        }
    }
    v.retain(|p| p.is_file());
    v
}

fn dir_is_empty(p: &Path) -> Result<bool> {
    match std::fs::read_dir(p) {
        Ok(mut it) => Ok(it.next().is_none()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(true),
        Err(e) => Err(Error::io(p, e)),
    }
}

fn parse_params(s: &str) -> Result<PlanformParams> {
    let v = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Argument(format!("cannot parse {x:?} as a number in --params")))
        })
        .collect::<Result<Vec<_>>>()?;
    let p = PlanformParams::from_slice(&v)?;
    ParamBox::default().check(&p)?;
    Ok(p)
}

fn gen_geom(
    wd: &WorkDir,
    params: &[String],
    from_results: Option<Method>,
    n_chord: usize,
    n_span: usize,
) -> Result<()> {
    let mut items: Vec<(String, PlanformParams)> = Vec::new();
    for (i, s) in params.iter().enumerate() {
        items.push((format!("planform_{i:03}"), parse_params(s)?));
    }
    if let Some(m) = from_results {
        let path = wd.results(m);
        if !path.exists() {
            return Err(Error::State(format!("{} not found; run invert first", path.display())));
        }
        for r in read_results(&path)? {
            items.push((format!("{m}_{:05}", r.condition_id), *r.best_candidate()));
        }
    }
    if items.is_empty() {
        return Err(Error::Argument("gen-geom needs --params or --from-results".into()));
    }
    let out = wd.root.join("geometry");
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    for (name, p) in &items {
        let cloud = synthesize_surface(p, n_chord, n_span)?;
        write_surface_fields(&out.join(format!("{name}.vtk")), &cloud, name)?;
    }
    log::info!("wrote {} surfaces to {}", items.len(), out.display());
    Ok(())
}

fn execute(cmd: &Command, g: &Global, cfg: &PipelineConfig, wd: &WorkDir, workers: usize) -> Result<()> {
    match cmd {
        Command::GenData { .. } => {
            let data = wd.data();
            if !dir_is_empty(&data)? {
                if !g.force {
                    return Err(Error::State(format!(
                        "{} is not empty; pass --force to overwrite",
                        data.display()
                    )));
                }
                std::fs::remove_dir_all(&data).map_err(|e| Error::io(&data, e))?;
            }
            pipeline::gen_data(cfg, wd)
        }
        Command::GenGeom {
            params,
            from_results,
            n_chord,
            n_span,
        } => gen_geom(wd, params, *from_results, *n_chord, *n_span),
        Command::TrainSurrogate => pipeline::train_surrogates(cfg, wd).map(|_| ()),
        Command::TrainDiffusion => pipeline::train_diffusion(cfg, wd).map(|_| ()),
        Command::Invert { methods, .. } => {
            let methods = if methods.is_empty() { Method::ALL.to_vec() } else { methods.clone() };
            pipeline::invert(cfg, wd, &methods, workers).map(|_| ())
        }
        Command::Eval => pipeline::evaluate(cfg, wd).map(|_| ()),
        Command::Report => {
            let path = pipeline::report(wd)?;
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cmd = &cli.command;
    let wd = WorkDir::new(&g.dir);
    let cfg = build_config(g, cmd)?;
    let workers = match g.workers {
        Some(0) => return Err(Error::Argument("--workers must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };

    let mut manifest = RunManifest::new(cmd.name(), g.profile.as_str(), workers, &cfg)?;
    manifest.seeds = cfg.seeds();
    for p in inputs(cmd, &wd, g.config.as_deref()) {
        manifest.inputs.insert(p.display().to_string(), file_sha256(&p)?);
    }
    let mpath = wd.manifest(cmd.name());
    if let Some(d) = mpath.parent() {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    manifest.write(&mpath)?;

    let t0 = Instant::now();
    let out = execute(cmd, g, &cfg, &wd, workers);
    manifest.timings.insert(cmd.name().to_string(), t0.elapsed().as_secs_f64());
    manifest.status = match &out {
        Ok(()) => "ok".into(),
        Err(e) => format!("failed: {e}"),
    };
    manifest.write(&mpath)?;
    out
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
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
