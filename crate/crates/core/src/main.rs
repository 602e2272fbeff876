use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use sigvol::harness::{self, model_preset, representations, ExperimentConfig, ReprKind};
use sigvol::learned::{fit_linear, train_nonlinear, Activation, LearnedModel, SigBatch};
use sigvol::pricing::{mc_price_benchmark, mc_price_sig, pde_price, CoeffMode, PriceMethod, PriceReport};
use sigvol::repr::Representation;
use sigvol::signature::{signature_stream, SigMode};
use sigvol::vol_models::{simulate, ModelParams, PathSet, PathSetMeta};
use sigvol::{Error, Result};

#[derive(Parser)]
#[command(name = "sigvol", version, about = "Signature-based option pricing under stochastic volatility")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// M = 10000 Monte Carlo paths and 200 PDE W-paths.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Signature convention: ito or chen.
    #[arg(long, global = true, value_parser = parse_sig_mode)]
    sig_mode: Option<SigMode>,
    /// PDE coefficient field: scalar or shuffle.
    #[arg(long, global = true, value_parser = parse_coeff_mode)]
    coeff_mode: Option<CoeffMode>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a path set and write it as CSV with a metadata sidecar.
    Simulate {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Also dump the level-N signature stream of path 0.
        #[arg(long, value_name = "N")]
        dump_signature: Option<usize>,
    },
    /// Path-wise MAEs of a representation per level.
    ReprError {
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[arg(long)]
        representation: Option<String>,
        #[arg(long)]
        model_file: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Train a learned representation on a simulated path file.
    Train(TrainArgs),
    /// Price a put with one method.
    Price(PriceArgs),
    /// Representation errors for OU and mGBM at levels 1 to 5.
    Table2,
    /// Price errors of both pricers for OU and mGBM at levels 1 to 5.
    Table3,
    /// Learned representation errors and prices for rHeston and rBergomi.
    LearnedSweep {
        /// Restrict to one model.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Path CSV written by `simulate` (its `.meta.json` sidecar must sit next to it).
    #[arg(long)]
    data: PathBuf,
    /// linear or nonlinear.
    #[arg(long, default_value = "nonlinear")]
    kind: String,
    #[arg(long)]
    level: usize,
    /// Model file to write (default: OUT/<model>-<kind>-N<level>.json).
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    time_stride: Option<usize>,
}

#[derive(Args)]
struct PriceArgs {
    #[arg(long, default_value = "mc-sig")]
    method: String,
    #[arg(long)]
    model: Option<String>,
    /// analytic, linear, nonlinear, exact or zero.
    #[arg(long)]
    representation: Option<String>,
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    spot: Option<Vec<f64>>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    pde_paths: Option<usize>,
    #[arg(long)]
    x_lo: Option<f64>,
    #[arg(long)]
    x_hi: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    /// Write the W-averaged u_0(x) profile of a PDE run here.
    #[arg(long)]
    profile: Option<PathBuf>,
}

fn parse_sig_mode(s: &str) -> std::result::Result<SigMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_coeff_mode(s: &str) -> std::result::Result<CoeffMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
    }
    let g = &cli.global;
    match cli.command {
        Command::Simulate { model, paths, steps, dump_signature } => {
            let mut cfg = base_config(g, model.as_deref(), None)?;
            if let Some(p) = paths {
                cfg.paths = p;
            }
            if let Some(j) = steps {
                cfg.grid.steps = j;
            }
            cfg.grid.validate()?;
            let set = simulate(&cfg.model, &cfg.grid, cfg.paths, cfg.seed)?;
            fs::create_dir_all(&cfg.out_dir)?;
            let file = cfg.out_dir.join("paths.csv");
            set.write_csv(&file)?;
            fs::write(meta_path(&file), serde_json::to_string_pretty(&set.meta())?)?;
            if set.resampled() > 0 {
                eprintln!("warning: {} paths redrawn after overflow", set.resampled());
            }
            if let Some(n) = dump_signature {
                let sig = signature_stream(&set.path(0), n, cfg.sig_mode);
                let out = BufWriter::new(File::create(cfg.out_dir.join("signature_path0.csv"))?);
                sig.write_csv(cfg.grid.dt(), out)?;
            }
            println!("{}", file.display());
        }
        Command::ReprError { model, levels, representation, model_file, paths } => {
            let mut cfg = base_config(g, model.as_deref(), None)?;
            if let Some(l) = levels {
                cfg.levels = l;
            }
            if let Some(r) = representation {
                cfg.representation = r.parse()?;
            }
            if model_file.is_some() {
                cfg.model_file = model_file;
            }
            if let Some(p) = paths {
                cfg.paths = p;
            }
            let started = Instant::now();
            let rows = harness::run_repr_error(&cfg)?;
            let out = cfg.out_dir.clone();
            report(harness::write_results(&rows, &out, "repr_error", &[cfg], secs(started))?);
        }
        Command::Table2 => {
            let started = Instant::now();
            let cfgs = table_configs(g, ExperimentConfig::table2, &["ou", "mgbm"])?;
            let mut rows = Vec::new();
            for cfg in &cfgs {
                rows.extend(harness::run_repr_error(cfg)?);
            }
            report(harness::write_results(&rows, &cfgs[0].out_dir, "table2", &cfgs, secs(started))?);
        }
        Command::Table3 => {
            let started = Instant::now();
            let cfgs = table_configs(g, ExperimentConfig::table3, &["ou", "mgbm"])?;
            let mut rows = Vec::new();
            for cfg in &cfgs {
                rows.extend(harness::run_pricing_table(cfg, Some(&cfg.out_dir.join("cache")))?);
            }
            report(harness::write_results(&rows, &cfgs[0].out_dir, "table3", &cfgs, secs(started))?);
        }
        Command::LearnedSweep { model, levels } => {
            let started = Instant::now();
            let mut cfgs = match (&g.config, model) {
                (Some(_), _) => vec![base_config(g, None, None)?],
                (None, Some(name)) => vec![base_config(g, None, Some(ExperimentConfig::learned_sweep(model_preset(&name)?)))?],
                (None, None) => table_configs(g, ExperimentConfig::learned_sweep, &["rheston", "rbergomi"])?,
            };
            let mut rows = Vec::new();
            for cfg in &mut cfgs {
                if let Some(l) = &levels {
                    cfg.levels = l.clone();
                }
                let out = cfg.out_dir.clone();
                rows.extend(harness::run_learned_sweep(cfg, Some(&out.join("cache")), Some(&out.join("models")))?);
            }
            report(harness::write_results(&rows, &cfgs[0].out_dir, "learned_sweep", &cfgs, secs(started))?);
        }
        Command::Train(args) => train(g, args)?,
        Command::Price(args) => price(g, args)?,
    }
    Ok(())
}

fn secs(started: Instant) -> f64 {
    started.elapsed().as_secs_f64()
}

fn report(file: PathBuf) {
    println!("{}", file.display());
}

fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Config file (or `fallback`, or defaults for `model`) with global overrides applied.
fn base_config(g: &Global, model: Option<&str>, fallback: Option<ExperimentConfig>) -> Result<ExperimentConfig> {
    let mut cfg = match (&g.config, fallback) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(cfg)) => cfg,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(name) = model {
        let m = model_preset(name)?;
        let sabr = ExperimentConfig::for_model(m).sabr;
        if g.config.is_none() {
            cfg.sabr = sabr;
        }
        cfg.model = m;
        cfg.id = name.to_string();
    }
    if g.paper_scale {
        cfg = cfg.paper_scale();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out_dir = o.clone();
    }
    if let Some(m) = g.sig_mode {
        cfg.sig_mode = m;
    }
    if let Some(m) = g.coeff_mode {
        cfg.pde.coeff_mode = m;
    }
    Ok(cfg)
}

/// The configured experiment alone, or both reference models of a table.
fn table_configs(g: &Global, preset: fn(ModelParams) -> ExperimentConfig, names: &[&str]) -> Result<Vec<ExperimentConfig>> {
    if g.config.is_some() {
        return Ok(vec![base_config(g, None, None)?]);
    }
    names
        .iter().map(|n| base_config(g, None, Some(preset(model_preset(n)?)))).collect()
}

fn train(g: &Global, args: TrainArgs) -> Result<()> {
    let cfg = base_config(g, None, None)?;
    let meta_file = meta_path(&args.data);
    let meta: PathSetMeta = serde_json::from_str(
        &fs::read_to_string(&meta_file)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", meta_file.display())))?,
    )?;
    let set = PathSet::read_csv(&args.data, &meta)?;
    let mut tc = cfg.train.clone();
    if let Some(v) = args.epochs {
        tc.epochs = v;
    }
    if let Some(v) = args.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        tc.learning_rate = v;
    }
    if let Some(v) = args.ridge {
        tc.ridge = v;
    }
    if let Some(v) = args.hidden {
        tc.hidden = v;
    }
    if let Some(v) = args.time_stride {
        tc.time_stride = v;
    }
    if let Some(a) = args.activation {
        tc.activation = match a.as_str() {
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            other => return Err(Error::Config(format!("unknown activation `{other}` (tanh, relu)"))),
        };
    }
    if let Some(s) = g.seed {
        tc.seed = s;
    }
    tc.validate()?;
    let batch = SigBatch::new(&set, args.level, cfg.sig_mode);
    let targets: Vec<&[f64]> = (0..set.count()).map(|m| set.v(m)).collect();
    let rows: Vec<usize> = (0..set.count()).collect();
    let model = match args.kind.parse::<ReprKind>()? {
        ReprKind::Linear => LearnedModel::Linear(fit_linear(&batch, &targets, &rows, tc.ridge)?),
        ReprKind::Nonlinear => {
            let (m, rep) = train_nonlinear(&batch, &targets, &rows, &tc)?;
            eprintln!(
                "best epoch {}, restarts {}, correction kept: {}",
                rep.best_epoch, rep.restarts, rep.correction_kept
            );
            LearnedModel::Nonlinear(m)
        }
        other => return Err(Error::Config(format!("cannot train a `{other}` representation (linear, nonlinear)"))),
    };
    let file = match args.model_out {
        Some(f) => f,
        None => {
            fs::create_dir_all(&cfg.out_dir)?;
            cfg.out_dir.join(format!("{}-{}-N{}.json", meta.model.name(), args.kind, args.level))
        }
    };
    model.save(&file)?;
    println!("{}", file.display());
    Ok(())
}

fn price(g: &Global, args: PriceArgs) -> Result<()> {
    let mut cfg = base_config(g, args.model.as_deref(), None)?;
    if let Some(r) = &args.representation {
        cfg.representation = r.parse()?;
    }
    if args.model_file.is_some() {
        cfg.model_file = args.model_file.clone();
    }
    if let Some(n) = args.level {
        cfg.levels = vec![n];
    }
    if let Some(s) = args.spot {
        cfg.spots = s;
    } else {
        cfg.spots = vec![cfg.option.strike];
    }
    if let Some(p) = args.paths {
        cfg.paths = p;
    }
    if let Some(p) = args.pde_paths {
        cfg.pde.paths = p;
    }
    cfg.pde.paths = cfg.pde.paths.min(cfg.paths);
    if let Some(x) = args.x_lo {
        cfg.pde.x_lo = x;
    }
    if let Some(x) = args.x_hi {
        cfg.pde.x_hi = x;
    }
    if let Some(x) = args.dx {
        cfg.pde.dx = x;
    }
    cfg.validate()?;
    let method: PriceMethod = args.method.parse()?;
    let set = simulate(&cfg.model, &cfg.grid, cfg.paths, cfg.seed)?;
    let reports: Vec<PriceReport> = match method {
        PriceMethod::Benchmark => mc_price_benchmark(&cfg.sabr, &cfg.option, &set, cfg.paths, &cfg.spots)?,
        _ => {
            let mut reps = representations(&cfg)?;
            let rep: Representation = reps.pop().map(|(_, r)| r).expect("levels are nonempty");
            if method == PriceMethod::McSig {
                mc_price_sig(&rep, &cfg.sabr, &cfg.option, &set, cfg.paths, &cfg.spots, cfg.sig_mode)?
            } else {
                let grid = cfg.pde.grid()?;
                let out = pde_price(
                    &rep,
                    &cfg.sabr,
                    &cfg.option,
                    &set,
                    cfg.pde.paths,
                    &cfg.spots,
                    &grid,
                    cfg.pde.coeff_mode,
                    cfg.sig_mode,
                )?;
                if let Some(file) = &args.profile {
                    let mut wtr = csv::Writer::from_path(file)?;
                    wtr.write_record(["x", "u0"])?;
                    for (l, u) in out.profile.iter().enumerate() {
                        wtr.write_record([grid.x(l).to_string(), u.to_string()])?;
                    }
                    wtr.flush()?;
                }
                out.reports
            }
        }
    };
    fs::create_dir_all(&cfg.out_dir)?;
    let file = cfg.out_dir.join("price.csv");
    let mut wtr = csv::Writer::from_path(&file)?;
    for r in &reports {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    for r in &reports {
        println!("{} {} N={} spot={} price={:.6} se={:.6}", r.method, r.provenance, r.level, r.spot, r.estimate, r.std_error);
    }
    Ok(())
}
