use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::results::{moneyness, ReprErrorRow, ResultRow};
use super::{ExperimentConfig, ReprKind};
use crate::analytic::{mae_pathwise, summarize};
use crate::error::{Error, Result};
use crate::learned::{fit_linear, held_out_mae, train_nonlinear, LearnedModel, SigBatch};
use crate::pricing::{mc_price_benchmark, mc_price_sig, pde_price, OptionSpec, PriceReport, SabrSpec};
use crate::repr::Representation;
use crate::rng::derive_seed;
use crate::vol_models::{simulate, Grid, ModelParams, PathSet};

/// Loads the learned model named by `cfg.model_file` and checks its kind.
pub fn load_learned(cfg: &ExperimentConfig) -> Result<LearnedModel> {
    let file = cfg.model_file.as_ref().ok_or_else(|| {
        Error::Config(format!("representation `{}` needs model_file", cfg.representation))
    })?;
    if !file.exists() {
        return Err(Error::ModelFile(format!("model file {} not found", file.display())));
    }
    let model = LearnedModel::load(file)?;
    let matches = matches!(
        (cfg.representation, &model),
        (ReprKind::Linear, LearnedModel::Linear(_)) | (ReprKind::Nonlinear, LearnedModel::Nonlinear(_))
    );
    if !matches {
        return Err(Error::ModelFile(format!(
            "{} holds a {} model, config asks for {}",
            file.display(),
            model.provenance(),
            cfg.representation
        )));
    }
    Ok(model)
}

/// `(level label, representation)` pairs for the configured source.
pub fn representations(cfg: &ExperimentConfig) -> Result<Vec<(usize, Representation)>> {
    match cfg.representation {
        ReprKind::Analytic => cfg.levels.iter().map(|&n| Ok((n, Representation::analytic(&cfg.model, n)?))).collect(),
        ReprKind::Exact => Ok(cfg.levels.iter().map(|&n| (n, Representation::Exact)).collect()),
        ReprKind::Zero => Ok(cfg.levels.iter().map(|&n| (n, Representation::Zero)).collect()),
        ReprKind::Linear | ReprKind::Nonlinear => {
            let model = load_learned(cfg)?;
            Ok(vec![(model.level(), Representation::Learned(model))])
        }
    }
}

/// Path-wise MAEs of `(ṽ, Ĩ)` against the simulated `(v, I)`, one row per level.
pub fn run_repr_error(cfg: &ExperimentConfig) -> Result<Vec<ReprErrorRow>> {
    cfg.validate()?;
    let reps = representations(cfg)?;
    let set = simulate(&cfg.model, &cfg.grid, cfg.paths, cfg.seed)?;
    reps.iter()
        .map(|(level, rep)| {
            let errs = (0..set.count())
                .into_par_iter()
                .map(|m| {
                    let (s, _) = rep.stream(&set, m, cfg.sig_mode)?;
                    Ok((mae_pathwise(&s.v, set.v(m))?, mae_pathwise(&s.i, set.i(m))?))
                })
                .collect::<Result<Vec<(f64, f64)>>>()?;
            let (ev, ei): (Vec<f64>, Vec<f64>) = errs.into_iter().unzip();
            let (mae_v, sd_v) = summarize(&ev);
            let (mae_i, sd_i) = summarize(&ei);
            Ok(ReprErrorRow {
                model: cfg.model.name().into(),
                level: *level,
                mae_v,
                sd_v,
                mae_i,
                sd_i,
                representation: rep.provenance().to_string(),
                sig_mode: mode_name(cfg),
                paths: cfg.paths,
                seed: cfg.seed,
                maturity: cfg.grid.maturity,
                steps: cfg.grid.steps,
            })
        })
        .collect()
}

fn mode_name(cfg: &ExperimentConfig) -> String {
    serde_json::to_value(cfg.sig_mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BenchmarkKey {
    model: ModelParams,
    grid: Grid,
    seed: u64,
    paths: usize,
    sabr: SabrSpec,
    option: OptionSpec,
    spots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BenchmarkEntry {
    key: BenchmarkKey,
    prices: Vec<(f64, f64)>,
}

/// Benchmark `(estimate, std_error)` per spot on all paths of `set`, cached
/// as JSON under `cache` when given.
pub fn benchmark_prices(cfg: &ExperimentConfig, set: &PathSet, cache: Option<&Path>) -> Result<Vec<(f64, f64)>> {
    let key = BenchmarkKey {
        model: set.model,
        grid: set.grid,
        seed: set.seed,
        paths: set.count(),
        sabr: cfg.sabr,
        option: cfg.option,
        spots: cfg.spots.clone(),
    };
    let file: Option<PathBuf> = cache.map(|dir| {
        dir.join(format!(
            "benchmark-{}-seed{}-T{}-J{}-M{}.json",
            set.model.name(),
            set.seed,
            set.grid.maturity,
            set.grid.steps,
            set.count()
        ))
    });
    if let Some(f) = &file {
        if let Ok(text) = fs::read_to_string(f) {
            if let Ok(entry) = serde_json::from_str::<BenchmarkEntry>(&text) {
                if entry.key == key {
                    return Ok(entry.prices);
                }
            }
        }
    }
    let prices: Vec<(f64, f64)> = mc_price_benchmark(&cfg.sabr, &cfg.option, set, set.count(), &cfg.spots)?
        .iter()
        .map(|r| (r.estimate, r.std_error))
        .collect();
    if let Some(f) = &file {
        if let Some(dir) = f.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(f, serde_json::to_string(&BenchmarkEntry { key, prices: prices.clone() })?)?;
    }
    Ok(prices)
}

fn price_row(
    cfg: &ExperimentConfig,
    set: &PathSet,
    level: usize,
    report: &PriceReport,
    bench: (f64, f64),
) -> ResultRow {
    ResultRow {
        experiment: cfg.id.clone(),
        model: cfg.model.name().into(),
        method: report.method.to_string(),
        representation: report.provenance.to_string(),
        level,
        moneyness: moneyness(report.spot, cfg.option.strike).into(),
        spot: Some(report.spot),
        value: report.estimate,
        stderr: report.std_error,
        reference: Some(bench.0),
        reference_stderr: Some(bench.1),
        error: (report.estimate - bench.0).abs(),
        paths: report.paths,
        seed: set.seed,
        maturity: set.grid.maturity,
        steps: set.grid.steps,
    }
}

/// Monte Carlo and PDE rows for one representation on `set`.
fn price_rows(
    cfg: &ExperimentConfig,
    set: &PathSet,
    level: usize,
    rep: &Representation,
    bench: &[(f64, f64)],
) -> Result<Vec<ResultRow>> {
    let mc = mc_price_sig(rep, &cfg.sabr, &cfg.option, set, set.count(), &cfg.spots, cfg.sig_mode)?;
    let pde = pde_price(
        rep,
        &cfg.sabr,
        &cfg.option,
        set,
        cfg.pde.paths,
        &cfg.spots,
        &cfg.pde.grid()?,
        cfg.pde.coeff_mode,
        cfg.sig_mode,
    )?;
    Ok(mc
        .iter()
        .chain(&pde.reports)
        .enumerate()
        .map(|(k, r)| price_row(cfg, set, level, r, bench[k % bench.len()]))
        .collect())
}

/// Price errors of the signature SDE and the conditional PDE against the
/// benchmark, per level and spot. All levels share the same paths.
pub fn run_pricing_table(cfg: &ExperimentConfig, cache: Option<&Path>) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let reps = representations(cfg)?;
    let set = simulate(&cfg.model, &cfg.grid, cfg.paths, cfg.seed)?;
    let bench = benchmark_prices(cfg, &set, cache)?;
    let mut rows = Vec::new();
    for (level, rep) in &reps {
        rows.extend(price_rows(cfg, &set, *level, rep, &bench)?);
    }
    Ok(rows)
}

/// Learned linear and nonlinear fits per level.
pub struct TrainedLevel {
    pub level: usize,
    pub linear: LearnedModel,
    pub nonlinear: LearnedModel,
}

/// Per level: held-out `ℰ(v, ·)` of the linear and nonlinear learners, then
/// price errors of both via both pricers. Trained models are written to
/// `model_dir` when given.
pub fn run_learned_sweep(
    cfg: &ExperimentConfig,
    cache: Option<&Path>,
    model_dir: Option<&Path>,
) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let (n_train, n_test) = (cfg.learned.train_paths, cfg.learned.test_paths);
    let data = simulate(&cfg.model, &cfg.grid, n_train + n_test, cfg.seed)?;
    let train = data.subset(0..n_train);
    let test = data.subset(n_train..n_train + n_test);
    let pricing = simulate(&cfg.model, &cfg.grid, cfg.paths, derive_seed(cfg.seed, "pricing"))?;
    let bench = benchmark_prices(cfg, &pricing, cache)?;

    let mut rows = Vec::new();
    for &level in &cfg.levels {
        let trained = train_level(cfg, &train, level)?;
        if let Some(dir) = model_dir {
            fs::create_dir_all(dir)?;
            for (kind, m) in [("linear", &trained.linear), ("nonlinear", &trained.nonlinear)] {
                m.save(&dir.join(format!("{}-{kind}-N{level}.json", cfg.model.name())))?;
            }
        }
        let test_batch = SigBatch::new(&test, level, cfg.sig_mode);
        for m in [&trained.linear, &trained.nonlinear] {
            let (mae, sd) = held_out_mae(m, &test, &test_batch)?;
            rows.push(ResultRow {
                experiment: cfg.id.clone(),
                model: cfg.model.name().into(),
                method: "mae-v".into(),
                representation: m.provenance().to_string(),
                level,
                moneyness: "-".into(),
                spot: None,
                value: mae,
                stderr: sd / (n_test as f64).sqrt(),
                reference: None,
                reference_stderr: None,
                error: mae,
                paths: n_test,
                seed: cfg.seed,
                maturity: cfg.grid.maturity,
                steps: cfg.grid.steps,
            });
        }
        for m in [trained.linear, trained.nonlinear] {
            rows.extend(price_rows(cfg, &pricing, level, &Representation::Learned(m), &bench)?);
        }
    }
    Ok(rows)
}

/// Fits both learners at `level` on every path of `train`.
pub fn train_level(cfg: &ExperimentConfig, train: &PathSet, level: usize) -> Result<TrainedLevel> {
    let batch = SigBatch::new(train, level, cfg.sig_mode);
    let targets: Vec<&[f64]> = (0..train.count()).map(|m| train.v(m)).collect();
    let rows: Vec<usize> = (0..train.count()).collect();
    let linear = fit_linear(&batch, &targets, &rows, cfg.train.ridge)?;
    let (nonlinear, _) = train_nonlinear(&batch, &targets, &rows, &cfg.train)?;
    Ok(TrainedLevel {
        level,
        linear: LearnedModel::Linear(linear),
        nonlinear: LearnedModel::Nonlinear(nonlinear),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::PdeSettings;

    fn small(model: ModelParams) -> ExperimentConfig {
        ExperimentConfig {
            paths: 40,
            levels: vec![1, 2],
            grid: Grid::new(1.0, 20).unwrap(),
            pde: PdeSettings { paths: 4, dx: 1.0, ..Default::default() },
            ..ExperimentConfig::for_model(model)
        }
    }

    #[test]
    fn exact_representation_has_zero_error() {
        let cfg = ExperimentConfig { representation: ReprKind::Exact, ..small(ModelParams::example1_mgbm()) };
        for row in run_repr_error(&cfg).unwrap() {
            assert_eq!((row.mae_v, row.sd_v, row.mae_i, row.sd_i), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn zero_volatility_prices_exactly() {
        let flat = ModelParams::Ou { kappa: 0.0, theta: 0.0, eta: 0.0, v0: 0.0 };
        let rows = run_pricing_table(&small(flat), None).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 3);
        for r in rows {
            assert_eq!(r.error, 0.0, "{r:?}");
        }
    }

    #[test]
    fn missing_model_file_named() {
        let cfg = ExperimentConfig {
            representation: ReprKind::Linear,
            model_file: Some("/nonexistent/model.json".into()),
            ..small(ModelParams::example1_ou())
        };
        let e = run_repr_error(&cfg).unwrap_err().to_string();
        assert!(e.contains("/nonexistent/model.json"), "{e}");
    }

    #[test]
    fn benchmark_cache_reused() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(ModelParams::example1_ou());
        let set = simulate(&cfg.model, &cfg.grid, cfg.paths, cfg.seed).unwrap();
        let a = benchmark_prices(&cfg, &set, Some(dir.path())).unwrap();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        let b = benchmark_prices(&cfg, &set, Some(dir.path())).unwrap();
        assert_eq!(a, b);
        let other = ExperimentConfig { spots: vec![100.0], ..cfg.clone() };
        assert_eq!(benchmark_prices(&other, &set, Some(dir.path())).unwrap().len(), 1);
    }
}
