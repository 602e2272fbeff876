//! Seeded batch simulation of the OU, mean-reverting GBM, rough Heston and
//! rough Bergomi volatility processes together with `I_t = ∫ v dW`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::rng::{path_rng, PathRng};
use crate::signature::TimeExtendedPath;

/// Exponent magnitude beyond which a rough Bergomi path is redrawn.
pub const BERGOMI_EXPONENT_LIMIT: f64 = 700.0;
const MAX_RESAMPLES: usize = 100;

/// Uniform time grid `t_j = j·T/J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub maturity: f64,
    pub steps: usize,
}

impl Grid {
    pub fn new(maturity: f64, steps: usize) -> Result<Grid> {
        let g = Grid { maturity, steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::InvalidParameter(format!("maturity must be > 0, got {}", self.maturity)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("grid needs at least one step".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid { maturity: 1.0, steps: 251 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelParams {
    /// `dv = κ(θ - v)dt + η dW`
    Ou { kappa: f64, theta: f64, eta: f64, v0: f64 },
    /// `dv = κ(θ - v)dt + (η + σv) dW`
    Mgbm { kappa: f64, theta: f64, sigma: f64, eta: f64, v0: f64 },
    /// Volterra equation with kernel `(t-s)^{-α}/Γ(1-α)`, drift `κ(θ - v)`, diffusion `σ√v`.
    Rheston { kappa: f64, theta: f64, sigma: f64, v0: f64, alpha: f64 },
    /// `v_t = v0 exp(η ∫ (t-s)^{-α} dW_s)`
    Rbergomi { v0: f64, eta: f64, alpha: f64 },
}

impl ModelParams {
    pub fn example1_ou() -> ModelParams {
        ModelParams::Ou { kappa: 1.0, theta: 0.25, eta: 1.2, v0: 0.1 }
    }

    pub fn example1_mgbm() -> ModelParams {
        ModelParams::Mgbm { kappa: 1.0, theta: 0.25, sigma: 0.01, eta: 1.2, v0: 0.1 }
    }

    pub fn example2_rheston() -> ModelParams {
        ModelParams::Rheston { kappa: 0.1, theta: 0.25, sigma: 0.01, v0: 0.1, alpha: 0.2 }
    }

    pub fn example2_rbergomi() -> ModelParams {
        ModelParams::Rbergomi { v0: 0.1, eta: 1.0, alpha: 0.2 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelParams::Ou { .. } => "ou",
            ModelParams::Mgbm { .. } => "mgbm",
            ModelParams::Rheston { .. } => "rheston",
            ModelParams::Rbergomi { .. } => "rbergomi",
        }
    }

    pub fn v0(&self) -> f64 {
        match *self {
            ModelParams::Ou { v0, .. }
            | ModelParams::Mgbm { v0, .. }
            | ModelParams::Rheston { v0, .. }
            | ModelParams::Rbergomi { v0, .. } => v0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match *self {
            ModelParams::Ou { kappa, theta, eta, v0 } => [kappa, theta, eta, v0, 0.0],
            ModelParams::Mgbm { kappa, theta, sigma, eta, v0 } => [kappa, theta, sigma, eta, v0],
            ModelParams::Rheston { kappa, theta, sigma, v0, alpha } => [kappa, theta, sigma, v0, alpha],
            ModelParams::Rbergomi { v0, eta, alpha } => [v0, eta, alpha, 0.0, 0.0],
        };
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite parameter in {self:?}")));
        }
        match *self {
            // zero initial vol is allowed for the Markovian models (degenerate test configs)
            ModelParams::Ou { v0, .. } | ModelParams::Mgbm { v0, .. } if v0 < 0.0 => {
                Err(Error::InvalidParameter(format!("v0 must be >= 0, got {v0}")))
            }
            ModelParams::Rheston { v0, alpha, .. } | ModelParams::Rbergomi { v0, alpha, .. } => {
                if v0 <= 0.0 {
                    Err(Error::InvalidParameter(format!("v0 must be > 0, got {v0}")))
                } else if !(alpha > 0.0 && alpha < 0.5) {
                    Err(Error::InvalidParameter(format!("alpha must lie in (0, 1/2), got {alpha}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// A batch of simulated trajectories on a common grid. Row `m` holds
/// `J` increments of `W` and `B` and `J + 1` values of `v` and `I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub model: ModelParams,
    pub grid: Grid,
    pub seed: u64,
    count: usize,
    dw: Vec<f64>,
    db: Vec<f64>,
    v: Vec<f64>,
    i: Vec<f64>,
    resampled: usize,
}

impl PathSet {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn dw(&self, m: usize) -> &[f64] {
        let j = self.grid.steps;
        &self.dw[m * j..(m + 1) * j]
    }

    pub fn db(&self, m: usize) -> &[f64] {
        let j = self.grid.steps;
        &self.db[m * j..(m + 1) * j]
    }

    pub fn v(&self, m: usize) -> &[f64] {
        let j = self.grid.steps + 1;
        &self.v[m * j..(m + 1) * j]
    }

    pub fn i(&self, m: usize) -> &[f64] {
        let j = self.grid.steps + 1;
        &self.i[m * j..(m + 1) * j]
    }

    /// Number of paths redrawn by the rough Bergomi overflow guard.
    pub fn resampled(&self) -> usize {
        self.resampled
    }

    pub fn path(&self, m: usize) -> TimeExtendedPath {
        TimeExtendedPath::from_increments(self.grid.dt(), self.dw(m))
            .expect("grid step is validated positive")
    }

    /// Paths `range` as a new set sharing model, grid and seed.
    pub fn subset(&self, range: std::ops::Range<usize>) -> PathSet {
        assert!(range.end <= self.count);
        let (j, j1) = (self.grid.steps, self.grid.steps + 1);
        PathSet {
            model: self.model,
            grid: self.grid,
            seed: self.seed,
            count: range.len(),
            dw: self.dw[range.start * j..range.end * j].to_vec(),
            db: self.db[range.start * j..range.end * j].to_vec(),
            v: self.v[range.start * j1..range.end * j1].to_vec(),
            i: self.i[range.start * j1..range.end * j1].to_vec(),
            resampled: 0,
        }
    }

    /// Writes `path,j,t,dW,dB,v,I` rows; increments are empty on the last grid point.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        for m in 0..self.count {
            for j in 0..=self.grid.steps {
                wtr.serialize(PathRecord {
                    path: m,
                    j,
                    t: self.grid.time(j),
                    dw: self.dw(m).get(j).copied(),
                    db: self.db(m).get(j).copied(),
                    v: self.v(m)[j],
                    i: self.i(m)[j],
                })?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`PathSet::write_csv`]; model, grid and seed come
    /// from the accompanying metadata.
    pub fn read_csv(path: &Path, meta: &PathSetMeta) -> Result<PathSet> {
        meta.grid.validate()?;
        let steps = meta.grid.steps;
        let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
        let (mut dw, mut db, mut v, mut i) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut count = 0;
        for (row, rec) in rdr.deserialize::<PathRecord>().enumerate() {
            let rec = rec?;
            let (m, j) = (row / (steps + 1), row % (steps + 1));
            if rec.path != m || rec.j != j {
                return Err(Error::InvalidParameter(format!(
                    "path file row {row}: expected path {m} index {j}, found {} {}",
                    rec.path, rec.j
                )));
            }
            if j < steps {
                let missing = || Error::InvalidParameter(format!("path file row {row}: missing increment"));
                dw.push(rec.dw.ok_or_else(missing)?);
                db.push(rec.db.ok_or_else(missing)?);
            }
            v.push(rec.v);
            i.push(rec.i);
            count = m + 1;
        }
        if v.len() != count * (steps + 1) {
            return Err(Error::InvalidParameter("path file ends mid-path".into()));
        }
        Ok(PathSet {
            model: meta.model,
            grid: meta.grid,
            seed: meta.seed,
            count,
            dw,
            db,
            v,
            i,
            resampled: meta.resampled,
        })
    }

    pub fn meta(&self) -> PathSetMeta {
        PathSetMeta {
            model: self.model,
            grid: self.grid,
            seed: self.seed,
            count: self.count,
            resampled: self.resampled,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PathRecord {
    path: usize,
    j: usize,
    t: f64,
    #[serde(rename = "dW")]
    dw: Option<f64>,
    #[serde(rename = "dB")]
    db: Option<f64>,
    v: f64,
    #[serde(rename = "I")]
    i: f64,
}

/// Sidecar describing how a path file was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSetMeta {
    pub model: ModelParams,
    pub grid: Grid,
    pub seed: u64,
    pub count: usize,
    pub resampled: usize,
}

struct PathRow {
    dw: Vec<f64>,
    db: Vec<f64>,
    v: Vec<f64>,
    i: Vec<f64>,
    resampled: usize,
}

/// Simulates `count` paths. Path `m` depends only on `(model, grid, seed, m)`.
pub fn simulate(model: &ModelParams, grid: &Grid, count: usize, seed: u64) -> Result<PathSet> {
    model.validate()?;
    grid.validate()?;
    let kernel = Kernel::new(model, grid);
    let rows = (0..count)
        .into_par_iter()
        .map(|m| simulate_path(model, grid, &kernel, &mut path_rng(seed, m as u64)))
        .collect::<Result<Vec<PathRow>>>()?;

    let steps = grid.steps;
    let mut set = PathSet {
        model: *model,
        grid: *grid,
        seed,
        count,
        dw: Vec::with_capacity(count * steps),
        db: Vec::with_capacity(count * steps),
        v: Vec::with_capacity(count * (steps + 1)),
        i: Vec::with_capacity(count * (steps + 1)),
        resampled: 0,
    };
    for row in rows {
        set.dw.extend(row.dw);
        set.db.extend(row.db);
        set.v.extend(row.v);
        set.i.extend(row.i);
        set.resampled += row.resampled;
    }
    if set.resampled > 0 {
        eprintln!("warning: {} rough Bergomi path(s) redrawn after exponent overflow", set.resampled);
    }
    Ok(set)
}

// Kernel weights at lags k·Δt, k = 1..=J (index 0 unused).
struct Kernel(Vec<f64>);

impl Kernel {
    fn new(model: &ModelParams, grid: &Grid) -> Kernel {
        let dt = grid.dt();
        match *model {
            ModelParams::Rheston { alpha, .. } => {
                let g = gamma(1.0 - alpha);
                Kernel((0..=grid.steps).map(|k| (k as f64 * dt).powf(-alpha) / g).collect())
            }
            ModelParams::Rbergomi { alpha, .. } => {
                Kernel((0..=grid.steps).map(|k| (k as f64 * dt).powf(-alpha)).collect())
            }
            _ => Kernel(Vec::new()),
        }
    }
}

fn draw(rng: &mut PathRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn simulate_path(model: &ModelParams, grid: &Grid, kernel: &Kernel, rng: &mut PathRng) -> Result<PathRow> {
    let steps = grid.steps;
    let dt = grid.dt();
    let sq = dt.sqrt();
    let mut resampled = 0;
    loop {
        let dw: Vec<f64> = draw(rng, steps).into_iter().map(|z| z * sq).collect();
        let db: Vec<f64> = draw(rng, steps).into_iter().map(|z| z * sq).collect();
        let v = match volatility_path(model, dt, &kernel.0, &dw) {
            Some(v) => v,
            None => {
                resampled += 1;
                if resampled > MAX_RESAMPLES {
                    return Err(Error::Numerical("rough Bergomi exponent overflow persists".into()));
                }
                continue;
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite volatility for {}", model.name())));
        }
        let mut i = Vec::with_capacity(steps + 1);
        let mut acc = 0.0;
        i.push(acc);
        for j in 0..steps {
            acc += v[j] * dw[j];
            i.push(acc);
        }
        return Ok(PathRow { dw, db, v, i, resampled });
    }
}

// None signals a rough Bergomi exponent beyond the overflow guard.
fn volatility_path(model: &ModelParams, dt: f64, kernel: &[f64], dw: &[f64]) -> Option<Vec<f64>> {
    let steps = dw.len();
    let mut v = Vec::with_capacity(steps + 1);
    match *model {
        ModelParams::Ou { kappa, theta, eta, v0 } => {
            v.push(v0);
            for j in 0..steps {
                let x = v[j];
                v.push(x + kappa * (theta - x) * dt + eta * dw[j]);
            }
        }
        ModelParams::Mgbm { kappa, theta, sigma, eta, v0 } => {
            v.push(v0);
            for j in 0..steps {
                let x = v[j];
                v.push(x + kappa * (theta - x) * dt + (eta + sigma * x) * dw[j]);
            }
        }
        ModelParams::Rheston { kappa, theta, sigma, v0, .. } => {
            // left-point Volterra Euler with full truncation inside drift and root
            let mut incr = Vec::with_capacity(steps);
            v.push(v0);
            for j in 0..steps {
                let vp = v[j].max(0.0);
                incr.push(kappa * (theta - vp) * dt + sigma * vp.sqrt() * dw[j]);
                let conv: f64 = (0..=j).map(|i| kernel[j + 1 - i] * incr[i]).sum();
                v.push(v0 + conv);
            }
        }
        ModelParams::Rbergomi { v0, eta, .. } => {
            v.push(v0);
            for j in 1..=steps {
                let x: f64 = eta * (0..j).map(|i| kernel[j - i] * dw[i]).sum::<f64>();
                if x.abs() > BERGOMI_EXPONENT_LIMIT {
                    return None;
                }
                v.push(v0 * x.exp());
            }
        }
    }
    Some(v)
}

/// Sample mean of `v_T` against its closed-form expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCheck {
    pub sample_mean: f64,
    pub std_error: f64,
    pub expected: f64,
    pub z: f64,
}

/// Continuum-limit mean of `v_T`.
///
/// OU and mGBM share the linear drift so `E v_T = θ + (v0-θ)e^{-κT}`. Rough
/// Heston (ignoring the positive-part truncation) gives
/// `θ + (v0-θ) E_{1-α}(-κ T^{1-α})` with the Mittag-Leffler function; rough
/// Bergomi is lognormal with `E v_T = v0 exp(η² T^{1-2α} / (2(1-2α)))`.
pub fn expected_terminal_mean(model: &ModelParams, maturity: f64) -> f64 {
    let t = maturity;
    match *model {
        ModelParams::Ou { kappa, theta, v0, .. } | ModelParams::Mgbm { kappa, theta, v0, .. } => {
            theta + (v0 - theta) * (-kappa * t).exp()
        }
        ModelParams::Rheston { kappa, theta, v0, alpha, .. } => {
            let beta = 1.0 - alpha;
            theta + (v0 - theta) * mittag_leffler(beta, -kappa * t.powf(beta))
        }
        ModelParams::Rbergomi { v0, eta, alpha } => {
            let a = 1.0 - 2.0 * alpha;
            v0 * (eta * eta * t.powf(a) / (2.0 * a)).exp()
        }
    }
}

/// `E_β(z) = Σ z^k / Γ(βk + 1)`, for moderate `|z|`.
pub fn mittag_leffler(beta: f64, z: f64) -> f64 {
    let mut sum = 0.0;
    let mut zk = 1.0;
    for k in 0..300 {
        let g = gamma(beta * k as f64 + 1.0);
        if !g.is_finite() {
            break;
        }
        let term = zk / g;
        sum += term;
        if k > 5 && term.abs() < 1e-18 {
            break;
        }
        zk *= z;
    }
    sum
}

pub fn mean_check(model: &ModelParams, grid: &Grid, count: usize, seed: u64) -> Result<MeanCheck> {
    if count < 2 {
        return Err(Error::InvalidParameter("mean check needs at least two paths".into()));
    }
    let set = simulate(model, grid, count, seed)?;
    let terminal: Vec<f64> = (0..count).map(|m| set.v(m)[grid.steps]).collect();
    let (mean, sd) = mean_sd(&terminal);
    let std_error = sd / (count as f64).sqrt();
    let expected = expected_terminal_mean(model, grid.maturity);
    let z = if std_error > 0.0 { (mean - expected) / std_error } else if mean == expected { 0.0 } else { f64::INFINITY };
    Ok(MeanCheck { sample_mean: mean, std_error, expected, z })
}

/// Sample mean and (n-1)-normalised standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_ou_tracks_ode() {
        let model = ModelParams::Ou { kappa: 1.0, theta: 0.25, eta: 0.0, v0: 0.1 };
        let grid = Grid::default();
        let set = simulate(&model, &grid, 2, 1).unwrap();
        let max_dev = (0..=grid.steps)
            .map(|j| (set.v(0)[j] - (0.25 + (0.1 - 0.25) * (-grid.time(j)).exp())).abs())
            .fold(0.0, f64::max);
        assert!(max_dev <= 5e-3, "{max_dev}");
        assert_eq!(set.v(0), set.v(1));
    }

    #[test]
    fn degenerate_rough_models_are_constant() {
        let grid = Grid::default();
        let b = simulate(&ModelParams::Rbergomi { v0: 0.3, eta: 0.0, alpha: 0.2 }, &grid, 3, 5).unwrap();
        let h = simulate(
            &ModelParams::Rheston { kappa: 0.0, theta: 0.25, sigma: 0.0, v0: 0.3, alpha: 0.2 },
            &grid,
            3,
            5,
        )
        .unwrap();
        for m in 0..3 {
            assert!(b.v(m).iter().all(|&x| x == 0.3));
            assert!(h.v(m).iter().all(|&x| x == 0.3));
        }
    }

    #[test]
    fn integral_starts_at_zero_and_is_left_point() {
        let set = simulate(&ModelParams::example1_mgbm(), &Grid::new(1.0, 20).unwrap(), 4, 9).unwrap();
        for m in 0..4 {
            assert_eq!(set.i(m)[0], 0.0);
            let mut acc = 0.0;
            for j in 0..20 {
                acc += set.v(m)[j] * set.dw(m)[j];
                assert!((set.i(m)[j + 1] - acc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let grid = Grid::new(1.0, 30).unwrap();
        for model in [
            ModelParams::example1_ou(),
            ModelParams::example1_mgbm(),
            ModelParams::example2_rheston(),
            ModelParams::example2_rbergomi(),
        ] {
            let a = simulate(&model, &grid, 10, 42).unwrap();
            let b = simulate(&model, &grid, 10, 42).unwrap();
            assert_eq!(a, b);
            // path m is independent of how many paths were requested
            let c = simulate(&model, &grid, 4, 42).unwrap();
            assert_eq!(c.v(3), a.v(3));
            assert_eq!(a.subset(2..5).v(0), a.v(2));
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let grid = Grid::default();
        assert!(simulate(&ModelParams::Rbergomi { v0: 0.1, eta: 1.0, alpha: 0.5 }, &grid, 1, 0).is_err());
        assert!(simulate(&ModelParams::Rheston { kappa: 0.1, theta: 0.2, sigma: 0.1, v0: -1.0, alpha: 0.2 }, &grid, 1, 0).is_err());
        assert!(simulate(&ModelParams::Ou { kappa: 1.0, theta: 0.2, eta: f64::NAN, v0: 0.1 }, &grid, 1, 0).is_err());
        assert!(Grid::new(0.0, 10).is_err());
        assert!(Grid::new(1.0, 0).is_err());
    }

    #[test]
    fn bergomi_overflow_guard_resamples() {
        // huge η forces at least some exponents over the limit
        let grid = Grid::new(1.0, 10).unwrap();
        let model = ModelParams::Rbergomi { v0: 0.1, eta: 300.0, alpha: 0.2 };
        let set = simulate(&model, &grid, 20, 3).unwrap();
        assert!(set.resampled() > 0);
        for m in 0..20 {
            assert!(set.v(m).iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn mittag_leffler_special_cases() {
        // E_1(z) = e^z
        assert!((mittag_leffler(1.0, -0.7) - (-0.7f64).exp()).abs() < 1e-14);
        // E_{1/2}(0) = 1
        assert!((mittag_leffler(0.5, 0.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("paths.csv");
        let set = simulate(&ModelParams::example2_rheston(), &Grid::new(0.5, 7).unwrap(), 3, 11).unwrap();
        set.write_csv(&file).unwrap();
        let back = PathSet::read_csv(&file, &set.meta()).unwrap();
        assert_eq!(back, set);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn models() -> [ModelParams; 4] {
        [
            ModelParams::example1_ou(),
            ModelParams::example1_mgbm(),
            ModelParams::example2_rheston(),
            ModelParams::example2_rbergomi(),
        ]
    }

    #[test]
    fn identical_across_thread_counts() {
        let grid = Grid::new(1.0, 60).unwrap();
        for model in models() {
            let run = |threads: usize| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .unwrap()
                    .install(|| simulate(&model, &grid, 64, 3).unwrap())
            };
            assert_eq!(run(1), run(4));
        }
    }

    #[test]
    fn terminal_means_match_closed_forms() {
        for model in models() {
            let c = mean_check(&model, &Grid::default(), 4000, 17).unwrap();
            assert!(c.z.abs() <= 4.0, "{}: {c:?}", model.name());
        }
    }

    #[test]
    fn integral_is_centred() {
        for model in models() {
            let set = simulate(&model, &Grid::default(), 4000, 23).unwrap();
            let terminal: Vec<f64> = (0..set.count()).map(|m| set.i(m)[set.steps()]).collect();
            let (mean, sd) = mean_sd(&terminal);
            let z = mean / (sd / (terminal.len() as f64).sqrt());
            assert!(z.abs() <= 4.0, "{}: mean {mean}, z {z}", model.name());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn noiseless_ou_follows_ode(kappa in 0.0f64..3.0, theta in -1.0f64..1.0, v0 in 0.0f64..1.0, seed in any::<u64>()) {
            let grid = Grid::default();
            let set = simulate(&ModelParams::Ou { kappa, theta, eta: 0.0, v0 }, &grid, 1, seed).unwrap();
            for j in 0..=grid.steps {
                let ode = theta + (v0 - theta) * (-kappa * grid.time(j)).exp();
                prop_assert!((set.v(0)[j] - ode).abs() <= 5e-3);
            }
        }

        #[test]
        fn paths_do_not_depend_on_batch(seed in any::<u64>(), m in 0usize..8, extra in 1usize..8) {
            let grid = Grid::new(0.5, 16).unwrap();
            for model in models() {
                let a = simulate(&model, &grid, m + 1, seed).unwrap();
                let b = simulate(&model, &grid, m + 1 + extra, seed).unwrap();
                prop_assert_eq!(a.v(m), b.v(m));
                prop_assert_eq!(a.dw(m), b.dw(m));
                prop_assert_eq!(a.db(m), b.db(m));
            }
        }
    }
}
