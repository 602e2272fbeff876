use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_stderr, OptionSpec, PriceMethod, PriceReport, SabrSpec};
use crate::analytic::RepStream;
use crate::error::{Error, Result};
use crate::repr::{square_series, Representation};
use crate::signature::SigMode;
use crate::vol_models::PathSet;

/// Uniform space grid `x_l = x_lo + l Δx`, `l = 0..=intervals`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub intervals: usize,
}

impl PdeGrid {
    /// Grid on `[x_lo, x_hi]` whose step is as close to `dx` as the interval allows.
    pub fn with_step(x_lo: f64, x_hi: f64, dx: f64) -> Result<PdeGrid> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidParameter(format!("dx must be > 0, got {dx}")));
        }
        let intervals = ((x_hi - x_lo) / dx).round().max(0.0) as usize;
        let g = PdeGrid { x_lo, x_hi, intervals };
        g.validate()?;
        Ok(g)
    }

    /// `[0.1 K, 3 K]` with `Δx = 0.25`.
    pub fn default_for(strike: f64) -> PdeGrid {
        PdeGrid::with_step(0.1 * strike, 3.0 * strike, 0.25).expect("strike is positive")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_lo < self.x_hi && self.x_lo.is_finite() && self.x_hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("need x_lo < x_hi, got [{}, {}]", self.x_lo, self.x_hi)));
        }
        if self.intervals < 2 {
            return Err(Error::InvalidParameter("space grid needs at least 2 intervals".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.intervals as f64
    }

    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    pub fn x(&self, l: usize) -> f64 {
        self.x_lo + l as f64 * self.dx()
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.x_lo && x < self.x_hi
    }

    /// Linear interpolation of nodal values at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let pos = ((x - self.x_lo) / self.dx()).clamp(0.0, self.intervals as f64);
        let l = (pos.floor() as usize).min(self.intervals - 1);
        let w = pos - l as f64;
        (1.0 - w) * values[l] + w * values[l + 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoeffMode {
    /// `(f + ∂f·f·Ĩ)² ṽ² + g² ṽ²`
    #[default]
    Scalar,
    /// `((f + ∂f·f·Ĩ)² + g²) ⟨π_N(ℓ ⧢ ℓ), S⟩`
    Shuffle,
}

impl FromStr for CoeffMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar" | "scalar-square" => Ok(CoeffMode::Scalar),
            "shuffle" | "shuffle-pair" => Ok(CoeffMode::Shuffle),
            other => Err(Error::Config(format!("unknown coefficient mode `{other}` (scalar, shuffle)"))),
        }
    }
}

impl fmt::Display for CoeffMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoeffMode::Scalar => "scalar",
            CoeffMode::Shuffle => "shuffle",
        })
    }
}

/// Diffusion coefficient `a[j][l]` of `∂_t u + ½ a ∂_xx u = 0` on one W-path.
/// `squares` holds `⟨π_N(ℓ_j ⧢ ℓ_j), S_j⟩` and is required in shuffle mode.
/// Returns the field and the number of negative entries clamped to zero.
pub fn pde_coefficients(
    rep: &RepStream,
    sabr: &SabrSpec,
    grid: &PdeGrid,
    mode: CoeffMode,
    squares: Option<&[f64]>,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let xs: Vec<f64> = (0..grid.nodes()).map(|l| grid.x(l)).collect();
    let fx: Vec<f64> = xs.iter().map(|&x| sabr.f(x)).collect();
    let corr: Vec<f64> = xs.iter().map(|&x| sabr.df(x) * sabr.f(x)).collect();
    let g2: Vec<f64> = xs.iter().map(|&x| sabr.g(x).powi(2)).collect();
    let squares = match (mode, squares) {
        (CoeffMode::Shuffle, None) => {
            return Err(Error::InvalidParameter("shuffle coefficient mode needs the signature pairing".into()))
        }
        (CoeffMode::Shuffle, Some(s)) if s.len() != rep.len() => {
            return Err(Error::LengthMismatch { left: s.len(), right: rep.len() })
        }
        (_, s) => s,
    };
    let mut clamped = 0;
    let field = (0..rep.len())
        .map(|j| {
            let (v, i) = (rep.v[j], rep.i[j]);
            (0..grid.nodes())
                .map(|l| {
                    let cf = fx[l] + corr[l] * i;
                    let a = match mode {
                        CoeffMode::Scalar => (cf * v).powi(2) + g2[l] * v * v,
                        CoeffMode::Shuffle => (cf * cf + g2[l]) * squares.unwrap()[j],
                    };
                    if a < 0.0 {
                        clamped += 1;
                        0.0
                    } else {
                        a
                    }
                })
                .collect()
        })
        .collect();
    Ok((field, clamped))
}

/// Crank–Nicolson backward sweep from `u_J = Φ` with Dirichlet values
/// `(ψ_lo, ψ_hi)`; returns the `t = 0` slice.
pub fn cn_solve(a: &[Vec<f64>], grid: &PdeGrid, option: &OptionSpec, dt: f64, boundary: (f64, f64)) -> Result<Vec<f64>> {
    let n = grid.nodes();
    if a.is_empty() || a.iter().any(|row| row.len() != n) {
        return Err(Error::LengthMismatch { left: a.first().map_or(0, |r| r.len()), right: n });
    }
    let c = dt / (4.0 * grid.dx() * grid.dx());
    let (lo, hi) = boundary;
    let mut u: Vec<f64> = (0..n).map(|l| option.payoff(grid.x(l))).collect();
    let inner = n - 2;
    let mut rhs = vec![0.0; inner];
    let mut cp = vec![0.0; inner];
    let mut next = vec![0.0; n];
    for j in (0..a.len() - 1).rev() {
        let (aj, aj1) = (&a[j], &a[j + 1]);
        for k in 0..inner {
            let l = k + 1;
            rhs[k] = u[l] + c * aj1[l] * (u[l - 1] - 2.0 * u[l] + u[l + 1]);
        }
        rhs[0] += c * aj[1] * lo;
        rhs[inner - 1] += c * aj[n - 2] * hi;
        // Thomas: sub = super = -c a_j, diag = 1 + 2c a_j
        let mut prev_cp = 0.0;
        let mut prev_d = 0.0;
        for k in 0..inner {
            let off = -c * aj[k + 1];
            let diag = 1.0 + 2.0 * c * aj[k + 1];
            let denom = diag - off * prev_cp;
            cp[k] = off / denom;
            rhs[k] = (rhs[k] - off * prev_d) / denom;
            prev_cp = cp[k];
            prev_d = rhs[k];
        }
        next[n - 1] = hi;
        next[0] = lo;
        next[inner] = rhs[inner - 1];
        for k in (0..inner - 1).rev() {
            next[k + 1] = rhs[k] - cp[k] * next[k + 2];
        }
        std::mem::swap(&mut u, &mut next);
        if let Some(l) = u.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite PDE value at time index {j}, node {l} (x = {}, dx = {}, dt = {dt})",
                grid.x(l),
                grid.dx()
            )));
        }
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeOutput {
    pub reports: Vec<PriceReport>,
    /// `u_0(x_l)` averaged over the W-paths.
    pub profile: Vec<f64>,
}

/// Solves the conditional PDE on each of the first `m_w` W-paths of `set` and
/// averages `u_0(spot)` over them.
#[allow(clippy::too_many_arguments)]
pub fn pde_price(
    rep: &Representation,
    sabr: &SabrSpec,
    option: &OptionSpec,
    set: &PathSet,
    m_w: usize,
    spots: &[f64],
    grid: &PdeGrid,
    coeff_mode: CoeffMode,
    sig_mode: SigMode,
) -> Result<PdeOutput> {
    sabr.validate()?;
    option.validate()?;
    grid.validate()?;
    if m_w == 0 || m_w > set.count() {
        return Err(Error::InvalidParameter(format!("W-path count {m_w} outside 1..={}", set.count())));
    }
    if let Some(bad) = spots.iter().find(|&&s| !grid.contains(s)) {
        return Err(Error::InvalidParameter(format!(
            "spot {bad} outside the PDE domain ({}, {})",
            grid.x_lo, grid.x_hi
        )));
    }
    let started = Instant::now();
    let squares = match coeff_mode {
        CoeffMode::Shuffle => Some(rep.square_coefficients()?),
        CoeffMode::Scalar => None,
    };
    let boundary = (option.payoff(grid.x_lo), option.payoff(grid.x_hi));
    let dt = set.grid.dt();
    let solved = (0..m_w)
        .into_par_iter()
        .map(|m| {
            let (stream, sig) = rep.stream(set, m, sig_mode)?;
            let sq = match &squares {
                Some(s) => Some(square_series(s, sig.as_ref(), stream.len())?),
                None => None,
            };
            let (a, clamped) = pde_coefficients(&stream, sabr, grid, coeff_mode, sq.as_deref())?;
            Ok((cn_solve(&a, grid, option, dt, boundary)?, clamped))
        })
        .collect::<Result<Vec<(Vec<f64>, usize)>>>()?;

    let clamped: usize = solved.iter().map(|s| s.1).sum();
    if clamped > 0 {
        eprintln!("warning: {clamped} negative PDE coefficients clamped to zero");
    }
    let mut profile = vec![0.0; grid.nodes()];
    for (u, _) in &solved {
        for (p, x) in profile.iter_mut().zip(u) {
            *p += x / m_w as f64;
        }
    }
    let reports = spots
        .iter()
        .map(|&spot| {
            let values: Vec<f64> = solved.iter().map(|(u, _)| grid.interpolate(u, spot)).collect();
            let (estimate, std_error) = mean_stderr(&values);
            PriceReport {
                method: PriceMethod::Pde,
                provenance: rep.provenance(),
                level: rep.level(),
                spot,
                estimate,
                std_error,
                paths: m_w,
                warnings: clamped,
                wall_clock_secs: started.elapsed().as_secs_f64(),
            }
        })
        .collect();
    Ok(PdeOutput { reports, profile })
}
