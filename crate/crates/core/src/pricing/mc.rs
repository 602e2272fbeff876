use std::time::Instant;

use rayon::prelude::*;

use super::{mean_stderr, OptionSpec, PriceMethod, PriceReport, SabrSpec};
use crate::analytic::Provenance;
use crate::error::{Error, Result};
use crate::repr::Representation;
use crate::signature::SigMode;
use crate::vol_models::PathSet;

const MAX_REJECTION_RATE: f64 = 0.01;

// Euler step of X with volatility factor v_j; `integral` switches on the
// ∂f·f·Ĩ correction of the signature SDE.
fn terminal_value(sabr: &SabrSpec, x0: f64, v: &[f64], integral: Option<&[f64]>, dw: &[f64], db: &[f64]) -> f64 {
    let mut x = x0;
    for j in 0..dw.len() {
        if x <= 0.0 {
            return 0.0;
        }
        let f = sabr.f(x);
        let drift_coeff = match integral {
            Some(i) => f + sabr.df(x) * f * i[j],
            None => f,
        };
        x += drift_coeff * v[j] * dw[j] + sabr.g(x) * v[j] * db[j];
    }
    x.max(0.0)
}

fn check_inputs(sabr: &SabrSpec, option: &OptionSpec, set: &PathSet, count: usize, spots: &[f64]) -> Result<()> {
    sabr.validate()?;
    option.validate()?;
    if count == 0 || count > set.count() {
        return Err(Error::InvalidParameter(format!("path count {count} outside 1..={}", set.count())));
    }
    if let Some(bad) = spots.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter(format!("spot must be > 0, got {bad}")));
    }
    Ok(())
}

fn reduce(
    payoffs: Vec<Vec<f64>>,
    spots: &[f64],
    method: PriceMethod,
    provenance: Provenance,
    level: usize,
    started: Instant,
) -> Result<Vec<PriceReport>> {
    let count = payoffs.len();
    let mut reports = Vec::with_capacity(spots.len());
    for (k, &spot) in spots.iter().enumerate() {
        let values: Vec<f64> = payoffs.iter().map(|p| p[k]).filter(|x| x.is_finite()).collect();
        let rejected = count - values.len();
        if rejected as f64 > MAX_REJECTION_RATE * count as f64 {
            return Err(Error::Numerical(format!(
                "{rejected} of {count} paths produced non-finite prices at spot {spot}"
            )));
        }
        let (estimate, std_error) = mean_stderr(&values);
        reports.push(PriceReport {
            method,
            provenance,
            level,
            spot,
            estimate,
            std_error,
            paths: values.len(),
            warnings: rejected,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok(reports)
}

/// Monte Carlo on the discretized signature SDE
/// `X_{j+1} = X_j + [f + ∂f·f·Ĩ_j] ṽ_j ΔW_j + g ṽ_j ΔB_j` over the first
/// `count` paths of `set`, for each spot in `spots`.
pub fn mc_price_sig(
    rep: &Representation,
    sabr: &SabrSpec,
    option: &OptionSpec,
    set: &PathSet,
    count: usize,
    spots: &[f64],
    mode: SigMode,
) -> Result<Vec<PriceReport>> {
    check_inputs(sabr, option, set, count, spots)?;
    let started = Instant::now();
    let payoffs = (0..count)
        .into_par_iter()
        .map(|m| {
            let (stream, _) = rep.stream(set, m, mode)?;
            Ok(spots
                .iter()
                .map(|&x0| {
                    option.payoff(terminal_value(sabr, x0, &stream.v, Some(&stream.i), set.dw(m), set.db(m)))
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    reduce(payoffs, spots, PriceMethod::McSig, rep.provenance(), rep.level(), started)
}

/// Euler on the original SDE `X_{j+1} = X_j + f v_j ΔW_j + g v_j ΔB_j` with the
/// simulated `v`, sharing the increments of `set`.
pub fn mc_price_benchmark(
    sabr: &SabrSpec,
    option: &OptionSpec,
    set: &PathSet,
    count: usize,
    spots: &[f64],
) -> Result<Vec<PriceReport>> {
    check_inputs(sabr, option, set, count, spots)?;
    let started = Instant::now();
    let payoffs = (0..count)
        .into_par_iter()
        .map(|m| {
            spots
                .iter()
                .map(|&x0| option.payoff(terminal_value(sabr, x0, set.v(m), None, set.dw(m), set.db(m))))
                .collect()
        })
        .collect::<Vec<Vec<f64>>>();
    reduce(payoffs, spots, PriceMethod::Benchmark, Provenance::Exact, 0, started)
}
