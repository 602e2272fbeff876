//! European put pricing: Monte Carlo on the signature SDE, per-W-path
//! Crank–Nicolson, and plain Euler on the original SDE as the benchmark.

mod mc;
mod pde;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::analytic::Provenance;
use crate::error::{Error, Result};

pub use mc::{mc_price_benchmark, mc_price_sig};
pub use pde::{cn_solve, pde_coefficients, pde_price, CoeffMode, PdeGrid, PdeOutput};

/// `f(x) = ρ x^β`, `g(x) = √(1-ρ²) x^β`. Both vanish for `x <= 0`, where the
/// price is absorbed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SabrSpec {
    pub rho: f64,
    pub beta: f64,
}

impl SabrSpec {
    pub fn example1() -> SabrSpec {
        SabrSpec { rho: -0.4, beta: 0.6 }
    }

    pub fn example2() -> SabrSpec {
        SabrSpec { rho: -0.4, beta: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        Ok(())
    }

    fn power(&self, x: f64) -> f64 {
        if x > 0.0 {
            x.powf(self.beta)
        } else {
            0.0
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        self.rho * self.power(x)
    }

    pub fn g(&self, x: f64) -> f64 {
        (1.0 - self.rho * self.rho).sqrt() * self.power(x)
    }

    pub fn df(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.rho * self.beta * x.powf(self.beta - 1.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSpec {
    pub strike: f64,
    pub maturity: f64,
}

impl OptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(Error::InvalidParameter(format!("strike must be > 0, got {}", self.strike)));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::InvalidParameter(format!("maturity must be > 0, got {}", self.maturity)));
        }
        Ok(())
    }

    pub fn payoff(&self, x: f64) -> f64 {
        (self.strike - x).max(0.0)
    }
}

impl Default for OptionSpec {
    fn default() -> Self {
        OptionSpec { strike: 110.0, maturity: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceMethod {
    Benchmark,
    McSig,
    Pde,
}

impl fmt::Display for PriceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriceMethod::Benchmark => "benchmark",
            PriceMethod::McSig => "mc-sig",
            PriceMethod::Pde => "pde",
        })
    }
}

impl FromStr for PriceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "benchmark" => Ok(PriceMethod::Benchmark),
            "mc-sig" | "sde" => Ok(PriceMethod::McSig),
            "pde" => Ok(PriceMethod::Pde),
            other => Err(Error::Config(format!("unknown pricing method `{other}` (benchmark, mc-sig, pde)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub method: PriceMethod,
    pub provenance: Provenance,
    pub level: usize,
    pub spot: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub paths: usize,
    /// Rejected MC paths or clamped PDE coefficients.
    pub warnings: usize,
    pub wall_clock_secs: f64,
}

/// Black–Scholes put with zero rates.
pub fn black_scholes_put(spot: f64, strike: f64, vol: f64, maturity: f64) -> f64 {
    if vol <= 0.0 || maturity <= 0.0 {
        return (strike - spot).max(0.0);
    }
    let n = Normal::standard();
    let s = vol * maturity.sqrt();
    let d1 = ((spot / strike).ln() + 0.5 * s * s) / s;
    let d2 = d1 - s;
    strike * n.cdf(-d2) - spot * n.cdf(-d1)
}

/// Sample mean and standard error.
pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let (mean, sd) = crate::vol_models::mean_sd(xs);
    (mean, sd / (xs.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sabr_functions() {
        let s = SabrSpec { rho: 0.0, beta: 1.0 };
        assert_eq!(s.f(2.0), 0.0);
        assert_eq!(s.g(2.0), 2.0);
        let s = SabrSpec::example1();
        assert!((s.df(110.0) - (-0.4 * 0.6 * 110f64.powf(-0.4))).abs() < 1e-15);
        assert_eq!(s.f(-1.0), 0.0);
        assert!(SabrSpec { rho: 1.0, beta: 0.5 }.validate().is_err());
        assert!(SabrSpec { rho: 0.0, beta: 0.0 }.validate().is_err());
    }

    #[test]
    fn black_scholes_reference() {
        // ATM: K (2Φ(σ√T/2) - 1)
        let atm = black_scholes_put(110.0, 110.0, 0.2, 1.0);
        let n = Normal::standard();
        assert!((atm - 110.0 * (2.0 * n.cdf(0.1) - 1.0)).abs() < 1e-12);
        assert_eq!(black_scholes_put(100.0, 110.0, 0.0, 1.0), 10.0);
        // put-call parity with zero rates: C - P = S - K
        let (s, k, v) = (95.0, 110.0, 0.3);
        let p = black_scholes_put(s, k, v, 2.0);
        let sd = v * 2f64.sqrt();
        let d1 = ((s / k).ln() + 0.5 * sd * sd) / sd;
        let c = s * n.cdf(d1) - k * n.cdf(d1 - sd);
        assert!((c - p - (s - k)).abs() < 1e-10);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::repr::Representation;
    use crate::signature::SigMode;
    use crate::vol_models::{simulate, Grid, ModelParams};
    use proptest::prelude::*;

    const SPOTS: [f64; 3] = [95.0, 110.0, 115.0];

    fn all_prices(model: &ModelParams, seed: u64, level: usize) -> Vec<Vec<PriceReport>> {
        let set = simulate(model, &Grid::new(1.0, 50).unwrap(), 64, seed).unwrap();
        let (sabr, opt) = (SabrSpec::example1(), OptionSpec::default());
        let rep = Representation::analytic(model, level).unwrap();
        let grid = PdeGrid::with_step(11.0, 330.0, 1.0).unwrap();
        vec![
            mc_price_benchmark(&sabr, &opt, &set, 64, &SPOTS).unwrap(),
            mc_price_sig(&rep, &sabr, &opt, &set, 64, &SPOTS, SigMode::ItoLeft).unwrap(),
            pde_price(&rep, &sabr, &opt, &set, 8, &SPOTS, &grid, CoeffMode::Scalar, SigMode::ItoLeft).unwrap().reports,
            pde_price(&rep, &sabr, &opt, &set, 8, &SPOTS, &grid, CoeffMode::Shuffle, SigMode::ItoLeft).unwrap().reports,
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn prices_are_bounded_and_monotone(seed in any::<u64>(), level in 1usize..=3, mgbm in any::<bool>()) {
            let model = if mgbm { ModelParams::example1_mgbm() } else { ModelParams::example1_ou() };
            for reports in all_prices(&model, seed, level) {
                for r in &reports {
                    prop_assert!(r.estimate >= 0.0 && r.estimate <= 110.0, "{r:?}");
                    prop_assert!(r.std_error >= 0.0);
                }
                prop_assert!(reports[0].estimate >= reports[1].estimate);
                prop_assert!(reports[1].estimate >= reports[2].estimate);
            }
        }
    }

    #[test]
    fn prices_identical_across_thread_counts() {
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| all_prices(&ModelParams::example1_mgbm(), 5, 3))
        };
        let strip = |mut v: Vec<Vec<PriceReport>>| {
            v.iter_mut().flatten().for_each(|r| r.wall_clock_secs = 0.0);
            v
        };
        assert_eq!(strip(run(1)), strip(run(4)));
    }

    #[test]
    fn constant_volatility_benchmark_is_black_scholes() {
        let s = 0.2;
        let flat = ModelParams::Ou { kappa: 0.0, theta: 0.0, eta: 0.0, v0: s };
        let set = simulate(&flat, &Grid::default(), 100_000, 8).unwrap();
        let sabr = SabrSpec { rho: -0.4, beta: 1.0 };
        let r = mc_price_benchmark(&sabr, &OptionSpec::default(), &set, 100_000, &SPOTS).unwrap();
        for (rep, spot) in r.iter().zip(SPOTS) {
            let bs = black_scholes_put(spot, 110.0, s, 1.0);
            assert!((rep.estimate - bs).abs() <= 3.0 * rep.std_error, "spot {spot}: {} vs {bs}", rep.estimate);
        }
    }

    #[test]
    fn uncorrelated_pde_agrees_with_benchmark() {
        // with ρ = 0 the conditional law of X given W is exactly the PDE's diffusion
        let set = simulate(&ModelParams::example1_ou(), &Grid::default(), 4000, 1).unwrap();
        let sabr = SabrSpec { rho: 0.0, beta: 0.6 };
        let opt = OptionSpec::default();
        let bench = mc_price_benchmark(&sabr, &opt, &set, 4000, &SPOTS).unwrap();
        let pde = pde_price(
            &Representation::Exact,
            &sabr,
            &opt,
            &set,
            1000,
            &SPOTS,
            &PdeGrid::default_for(110.0),
            CoeffMode::Scalar,
            SigMode::ItoLeft,
        )
        .unwrap();
        for (b, p) in bench.iter().zip(&pde.reports) {
            let se = (b.std_error.powi(2) + p.std_error.powi(2)).sqrt();
            assert!((b.estimate - p.estimate).abs() <= 4.0 * se, "{b:?} vs {p:?}");
        }
    }
}
