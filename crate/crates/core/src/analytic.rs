//! Closed-form signature coefficients for the OU and mean-reverting GBM
//! volatility models, reconstruction of `(ṽ, Ĩ)` and the MAE metrics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signature::{ito_sum_series, pair_series, SigStream, TimeExtendedPath};
use crate::tensor::{Letter, TensorPoly, Word};
use crate::vol_models::{mean_sd, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    AnalyticOu,
    AnalyticMgbm,
    LearnedLinear,
    LearnedNonlinear,
    Exact,
    Zero,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::AnalyticOu => "analytic-ou",
            Provenance::AnalyticMgbm => "analytic-mgbm",
            Provenance::LearnedLinear => "learned-linear",
            Provenance::LearnedNonlinear => "learned-nonlinear",
            Provenance::Exact => "exact",
            Provenance::Zero => "zero",
        })
    }
}

/// Reconstructed `(ṽ_j, Ĩ_j)` on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct RepStream {
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    pub level: usize,
    pub provenance: Provenance,
}

impl RepStream {
    /// Builds a stream from `ṽ`, integrating it left-point against the path.
    pub fn from_values(v: Vec<f64>, path: &TimeExtendedPath, level: usize, provenance: Provenance) -> Result<RepStream> {
        if v.len() != path.steps() + 1 {
            return Err(Error::LengthMismatch { left: v.len(), right: path.steps() + 1 });
        }
        let i = ito_sum_series(&v, path);
        Ok(RepStream { v, i, level, provenance })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

fn base_times_exp(base: TensorPoly, exponent: TensorPoly, n: usize) -> TensorPoly {
    let e = exponent.shuffle_exp(n).expect("exponent has no constant term");
    base.concat(&e, n)
}

/// `ℓ^OU = (v0 ∅ + κθ 1 + η 2) ⊗ exp⧢(-κ 1)`, truncated at `n`.
pub fn ou_coefficients(kappa: f64, theta: f64, eta: f64, v0: f64, n: usize) -> TensorPoly {
    let base = TensorPoly::from_terms(
        n,
        [(Word::EMPTY, v0), (Word::new(&[Letter::Time]), kappa * theta), (Word::new(&[Letter::Brownian]), eta)],
    );
    let exponent = TensorPoly::monomial(Word::new(&[Letter::Time]), -kappa, n);
    base_times_exp(base, exponent, n)
}

/// `ℓ^mGBM = (v0 ∅ + γ 1 + η 2) ⊗ exp⧢(λ 1 + σ 2)` with `λ = -(κ + σ²/2)`,
/// `γ = κθ - ση/2`.
pub fn mgbm_coefficients(kappa: f64, theta: f64, sigma: f64, eta: f64, v0: f64, n: usize) -> TensorPoly {
    let lambda = -(kappa + 0.5 * sigma * sigma);
    let gamma = kappa * theta - 0.5 * sigma * eta;
    let base = TensorPoly::from_terms(
        n,
        [(Word::EMPTY, v0), (Word::new(&[Letter::Time]), gamma), (Word::new(&[Letter::Brownian]), eta)],
    );
    let exponent = TensorPoly::from_terms(
        n,
        [(Word::new(&[Letter::Time]), lambda), (Word::new(&[Letter::Brownian]), sigma)],
    );
    base_times_exp(base, exponent, n)
}

/// Analytic coefficients for the Markovian models; `None` for the rough ones.
pub fn model_coefficients(model: &ModelParams, n: usize) -> Option<(TensorPoly, Provenance)> {
    match *model {
        ModelParams::Ou { kappa, theta, eta, v0 } => {
            Some((ou_coefficients(kappa, theta, eta, v0, n), Provenance::AnalyticOu))
        }
        ModelParams::Mgbm { kappa, theta, sigma, eta, v0 } => {
            Some((mgbm_coefficients(kappa, theta, sigma, eta, v0, n), Provenance::AnalyticMgbm))
        }
        _ => None,
    }
}

/// `p = π_n(π_{n-1}(ℓ) ⊗ 2)`, the coefficients of `∫⟨ℓ, Ŵ⟩ dW`.
pub fn integral_coefficients(ell: &TensorPoly, n: usize) -> Result<TensorPoly> {
    if n == 0 {
        return Err(Error::InvalidParameter("integral coefficients need level >= 1".into()));
    }
    Ok(ell.project(n - 1).append_letter(Letter::Brownian, n))
}

/// `ṽ_j = ⟨ℓ, S_j⟩` and `Ĩ_j = ⟨p, S_j⟩` with `p` the level-N integral
/// coefficients, so `Ĩ` integrates the level-(N-1) part of `ℓ`. In Itô mode
/// `Ĩ_j` equals the left-point sum of `⟨π_{N-1}(ℓ), S_i⟩ ΔW_i`.
pub fn reconstruct(
    ell: &TensorPoly,
    sig: &SigStream,
    path: &TimeExtendedPath,
    provenance: Provenance,
) -> Result<RepStream> {
    if sig.len() != path.steps() + 1 {
        return Err(Error::LengthMismatch { left: sig.len(), right: path.steps() + 1 });
    }
    let n = sig.level_cap();
    let v = pair_series(ell, sig)?;
    let i = if n == 0 {
        vec![0.0; v.len()]
    } else {
        pair_series(&integral_coefficients(ell, n)?, sig)?
    };
    Ok(RepStream { v, i, level: n, provenance })
}

/// `ε = (1/(J+1)) Σ_j |a_j - b_j|`.
pub fn mae_pathwise(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Mean and standard deviation of the path-wise MAE over a set of paths.
pub fn mae_overall<A: AsRef<[f64]>, B: AsRef<[f64]>>(a: &[A], b: &[B]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let eps = a
        .iter()
        .zip(b)
        .map(|(x, y)| mae_pathwise(x.as_ref(), y.as_ref()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(&eps))
}

/// `(mean, sd)` of path-wise errors; `(0, 0)` for an empty set.
pub fn summarize(eps: &[f64]) -> (f64, f64) {
    if eps.is_empty() {
        (0.0, 0.0)
    } else {
        mean_sd(eps)
    }
}
