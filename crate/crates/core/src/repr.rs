//! Sources of `(ṽ, Ĩ)` streams for the pricers.

use crate::analytic::{model_coefficients, reconstruct, Provenance, RepStream};
use crate::error::{Error, Result};
use crate::learned::LearnedModel;
use crate::signature::{pair_series, signature_stream, SigMode, SigStream};
use crate::tensor::TensorPoly;
use crate::vol_models::{ModelParams, PathSet};

#[derive(Debug, Clone)]
pub enum Representation {
    /// `ṽ ≡ 0`.
    Zero,
    /// The simulated `(v, I)` themselves.
    Exact,
    /// Time-independent coefficients `ℓ` at level `N = ℓ.level_cap()`.
    Analytic { ell: TensorPoly, provenance: Provenance },
    Learned(LearnedModel),
}

impl Representation {
    pub fn analytic(model: &ModelParams, level: usize) -> Result<Representation> {
        let (ell, provenance) = model_coefficients(model, level).ok_or_else(|| {
            Error::InvalidParameter(format!("no analytic representation for the {} model", model.name()))
        })?;
        Ok(Representation::Analytic { ell, provenance })
    }

    pub fn level(&self) -> usize {
        match self {
            Representation::Zero | Representation::Exact => 0,
            Representation::Analytic { ell, .. } => ell.level_cap(),
            Representation::Learned(m) => m.level(),
        }
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            Representation::Zero => Provenance::Zero,
            Representation::Exact => Provenance::Exact,
            Representation::Analytic { provenance, .. } => *provenance,
            Representation::Learned(m) => m.provenance(),
        }
    }

    /// Signature mode used to evaluate this representation; learned models
    /// carry the mode they were trained in.
    pub fn sig_mode(&self, requested: SigMode) -> SigMode {
        match self {
            Representation::Learned(m) => m.mode(),
            _ => requested,
        }
    }

    fn needs_signature(&self) -> bool {
        matches!(self, Representation::Analytic { .. } | Representation::Learned(_))
    }

    /// Stream for path `m` of `set`, plus the signature it was built from.
    pub fn stream(&self, set: &PathSet, m: usize, mode: SigMode) -> Result<(RepStream, Option<SigStream>)> {
        let path = set.path(m);
        let sig = self
            .needs_signature()
            .then(|| signature_stream(&path, self.level(), self.sig_mode(mode)));
        let rep = match self {
            Representation::Zero => {
                RepStream { v: vec![0.0; path.steps() + 1], i: vec![0.0; path.steps() + 1], level: 0, provenance: Provenance::Zero }
            }
            Representation::Exact => {
                RepStream { v: set.v(m).to_vec(), i: set.i(m).to_vec(), level: 0, provenance: Provenance::Exact }
            }
            Representation::Analytic { ell, provenance } => reconstruct(ell, sig.as_ref().unwrap(), &path, *provenance)?,
            Representation::Learned(model) => {
                if model.steps() != set.steps() {
                    return Err(Error::LengthMismatch { left: model.steps(), right: set.steps() });
                }
                model.predict(sig.as_ref().unwrap(), &path)?
            }
        };
        Ok((rep, sig))
    }

    /// `π_N(ℓ_j ⧢ ℓ_j)` per grid index (a single entry when `ℓ` is constant
    /// in time). Not available for network or path-based sources.
    pub fn square_coefficients(&self) -> Result<Vec<TensorPoly>> {
        match self {
            Representation::Analytic { ell, .. } => Ok(vec![ell.shuffle(ell, ell.level_cap())]),
            Representation::Learned(LearnedModel::Linear(m)) => Ok((0..m.coeffs.len())
                .map(|j| {
                    let l = m.coefficients(j);
                    l.shuffle(&l, m.level)
                })
                .collect()),
            Representation::Zero => Ok(vec![TensorPoly::zero(0)]),
            _ => Err(Error::InvalidParameter(format!(
                "shuffle-pair coefficients need a linear coefficient tensor; {} has none",
                self.provenance()
            ))),
        }
    }
}

/// `⟨π_N(ℓ_j ⧢ ℓ_j), S_j⟩` for every grid index.
pub fn square_series(squares: &[TensorPoly], sig: Option<&SigStream>, len: usize) -> Result<Vec<f64>> {
    match (squares, sig) {
        ([sq], Some(sig)) => pair_series(sq, sig),
        ([sq], None) if sq.is_zero() => Ok(vec![0.0; len]),
        (_, None) => Err(Error::InvalidParameter("shuffle-pair mode needs the signature stream".into())),
        (many, Some(sig)) => {
            if many.len() != sig.len() {
                return Err(Error::LengthMismatch { left: many.len(), right: sig.len() });
            }
            (0..sig.len()).map(|j| crate::signature::pair(&many[j], sig, j)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vol_models::{simulate, Grid};

    #[test]
    fn exact_and_zero_streams() {
        let set = simulate(&ModelParams::example1_ou(), &Grid::new(1.0, 10).unwrap(), 2, 1).unwrap();
        let (e, sig) = Representation::Exact.stream(&set, 1, SigMode::ItoLeft).unwrap();
        assert!(sig.is_none());
        assert_eq!(e.v, set.v(1));
        assert_eq!(e.i, set.i(1));
        let (z, _) = Representation::Zero.stream(&set, 1, SigMode::ItoLeft).unwrap();
        assert!(z.v.iter().chain(&z.i).all(|&x| x == 0.0));
    }

    #[test]
    fn analytic_rejected_for_rough_models() {
        assert!(Representation::analytic(&ModelParams::example2_rbergomi(), 3).is_err());
        assert_eq!(Representation::analytic(&ModelParams::example1_mgbm(), 3).unwrap().level(), 3);
    }

    #[test]
    fn chen_square_pairing_matches_square() {
        let set = simulate(&ModelParams::example1_ou(), &Grid::new(1.0, 25).unwrap(), 1, 2).unwrap();
        let ell = crate::analytic::ou_coefficients(1.0, 0.25, 1.2, 0.1, 2).project(2);
        let rep = Representation::Analytic { ell: ell.clone(), provenance: Provenance::AnalyticOu };
        // pad the level so deg(ℓ ⧢ ℓ) fits without truncation
        let wide = Representation::Analytic {
            ell: TensorPoly::from_terms(4, ell.iter()),
            provenance: Provenance::AnalyticOu,
        };
        let (r, sig) = wide.stream(&set, 0, SigMode::Chen).unwrap();
        let sq = square_series(&wide.square_coefficients().unwrap(), sig.as_ref(), r.len()).unwrap();
        for j in 0..r.len() {
            assert!((sq[j] - r.v[j] * r.v[j]).abs() < 1e-10);
        }
        assert_eq!(rep.level(), 2);
    }
}
