//! Learned signature representations for volatility processes without
//! closed-form coefficients: per-timestep ridge regression and a feedforward
//! network on `(t_j, S_j)`.

mod linear;
mod nn;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{Provenance, RepStream};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, path_rng};
use crate::signature::{signature_stream, SigMode, SigStream, TimeExtendedPath};
use crate::tensor::basis_dim;
use crate::vol_models::PathSet;

pub use linear::{fit_linear, LinearRepModel};
pub use nn::{train_nonlinear, Activation, Mlp, NonlinearRepModel, TrainReport};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    pub ridge: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub validation_fraction: f64,
    /// Use every `time_stride`-th grid index as a network training row.
    pub time_stride: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 256,
            learning_rate: 1e-3,
            lr_decay: 0.95,
            ridge: 1e-8,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            validation_fraction: 0.2,
            time_stride: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.epochs == 0 || self.batch_size == 0 || self.time_stride == 0 {
            return bad("epochs, batch_size and time_stride must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge must be >= 0, got {}", self.ridge));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden sizes must be a nonempty list of positive integers".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return bad(format!("validation_fraction must lie in (0, 0.5], got {}", self.validation_fraction));
        }
        Ok(())
    }
}

/// Signature streams of every path in a set, all at one level and mode.
pub struct SigBatch {
    pub level: usize,
    pub mode: SigMode,
    pub paths: Vec<TimeExtendedPath>,
    pub sigs: Vec<SigStream>,
}

impl SigBatch {
    pub fn new(set: &PathSet, level: usize, mode: SigMode) -> SigBatch {
        let paths: Vec<TimeExtendedPath> = (0..set.count()).map(|m| set.path(m)).collect();
        let sigs = paths.par_iter().map(|p| signature_stream(p, level, mode)).collect();
        SigBatch { level, mode, paths, sigs }
    }

    pub fn len(&self) -> usize {
        self.sigs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigs.is_empty()
    }
}

/// Rows of `(t_j, S_j)`: a leading time column followed by every word of
/// length `<= N` in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub level: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    /// `(path, j)` of each row.
    pub index: Vec<(usize, usize)>,
}

impl FeatureMatrix {
    pub fn build(batch: &SigBatch, paths: &[usize], time_stride: usize) -> FeatureMatrix {
        let dim = basis_dim(batch.level);
        let cols = dim + 1;
        let mut data = Vec::new();
        let mut index = Vec::new();
        for &m in paths {
            let sig = &batch.sigs[m];
            let path = &batch.paths[m];
            for j in (0..sig.len()).step_by(time_stride) {
                data.push(path.time(j));
                data.extend_from_slice(sig.at(j));
                index.push((m, j));
            }
        }
        FeatureMatrix { level: batch.level, cols, data, index }
    }

    pub fn rows(&self) -> usize {
        self.index.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Splits path indices `0..count` into (fit, validation) by whole path.
pub fn split_paths(count: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut path_rng(derive_seed(seed, "split"), 0));
    let n_val = ((count as f64 * validation_fraction).ceil() as usize).clamp(1, count.saturating_sub(1).max(1));
    let mut val = idx[..n_val].to_vec();
    let mut fit = idx[n_val..].to_vec();
    val.sort_unstable();
    fit.sort_unstable();
    (fit, val)
}

/// A trained representation of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearnedModel {
    Linear(LinearRepModel),
    Nonlinear(NonlinearRepModel),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: LearnedModel,
}

impl LearnedModel {
    pub fn level(&self) -> usize {
        match self {
            LearnedModel::Linear(m) => m.level,
            LearnedModel::Nonlinear(m) => m.base.level,
        }
    }

    pub fn mode(&self) -> SigMode {
        match self {
            LearnedModel::Linear(m) => m.mode,
            LearnedModel::Nonlinear(m) => m.base.mode,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            LearnedModel::Linear(m) => m.coeffs.len() - 1,
            LearnedModel::Nonlinear(m) => m.base.coeffs.len() - 1,
        }
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            LearnedModel::Linear(_) => Provenance::LearnedLinear,
            LearnedModel::Nonlinear(_) => Provenance::LearnedNonlinear,
        }
    }

    /// `v̂_j` for every grid index of one path.
    pub fn predict_values(&self, sig: &SigStream, path: &TimeExtendedPath) -> Result<Vec<f64>> {
        if sig.level_cap() != self.level() {
            return Err(Error::LevelMismatch { coeffs: self.level(), sig: sig.level_cap() });
        }
        if sig.len() != self.steps() + 1 || path.steps() + 1 != sig.len() {
            return Err(Error::LengthMismatch { left: sig.len(), right: self.steps() + 1 });
        }
        Ok(match self {
            LearnedModel::Linear(m) => m.predict_values(sig),
            LearnedModel::Nonlinear(m) => m.predict_values(sig, path),
        })
    }

    /// `(v̂, î)` with `î` the left-point Itô sum of `v̂`.
    pub fn predict(&self, sig: &SigStream, path: &TimeExtendedPath) -> Result<RepStream> {
        let v = self.predict_values(sig, path)?;
        RepStream::from_values(v, path, self.level(), self.provenance())
    }

    pub fn save(&self, file: &Path) -> Result<()> {
        let body = serde_json::to_string(&ModelFile { format_version: MODEL_FORMAT_VERSION, model: self.clone() })?;
        fs::write(file, body)?;
        Ok(())
    }

    pub fn load(file: &Path) -> Result<LearnedModel> {
        let text = fs::read_to_string(file)
            .map_err(|e| Error::ModelFile(format!("cannot read {}: {e}", file.display())))?;
        let parsed: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::ModelFile(format!("{}: {e}", file.display())))?;
        if parsed.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "{}: format version {} (expected {MODEL_FORMAT_VERSION})",
                file.display(),
                parsed.format_version
            )));
        }
        if let LearnedModel::Nonlinear(m) = &parsed.model {
            m.net.check().map_err(|e| Error::ModelFile(format!("{}: {e}", file.display())))?;
        }
        Ok(parsed.model)
    }
}

/// Held-out `ℰ(v, v̂)` and its path-wise spread.
pub fn held_out_mae(model: &LearnedModel, set: &PathSet, batch: &SigBatch) -> Result<(f64, f64)> {
    let eps = (0..set.count())
        .into_par_iter()
        .map(|m| {
            let v = model.predict_values(&batch.sigs[m], &batch.paths[m])?;
            crate::analytic::mae_pathwise(&v, set.v(m))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(crate::analytic::summarize(&eps))
}
