use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SigBatch;
use crate::error::{Error, Result};
use crate::signature::{SigMode, SigStream};
use crate::tensor::{basis_dim, TensorPoly};

/// One dense coefficient vector per grid index, in canonical word order and
/// in the unstandardized word basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRepModel {
    pub level: usize,
    pub mode: SigMode,
    pub ridge: f64,
    pub coeffs: Vec<Vec<f64>>,
}

impl LinearRepModel {
    pub fn coefficients(&self, j: usize) -> TensorPoly {
        TensorPoly::from_dense(self.level, &self.coeffs[j])
    }

    pub fn predict_values(&self, sig: &SigStream) -> Vec<f64> {
        (0..sig.len())
            .map(|j| self.coeffs[j].iter().zip(sig.at(j)).map(|(c, s)| c * s).sum())
            .collect()
    }
}

/// Per-grid-index ridge regression of `targets[m][j]` on `S_j` over the
/// paths `rows`.
///
/// Each system is Jacobi-scaled before the Cholesky factorization; the
/// penalty is rescaled with it so the minimizer is unchanged.
pub fn fit_linear(batch: &SigBatch, targets: &[&[f64]], rows: &[usize], ridge: f64) -> Result<LinearRepModel> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
    }
    if rows.is_empty() {
        return Err(Error::InvalidParameter("no training paths".into()));
    }
    if targets.len() != batch.len() {
        return Err(Error::LengthMismatch { left: targets.len(), right: batch.len() });
    }
    let dim = basis_dim(batch.level);
    let len = batch.sigs[rows[0]].len();
    for &m in rows {
        if targets[m].len() != len || batch.sigs[m].len() != len {
            return Err(Error::LengthMismatch { left: targets[m].len(), right: len });
        }
    }

    let coeffs = (0..len)
        .into_par_iter()
        .map(|j| {
            let x = DMatrix::from_fn(rows.len(), dim, |r, c| batch.sigs[rows[r]].at(j)[c]);
            let y = DVector::from_fn(rows.len(), |r, _| targets[rows[r]][j]);
            solve_ridge(&x, &y, ridge).ok_or(Error::SingularSystem { index: j })
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    Ok(LinearRepModel { level: batch.level, mode: batch.mode, ridge, coeffs })
}

fn solve_ridge(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Option<Vec<f64>> {
    let mut g = x.tr_mul(x);
    let b = x.tr_mul(y);
    let dim = g.nrows();
    let scale: Vec<f64> = (0..dim).map(|k| if g[(k, k)] > 0.0 { g[(k, k)].sqrt() } else { 1.0 }).collect();
    for r in 0..dim {
        for c in 0..dim {
            g[(r, c)] /= scale[r] * scale[c];
        }
        g[(r, r)] += ridge / (scale[r] * scale[r]);
    }
    let rhs = DVector::from_fn(dim, |k, _| b[k] / scale[k]);
    let chol = g.cholesky()?;
    let z = chol.solve(&rhs);
    let out: Vec<f64> = (0..dim).map(|k| z[k] / scale[k]).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::pair_series;
    use crate::tensor::Word;
    use crate::vol_models::{simulate, Grid, ModelParams};

    fn batch(count: usize, level: usize) -> SigBatch {
        let set = simulate(&ModelParams::example1_ou(), &Grid::new(1.0, 20).unwrap(), count, 4).unwrap();
        SigBatch::new(&set, level, SigMode::ItoLeft)
    }

    #[test]
    fn constant_target() {
        let b = batch(50, 2);
        let target = vec![0.3; 21];
        let targets: Vec<&[f64]> = vec![&target; 50];
        let rows: Vec<usize> = (0..50).collect();
        let model = fit_linear(&b, &targets, &rows, 1e-8).unwrap();
        for j in 0..21 {
            let pred = model.predict_values(&b.sigs[7]);
            assert!((pred[j] - 0.3).abs() < 1e-6);
        }
        assert!((model.coefficients(0).constant() - 0.3).abs() < 1e-6);
    }

    #[test]
    fn zero_ridge_is_singular_at_origin() {
        let b = batch(20, 2);
        let target = vec![0.3; 21];
        let targets: Vec<&[f64]> = vec![&target; 20];
        let rows: Vec<usize> = (0..20).collect();
        assert!(matches!(fit_linear(&b, &targets, &rows, 0.0), Err(Error::SingularSystem { index: 0 })));
    }

    #[test]
    fn planted_coefficients_recovered() {
        let level = 2;
        let b = batch(4 * basis_dim(level), level);
        let planted = TensorPoly::from_terms(
            level,
            [(Word::EMPTY, 0.2), (Word::parse("2").unwrap(), 1.1), (Word::parse("21").unwrap(), -0.7)],
        );
        let series: Vec<Vec<f64>> = b.sigs.iter().map(|s| pair_series(&planted, s).unwrap()).collect();
        let targets: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
        let rows: Vec<usize> = (0..b.len()).collect();
        let model = fit_linear(&b, &targets, &rows, 1e-8).unwrap();
        let mut sse = 0.0;
        let mut n = 0;
        for m in 0..b.len() {
            let pred = model.predict_values(&b.sigs[m]);
            for j in 0..pred.len() {
                sse += (pred[j] - series[m][j]).powi(2);
                n += 1;
            }
        }
        assert!(sse / n as f64 <= 1e-12, "{}", sse / n as f64);
    }
}
