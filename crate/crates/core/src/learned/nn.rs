use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linear::{fit_linear, LinearRepModel};
use super::{split_paths, FeatureMatrix, SigBatch, TrainConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, path_rng};
use crate::signature::{SigStream, TimeExtendedPath};

const MAX_RESTARTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    // derivative expressed through the activation output
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected network with a scalar linear output. Parameters are one
/// flat vector: per layer the row-major `in × out` weights then the biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform hidden layers; the output layer starts at zero.
    pub fn new<R: Rng>(input: usize, hidden: &[usize], activation: Activation, rng: &mut R) -> Mlp {
        let mut net = Mlp::zeros(input, hidden, activation);
        let layers = net.sizes.len() - 1;
        for l in 0..layers - 1 {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let off = net.offset(l);
            for w in &mut net.params[off..off + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn zeros(input: usize, hidden: &[usize], activation: Activation) -> Mlp {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Mlp { sizes, activation, params: vec![0.0; n] }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) || *self.sizes.last().unwrap() != 1 {
            return Err(format!("bad layer sizes {:?}", self.sizes));
        }
        let n: usize = self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if n != self.params.len() {
            return Err(format!("expected {n} parameters for sizes {:?}, found {}", self.sizes, self.params.len()));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err("non-finite weight".into());
        }
        Ok(())
    }

    fn offset(&self, layer: usize) -> usize {
        self.sizes[..layer + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l);
        let w = ArrayView2::from_shape((i, o), &self.params[off..off + i * o]).expect("layer shape");
        let b = ArrayView1::from(&self.params[off + i * o..off + i * o + o]);
        (w, b)
    }

    fn activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_owned());
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let mut z = acts[l].dot(&w) + &b;
            if l + 1 < layers {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.activations(x).pop().unwrap().column(0).to_owned()
    }

    /// Mean squared error on `(x, y)`.
    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
        let out = self.forward(x);
        (&out - &y).mapv(|e| e * e).mean().unwrap_or(0.0)
    }

    /// Mean squared error and its gradient with respect to `params`.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, Vec<f64>) {
        let acts = self.activations(x);
        let layers = self.sizes.len() - 1;
        let n = x.nrows() as f64;
        let err = &acts[layers].column(0) - &y;
        let loss = err.mapv(|e| e * e).sum() / n;
        let mut delta = (err * (2.0 / n)).insert_axis(Axis(1));
        let mut grad = vec![0.0; self.params.len()];
        for l in (0..layers).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offset(l);
            let gw = acts[l].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            for (dst, src) in grad[off..off + i * o].iter_mut().zip(gw.iter()) {
                *dst = *src;
            }
            for (dst, src) in grad[off + i * o..off + i * o + o].iter_mut().zip(gb.iter()) {
                *dst = *src;
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let act = self.activation;
                let mut back = delta.dot(&w.t());
                back.zip_mut_with(&acts[l], |d, &a| *d *= act.slope(a));
                delta = back;
            }
        }
        (loss, grad)
    }
}

/// Linear per-timestep base plus a network correction on standardized
/// `(t_j, S_j)` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearRepModel {
    pub base: LinearRepModel,
    pub net: Mlp,
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_scale: f64,
}

impl NonlinearRepModel {
    fn standardize(&self, fm: &FeatureMatrix) -> Array2<f64> {
        standardize(fm, &self.x_mean, &self.x_scale)
    }

    pub fn predict_values(&self, sig: &SigStream, path: &TimeExtendedPath) -> Vec<f64> {
        let cols = sig.dim() + 1;
        let mut data = Vec::with_capacity(sig.len() * cols);
        for j in 0..sig.len() {
            data.push(path.time(j));
            data.extend_from_slice(sig.at(j));
        }
        let fm = FeatureMatrix { level: sig.level_cap(), cols, data, index: (0..sig.len()).map(|j| (0, j)).collect() };
        let out = self.net.forward(self.standardize(&fm).view());
        self.base
            .predict_values(sig)
            .into_iter()
            .zip(out.iter())
            .map(|(b, o)| b + self.y_scale * o)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub restarts: usize,
    /// Whether the network correction passed the validation significance test.
    pub correction_kept: bool,
}

fn standardize(fm: &FeatureMatrix, mean: &[f64], scale: &[f64]) -> Array2<f64> {
    let mut x = Array2::from_shape_vec((fm.rows(), fm.cols), fm.data.clone()).expect("feature shape");
    for mut row in x.rows_mut() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = (*v - mean[k]) / scale[k];
        }
    }
    x
}

fn column_stats(fm: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = fm.rows() as f64;
    let mut mean = vec![0.0; fm.cols];
    for r in 0..fm.rows() {
        for (k, v) in fm.row(r).iter().enumerate() {
            mean[k] += v / n;
        }
    }
    let mut var = vec![0.0; fm.cols];
    for r in 0..fm.rows() {
        for (k, v) in fm.row(r).iter().enumerate() {
            var[k] += (v - mean[k]).powi(2) / n;
        }
    }
    let scale = var.into_iter().map(|v| if v > 1e-300 { v.sqrt() } else { 1.0 }).collect();
    (mean, scale)
}

fn residuals(fm: &FeatureMatrix, base: &LinearRepModel, batch: &SigBatch, targets: &[&[f64]]) -> Vec<f64> {
    (0..fm.rows())
        .map(|r| {
            let (m, j) = fm.index[r];
            let pred: f64 = base.coeffs[j].iter().zip(batch.sigs[m].at(j)).map(|(c, s)| c * s).sum();
            targets[m][j] - pred
        })
        .collect()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Adam {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = B1 * self.m[k] + (1.0 - B1) * grad[k];
            self.v[k] = B2 * self.v[k] + (1.0 - B2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + EPS);
        }
    }
}

/// Fits the linear base on all of `rows`, then trains the network on the
/// base residuals with Adam. Validation paths are held out of the network
/// fit and select the returned checkpoint.
pub fn train_nonlinear(
    batch: &SigBatch,
    targets: &[&[f64]],
    rows: &[usize],
    cfg: &TrainConfig,
) -> Result<(NonlinearRepModel, TrainReport)> {
    cfg.validate()?;
    if rows.len() < 2 {
        return Err(Error::InvalidParameter("nonlinear training needs at least two paths".into()));
    }
    let base = fit_linear(batch, targets, rows, cfg.ridge)?;

    let (fit_pos, val_pos) = split_paths(rows.len(), cfg.validation_fraction, cfg.seed);
    let fit_paths: Vec<usize> = fit_pos.iter().map(|&p| rows[p]).collect();
    let val_paths: Vec<usize> = val_pos.iter().map(|&p| rows[p]).collect();
    let fit_fm = FeatureMatrix::build(batch, &fit_paths, cfg.time_stride);
    let val_fm = FeatureMatrix::build(batch, &val_paths, cfg.time_stride);

    let (x_mean, x_scale) = column_stats(&fit_fm);
    let fit_r = residuals(&fit_fm, &base, batch, targets);
    let val_r = residuals(&val_fm, &base, batch, targets);
    // no centering: a zero network output reproduces the linear base exactly
    let y_ms = fit_r.iter().map(|r| r * r).sum::<f64>() / fit_r.len() as f64;
    let y_scale = if y_ms > 1e-300 { y_ms.sqrt() } else { 1.0 };

    let x_fit = standardize(&fit_fm, &x_mean, &x_scale);
    let x_val = standardize(&val_fm, &x_mean, &x_scale);
    let y_fit = Array1::from_iter(fit_r.iter().map(|r| r / y_scale));
    let y_val = Array1::from_iter(val_r.iter().map(|r| r / y_scale));

    let mut init_rng = path_rng(derive_seed(cfg.seed, "init"), 0);
    let mut net = Mlp::new(fit_fm.cols, &cfg.hidden, cfg.activation, &mut init_rng);
    let mut best = net.params.clone();
    let mut best_val = net.loss(x_val.view(), y_val.view());
    let mut report = TrainReport { val_loss: vec![best_val], ..Default::default() };
    let mut adam = Adam::new(net.n_params());
    let mut lr = cfg.learning_rate;
    let mut order: Vec<usize> = (0..x_fit.nrows()).collect();
    let cols = x_fit.ncols();

    let mut epoch = 0;
    while epoch < cfg.epochs {
        order.shuffle(&mut path_rng(derive_seed(cfg.seed, "batches"), epoch as u64));
        let mut sum = 0.0;
        let mut diverged = false;
        for chunk in order.chunks(cfg.batch_size) {
            let mut xb = Array2::zeros((chunk.len(), cols));
            let mut yb = Array1::zeros(chunk.len());
            for (r, &k) in chunk.iter().enumerate() {
                xb.slice_mut(s![r, ..]).assign(&x_fit.row(k));
                yb[r] = y_fit[k];
            }
            let (loss, grad) = net.loss_and_grad(xb.view(), yb.view());
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                diverged = true;
                break;
            }
            sum += loss * chunk.len() as f64;
            adam.step(&mut net.params, &grad, lr);
        }
        let val = net.loss(x_val.view(), y_val.view());
        if diverged || !val.is_finite() {
            report.restarts += 1;
            if report.restarts > MAX_RESTARTS {
                return Err(Error::Numerical(format!(
                    "training loss diverged {} times; last learning rate {lr:e}",
                    report.restarts
                )));
            }
            lr *= 0.5;
            net.params = best.clone();
            adam = Adam::new(net.n_params());
            continue;
        }
        report.train_loss.push(sum / order.len() as f64);
        report.val_loss.push(val);
        if val < best_val {
            best_val = val;
            best = net.params.clone();
            report.best_epoch = epoch + 1;
        }
        lr *= cfg.lr_decay;
        epoch += 1;
    }
    net.params = best;
    report.correction_kept = significant_gain(&net, &x_val, &y_val, &val_fm);
    if !report.correction_kept {
        let out = net.n_params() - net.sizes[net.sizes.len() - 2] - 1;
        net.params[out..].iter_mut().for_each(|p| *p = 0.0);
    }
    Ok((NonlinearRepModel { base, net, x_mean, x_scale, y_scale }, report))
}

/// Paired per-path test on the validation set: the correction must lower the
/// mean squared error by more than two standard errors of the difference.
fn significant_gain(net: &Mlp, x_val: &Array2<f64>, y_val: &Array1<f64>, val_fm: &FeatureMatrix) -> bool {
    let out = net.forward(x_val.view());
    let mut per_path: Vec<(usize, f64, usize)> = Vec::new();
    for r in 0..val_fm.rows() {
        let m = val_fm.index[r].0;
        let gain = y_val[r] * y_val[r] - (out[r] - y_val[r]).powi(2);
        match per_path.last_mut() {
            Some((pm, g, n)) if *pm == m => {
                *g += gain;
                *n += 1;
            }
            _ => per_path.push((m, gain, 1)),
        }
    }
    let gains: Vec<f64> = per_path.iter().map(|&(_, g, n)| g / n as f64).collect();
    if gains.len() < 2 {
        return false;
    }
    let (mean, sd) = crate::vol_models::mean_sd(&gains);
    mean > 2.0 * sd / (gains.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn frozen_batch() -> (Mlp, Array2<f64>, Array1<f64>) {
        let mut rng = path_rng(11, 0);
        let mut net = Mlp::new(5, &[7, 6], Activation::Tanh, &mut rng);
        for p in net.params.iter_mut() {
            if *p == 0.0 {
                *p = rng.random_range(-0.5..0.5);
            }
        }
        let x = Array::from_shape_fn((9, 5), |_| rng.random_range(-1.0..1.0));
        let y = Array::from_shape_fn(9, |_| rng.random_range(-1.0..1.0));
        (net, x, y)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (net, x, y) = frozen_batch();
        let (_, grad) = net.loss_and_grad(x.view(), y.view());
        let h = 1e-5;
        for k in 0..net.n_params() {
            let mut plus = net.clone();
            plus.params[k] += h;
            let mut minus = net.clone();
            minus.params[k] -= h;
            let fd = (plus.loss(x.view(), y.view()) - minus.loss(x.view(), y.view())) / (2.0 * h);
            let denom = grad[k].abs().max(fd.abs()).max(1e-8);
            assert!((grad[k] - fd).abs() / denom <= 1e-4, "param {k}: {} vs {fd}", grad[k]);
        }
    }

    #[test]
    fn zero_network_outputs_bias() {
        let mut net = Mlp::zeros(3, &[4], Activation::Relu);
        let last = net.n_params() - 1;
        net.params[last] = 0.7;
        let out = net.forward(Array2::ones((5, 3)).view());
        assert!(out.iter().all(|&o| o == 0.7));
        assert!(net.check().is_ok());
        net.params.pop();
        assert!(net.check().is_err());
    }
}
