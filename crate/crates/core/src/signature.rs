//! Truncated signatures of the time-extended path `t -> (t, W_t)` on a
//! uniform grid, and pairing of coefficient polynomials against them.
//!
//! Two discretisations are provided:
//!
//! * [`SigMode::ItoLeft`]: `S^(k)_{j+1} = S^(k)_j + S^(k-1)_j ⊗ ΔŴ_j`, the
//!   discrete left-point iterated integrals. Pairing against it reproduces
//!   left-point Itô sums exactly, so this is the mode used by the pricing code.
//! * [`SigMode::Chen`]: `S_{0,j+1} = S_{0,j} ⊗ exp(ΔŴ_j)`, the signature of the
//!   piecewise-linear interpolant. Satisfies Chen's identity and the shuffle
//!   identity exactly.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{basis_dim, TensorPoly, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigMode {
    #[default]
    #[serde(rename = "ito")]
    ItoLeft,
    Chen,
}

impl FromStr for SigMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<SigMode> {
        match s {
            "ito" | "ito-left" => Ok(SigMode::ItoLeft),
            "chen" => Ok(SigMode::Chen),
            _ => Err(Error::InvalidParameter(format!("unknown signature mode `{s}`"))),
        }
    }
}

/// Sampled Brownian path on the uniform grid `t_j = j·dt`, `j = 0..=J`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeExtendedPath {
    dt: f64,
    w: Vec<f64>,
}

impl TimeExtendedPath {
    pub fn new(dt: f64, w_values: Vec<f64>) -> Result<TimeExtendedPath> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        match w_values.first() {
            None => Err(Error::InvalidParameter("path needs at least one value".into())),
            Some(&w0) if w0 != 0.0 => {
                Err(Error::InvalidParameter(format!("path must start at 0, got {w0}")))
            }
            _ => Ok(TimeExtendedPath { dt, w: w_values }),
        }
    }

    pub fn from_increments(dt: f64, dw: &[f64]) -> Result<TimeExtendedPath> {
        let mut w = Vec::with_capacity(dw.len() + 1);
        w.push(0.0);
        let mut acc = 0.0;
        for d in dw {
            acc += d;
            w.push(acc);
        }
        TimeExtendedPath::new(dt, w)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps `J`.
    pub fn steps(&self) -> usize {
        self.w.len() - 1
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn w_values(&self) -> &[f64] {
        &self.w
    }

    pub fn dw(&self, j: usize) -> f64 {
        self.w[j + 1] - self.w[j]
    }

    /// The path restarted at grid index `m` (time and W shifted to 0).
    pub fn tail(&self, m: usize) -> TimeExtendedPath {
        let wm = self.w[m];
        TimeExtendedPath { dt: self.dt, w: self.w[m..].iter().map(|x| x - wm).collect() }
    }
}

/// Dense truncated signature at every grid index.
#[derive(Debug, Clone, PartialEq)]
pub struct SigStream {
    level_cap: usize,
    mode: SigMode,
    dim: usize,
    data: Vec<f64>,
}

impl SigStream {
    pub fn level_cap(&self) -> usize {
        self.level_cap
    }

    pub fn mode(&self) -> SigMode {
        self.mode
    }

    /// Number of basis words, `2^(N+1) - 1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid points, `J + 1`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Dense table at grid index `j`, indexed by [`Word::dense_index`].
    pub fn at(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn value(&self, j: usize, w: Word) -> f64 {
        assert!(w.len() <= self.level_cap);
        self.at(j)[w.dense_index()]
    }

    /// `max_w |S^(n)_j(w)|` for each level `n = 0..=N`.
    pub fn level_sup_norms(&self, j: usize) -> Vec<f64> {
        let s = self.at(j);
        (0..=self.level_cap)
            .map(|n| {
                let lo = (1usize << n) - 1;
                s[lo..lo + (1 << n)].iter().fold(0.0, |m, x| f64::max(m, x.abs()))
            })
            .collect()
    }

    /// `d_n = (n! · max_w |S^(n)_j(w)|)^{1/n}` for `n = 1..=N`. Factorial decay
    /// of the signature means this sequence stays bounded.
    pub fn normalized_level_norms(&self, j: usize) -> Vec<f64> {
        let sup = self.level_sup_norms(j);
        let mut fact = 1.0;
        (1..=self.level_cap)
            .map(|n| {
                fact *= n as f64;
                (fact * sup[n]).powf(1.0 / n as f64)
            })
            .collect()
    }

    /// Writes `j,t,word,value` rows.
    pub fn write_csv<W: Write>(&self, dt: f64, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["j", "t", "word", "value"])?;
        for j in 0..self.len() {
            let t = j as f64 * dt;
            for (i, v) in self.at(j).iter().enumerate() {
                wtr.write_record(&[
                    j.to_string(),
                    t.to_string(),
                    Word::from_dense_index(i).to_string(),
                    v.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Computes the truncated signature stream of `path` up to level `n`.
pub fn signature_stream(path: &TimeExtendedPath, n: usize, mode: SigMode) -> SigStream {
    let dim = basis_dim(n);
    let steps = path.steps();
    let mut data = Vec::with_capacity((steps + 1) * dim);
    let mut cur = vec![0.0; dim];
    cur[0] = 1.0;
    data.extend_from_slice(&cur);

    let mut seg = vec![0.0; dim];
    for j in 0..steps {
        let inc = [path.dt, path.dw(j)];
        match mode {
            SigMode::ItoLeft => ito_step(&mut cur, n, inc),
            SigMode::Chen => {
                segment_exp(&mut seg, n, inc);
                chen_step(&mut cur, &seg, n);
            }
        }
        data.extend_from_slice(&cur);
    }
    SigStream { level_cap: n, mode, dim, data }
}

// Top level first so lower levels still hold S_j when they are read.
fn ito_step(s: &mut [f64], n: usize, inc: [f64; 2]) {
    for k in (1..=n).rev() {
        let lo = (1usize << k) - 1;
        let prev_lo = (1usize << (k - 1)) - 1;
        for b in 0..(1usize << (k - 1)) {
            let base = s[prev_lo + b];
            s[lo + (b << 1)] += base * inc[0];
            s[lo + (b << 1) + 1] += base * inc[1];
        }
    }
}

/// Level-k part `Δ^{⊗k}/k!` of the signature of a straight segment.
fn segment_exp(e: &mut [f64], n: usize, inc: [f64; 2]) {
    e[0] = 1.0;
    for k in 1..=n {
        let lo = (1usize << k) - 1;
        let prev_lo = (1usize << (k - 1)) - 1;
        for b in 0..(1usize << (k - 1)) {
            let base = e[prev_lo + b] / k as f64;
            e[lo + (b << 1)] = base * inc[0];
            e[lo + (b << 1) + 1] = base * inc[1];
        }
    }
}

// s <- s ⊗ e, truncated at n; top level first.
fn chen_step(s: &mut [f64], e: &[f64], n: usize) {
    for k in (1..=n).rev() {
        let lo = (1usize << k) - 1;
        for bits in 0..(1usize << k) {
            let mut acc = s[lo + bits];
            for i in 1..=k {
                let prefix = bits >> i;
                let suffix = bits & ((1 << i) - 1);
                acc += s[(1 << (k - i)) - 1 + prefix] * e[(1 << i) - 1 + suffix];
            }
            s[lo + bits] = acc;
        }
    }
}

/// Truncated tensor product of two dense group-like tables at level `n`.
pub fn tensor_product_dense(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let dim = basis_dim(n);
    assert!(a.len() >= dim && b.len() >= dim);
    let mut out = vec![0.0; dim];
    for k in 0..=n {
        let lo = (1usize << k) - 1;
        for bits in 0..(1usize << k) {
            let mut acc = 0.0;
            for i in 0..=k {
                let prefix = bits >> i;
                let suffix = bits & ((1 << i) - 1);
                acc += a[(1 << (k - i)) - 1 + prefix] * b[(1 << i) - 1 + suffix];
            }
            out[lo + bits] = acc;
        }
    }
    out
}

/// Sparse coefficients prepared for repeated pairing against one stream.
#[derive(Debug, Clone)]
pub struct Pairing {
    entries: Vec<(usize, f64)>,
}

impl Pairing {
    pub fn new(coeffs: &TensorPoly, sig_level: usize) -> Result<Pairing> {
        if coeffs.level_cap() > sig_level {
            return Err(Error::LevelMismatch { coeffs: coeffs.level_cap(), sig: sig_level });
        }
        Ok(Pairing { entries: coeffs.iter().map(|(w, c)| (w.dense_index(), c)).collect() })
    }

    pub fn eval(&self, table: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, c)| c * table[i]).sum()
    }
}

/// `⟨coeffs, S_j⟩`.
pub fn pair(coeffs: &TensorPoly, sig: &SigStream, j: usize) -> Result<f64> {
    Ok(Pairing::new(coeffs, sig.level_cap)?.eval(sig.at(j)))
}

/// `⟨coeffs, S_j⟩` for every grid index.
pub fn pair_series(coeffs: &TensorPoly, sig: &SigStream) -> Result<Vec<f64>> {
    let p = Pairing::new(coeffs, sig.level_cap)?;
    Ok((0..sig.len()).map(|j| p.eval(sig.at(j))).collect())
}

/// Left-point Itô sum `Σ_{i<j} ⟨coeffs, S_i⟩ ΔW_i`.
pub fn ito_integrate_pairing(
    coeffs: &TensorPoly,
    sig: &SigStream,
    path: &TimeExtendedPath,
    j: usize,
) -> Result<f64> {
    check_lengths(sig, path)?;
    let p = Pairing::new(coeffs, sig.level_cap)?;
    Ok((0..j).map(|i| p.eval(sig.at(i)) * path.dw(i)).sum())
}

/// Left-point time integral `Σ_{i<j} ⟨coeffs, S_i⟩ Δt`.
pub fn time_integrate_pairing(
    coeffs: &TensorPoly,
    sig: &SigStream,
    path: &TimeExtendedPath,
    j: usize,
) -> Result<f64> {
    check_lengths(sig, path)?;
    let p = Pairing::new(coeffs, sig.level_cap)?;
    Ok((0..j).map(|i| p.eval(sig.at(i)) * path.dt).sum())
}

/// Running left-point Itô sums of a series against the path increments,
/// starting from 0.
pub fn ito_sum_series(values: &[f64], path: &TimeExtendedPath) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(acc);
    for i in 0..values.len().saturating_sub(1) {
        acc += values[i] * path.dw(i);
        out.push(acc);
    }
    out
}

fn check_lengths(sig: &SigStream, path: &TimeExtendedPath) -> Result<()> {
    if sig.len() != path.steps() + 1 {
        return Err(Error::LengthMismatch { left: sig.len(), right: path.steps() + 1 });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Letter;

    fn w(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    #[test]
    fn single_segment_chen() {
        let path = TimeExtendedPath::new(1.0, vec![0.0, 1.0]).unwrap();
        let s = signature_stream(&path, 2, SigMode::Chen);
        for word in ["11", "12", "21", "22"] {
            assert!((s.value(1, w(word)) - 0.5).abs() < 1e-15);
        }
        assert_eq!(s.value(1, w("1")), 1.0);
        assert_eq!(s.value(1, w("2")), 1.0);
    }

    #[test]
    fn single_segment_ito_has_no_level_two() {
        let path = TimeExtendedPath::new(1.0, vec![0.0, 1.0]).unwrap();
        let s = signature_stream(&path, 2, SigMode::ItoLeft);
        for word in ["11", "12", "21", "22"] {
            assert_eq!(s.value(1, w(word)), 0.0);
        }
    }

    #[test]
    fn two_step_ito_recursion() {
        let path = TimeExtendedPath::from_increments(0.5, &[1.0, -1.0]).unwrap();
        let s = signature_stream(&path, 2, SigMode::ItoLeft);
        // hand-rolled: after step 1, S(2)=1, S(1)=0.5; step 2 adds S_1(w)·Δ
        assert_eq!(s.value(2, w("22")), -1.0);
        assert_eq!(s.value(2, w("21")), 0.5);
        assert_eq!(s.value(2, w("12")), -0.5);
        assert_eq!(s.value(2, w("11")), 0.25);
    }

    #[test]
    fn stream_invariants() {
        let path = TimeExtendedPath::from_increments(0.1, &[0.3, -0.2, 0.5]).unwrap();
        for mode in [SigMode::ItoLeft, SigMode::Chen] {
            let s = signature_stream(&path, 3, mode);
            assert_eq!(s.len(), 4);
            for j in 0..4 {
                assert_eq!(s.at(j)[0], 1.0);
            }
            assert!(s.at(0)[1..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn empty_path_gives_initial_state() {
        let path = TimeExtendedPath::new(0.1, vec![0.0]).unwrap();
        let s = signature_stream(&path, 3, SigMode::Chen);
        assert_eq!(s.len(), 1);
        assert_eq!(s.at(0)[0], 1.0);
    }

    #[test]
    fn pairing_basics() {
        let path = TimeExtendedPath::from_increments(0.1, &[0.3, -0.2, 0.5]).unwrap();
        let s = signature_stream(&path, 2, SigMode::ItoLeft);
        let c = TensorPoly::monomial(Word::EMPTY, 2.5, 0);
        let w2 = TensorPoly::monomial(w("2"), 1.0, 1);
        for j in 0..4 {
            assert_eq!(pair(&c, &s, j).unwrap(), 2.5);
            assert!((pair(&w2, &s, j).unwrap() - path.w_values()[j]).abs() < 1e-15);
        }
        let deep = TensorPoly::monomial(w("122"), 1.0, 3);
        assert!(matches!(pair(&deep, &s, 1), Err(Error::LevelMismatch { coeffs: 3, sig: 2 })));
    }

    #[test]
    fn deterministic_linear_path_iterated_integral() {
        // W_t = t on [0,1]: ∫ s dW_s = 1/2
        let n = 1000;
        let path = TimeExtendedPath::from_increments(1.0 / n as f64, &vec![1.0 / n as f64; n]).unwrap();
        let s = signature_stream(&path, 2, SigMode::Chen);
        let c = TensorPoly::monomial(w("12"), 1.0, 2);
        assert!((pair(&c, &s, n).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ito_integral_of_constants() {
        let path = TimeExtendedPath::from_increments(0.1, &[0.3, -0.2, 0.5]).unwrap();
        let s = signature_stream(&path, 2, SigMode::ItoLeft);
        for j in 0..4 {
            assert_eq!(ito_integrate_pairing(&TensorPoly::zero(2), &s, &path, j).unwrap(), 0.0);
            let one = ito_integrate_pairing(&TensorPoly::unit(2), &s, &path, j).unwrap();
            assert!((one - path.w_values()[j]).abs() < 1e-15);
            let t = time_integrate_pairing(&TensorPoly::unit(2), &s, &path, j).unwrap();
            assert!((t - path.time(j)).abs() < 1e-15);
        }
    }

    #[test]
    fn integral_shift_identity_small() {
        let path = TimeExtendedPath::from_increments(0.25, &[0.3, -0.7, 0.2, 0.9]).unwrap();
        let s = signature_stream(&path, 3, SigMode::ItoLeft);
        let ell: TensorPoly = "0.4*∅ + -1.5*1 + 2*2 + 0.3*21 + -0.8*22".parse().unwrap();
        let ell = ell.project(3);
        let p = ell.append_letter(Letter::Brownian, 3);
        for j in 0..=4 {
            let a = ito_integrate_pairing(&ell, &s, &path, j).unwrap();
            let b = pair(&p, &s, j).unwrap();
            assert!((a - b).abs() < 1e-14, "j={j}: {a} vs {b}");
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let path = TimeExtendedPath::from_increments(0.5, &[1.0]).unwrap();
        let s = signature_stream(&path, 1, SigMode::Chen);
        let mut buf = Vec::new();
        s.write_csv(path.dt(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "j,t,word,value");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert_eq!(lines[6], "1,0.5,2,1");
    }

    #[test]
    fn rejects_bad_paths() {
        assert!(TimeExtendedPath::new(0.0, vec![0.0]).is_err());
        assert!(TimeExtendedPath::new(0.1, vec![]).is_err());
        assert!(TimeExtendedPath::new(0.1, vec![1.0, 2.0]).is_err());
    }
}
