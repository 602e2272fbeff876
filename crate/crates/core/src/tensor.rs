//! Truncated tensor algebra over the two-letter alphabet {1, 2}.
//!
//! Letter `1` indexes the time coordinate and letter `2` the Brownian
//! coordinate of the time-extended path. Words are packed into a `u64`
//! (first letter in the most significant used bit, `1 -> 0`, `2 -> 1`), so
//! ordering by `(len, bits)` is the canonical enumeration: by length, then
//! lexicographic.
//!
//! [`TensorPoly`] is a sparse map from words to real coefficients that never
//! stores exact zeros and never holds a word longer than its `level_cap`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Longest word the packed representation supports.
pub const MAX_WORD_LEN: usize = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    Time,
    Brownian,
}

impl Letter {
    pub fn from_digit(d: u8) -> Option<Letter> {
        match d {
            1 => Some(Letter::Time),
            2 => Some(Letter::Brownian),
            _ => None,
        }
    }

    pub fn digit(self) -> u8 {
        match self {
            Letter::Time => 1,
            Letter::Brownian => 2,
        }
    }

    fn bit(self) -> u64 {
        match self {
            Letter::Time => 0,
            Letter::Brownian => 1,
        }
    }
}

/// A word over {1, 2}. The empty word is the unit `∅`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    // field order matters for the derived Ord: length first
    len: u8,
    bits: u64,
}

impl Word {
    pub const EMPTY: Word = Word { len: 0, bits: 0 };

    pub fn new(letters: &[Letter]) -> Word {
        assert!(letters.len() <= MAX_WORD_LEN, "word too long");
        let bits = letters.iter().fold(0u64, |acc, l| (acc << 1) | l.bit());
        Word { len: letters.len() as u8, bits }
    }

    /// Parses a digit string such as `"212"`; `""` and `"∅"` give the empty word.
    pub fn parse(s: &str) -> Result<Word> {
        let s = s.trim();
        if s.is_empty() || s == "∅" {
            return Ok(Word::EMPTY);
        }
        let letters = s
            .bytes()
            .map(|b| {
                b.checked_sub(b'0')
                    .and_then(Letter::from_digit)
                    .ok_or_else(|| Error::InvalidParameter(format!("bad word `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if letters.len() > MAX_WORD_LEN {
            return Err(Error::InvalidParameter(format!("word `{s}` too long")));
        }
        Ok(Word::new(&letters))
    }

    /// Builds a word from its length and packed bits.
    pub fn from_bits(len: usize, bits: u64) -> Word {
        debug_assert!(len <= MAX_WORD_LEN && (len == 64 || bits >> len == 0));
        Word { len: len as u8, bits }
    }

    pub fn len(self) -> usize {
        self.len as usize
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn letter(self, i: usize) -> Letter {
        assert!(i < self.len());
        if (self.bits >> (self.len() - 1 - i)) & 1 == 1 {
            Letter::Brownian
        } else {
            Letter::Time
        }
    }

    pub fn letters(self) -> impl Iterator<Item = Letter> {
        (0..self.len()).map(move |i| self.letter(i))
    }

    pub fn last(self) -> Option<Letter> {
        (self.len > 0).then(|| self.letter(self.len() - 1))
    }

    /// Word with `letter` appended on the right.
    pub fn push(self, letter: Letter) -> Word {
        assert!(self.len() < MAX_WORD_LEN, "word too long");
        Word { len: self.len + 1, bits: (self.bits << 1) | letter.bit() }
    }

    /// Word with the last letter removed.
    pub fn pop(self) -> Option<(Word, Letter)> {
        let last = self.last()?;
        Some((Word { len: self.len - 1, bits: self.bits >> 1 }, last))
    }

    /// Concatenation `self · other`.
    pub fn concat(self, other: Word) -> Word {
        assert!(self.len() + other.len() <= MAX_WORD_LEN, "word too long");
        Word { len: self.len + other.len, bits: (self.bits << other.len) | other.bits }
    }

    /// Position of this word in the dense basis (all words of length `<= n`
    /// enumerated by length, then lexicographically).
    pub fn dense_index(self) -> usize {
        ((1usize << self.len()) - 1) + self.bits as usize
    }

    /// Inverse of [`Word::dense_index`].
    pub fn from_dense_index(idx: usize) -> Word {
        let len = usize::BITS as usize - 1 - (idx + 1).leading_zeros() as usize;
        Word::from_bits(len, (idx + 1 - (1 << len)) as u64)
    }

    /// All words of length exactly `n`, in canonical order.
    pub fn all_of_len(n: usize) -> impl Iterator<Item = Word> {
        assert!(n < 63);
        (0..(1u64 << n)).map(move |b| Word::from_bits(n, b))
    }
}

/// Number of words of length `<= n`, i.e. `2^(n+1) - 1`.
pub fn basis_dim(n: usize) -> usize {
    (1usize << (n + 1)) - 1
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("∅");
        }
        for l in self.letters() {
            write!(f, "{}", l.digit())?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

/// All interleavings of two words, with multiplicity, via the recursion
/// `ua ⧢ vb = (u ⧢ vb)a + (ua ⧢ v)b`.
pub fn shuffle_words(u: Word, v: Word) -> BTreeMap<Word, u64> {
    let mut out = BTreeMap::new();
    shuffle_words_into(u, v, Word::EMPTY, 1, &mut out);
    out
}

// Accumulates `(u ⧢ v) · suffix` with the given multiplicity. Working from the
// right keeps the recursion a straight peel of last letters.
fn shuffle_words_into(u: Word, v: Word, suffix: Word, mult: u64, out: &mut BTreeMap<Word, u64>) {
    match (u.pop(), v.pop()) {
        (None, _) => *out.entry(v.concat(suffix)).or_insert(0) += mult,
        (_, None) => *out.entry(u.concat(suffix)).or_insert(0) += mult,
        (Some((u_head, a)), Some((v_head, b))) => {
            let sa = Word::new(&[a]).concat(suffix);
            let sb = Word::new(&[b]).concat(suffix);
            shuffle_words_into(u_head, v, sa, mult, out);
            shuffle_words_into(u, v_head, sb, mult, out);
        }
    }
}

/// Sparse real-coefficient polynomial over words, truncated at `level_cap`.
#[derive(Clone, PartialEq)]
pub struct TensorPoly {
    level_cap: usize,
    terms: BTreeMap<Word, f64>,
}

impl TensorPoly {
    pub fn zero(level_cap: usize) -> TensorPoly {
        TensorPoly { level_cap, terms: BTreeMap::new() }
    }

    /// The unit `{∅: 1}`.
    pub fn unit(level_cap: usize) -> TensorPoly {
        TensorPoly::monomial(Word::EMPTY, 1.0, level_cap)
    }

    pub fn monomial(word: Word, coeff: f64, level_cap: usize) -> TensorPoly {
        TensorPoly::from_terms(level_cap, [(word, coeff)])
    }

    /// Builds a polynomial from `(word, coeff)` pairs. Repeated words are
    /// summed; words longer than `level_cap` are dropped.
    pub fn from_terms(level_cap: usize, terms: impl IntoIterator<Item = (Word, f64)>) -> TensorPoly {
        let mut map = BTreeMap::new();
        for (w, c) in terms {
            if w.len() <= level_cap {
                *map.entry(w).or_insert(0.0) += c;
            }
        }
        let mut p = TensorPoly { level_cap, terms: map };
        p.canonicalize();
        p
    }

    /// Builds a polynomial from a dense coefficient vector in canonical word order.
    pub fn from_dense(level_cap: usize, coeffs: &[f64]) -> TensorPoly {
        assert!(coeffs.len() <= basis_dim(level_cap));
        TensorPoly::from_terms(
            level_cap,
            coeffs.iter().enumerate().map(|(i, &c)| (Word::from_dense_index(i), c)),
        )
    }

    /// Dense coefficient vector of length `2^(level_cap+1) - 1`.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; basis_dim(self.level_cap)];
        for (w, c) in &self.terms {
            out[w.dense_index()] = *c;
        }
        out
    }

    fn canonicalize(&mut self) {
        self.terms.retain(|_, c| *c != 0.0);
    }

    pub fn level_cap(&self) -> usize {
        self.level_cap
    }

    /// Length of the longest word carrying a nonzero coefficient.
    pub fn degree(&self) -> Option<usize> {
        self.terms.keys().map(|w| w.len()).max()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, w: Word) -> f64 {
        self.terms.get(&w).copied().unwrap_or(0.0)
    }

    /// Coefficient of the word written as a digit string. Panics on a malformed word.
    pub fn get(&self, word: &str) -> f64 {
        self.coeff(Word::parse(word).expect("malformed word"))
    }

    pub fn constant(&self) -> f64 {
        self.coeff(Word::EMPTY)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Word, f64)> + '_ {
        self.terms.iter().map(|(w, c)| (*w, *c))
    }
    /// Keeps words of length `<= n`; the cap becomes `min(n, level_cap)`.
    pub fn project(&self, n: usize) -> TensorPoly {
        TensorPoly {
            level_cap: n.min(self.level_cap),
            terms: self.terms.iter().filter(|(w, _)| w.len() <= n).map(|(w, c)| (*w, *c)).collect(),
        }
    }

    pub fn add(&self, other: &TensorPoly) -> TensorPoly {
        let cap = self.level_cap.max(other.level_cap);
        TensorPoly::from_terms(cap, self.iter().chain(other.iter()))
    }

    pub fn sub(&self, other: &TensorPoly) -> TensorPoly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> TensorPoly {
        TensorPoly::from_terms(self.level_cap, self.iter().map(|(w, x)| (w, x * c)))
    }

    /// Shuffle product truncated at `cap`.
    pub fn shuffle(&self, other: &TensorPoly, cap: usize) -> TensorPoly {
        let mut acc: BTreeMap<Word, f64> = BTreeMap::new();
        for (u, a) in self.iter() {
            for (v, b) in other.iter() {
                if u.len() + v.len() > cap {
                    continue;
                }
                for (w, mult) in shuffle_words(u, v) {
                    *acc.entry(w).or_insert(0.0) += a * b * mult as f64;
                }
            }
        }
        TensorPoly::from_terms(cap, acc)
    }

    /// Concatenation (tensor) product truncated at `cap`: `(a ⊗ b)(uv) += a(u) b(v)`.
    pub fn concat(&self, other: &TensorPoly, cap: usize) -> TensorPoly {
        let mut acc: BTreeMap<Word, f64> = BTreeMap::new();
        for (u, a) in self.iter() {
            for (v, b) in other.iter() {
                if u.len() + v.len() <= cap {
                    *acc.entry(u.concat(v)).or_insert(0.0) += a * b;
                }
            }
        }
        TensorPoly::from_terms(cap, acc)
    }

    /// `Σ_{n=0..cap} self^{⧢n} / n!`. The constant term must vanish so that the
    /// `n`-th power starts at level `n` and the truncated series is exact.
    pub fn shuffle_exp(&self, cap: usize) -> Result<TensorPoly> {
        let c = self.constant();
        if c != 0.0 {
            return Err(Error::NonzeroConstantTerm(c));
        }
        let mut term = TensorPoly::unit(cap);
        let mut sum = term.clone();
        for n in 1..=cap {
            term = term.shuffle(self, cap).scale(1.0 / n as f64);
            if term.is_zero() {
                break;
            }
            sum = sum.add(&term);
        }
        Ok(sum)
    }

    /// Shift `w -> w·letter`; words already at length `cap` are dropped.
    pub fn append_letter(&self, letter: Letter, cap: usize) -> TensorPoly {
        assert!(cap >= 1, "append_letter needs cap >= 1");
        TensorPoly::from_terms(
            cap,
            self.iter().filter(|(w, _)| w.len() < cap).map(|(w, c)| (w.push(letter), c)),
        )
    }

    /// Largest absolute difference over the union of supports.
    pub fn max_abs_diff(&self, other: &TensorPoly) -> f64 {
        self.sub(other).iter().map(|(_, c)| c.abs()).fold(0.0, f64::max)
    }
}

impl fmt::Debug for TensorPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TensorPoly[cap={}]({})", self.level_cap, self)
    }
}

/// Renders as `coeff*word` terms joined by ` + `, e.g. `0.1*∅ + 0.15*1 + 1.2*2`.
/// The zero polynomial renders as `0`.
impl fmt::Display for TensorPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (w, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{c}*{w}")?;
        }
        Ok(())
    }
}

/// Parses the textual rendering. The level cap is the longest word present.
impl FromStr for TensorPoly {
    type Err = Error;

    fn from_str(s: &str) -> Result<TensorPoly> {
        let s = s.trim();
        if s == "0" || s.is_empty() {
            return Ok(TensorPoly::zero(0));
        }
        let mut terms = Vec::new();
        for part in s.split(" + ") {
            let (c, w) = part
                .rsplit_once('*')
                .ok_or_else(|| Error::InvalidParameter(format!("bad term `{part}`")))?;
            let c: f64 = c
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad coefficient `{c}`")))?;
            terms.push((Word::parse(w)?, c));
        }
        let cap = terms.iter().map(|(w, _)| w.len()).max().unwrap_or(0);
        Ok(TensorPoly::from_terms(cap, terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    fn poly(cap: usize, terms: &[(&str, f64)]) -> TensorPoly {
        TensorPoly::from_terms(cap, terms.iter().map(|(s, c)| (w(s), *c)))
    }

    // all interleavings by choosing which positions take letters of `u`
    fn brute_interleavings(u: Word, v: Word) -> BTreeMap<Word, u64> {
        let (p, q) = (u.len(), v.len());
        let mut out = BTreeMap::new();
        for mask in 0u32..(1 << (p + q)) {
            if mask.count_ones() as usize != p {
                continue;
            }
            let (mut iu, mut iv) = (0, 0);
            let mut letters = Vec::new();
            for pos in 0..p + q {
                if mask >> pos & 1 == 1 {
                    letters.push(u.letter(iu));
                    iu += 1;
                } else {
                    letters.push(v.letter(iv));
                    iv += 1;
                }
            }
            *out.entry(Word::new(&letters)).or_insert(0) += 1;
        }
        out
    }

    #[test]
    fn word_order_is_length_then_lexicographic() {
        let words: Vec<Word> = (0..basis_dim(3)).map(Word::from_dense_index).collect();
        let rendered: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        assert_eq!(&rendered[..7], &["∅", "1", "2", "11", "12", "21", "22"]);
        assert!(words.windows(2).all(|p| p[0] < p[1]));
        for (i, w) in words.iter().enumerate() {
            assert_eq!(w.dense_index(), i);
        }
    }

    #[test]
    fn words_per_level_is_power_of_two() {
        for n in 0..8 {
            assert_eq!(Word::all_of_len(n).count(), 1 << n);
        }
    }

    #[test]
    fn shuffle_of_letters() {
        let a = poly(1, &[("1", 1.0)]);
        let b = poly(1, &[("2", 1.0)]);
        assert_eq!(a.shuffle(&b, 2), poly(2, &[("12", 1.0), ("21", 1.0)]));
    }

    #[test]
    fn shuffle_unit_law() {
        let a = poly(3, &[("∅", 0.5), ("12", -2.0), ("211", 3.0)]);
        assert_eq!(TensorPoly::unit(3).shuffle(&a, 3), a);
        assert_eq!(a.shuffle(&TensorPoly::unit(3), 3), a);
    }

    #[test]
    fn shuffle_11_with_2() {
        let a = poly(2, &[("11", 1.0)]);
        let b = poly(1, &[("2", 1.0)]);
        let expected = brute_interleavings(w("11"), w("2"));
        assert_eq!(expected.values().sum::<u64>(), 3);
        assert_eq!(a.shuffle(&b, 3), poly(3, &[("112", 1.0), ("121", 1.0), ("211", 1.0)]));
    }

    #[test]
    fn shuffle_truncates_at_cap() {
        let a = poly(2, &[("11", 1.0), ("2", 1.0)]);
        let b = poly(1, &[("2", 1.0)]);
        assert_eq!(a.shuffle(&b, 2), poly(2, &[("22", 2.0)]));
    }

    #[test]
    fn recursive_shuffle_matches_brute_force() {
        for lu in 0..4 {
            for lv in 0..4 {
                for u in Word::all_of_len(lu) {
                    for v in Word::all_of_len(lv) {
                        let got = shuffle_words(u, v);
                        assert_eq!(got, brute_interleavings(u, v), "{u} ⧢ {v}");
                        let total: u64 = got.values().sum();
                        assert_eq!(total, binomial(lu + lv, lu));
                    }
                }
            }
        }
    }

    fn binomial(n: usize, k: usize) -> u64 {
        (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
    }

    #[test]
    fn shuffle_exp_time_letter() {
        let k = 0.7;
        let e = poly(1, &[("1", -k)]).shuffle_exp(3).unwrap();
        let expected = poly(3, &[("∅", 1.0), ("1", -k), ("11", k * k), ("111", -k * k * k)]);
        assert!(e.max_abs_diff(&expected) < 1e-15, "{e}");
    }

    #[test]
    fn shuffle_exp_of_zero_is_unit() {
        assert_eq!(TensorPoly::zero(2).shuffle_exp(4).unwrap(), TensorPoly::unit(4));
    }

    #[test]
    fn shuffle_exp_two_letters() {
        let (l, s) = (-1.3, 0.4);
        let e = poly(1, &[("1", l), ("2", s)]).shuffle_exp(2).unwrap();
        let expected = poly(
            2,
            &[("∅", 1.0), ("1", l), ("2", s), ("11", l * l), ("12", l * s), ("21", l * s), ("22", s * s)],
        );
        assert!(e.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn shuffle_exp_rejects_constant_term() {
        let err = poly(1, &[("∅", 1.0), ("1", 1.0)]).shuffle_exp(3).unwrap_err();
        assert!(matches!(err, Error::NonzeroConstantTerm(c) if c == 1.0));
    }

    #[test]
    fn append_letter_shift() {
        let (v0, k, th, eta) = (0.1, 1.0, 0.25, 1.2);
        let a = poly(3, &[("∅", v0), ("1", -k * (v0 - th)), ("2", eta)]);
        let p = a.append_letter(Letter::Brownian, 3);
        assert_eq!(p, poly(3, &[("2", v0), ("12", -k * (v0 - th)), ("22", eta)]));
        assert_eq!(p.constant(), 0.0);
        assert!(TensorPoly::zero(3).append_letter(Letter::Time, 3).is_zero());
        assert_eq!(TensorPoly::unit(1).append_letter(Letter::Time, 1), poly(1, &[("1", 1.0)]));
    }

    #[test]
    fn append_letter_drops_top_level() {
        let a = poly(2, &[("2", 1.0), ("12", 5.0)]);
        assert_eq!(a.append_letter(Letter::Brownian, 2), poly(2, &[("22", 1.0)]));
    }

    #[test]
    fn projection() {
        let a = poly(2, &[("∅", 1.0), ("1", 2.0), ("11", 3.0)]);
        assert_eq!(a.project(1), poly(1, &[("∅", 1.0), ("1", 2.0)]));
        assert_eq!(a.project(2), a);
        assert_eq!(a.project(2).project(1), a.project(1));
        assert_eq!(a.project(1).project(2), a.project(1).project(1));
    }

    #[test]
    fn add_and_scale_canonicalize() {
        assert!(poly(1, &[("1", 1.0)]).add(&poly(1, &[("1", -1.0)])).is_zero());
        assert!(poly(2, &[("12", 4.0)]).scale(0.0).is_zero());
        assert_eq!(
            poly(1, &[("1", 2.0)]).add(&poly(1, &[("2", 3.0)])),
            poly(1, &[("1", 2.0), ("2", 3.0)])
        );
        assert_eq!(poly(1, &[("1", 1.0)]).add(&poly(3, &[])).level_cap(), 3);
    }

    #[test]
    fn concat_product() {
        let a = poly(1, &[("∅", 2.0), ("2", 1.0)]);
        let b = poly(1, &[("1", 3.0)]);
        assert_eq!(a.concat(&b, 2), poly(2, &[("1", 6.0), ("21", 3.0)]));
        assert_eq!(a.concat(&b, 1), poly(1, &[("1", 6.0)]));
    }

    #[test]
    fn textual_rendering() {
        let a = poly(1, &[("∅", 0.1), ("1", 0.15), ("2", 1.2)]);
        assert_eq!(a.to_string(), "0.1*∅ + 0.15*1 + 1.2*2");
        assert_eq!(a.to_string().parse::<TensorPoly>().unwrap(), a);
        assert_eq!(TensorPoly::zero(3).to_string(), "0");
    }

    #[test]
    fn dense_round_trip() {
        let a = poly(3, &[("∅", 1.0), ("21", -2.0), ("122", 0.5)]);
        assert_eq!(TensorPoly::from_dense(3, &a.to_dense()), a);
    }
}
