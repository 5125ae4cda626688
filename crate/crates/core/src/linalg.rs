//! Exact integer matrices, alphabets, words and Iwasawa factors.

use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 8;

/// Natural log of `|x|`, accurate for integers of any size. `x` must be nonzero.
pub fn ln_abs(x: &BigInt) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        x.to_f64().unwrap_or(f64::NAN).abs().ln()
    } else {
        let shift = bits - 64;
        let top = (x.magnitude() >> shift).to_f64().unwrap_or(f64::NAN);
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }
}

/// Natural log of `|r|` for a nonzero rational.
pub fn ln_abs_ratio(r: &BigRational) -> f64 {
    ln_abs(r.numer()) - ln_abs(r.denom())
}

/// Float value of a rational without overflow in intermediate steps.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let s = if r.is_negative() { -1.0 } else { 1.0 };
    s * ln_abs_ratio(r).exp()
}

/// Integer that serializes as a JSON number when it fits in 53 bits and as a
/// decimal string otherwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JsonInt(pub BigInt);

const JSON_SAFE: i64 = 1 << 53;

impl Serialize for JsonInt {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0.to_i64() {
            Some(v) if v.abs() <= JSON_SAFE => s.serialize_i64(v),
            _ => s.serialize_str(&self.0.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for JsonInt {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            I(i64),
            U(u64),
            S(String),
        }
        Ok(JsonInt(match Repr::deserialize(d)? {
            Repr::I(v) => BigInt::from(v),
            Repr::U(v) => BigInt::from(v),
            Repr::S(s) => s
                .trim()
                .parse::<BigInt>()
                .map_err(|e| de::Error::custom(format!("bad integer {s:?}: {e}")))?,
        }))
    }
}

/// Square integer matrix of dimension 2..=8, stored row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IntMatrix {
    dim: usize,
    entries: Vec<BigInt>,
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.dim {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for j in 0..self.dim {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

impl IntMatrix {
    pub fn new(rows: Vec<Vec<BigInt>>) -> Result<Self> {
        let dim = rows.len();
        if !(MIN_DIM..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            entries.extend(row);
        }
        Ok(Self { dim, entries })
    }

    pub fn from_i64(rows: &[Vec<i64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect())
    }

    /// Convenience constructor for 2×2 matrices.
    pub fn m2(a: i64, b: i64, c: i64, d: i64) -> Self {
        Self::from_i64(&[vec![a, b], vec![c, d]]).expect("2x2 is a valid dimension")
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let mut entries = vec![BigInt::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = BigInt::one();
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<BigInt>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn row(&self, i: usize) -> &[BigInt] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mul(&self, other: &IntMatrix) -> Result<IntMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let d = self.dim;
        let mut entries = vec![BigInt::zero(); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..d {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        entries[i * d + j] += a * b;
                    }
                }
            }
        }
        Ok(IntMatrix { dim: d, entries })
    }

    /// `self · v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[BigInt]) -> Result<Vec<BigInt>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        Ok((0..self.dim)
            .map(|i| {
                let mut acc = BigInt::zero();
                for (a, x) in self.row(i).iter().zip(v) {
                    if !a.is_zero() && !x.is_zero() {
                        acc += a * x;
                    }
                }
                acc
            })
            .collect())
    }

    pub fn transpose(&self) -> IntMatrix {
        let d = self.dim;
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                entries.push(self.get(j, i).clone());
            }
        }
        IntMatrix { dim: d, entries }
    }

    pub fn trace(&self) -> BigInt {
        (0..self.dim).map(|i| self.get(i, i).clone()).sum()
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> BigInt {
        let d = self.dim;
        if d == 2 {
            return self.get(0, 0) * self.get(1, 1) - self.get(0, 1) * self.get(1, 0);
        }
        let mut a = self.entries.clone();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..d - 1 {
            if a[k * d + k].is_zero() {
                match (k + 1..d).find(|&r| !a[r * d + k].is_zero()) {
                    Some(r) => {
                        for j in 0..d {
                            a.swap(k * d + j, r * d + j);
                        }
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..d {
                for j in k + 1..d {
                    let v = &a[i * d + j] * &a[k * d + k] - &a[i * d + k] * &a[k * d + j];
                    a[i * d + j] = v.div_floor(&prev);
                }
            }
            prev = a[k * d + k].clone();
        }
        sign * &a[d * d - 1]
    }

    /// Induced max-row-sum norm, compatible with the sup norm on vectors.
    pub fn sup_norm(&self) -> BigInt {
        self.entries
            .chunks(self.dim)
            .map(|r| r.iter().map(|x| x.abs()).sum::<BigInt>())
            .max()
            .unwrap_or_default()
    }

    pub fn is_positive(&self) -> bool {
        self.entries.iter().all(|x| x >= &BigInt::one())
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        self.rows()
            .iter()
            .map(|r| r.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect())
            .collect()
    }

    pub fn to_json_rows(&self) -> Vec<Vec<JsonInt>> {
        self.rows().into_iter().map(|r| r.into_iter().map(JsonInt).collect()).collect()
    }

    /// Small entries as machine integers, if they all fit.
    pub fn to_i64_rows(&self) -> Option<Vec<Vec<i64>>> {
        self.rows().iter().map(|r| r.iter().map(|x| x.to_i64()).collect()).collect()
    }
}

/// A labeled alphabet member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Letter {
    pub label: String,
    pub matrix: IntMatrix,
}

#[derive(Serialize, Deserialize)]
struct LetterSpec {
    label: String,
    rows: Vec<Vec<JsonInt>>,
}

/// Finite nonempty set of unimodular matrices of a common dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    letters: Vec<Letter>,
    dim: usize,
    positive: bool,
}

impl Alphabet {
    pub fn new(letters: Vec<Letter>) -> Result<Self> {
        let first = letters.first().ok_or(Error::EmptyAlphabet)?;
        let dim = first.matrix.dim();
        for l in &letters {
            if l.matrix.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: l.matrix.dim() });
            }
            let det = l.matrix.det();
            if det.abs() != BigInt::one() {
                return Err(Error::NotUnimodular(det.to_string()));
            }
        }
        let positive = letters.iter().all(|l| l.matrix.is_positive());
        Ok(Self { letters, dim, positive })
    }

    /// Alphabet with labels `A`, `B`, ... in order.
    pub fn from_matrices(ms: Vec<IntMatrix>) -> Result<Self> {
        let letters = ms
            .into_iter()
            .enumerate()
            .map(|(i, matrix)| Letter { label: default_label(i), matrix })
            .collect();
        Self::new(letters)
    }

    /// The two-letter positive alphabet `{[[2,1],[1,1]], [[1,1],[1,2]]}`.
    pub fn standard_positive() -> Self {
        Self::from_matrices(vec![IntMatrix::m2(2, 1, 1, 1), IntMatrix::m2(1, 1, 1, 2)])
            .expect("standard alphabet is unimodular")
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn matrix(&self, k: usize) -> &IntMatrix {
        &self.letters[k].matrix
    }

    pub fn to_json(&self) -> Result<String> {
        let specs: Vec<LetterSpec> = self
            .letters
            .iter()
            .map(|l| LetterSpec { label: l.label.clone(), rows: l.matrix.to_json_rows() })
            .collect();
        Ok(serde_json::to_string(&specs)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let specs: Vec<LetterSpec> = serde_json::from_str(s)?;
        Self::from_specs(specs.into_iter().map(|s| (s.label, s.rows)).collect())
    }

    pub fn from_specs(specs: Vec<(String, Vec<Vec<JsonInt>>)>) -> Result<Self> {
        let letters = specs
            .into_iter()
            .map(|(label, rows)| {
                let rows = rows.into_iter().map(|r| r.into_iter().map(|x| x.0).collect()).collect();
                Ok(Letter { label, matrix: IntMatrix::new(rows)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(letters)
    }
}

fn default_label(i: usize) -> String {
    if i < 26 {
        ((b'A' + i as u8) as char).to_string()
    } else {
        format!("L{i}")
    }
}

/// Finite word over an alphabet. Positions are 1-based in the public API.
#[derive(Clone, Debug)]
pub struct Word {
    alphabet: Arc<Alphabet>,
    indices: Vec<usize>,
}

impl Word {
    pub fn new(alphabet: Arc<Alphabet>, indices: Vec<usize>) -> Result<Self> {
        if let Some(&k) = indices.iter().find(|&&k| k >= alphabet.len()) {
            return Err(Error::IndexOutOfRange(format!(
                "letter index {k} for alphabet of size {}",
                alphabet.len()
            )));
        }
        Ok(Self { alphabet, indices })
    }

    /// Word of `n` copies of letter `k`.
    pub fn constant(alphabet: Arc<Alphabet>, k: usize, n: usize) -> Result<Self> {
        Self::new(alphabet, vec![k; n])
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.alphabet.dim()
    }

    /// Matrix at 1-based position `k`.
    pub fn letter(&self, k: usize) -> Result<&IntMatrix> {
        if k == 0 || k > self.len() {
            return Err(Error::IndexOutOfRange(format!("position {k} in word of length {}", self.len())));
        }
        Ok(self.alphabet.matrix(self.indices[k - 1]))
    }

    pub fn prefix(&self, n: usize) -> Result<Word> {
        if n > self.len() {
            return Err(Error::IndexOutOfRange(format!("prefix {n} of word of length {}", self.len())));
        }
        Ok(Word { alphabet: self.alphabet.clone(), indices: self.indices[..n].to_vec() })
    }

    /// `A_i A_{i+1} ... A_j` for `1 <= i <= j <= len`.
    pub fn product(&self, i: usize, j: usize) -> Result<IntMatrix> {
        if i == 0 || i > j || j > self.len() {
            return Err(Error::IndexOutOfRange(format!(
                "product({i}, {j}) in word of length {}",
                self.len()
            )));
        }
        let mut acc = self.alphabet.matrix(self.indices[i - 1]).clone();
        for k in i..j {
            acc = acc.mul(self.alphabet.matrix(self.indices[k]))?;
        }
        Ok(acc)
    }

    /// Iterator over the prefix products `P_0 = I, P_1 = A_1, ..., P_len`.
    pub fn prefix_products(&self) -> PrefixProducts<'_> {
        PrefixProducts { word: self, next: 0, current: None }
    }
}

pub struct PrefixProducts<'a> {
    word: &'a Word,
    next: usize,
    current: Option<IntMatrix>,
}

impl Iterator for PrefixProducts<'_> {
    type Item = IntMatrix;

    fn next(&mut self) -> Option<IntMatrix> {
        if self.next > self.word.len() {
            return None;
        }
        let m = match self.current.take() {
            None => IntMatrix::identity(self.word.dim()).expect("alphabet dimension is valid"),
            Some(prev) => prev
                .mul(self.word.alphabet.matrix(self.word.indices[self.next - 1]))
                .expect("letters share the alphabet dimension"),
        };
        self.next += 1;
        self.current = Some(m.clone());
        Some(m)
    }
}

/// `M = N · diag(exp(log_diag)) · K` with `N` unit upper triangular and `K`
/// orthogonal. Matrices are row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IwasawaFactors {
    pub dim: usize,
    pub n_factor: Vec<f64>,
    pub log_diag: Vec<f64>,
    pub k_factor: Vec<f64>,
}

impl IwasawaFactors {
    /// Index (0-based) of the largest diagonal entry.
    pub fn dominant_index(&self) -> usize {
        let mut best = 0;
        for i in 1..self.dim {
            if self.log_diag[i] > self.log_diag[best] {
                best = i;
            }
        }
        best
    }

    /// Max-row-sum norm of the unipotent factor.
    pub fn n_norm(&self) -> f64 {
        self.n_factor
            .chunks(self.dim)
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `N · D · K` in floating point. Overflows for very long words.
    pub fn reconstruct(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in i..d {
                    acc += self.n_factor[i * d + k] * self.log_diag[k].exp() * self.k_factor[k * d + j];
                }
                out[i * d + j] = acc;
            }
        }
        out
    }

    /// Max-abs entry of `K Kᵗ − I`.
    pub fn orthogonality_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = (0..d).map(|k| self.k_factor[i * d + k] * self.k_factor[j * d + k]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Signed float with a log-magnitude, used for entries that may overflow.
fn signed_exp(sign: Sign, ln_mag: f64) -> f64 {
    match sign {
        Sign::Minus => -ln_mag.exp(),
        Sign::NoSign => 0.0,
        Sign::Plus => ln_mag.exp(),
    }
}

fn rational_to_signed_ln(r: &BigRational) -> (Sign, f64) {
    if r.is_zero() {
        (Sign::NoSign, f64::NEG_INFINITY)
    } else {
        let sign = if r.is_negative() { Sign::Minus } else { Sign::Plus };
        (sign, ln_abs_ratio(r))
    }
}

/// Iwasawa factors by exact Gram-Schmidt on the rows, last row first.
///
/// All inner products are exact rationals, so the diagonal logs are accurate
/// for arbitrarily long words; only the final conversion to floats rounds.
pub fn iwasawa(m: &IntMatrix) -> Result<IwasawaFactors> {
    if m.det().is_zero() {
        return Err(Error::Singular);
    }
    if m.dim() == 2 {
        return Ok(iwasawa_2x2(m));
    }
    let d = m.dim();
    let rows: Vec<Vec<BigRational>> = (0..d)
        .map(|i| m.row(i).iter().map(|x| BigRational::from_integer(x.clone())).collect())
        .collect();
    let dot = |a: &[BigRational], b: &[BigRational]| -> BigRational {
        a.iter().zip(b).fold(BigRational::zero(), |acc, (x, y)| acc + x * y)
    };
    let mut ortho: Vec<Vec<BigRational>> = vec![Vec::new(); d];
    let mut norms: Vec<BigRational> = vec![BigRational::zero(); d];
    let mut mu = vec![vec![BigRational::zero(); d]; d];
    for i in (0..d).rev() {
        let mut b = rows[i].clone();
        for j in i + 1..d {
            let coef = dot(&rows[i], &ortho[j]) / &norms[j];
            for (bk, ok) in b.iter_mut().zip(&ortho[j]) {
                *bk -= &coef * ok;
            }
            mu[i][j] = coef;
        }
        norms[i] = dot(&b, &b);
        ortho[i] = b;
    }
    let log_diag: Vec<f64> = norms.iter().map(|n| 0.5 * ln_abs_ratio(n)).collect();
    let mut n_factor = vec![0.0; d * d];
    let mut k_factor = vec![0.0; d * d];
    for i in 0..d {
        n_factor[i * d + i] = 1.0;
        for j in i + 1..d {
            n_factor[i * d + j] = ratio_to_f64(&mu[i][j]);
        }
        for k in 0..d {
            let (s, l) = rational_to_signed_ln(&ortho[i][k]);
            k_factor[i * d + k] = signed_exp(s, l - log_diag[i]);
        }
    }
    Ok(IwasawaFactors { dim: d, n_factor, log_diag, k_factor })
}

fn iwasawa_2x2(m: &IntMatrix) -> IwasawaFactors {
    let (a, b, c, dd) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
    let norm2 = c * c + dd * dd;
    let log_a2 = 0.5 * ln_abs(&norm2);
    let det = m.det();
    let log_a1 = ln_abs(&det) - log_a2;
    let k21 = signed_exp(c.sign(), if c.is_zero() { 0.0 } else { ln_abs(c) - log_a2 });
    let k22 = signed_exp(dd.sign(), if dd.is_zero() { 0.0 } else { ln_abs(dd) - log_a2 });
    let s = if det.is_negative() { -1.0 } else { 1.0 };
    let (k11, k12) = (s * k22, -s * k21);
    let mu = BigRational::new(a * c + b * dd, norm2);
    IwasawaFactors {
        dim: 2,
        n_factor: vec![1.0, ratio_to_f64(&mu), 0.0, 1.0],
        log_diag: vec![log_a1, log_a2],
        k_factor: vec![k11, k12, k21, k22],
    }
}

/// `log a_i − log a_{i+1}` for `i = 1..d−1`.
pub fn diag_log_ratios(f: &IwasawaFactors) -> Vec<f64> {
    f.log_diag.windows(2).map(|w| w[0] - w[1]).collect()
}

/// Uniform random word over `alphabet` (used by tests and samplers).
pub fn random_indices<R: rand::Rng>(rng: &mut R, alphabet_len: usize, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..alphabet_len)).collect()
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}
