//! Real trigonometric polynomials on the torus.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::check_dim;
use crate::torus::{Modulus, ModularPoint};

const SYMMETRY_TOL: f64 = 1e-12;

/// Real-valued trigonometric polynomial.
///
/// Only one frequency of each `±p` pair is stored (the one whose first
/// nonzero coordinate is positive); the coefficient of `−p` is the conjugate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "TrigJson", try_from = "TrigJson")]
pub struct TrigPoly {
    dim: usize,
    terms: BTreeMap<Vec<i64>, Complex64>,
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    freq: Vec<i64>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct TrigJson {
    dim: usize,
    terms: Vec<TermJson>,
}

impl From<TrigPoly> for TrigJson {
    fn from(t: TrigPoly) -> Self {
        let terms = t.full_support().into_iter().map(|(freq, c)| TermJson { freq, re: c.re, im: c.im }).collect();
        TrigJson { dim: t.dim, terms }
    }
}

impl TryFrom<TrigJson> for TrigPoly {
    type Error = crate::error::Error;

    fn try_from(j: TrigJson) -> Result<Self> {
        TrigPoly::from_terms(j.dim, j.terms.into_iter().map(|t| (t.freq, Complex64::new(t.re, t.im))))
    }
}

/// Returns the stored representative of `p` and whether `p` was negated.
fn canonical(p: &[i64]) -> (Vec<i64>, bool) {
    match p.iter().find(|&&x| x != 0) {
        Some(&x) if x < 0 => (p.iter().map(|v| -v).collect(), true),
        _ => (p.to_vec(), false),
    }
}

fn is_zero_freq(p: &[i64]) -> bool {
    p.iter().all(|&x| x == 0)
}

impl TrigPoly {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut t = Self::zero(dim);
        if c != 0.0 {
            t.terms.insert(vec![0; dim], Complex64::new(c, 0.0));
        }
        t
    }

    /// `amp · cos(2π⟨p, x⟩)`.
    pub fn cosine(p: &[i64], amp: f64) -> Self {
        Self::from_terms(p.len(), [(p.to_vec(), Complex64::new(amp / 2.0, 0.0))])
            .expect("single term is consistent")
    }

    /// `amp · sin(2π⟨p, x⟩)`.
    pub fn sine(p: &[i64], amp: f64) -> Self {
        Self::from_terms(p.len(), [(p.to_vec(), Complex64::new(0.0, -amp / 2.0))])
            .expect("single term is consistent")
    }

    /// Builds a polynomial from coefficients. A frequency given without its
    /// negative gets the conjugate coefficient there; when both are given they
    /// must be conjugate.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<i64>, Complex64)>,
    {
        let mut stored: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (p, c) in terms {
            check_dim(dim, p.len())?;
            let (key, negated) = canonical(&p);
            let c = if negated { c.conj() } else { c };
            if is_zero_freq(&key) && c.im.abs() > SYMMETRY_TOL * c.norm().max(1.0) {
                return Err(invalid("constant coefficient must be real"));
            }
            let c = if is_zero_freq(&key) { Complex64::new(c.re, 0.0) } else { c };
            if let Some(prev) = stored.get(&key) {
                if (prev - c).norm() > SYMMETRY_TOL * prev.norm().max(c.norm()).max(1.0) {
                    return Err(invalid(format!("coefficients at ±{key:?} are not conjugate")));
                }
                continue;
            }
            stored.insert(key, c);
        }
        stored.retain(|_, c| c.norm() != 0.0);
        Ok(Self { dim, terms: stored })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeff(&self, p: &[i64]) -> Complex64 {
        let (key, negated) = canonical(p);
        match self.terms.get(&key) {
            Some(c) if negated => c.conj(),
            Some(c) => *c,
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// Stored representatives with their coefficients.
    pub fn pairs(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.terms.iter()
    }

    /// Every frequency with nonzero coefficient, both signs, deterministic order.
    pub fn full_support(&self) -> Vec<(Vec<i64>, Complex64)> {
        let mut out = Vec::with_capacity(2 * self.terms.len());
        for (p, c) in &self.terms {
            out.push((p.clone(), *c));
            if !is_zero_freq(p) {
                out.push((p.iter().map(|x| -x).collect(), c.conj()));
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero_mean(&self) -> bool {
        !self.terms.contains_key(&vec![0; self.dim])
    }

    /// Largest sup norm of a frequency in the support.
    pub fn degree(&self) -> i64 {
        self.terms.keys().map(|p| p.iter().map(|x| x.abs()).max().unwrap_or(0)).max().unwrap_or(0)
    }

    pub fn center(&self) -> TrigPoly {
        let mut t = self.clone();
        t.terms.remove(&vec![0; self.dim]);
        t
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        let mut t = self.clone();
        for (p, c) in &other.terms {
            *t.terms.entry(p.clone()).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        t.terms.retain(|_, c| c.norm() != 0.0);
        t
    }

    pub fn scale(&self, s: f64) -> TrigPoly {
        let mut t = self.clone();
        for c in t.terms.values_mut() {
            *c *= s;
        }
        t.terms.retain(|_, c| c.norm() != 0.0);
        t
    }

    pub fn sub(&self, other: &TrigPoly) -> TrigPoly {
        self.add(&other.scale(-1.0))
    }

    /// `‖g‖_2² = Σ_p |ĝ(p)|²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.full_support().iter().map(|(_, c)| c.norm_sqr()).sum()
    }

    /// `Σ_p |ĝ(p)|`, an upper bound for `‖g‖_∞`.
    pub fn coeff_abs_sum(&self) -> f64 {
        self.full_support().iter().map(|(_, c)| c.norm()).sum()
    }

    /// Value at `coords / q` using exact phases `⟨p, coords⟩ mod q`.
    pub fn eval(&self, pt: &ModularPoint) -> Result<f64> {
        check_dim(self.dim, pt.dim())?;
        Ok(self.compile(pt.q).eval(&pt.coords))
    }

    /// Value at a float point of `[0,1)^d`.
    pub fn eval_unit(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (p, c) in &self.terms {
            let phase: f64 = p.iter().zip(x).map(|(&k, &t)| k as f64 * t).sum();
            let e = Complex64::from_polar(1.0, TAU * phase);
            acc += if is_zero_freq(p) { c.re } else { 2.0 * (c * e).re };
        }
        acc
    }

    pub fn compile(&self, q: Modulus) -> CompiledTrig {
        let mut constant = 0.0;
        let mut terms = Vec::with_capacity(self.terms.len());
        for (p, c) in &self.terms {
            if is_zero_freq(p) {
                constant = c.re;
            } else {
                terms.push(CompiledTerm {
                    freq: p
                        .iter()
                        .enumerate()
                        .filter(|(_, &k)| k != 0)
                        .map(|(i, &k)| (i, q.reduce_i64(k)))
                        .collect(),
                    re2: 2.0 * c.re,
                    im2: 2.0 * c.im,
                });
            }
        }
        CompiledTrig { q, constant, terms }
    }

    pub fn to_json(&self) -> Result<String> {
        let list: Vec<TermJson> = self
            .full_support()
            .into_iter()
            .map(|(freq, c)| TermJson { freq, re: c.re, im: c.im })
            .collect();
        Ok(serde_json::to_string(&list)?)
    }

    pub fn from_json(dim: usize, s: &str) -> Result<Self> {
        let list: Vec<TermJson> = serde_json::from_str(s)?;
        Self::from_terms(dim, list.into_iter().map(|t| (t.freq, Complex64::new(t.re, t.im))))
    }
}

#[derive(Clone, Debug)]
struct CompiledTerm {
    /// Nonzero coordinates `(axis, k mod q)`.
    freq: Vec<(usize, u64)>,
    re2: f64,
    im2: f64,
}

/// Polynomial with frequencies reduced modulo `q`, for hot loops.
#[derive(Clone, Debug)]
pub struct CompiledTrig {
    q: Modulus,
    constant: f64,
    terms: Vec<CompiledTerm>,
}

impl CompiledTrig {
    #[inline]
    pub fn eval(&self, coords: &[u64]) -> f64 {
        let q = self.q;
        let qf = q.value() as f64;
        let mut acc = self.constant;
        for t in &self.terms {
            let mut r = 0u64;
            for &(i, k) in &t.freq {
                let x = coords[i];
                r = q.add(r, if k == 1 { x } else { q.mul(k, x) });
            }
            let theta = TAU * (r as f64 / qf);
            if t.im2 == 0.0 {
                acc += t.re2 * theta.cos();
            } else {
                let (s, c) = theta.sin_cos();
                acc += t.re2 * c - t.im2 * s;
            }
        }
        acc
    }
}
