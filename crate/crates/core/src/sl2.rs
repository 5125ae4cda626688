//! Positive 2×2 unimodular alphabets: spectral data, cone entry and
//! effective dilation constants.

use std::path::Path;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::lattice::FreqVector;
use crate::linalg::{ln_abs, Alphabet, IntMatrix, Word};
use crate::rng;

pub const DEFAULT_SAMPLE_BUDGET: usize = 10_000;
const MAX_NORM: i64 = 1_000_000;
const MAX_WORD: usize = 60;
const SLOPE_DEPTH: usize = 6;
const GROWTH_DEPTH: usize = 6;
const REFIT_ROUNDS: usize = 3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralData {
    pub r: f64,
    pub s: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub lambda: f64,
}

impl SpectralData {
    /// `[[(r−s)u+s, −(r−s)v], [(r−s)w, −(r−s)u+r]]`.
    pub fn reconstruct(&self) -> [[f64; 2]; 2] {
        let g = self.r - self.s;
        [[g * self.u + self.s, -g * self.v], [g * self.w, -g * self.u + self.r]]
    }
}

fn require_positive_2x2(m: &IntMatrix) -> Result<()> {
    if m.dim() != 2 {
        return Err(Error::UnsupportedDimension(m.dim()));
    }
    if !m.is_positive() {
        return Err(invalid("matrix entries must all be at least 1"));
    }
    if m.det() != BigInt::from(1) {
        return Err(Error::NotUnimodular("determinant must be 1".into()));
    }
    Ok(())
}

pub fn spectral(m: &IntMatrix) -> Result<SpectralData> {
    require_positive_2x2(m)?;
    let tr = m.trace();
    if tr <= BigInt::from(2) {
        return Err(Error::NonHyperbolic(format!("trace {tr}")));
    }
    let f = |x: &BigInt| x.to_f64().unwrap_or(f64::INFINITY);
    let t = f(&tr);
    let r = (t + (t * t - 4.0).sqrt()) / 2.0;
    let s = 1.0 / r;
    let g = r - s;
    let u = (f(m.get(0, 0)) - s) / g;
    let v = -f(m.get(0, 1)) / g;
    let w = f(m.get(1, 0)) / g;
    Ok(SpectralData { r, s, u, v, w, lambda: w / u })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeEntry {
    /// First `ℓ` with `P_ℓ p` in a closed quadrant cone.
    pub closed: usize,
    /// First `ℓ` with `P_ℓ p` in an open quadrant cone, if reached within the cap.
    pub strict: Option<usize>,
}

fn cone_state(v: &[BigInt]) -> (bool, bool) {
    let nonneg = v.iter().all(|x| !x.is_negative());
    let nonpos = v.iter().all(|x| !x.is_positive());
    let pos = v.iter().all(|x| x.is_positive());
    let neg = v.iter().all(|x| x.is_negative());
    (nonneg || nonpos, pos || neg)
}

pub fn cone_entry_time(word: &Word, p: &FreqVector, cap: usize) -> Result<ConeEntry> {
    if word.dim() != 2 {
        return Err(Error::UnsupportedDimension(word.dim()));
    }
    crate::linalg::check_dim(2, p.dim())?;
    if p.is_zero() {
        return Err(invalid("frequency must be nonzero"));
    }
    let limit = cap.min(word.len());
    let mut closed = None;
    for (ell, m) in word.prefix_products().take(limit + 1).enumerate() {
        let v = m.mul_vec(&p.0)?;
        let (c, s) = cone_state(&v);
        if c && closed.is_none() {
            closed = Some(ell);
        }
        if s {
            return Ok(ConeEntry { closed: closed.unwrap_or(ell), strict: Some(ell) });
        }
    }
    match closed {
        Some(closed) => Ok(ConeEntry { closed, strict: None }),
        None => Err(Error::NotWithinCap(limit)),
    }
}

fn products_up_to(alphabet: &Alphabet, depth: usize) -> Result<Vec<Vec<IntMatrix>>> {
    let mut levels: Vec<Vec<IntMatrix>> = vec![vec![IntMatrix::identity(alphabet.dim())?]];
    for k in 0..depth {
        let mut next = Vec::with_capacity(levels[k].len() * alphabet.len());
        for m in &levels[k] {
            for l in alphabet.letters() {
                next.push(m.mul(&l.matrix)?);
            }
        }
        levels.push(next);
    }
    Ok(levels)
}

/// Extreme column slopes over all products of length `1..=depth`.
pub fn slope_bounds(alphabet: &Alphabet, depth: usize) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for level in products_up_to(alphabet, depth)?.iter().skip(1) {
        for m in level {
            for j in 0..2 {
                let s = m.get(1, j).to_f64().unwrap_or(f64::NAN) / m.get(0, j).to_f64().unwrap_or(f64::NAN);
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
    }
    Ok((lo, hi))
}

/// Guaranteed per-letter growth of `ℓ¹` norms on the positive cone, and the
/// block length realizing it. A single letter gives its spectral radius.
pub fn growth_rate(alphabet: &Alphabet) -> Result<(f64, usize)> {
    if alphabet.len() == 1 {
        return Ok((spectral(alphabet.matrix(0))?.r, 1));
    }
    let mut best = (1.0, 1);
    for (k, level) in products_up_to(alphabet, GROWTH_DEPTH)?.iter().enumerate().skip(1) {
        let min_col = level
            .iter()
            .map(|m| {
                (0..2)
                    .map(|j| (m.get(0, j) + m.get(1, j)).to_f64().unwrap_or(f64::INFINITY))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        let g = min_col.powf(1.0 / k as f64);
        if g > best.0 {
            best = (g, k);
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AffineBound {
    pub slope: f64,
    pub offset: f64,
}

impl AffineBound {
    pub fn at(&self, x: f64) -> f64 {
        self.slope * x + self.offset
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DilationValidation {
    pub samples: usize,
    pub violations: usize,
    pub cone_violations: usize,
    /// Instances whose frequency never entered the cone within the word.
    pub cone_skipped: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DilationConstants {
    pub c1: f64,
    pub gamma: f64,
    pub gamma_block: usize,
    pub c: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
    pub delta: f64,
    pub c2: f64,
    pub cone_fit: AffineBound,
    /// Analytic cone-entry bound with the effective `δ` and `γ`; loose.
    pub cone_analytic: AffineBound,
    pub rounds: usize,
    pub fit_samples: usize,
    pub validation: DilationValidation,
}

impl DilationConstants {
    /// Generous constants for tests and hand calculations.
    pub fn manual(c1: f64, gamma: f64, c: f64, c2: f64) -> Self {
        Self {
            c1,
            gamma,
            gamma_block: 1,
            c,
            slope_lo: f64::NAN,
            slope_hi: f64::NAN,
            delta: f64::NAN,
            c2,
            cone_fit: AffineBound { slope: f64::NAN, offset: f64::NAN },
            cone_analytic: AffineBound { slope: f64::NAN, offset: f64::NAN },
            rounds: 0,
            fit_samples: 0,
            validation: DilationValidation::default(),
        }
    }
}

struct Instance {
    word: Word,
    ell: usize,
    r: usize,
    p: FreqVector,
}

struct Measured {
    /// `ln‖P_{ℓ+r} p‖ − ln‖P_ℓ‖`.
    excess: f64,
    r: usize,
    ln_p: f64,
    cone: Option<usize>,
}

/// Convergents `(a, b)` of `num/den` with both below `MAX_NORM`.
fn convergents(num: &BigInt, den: &BigInt) -> Vec<(i64, i64)> {
    let (mut x, mut y) = (num.clone(), den.clone());
    let (mut h0, mut h1) = (BigInt::zero(), BigInt::from(1));
    let (mut k0, mut k1) = (BigInt::from(1), BigInt::zero());
    let mut out = Vec::new();
    while !y.is_zero() {
        let (a, rem) = x.div_rem(&y);
        let h2 = &a * &h1 + &h0;
        let k2 = &a * &k1 + &k0;
        match (h2.to_i64(), k2.to_i64()) {
            (Some(h), Some(k)) if h <= MAX_NORM && k <= MAX_NORM => out.push((h, k)),
            _ => break,
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        x = y;
        y = rem;
    }
    out
}

fn sample_instance(alphabet: &Arc<Alphabet>, domain: u64, seed: u64, index: u64) -> Result<Instance> {
    let mut g = rng::stream(seed, domain, index);
    let n = g.random_range(2..=MAX_WORD);
    let ell = g.random_range(1..n);
    let k = alphabet.len();
    let indices: Vec<usize> = if g.random_range(0..8) == 0 {
        let period: Vec<usize> = (0..g.random_range(1..=3)).map(|_| g.random_range(0..k)).collect();
        (0..n).map(|i| period[i % period.len()]).collect()
    } else {
        (0..n).map(|_| g.random_range(0..k)).collect()
    };
    let word = Word::new(alphabet.clone(), indices)?;
    let sign = if g.random::<bool>() { 1 } else { -1 };
    let p = match g.random_range(0..4) {
        0 => loop {
            let v = [g.random_range(-1..=1i64), g.random_range(-1..=1i64)];
            if v != [0, 0] {
                break v;
            }
        },
        1 => {
            let m = word.product(1, n)?;
            let cs = convergents(m.get(0, 1), m.get(0, 0));
            let (a, b) = if cs.is_empty() { (1, 1) } else { cs[g.random_range(0..cs.len())] };
            [sign * a, -sign * b]
        }
        _ => {
            let t = (g.random::<f64>() * (MAX_NORM as f64).ln()).exp();
            let th = g.random::<f64>() * std::f64::consts::TAU;
            let v = [(t * th.cos()).round() as i64, (t * th.sin()).round() as i64];
            let v = v.map(|x| x.clamp(-MAX_NORM, MAX_NORM));
            if v == [0, 0] {
                [sign, 0]
            } else {
                v
            }
        }
    };
    Ok(Instance { word, ell, r: n - ell, p: FreqVector::from_i64(&p) })
}

fn measure(inst: &Instance) -> Result<Measured> {
    let pl = inst.word.product(1, inst.ell)?;
    let full = inst.word.product(1, inst.ell + inst.r)?;
    let img = FreqVector(full.mul_vec(&inst.p.0)?);
    let cone = match cone_entry_time(&inst.word, &inst.p, inst.word.len()) {
        Ok(e) => Some(e.closed),
        Err(Error::NotWithinCap(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Measured {
        excess: ln_abs(&img.sup_norm()) - ln_abs(&pl.sup_norm()),
        r: inst.r,
        ln_p: ln_abs(&inst.p.sup_norm()),
        cone,
    })
}

fn measure_sample(alphabet: &Arc<Alphabet>, domain: u64, seed: u64, offset: u64, n: usize) -> Result<Vec<Measured>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| measure(&sample_instance(alphabet, domain, seed, offset + i)?))
        .collect::<Vec<Result<Measured>>>()
        .into_iter()
        .collect()
}

fn violates(m: &Measured, ln_c1: f64, gamma: f64, c: f64) -> bool {
    m.excess < ln_c1 + (m.r as f64 - c * m.ln_p) * gamma.ln()
}

fn tally(sample: &[Measured], consts: &DilationConstants) -> DilationValidation {
    let ln_c1 = consts.c1.ln();
    let mut v = DilationValidation { samples: sample.len(), ..Default::default() };
    for m in sample {
        if violates(m, ln_c1, consts.gamma, consts.c) {
            v.violations += 1;
        }
        match m.cone {
            Some(t) if t as f64 > consts.cone_fit.at(m.ln_p) => v.cone_violations += 1,
            Some(_) => {}
            None => v.cone_skipped += 1,
        }
    }
    v
}

/// Fits `C₁`, `c` and a cone-entry bound on `budget` random instances, then
/// validates them on fresh samples of the same size, loosening up to three
/// times.
pub fn dilation_constants(alphabet: &Arc<Alphabet>, budget: usize, seed: u64) -> Result<DilationConstants> {
    if alphabet.dim() != 2 {
        return Err(Error::UnsupportedDimension(alphabet.dim()));
    }
    for l in alphabet.letters() {
        require_positive_2x2(&l.matrix)?;
    }
    if budget == 0 {
        return Err(invalid("sample budget must be positive"));
    }
    let (slope_lo, slope_hi) = slope_bounds(alphabet, SLOPE_DEPTH)?;
    let delta = slope_lo.min(1.0 / slope_hi);
    let (gamma, gamma_block) = growth_rate(alphabet)?;
    let c2 = alphabet.letters().iter().map(|l| ln_abs(&l.matrix.sup_norm())).fold(f64::NEG_INFINITY, f64::max);
    let lg = gamma.ln();

    let fit = measure_sample(alphabet, rng::domain::FIT, seed, 0, budget)?;
    let base = |m: &Measured| m.excess - m.r as f64 * lg;
    let unit: Vec<&Measured> = fit.iter().filter(|m| m.ln_p == 0.0).collect();
    let m_base = if unit.is_empty() { &fit[..] } else { &[] }
        .iter()
        .chain(unit.iter().copied())
        .map(base)
        .fold(f64::INFINITY, f64::min);
    let mut ln_c1 = m_base - std::f64::consts::LN_2;
    let c_star = fit
        .iter()
        .filter(|m| m.ln_p > 0.0)
        .map(|m| (ln_c1 - base(m)) / (m.ln_p * lg))
        .fold(0.0f64, f64::max);
    let mut c = 1.25 * c_star + 0.05;

    let t0 = fit.iter().filter(|m| m.ln_p == 0.0).filter_map(|m| m.cone).max().unwrap_or(0) as f64;
    let cone_slope = fit
        .iter()
        .filter(|m| m.ln_p >= 1.0)
        .filter_map(|m| m.cone.map(|t| (t as f64 - t0) / m.ln_p))
        .fold(0.0f64, f64::max);
    let mut cone_fit = AffineBound { slope: 1.25 * cone_slope, offset: t0 + 1.0 };

    let c_prime = gamma.powi(-(gamma_block as i32 - 1));
    let m0 = (1.0 / (3.0 + 1.0 / delta)).min(delta / (1.0 + 3.0 * delta));
    let cone_analytic = AffineBound { slope: 1.0 / lg, offset: -(c_prime * delta * m0).ln() / lg };

    for round in 0..=REFIT_ROUNDS {
        let mut consts = DilationConstants {
            c1: ln_c1.exp(),
            gamma,
            gamma_block,
            c,
            slope_lo,
            slope_hi,
            delta,
            c2,
            cone_fit,
            cone_analytic,
            rounds: round,
            fit_samples: budget,
            validation: DilationValidation::default(),
        };
        let fresh = measure_sample(alphabet, rng::domain::VALIDATE, seed, (round * budget) as u64, budget)?;
        consts.validation = tally(&fresh, &consts);
        if consts.validation.violations == 0 && consts.validation.cone_violations == 0 {
            return Ok(consts);
        }
        if round == REFIT_ROUNDS {
            return Err(Error::ValidationFailed(format!(
                "{} dilation and {} cone violations after {REFIT_ROUNDS} refits",
                consts.validation.violations, consts.validation.cone_violations
            )));
        }
        if consts.validation.violations > 0 {
            c *= 1.5;
            ln_c1 -= std::f64::consts::LN_2;
        }
        if consts.validation.cone_violations > 0 {
            cone_fit = AffineBound { slope: cone_fit.slope * 1.5, offset: cone_fit.offset + 1.0 };
        }
    }
    unreachable!("loop returns on its last round")
}

/// Re-checks fitted constants on `samples` fresh instances from stream block
/// `offset`.
pub fn validate_dilation(
    alphabet: &Arc<Alphabet>,
    consts: &DilationConstants,
    samples: usize,
    seed: u64,
    offset: u64,
) -> Result<DilationValidation> {
    let fresh = measure_sample(alphabet, rng::domain::VALIDATE, seed, offset, samples)?;
    Ok(tally(&fresh, consts))
}

pub fn alphabet_hash(alphabet: &Alphabet) -> Result<String> {
    Ok(hex::encode(Sha256::digest(alphabet.to_json()?.as_bytes())))
}

/// Loads constants cached under `dir`, fitting and storing them on a miss.
pub fn dilation_constants_cached(
    alphabet: &Arc<Alphabet>,
    budget: usize,
    seed: u64,
    dir: &Path,
) -> Result<DilationConstants> {
    let name = format!("dilation-{}-{budget}-{seed}.json", &alphabet_hash(alphabet)?[..16]);
    let path = dir.join(name);
    if let Ok(s) = std::fs::read_to_string(&path) {
        if let Ok(c) = serde_json::from_str(&s) {
            return Ok(c);
        }
    }
    let c = dilation_constants(alphabet, budget, seed)?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(&path, serde_json::to_string_pretty(&c)?)?;
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationGap {
    pub rho1: u64,
    pub d_prime: f64,
    pub delta: u64,
}

/// `ln(1 − γ^{−Δ})`.
fn ln_one_minus_pow(lg: f64, delta: u64) -> f64 {
    (-(-(delta as f64) * lg).exp()).ln_1p()
}

/// The two conditions on `Δ`, as `(ln lhs₁ − ln ½, ln lhs₂)`; both must be
/// negative.
pub fn gap_conditions(d: f64, consts: &DilationConstants, rho1: u64, delta: u64) -> (f64, f64) {
    let lg = consts.gamma.ln();
    let ln_c1 = consts.c1.ln();
    let ln_dp = consts.c * (2.0 * d).ln() * lg + d.ln();
    let denom = ln_one_minus_pow(lg, delta);
    let first = std::f64::consts::LN_2 - ln_c1 + d.ln() + (consts.c * d.ln() - delta as f64) * lg - denom
        + std::f64::consts::LN_2;
    let second = 4f64.ln() - ln_c1 + ln_dp + (consts.c * consts.c2 * rho1 as f64 - delta as f64) * lg - denom;
    (first, second)
}

/// Constructive gap `Δ` for frequency bound `D`.
pub fn delta_from_d(d: f64, consts: &DilationConstants) -> Result<SeparationGap> {
    if !(d > 0.0) || !(consts.gamma > 1.0) || !(consts.c1 > 0.0) {
        return Err(invalid("need D > 0, γ > 1 and C₁ > 0"));
    }
    let lg = consts.gamma.ln();
    let ln_c1 = consts.c1.ln();
    let mut rho1 = 0u64;
    while -ln_c1 + d.ln() + (consts.c * d.ln() - rho1 as f64) * lg >= -std::f64::consts::LN_2 {
        rho1 += 1;
    }
    let d_prime = (consts.c * (2.0 * d).ln() * lg).exp() * d;
    let mut delta = 1u64;
    loop {
        let (a, b) = gap_conditions(d, consts, rho1, delta);
        if a < 0.0 && b < 0.0 {
            return Ok(SeparationGap { rho1, d_prime, delta });
        }
        delta += 1;
    }
}
