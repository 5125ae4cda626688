//! Word sources and Monte Carlo diagnostics for random matrix products.

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{diag_log_ratios, iwasawa, ln_abs, Alphabet, IntMatrix, Word};
use crate::rng;
use crate::stats::{linear_fit, mean_stderr, quantile, wilson_interval, LinearFit};

pub fn validate_weights(weights: &[f64], len: usize) -> Result<()> {
    if weights.len() != len {
        return Err(invalid(format!("{} weights for an alphabet of {len} letters", weights.len())));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(invalid("weights must be positive"));
    }
    if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid("weights must sum to 1"));
    }
    Ok(())
}

pub fn cumulative_weights(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Inverse-CDF draw of a letter index.
pub fn draw_letter<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Where the letters of a word come from.
#[derive(Clone, Debug)]
pub enum WordSource {
    Iid { alphabet: Arc<Alphabet>, weights: Vec<f64>, seed: u64 },
    Explicit(Word),
    /// Letter `k` is `letters.0` when `frac(ω₀ + kα) ∈ [lo, hi)`, else `letters.1`.
    Rotation { alphabet: Arc<Alphabet>, letters: (usize, usize), alpha: f64, lo: f64, hi: f64, omega0: f64 },
}

impl WordSource {
    pub fn iid(alphabet: Arc<Alphabet>, weights: Vec<f64>, seed: u64) -> Result<Self> {
        validate_weights(&weights, alphabet.len())?;
        Ok(WordSource::Iid { alphabet, weights, seed })
    }

    pub fn uniform(alphabet: Arc<Alphabet>, seed: u64) -> Self {
        let k = alphabet.len();
        WordSource::Iid { alphabet, weights: vec![1.0 / k as f64; k], seed }
    }

    pub fn rotation(
        alphabet: Arc<Alphabet>,
        letters: (usize, usize),
        alpha: f64,
        lo: f64,
        hi: f64,
        omega0: f64,
    ) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(invalid("rotation interval must satisfy 0 <= lo < hi <= 1"));
        }
        if letters.0 >= alphabet.len() || letters.1 >= alphabet.len() {
            return Err(invalid("rotation letters out of range"));
        }
        Ok(WordSource::Rotation { alphabet, letters, alpha, lo, hi, omega0 })
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        match self {
            WordSource::Iid { alphabet, .. } | WordSource::Rotation { alphabet, .. } => alphabet,
            WordSource::Explicit(w) => w.alphabet(),
        }
    }

    /// Same source with a different seed (only i.i.d. sources carry one).
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            WordSource::Iid { alphabet, weights, .. } => {
                WordSource::Iid { alphabet: alphabet.clone(), weights: weights.clone(), seed }
            }
            other => other.clone(),
        }
    }

    /// Word of length `n` for trial `trial`; deterministic sources ignore it.
    pub fn sample_trial(&self, n: usize, trial: u64) -> Result<Word> {
        match self {
            WordSource::Iid { alphabet, weights, seed } => {
                let cdf = cumulative_weights(weights);
                let mut r = rng::stream(*seed, rng::domain::WORD, trial);
                Word::new(alphabet.clone(), (0..n).map(|_| draw_letter(&cdf, &mut r)).collect())
            }
            WordSource::Explicit(w) => w.prefix(n),
            WordSource::Rotation { alphabet, letters, alpha, lo, hi, omega0 } => {
                let idx = (1..=n)
                    .map(|k| {
                        let t = (omega0 + k as f64 * alpha).rem_euclid(1.0);
                        if *lo <= t && t < *hi {
                            letters.0
                        } else {
                            letters.1
                        }
                    })
                    .collect();
                Word::new(alphabet.clone(), idx)
            }
        }
    }
}

pub fn sample_word(src: &WordSource, n: usize) -> Result<Word> {
    if n == 0 {
        return Err(invalid("word length must be at least 1"));
    }
    src.sample_trial(n, 0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthOptions {
    pub delta: f64,
    pub zeta_grid: Vec<f64>,
    pub quantiles: Vec<f64>,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self { delta: 0.1, zeta_grid: vec![1.05, 1.25, 1.5, 2.0], quantiles: vec![0.1, 0.5, 0.9] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagRow {
    pub n: usize,
    pub statistic: String,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthDiagnostics {
    pub rows: Vec<DiagRow>,
    pub trials: usize,
    pub delta: f64,
    /// `exp` of the fitted slope of `ln E[(a_1/a_2)^δ]` against `n`.
    pub rho_hat: Option<f64>,
    pub rho_fit: Option<LinearFit>,
    /// 10% quantile of `exp((log a_d − max_{i<d} log a_i)/n)` at the largest `n`.
    pub zeta_hat: Option<f64>,
    /// Fitted decay of the failure frequency of the `√ζ̂` dominance event.
    pub xi0_hat: Option<f64>,
    /// Counts of the dominant diagonal index at the largest `n`.
    pub dominant_index_counts: Vec<u64>,
}

struct TrialPoint {
    ratios: Vec<f64>,
    log_diag: Vec<f64>,
    n_norm: f64,
}

/// Monte Carlo statistics of the Iwasawa diagonal and unipotent factors.
pub fn growth_diagnostics(
    src: &WordSource,
    n_grid: &[usize],
    trials: usize,
    opts: &GrowthOptions,
) -> Result<GrowthDiagnostics> {
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.first() == Some(&0) || grid.is_empty() {
        return Err(invalid("n grid must be nonempty and positive"));
    }
    let n_max = *grid.last().expect("nonempty");
    let d = src.alphabet().dim();
    let per_trial: Vec<Result<Vec<TrialPoint>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let w = src.sample_trial(n_max, t as u64)?;
            let mut out = Vec::with_capacity(grid.len());
            let mut gi = 0;
            for (n, m) in w.prefix_products().enumerate() {
                if gi < grid.len() && grid[gi] == n {
                    let f = iwasawa(&m)?;
                    out.push(TrialPoint { ratios: diag_log_ratios(&f), n_norm: f.n_norm(), log_diag: f.log_diag });
                    gi += 1;
                }
            }
            Ok(out)
        })
        .collect();
    let per_trial: Vec<Vec<TrialPoint>> = per_trial.into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut ratio_means = Vec::new();
    let dominance_gap = |p: &TrialPoint| {
        let top = p.log_diag[d - 1];
        let other = p.log_diag[..d - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top - other
    };
    for (gi, &n) in grid.iter().enumerate() {
        let pts: Vec<&TrialPoint> = per_trial.iter().map(|v| &v[gi]).collect();
        for i in 0..d - 1 {
            let vals: Vec<f64> = pts.iter().map(|p| (opts.delta * p.ratios[i]).exp()).collect();
            let (m, se) = mean_stderr(&vals);
            if i == 0 {
                ratio_means.push((n as f64, m));
            }
            rows.push(DiagRow { n, statistic: format!("diag_ratio{}", i + 1), estimate: m, stderr: se });
        }
        for &z in &opts.zeta_grid {
            let hits = pts.iter().filter(|p| dominance_gap(p) > n as f64 * z.ln()).count();
            let p = hits as f64 / trials.max(1) as f64;
            let se = (p * (1.0 - p) / trials.max(1) as f64).sqrt();
            rows.push(DiagRow { n, statistic: format!("dominance_zeta{z}"), estimate: p, stderr: se });
        }
        let norms: Vec<f64> = pts.iter().map(|p| p.n_norm).collect();
        for &q in &opts.quantiles {
            rows.push(DiagRow { n, statistic: format!("n_norm_q{q}"), estimate: quantile(&norms, q), stderr: f64::NAN });
        }
    }
    let rho_fit = if ratio_means.len() >= 2 && ratio_means.iter().all(|(_, m)| *m > 0.0) {
        let xs: Vec<f64> = ratio_means.iter().map(|(n, _)| *n).collect();
        let ys: Vec<f64> = ratio_means.iter().map(|(_, m)| m.ln()).collect();
        linear_fit(&xs, &ys)
    } else {
        None
    };
    let last = grid.len() - 1;
    let rates: Vec<f64> = per_trial.iter().map(|v| dominance_gap(&v[last]) / n_max as f64).collect();
    let zeta_hat = (!rates.is_empty()).then(|| quantile(&rates, 0.1).exp()).filter(|z| *z > 1.0);
    let xi0_hat = zeta_hat.and_then(|z| {
        let half = z.sqrt().ln();
        let pts: Vec<(f64, f64)> = grid
            .iter()
            .enumerate()
            .filter_map(|(gi, &n)| {
                let fails = per_trial.iter().filter(|v| dominance_gap(&v[gi]) <= n as f64 * half).count();
                (fails > 0).then(|| (n as f64, (fails as f64 / trials as f64).ln()))
            })
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        linear_fit(&xs, &ys).map(|f| f.slope.exp())
    });
    let mut dominant_index_counts = vec![0u64; d];
    for v in &per_trial {
        let ld = &v[last].log_diag;
        let best = (0..d).max_by(|&a, &b| ld[a].total_cmp(&ld[b])).unwrap_or(0);
        dominant_index_counts[best] += 1;
    }
    Ok(GrowthDiagnostics {
        rows,
        trials,
        delta: opts.delta,
        rho_hat: rho_fit.map(|f| f.slope.exp()),
        rho_fit,
        zeta_hat,
        xi0_hat,
        dominant_index_counts,
    })
}

/// Float copy of `m` scaled by `2^{-shift}` so the largest entry has about
/// 60 significant bits.
fn scaled(m: &IntMatrix) -> (Vec<Vec<f64>>, u64) {
    let bits = m.rows().iter().flatten().map(|x| x.bits()).max().unwrap_or(0);
    let shift = bits.saturating_sub(60);
    let rows = m
        .rows()
        .iter()
        .map(|r| r.iter().map(|x| (x >> shift).to_f64().unwrap_or(0.0)).collect())
        .collect();
    (rows, shift)
}

/// `ln ‖M x‖` for a float vector, in the sup norm.
fn ln_norm_times(m: &IntMatrix, x: &[f64]) -> f64 {
    let (rows, shift) = scaled(m);
    let v = rows
        .iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().abs())
        .fold(0.0, f64::max);
    v.ln() + shift as f64 * std::f64::consts::LN_2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmallNormEstimate {
    pub frequency: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub hits: u64,
    pub trials: u64,
}

/// Fraction of trials with `‖A_1…A_n x‖ ≤ ε ‖A_1…A_n‖ ‖x‖`.
pub fn empirical_small_norm(src: &WordSource, n: usize, eps: f64, trials: usize, x: &[f64]) -> Result<SmallNormEstimate> {
    if x.len() != src.alphabet().dim() {
        return Err(invalid("direction has the wrong dimension"));
    }
    let xn = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if xn == 0.0 {
        return Err(invalid("direction must be nonzero"));
    }
    let x: Vec<f64> = x.iter().map(|v| v / xn).collect();
    let hits: Vec<Result<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let w = src.sample_trial(n, t as u64)?;
            let m = if n == 0 { IntMatrix::identity(w.dim())? } else { w.product(1, n)? };
            if eps <= 0.0 {
                return Ok(false);
            }
            Ok(ln_norm_times(&m, &x) <= eps.ln() + ln_abs(&m.sup_norm()) + 1e-12)
        })
        .collect();
    let hits = hits.into_iter().collect::<Result<Vec<_>>>()?.into_iter().filter(|&h| h).count() as u64;
    let (lo, hi) = wilson_interval(hits, trials as u64, 1.96);
    Ok(SmallNormEstimate {
        frequency: if trials == 0 { 0.0 } else { hits as f64 / trials as f64 },
        wilson_lo: lo,
        wilson_hi: hi,
        hits,
        trials: trials as u64,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockGrowth {
    pub violations: u64,
    pub pairs_checked: u64,
    pub zeta: f64,
}

/// Counts `(ℓ, r)` with `r ≥ r_min` and `ln ‖A_ℓ^{ℓ+r}‖ < (r(d−1)/d) ln ζ`.
pub fn empirical_block_norm_growth(src: &WordSource, n: usize, r_min: usize, zeta: f64) -> Result<BlockGrowth> {
    if r_min == 0 {
        return Err(invalid("r_min must be at least 1"));
    }
    let w = sample_word(src, n)?;
    let d = w.dim() as f64;
    let mut violations = 0;
    let mut pairs = 0;
    for ell in 1..=n {
        let mut m = w.letter(ell)?.clone();
        for r in 1..=(n - ell) {
            m = m.mul(w.letter(ell + r)?)?;
            if r >= r_min {
                pairs += 1;
                if ln_abs(&m.sup_norm()) < r as f64 * (d - 1.0) / d * zeta.ln() {
                    violations += 1;
                }
            }
        }
    }
    Ok(BlockGrowth { violations, pairs_checked: pairs, zeta })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DirectionSamples {
    /// Frequencies of the angle of `Kᵗ e_d` in `[0, π)`, `bins` equal bins.
    Histogram { bins: Vec<f64>, trials: usize },
    Raw { directions: Vec<Vec<f64>> },
}

pub fn empirical_stationary_direction(src: &WordSource, n: usize, trials: usize, bins: usize) -> Result<DirectionSamples> {
    let d = src.alphabet().dim();
    let dirs: Vec<Result<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let w = src.sample_trial(n, t as u64)?;
            let m = if n == 0 { IntMatrix::identity(d)? } else { w.product(1, n)? };
            let f = iwasawa(&m)?;
            Ok(f.k_factor[(d - 1) * d..].to_vec())
        })
        .collect();
    let dirs = dirs.into_iter().collect::<Result<Vec<_>>>()?;
    if d != 2 {
        return Ok(DirectionSamples::Raw { directions: dirs });
    }
    if bins == 0 {
        return Err(invalid("need at least one bin"));
    }
    let mut counts = vec![0.0; bins];
    for v in &dirs {
        let theta = v[1].atan2(v[0]).rem_euclid(std::f64::consts::PI);
        let b = ((theta / std::f64::consts::PI) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1.0;
    }
    if trials > 0 {
        for c in counts.iter_mut() {
            *c /= trials as f64;
        }
    } else {
        counts.clear();
    }
    Ok(DirectionSamples::Histogram { bins: counts, trials })
}

/// Total-variation distance between two histograms on the same bins.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn all_products(alphabet: &Alphabet, max_len: usize) -> Result<Vec<IntMatrix>> {
    let mut level = vec![IntMatrix::identity(alphabet.dim())?];
    let mut out = Vec::new();
    for _ in 0..max_len {
        let mut next = Vec::new();
        for m in &level {
            for l in alphabet.letters() {
                next.push(m.mul(&l.matrix)?);
            }
        }
        out.extend(next.iter().cloned());
        level = next;
    }
    Ok(out)
}

/// Sufficient evidence of proximality in dimension 2: some product of length
/// at most 4 has `tr² > 4 det`. `None` for other dimensions.
pub fn proximality_flag(alphabet: &Alphabet) -> Result<Option<bool>> {
    if alphabet.dim() != 2 {
        return Ok(None);
    }
    Ok(Some(all_products(alphabet, 4)?.iter().any(|m| {
        let t = m.trace();
        &t * &t > BigInt::from(4) * m.det()
    })))
}

/// Evidence against invariant unions of at most three lines in dimension 2:
/// `det(A⁶B⁶ − B⁶A⁶) ≠ 0` for some pair of letters. `None` for other
/// dimensions.
pub fn irreducibility_evidence(alphabet: &Alphabet) -> Result<Option<bool>> {
    if alphabet.dim() != 2 {
        return Ok(None);
    }
    let sixth = |m: &IntMatrix| -> Result<IntMatrix> {
        let m2 = m.mul(m)?;
        m2.mul(&m2)?.mul(&m2)
    };
    let powers = alphabet.letters().iter().map(|l| sixth(&l.matrix)).collect::<Result<Vec<_>>>()?;
    for i in 0..powers.len() {
        for j in i + 1..powers.len() {
            let ab = powers[i].mul(&powers[j])?;
            let ba = powers[j].mul(&powers[i])?;
            let c = IntMatrix::new(
                ab.rows()
                    .iter()
                    .zip(ba.rows())
                    .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect())
                    .collect(),
            )?;
            if !c.det().is_zero() {
                return Ok(Some(true));
            }
        }
    }
    Ok(Some(false))
}
