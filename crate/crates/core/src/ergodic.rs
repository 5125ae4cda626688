//! Ergodic sums, exact Fourier-space `L²` norms, the block/gap scheme and
//! variance estimates.


use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functions::Observable;
use crate::lattice::{FreqMap, FreqVector};
use crate::linalg::{check_dim, Alphabet, IntMatrix, Word};
use crate::products::{cumulative_weights, draw_letter, validate_weights};
use crate::rng;
use crate::stats::mean_stderr;
use crate::torus::{sample_uniform, ModAlphabet, ModularPoint, Modulus};
use crate::trig::TrigPoly;

/// `Σ_{k=1}^n f(τ_k … τ_1 x)`.
pub fn ergodic_sum(word: &Word, f: &dyn Observable, pt: &ModularPoint, n: usize) -> Result<f64> {
    check_dim(word.dim(), pt.dim())?;
    check_dim(word.dim(), f.dim())?;
    if n > word.len() {
        return Err(Error::IndexOutOfRange(format!("n = {n} exceeds word length {}", word.len())));
    }
    let ma = ModAlphabet::new(word.alphabet(), pt.q);
    let eval = f.evaluator(pt.q);
    let mut acc = 0.0;
    ma.walk(&word.indices()[..n], &pt.coords, |_, x| acc += eval(x));
    Ok(acc)
}

/// Running `Σ_q |Σ_{terms at q} c|²` over a growing multiset of frequencies.
#[derive(Default)]
pub(crate) struct CollisionSum {
    buckets: FreqMap<Vec<u8>, Complex64>,
    total: f64,
}

impl CollisionSum {
    pub(crate) fn add(&mut self, key: Vec<u8>, c: Complex64) {
        let slot = self.buckets.entry(key).or_insert(Complex64::new(0.0, 0.0));
        let before = slot.norm_sqr();
        *slot += c;
        self.total += slot.norm_sqr() - before;
    }

    pub(crate) fn running(&self) -> f64 {
        self.total.max(0.0)
    }

    /// Fresh summation, free of accumulated update rounding.
    pub(crate) fn exact(&self) -> f64 {
        self.buckets.values().map(|c| c.norm_sqr()).sum()
    }
}

/// Images `(P p, ĝ(p))` over the full support of `g`.
pub(crate) fn images(m: &IntMatrix, support: &[(FreqVector, Complex64)]) -> Result<Vec<(FreqVector, Complex64)>> {
    support.iter().map(|(p, c)| Ok((FreqVector::apply(m, p)?, *c))).collect()
}

pub(crate) fn big_support(g: &TrigPoly) -> Vec<(FreqVector, Complex64)> {
    g.full_support().into_iter().map(|(p, c)| (FreqVector::from_i64(&p), c)).collect()
}

fn require_zero_mean(g: &TrigPoly) -> Result<()> {
    if g.is_zero_mean() {
        Ok(())
    } else {
        Err(invalid("polynomial must have zero mean"))
    }
}

/// `∫ |S_n g|²` computed exactly from frequency collisions
/// `A_1^{ℓ'} p' = A_1^ℓ p`.
pub fn exact_l2_norm_sq(word: &Word, g: &TrigPoly, n: usize) -> Result<f64> {
    Ok(exact_sums(word, g, &[n])?[0])
}

/// `‖S_n g‖_2² / n` for every `n` in `n_grid`, exact.
pub fn quenched_variance_curve(word: &Word, g: &TrigPoly, n_grid: &[usize]) -> Result<Vec<f64>> {
    let sums = exact_sums(word, g, n_grid)?;
    Ok(n_grid.iter().zip(sums).map(|(&n, s)| if n == 0 { 0.0 } else { s / n as f64 }).collect())
}

fn exact_sums(word: &Word, g: &TrigPoly, n_grid: &[usize]) -> Result<Vec<f64>> {
    check_dim(word.dim(), g.dim())?;
    require_zero_mean(g)?;
    let n_max = n_grid.iter().copied().max().unwrap_or(0);
    if n_max > word.len() {
        return Err(Error::IndexOutOfRange(format!("n = {n_max} exceeds word length {}", word.len())));
    }
    let support = big_support(g);
    let mut sums = CollisionSum::default();
    let mut at = vec![0.0; n_max + 1];
    let mut p = IntMatrix::identity(word.dim())?;
    for ell in 1..=n_max {
        p = p.mul(word.letter(ell)?)?;
        for (v, c) in images(&p, &support)? {
            sums.add(v.key(), c);
        }
        at[ell] = if ell == n_max { sums.exact() } else { sums.running() };
    }
    Ok(n_grid.iter().map(|&n| at[n]).collect())
}

/// Monte Carlo `‖S_n f‖_2² / n` with standard errors, for any observable.
pub fn quenched_variance_curve_mc(
    word: &Word,
    f: &dyn Observable,
    q: Modulus,
    n_grid: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    check_dim(word.dim(), f.dim())?;
    let n_max = n_grid.iter().copied().max().unwrap_or(0);
    if n_max > word.len() {
        return Err(Error::IndexOutOfRange(format!("n = {n_max} exceeds word length {}", word.len())));
    }
    let ma = ModAlphabet::new(word.alphabet(), q);
    let eval = f.evaluator(q);
    let per_sample: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, rng::domain::MONTE_CARLO, i as u64);
            let x = sample_uniform(&mut r, q, word.dim());
            let mut partial = vec![0.0; n_max + 1];
            let mut acc = 0.0;
            ma.walk(&word.indices()[..n_max], &x.coords, |k, y| {
                acc += eval(y);
                partial[k] = acc;
            });
            n_grid.iter().map(|&n| if n == 0 { 0.0 } else { partial[n] * partial[n] / n as f64 }).collect()
        })
        .collect();
    Ok((0..n_grid.len())
        .map(|j| mean_stderr(&per_sample.iter().map(|v| v[j]).collect::<Vec<_>>()))
        .collect())
}

/// The block/gap partition of `1..=n`: blocks `(L_k, R_k]` of length
/// `v − Δ` separated by gaps of length `Δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockScheme {
    pub n: usize,
    pub beta: f64,
    pub delta_n: usize,
    pub v: usize,
    pub u: usize,
}

impl BlockScheme {
    pub fn new(n: usize, beta: f64, delta_n: usize) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid("beta must lie in (0, 1)"));
        }
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let mut v = ((n as f64).powf(beta) + 1e-9).floor() as usize;
        while v > 1 && (v as f64) > (n as f64).powf(beta) + 1e-9 {
            v -= 1;
        }
        let v = v.max(1);
        if delta_n >= v {
            return Err(invalid(format!("gap {delta_n} must be smaller than the block length {v}")));
        }
        Ok(Self { n, beta, delta_n, v, u: n / v })
    }

    pub fn left(&self, k: usize) -> usize {
        k * self.v
    }

    pub fn right(&self, k: usize) -> usize {
        (k + 1) * self.v - self.delta_n
    }

    /// Block index containing `ell`, if `ell` is not a gap or remainder term.
    pub fn block_of(&self, ell: usize) -> Option<usize> {
        if ell == 0 {
            return None;
        }
        let k = (ell - 1) / self.v;
        (k < self.u && ell <= self.right(k)).then_some(k)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockedQuantities {
    pub scheme: BlockScheme,
    /// `σ²_k = ∫ |T_k|²` for each block.
    pub sigma_k_sq: Vec<f64>,
    pub a_n: f64,
    pub s_n_sq: f64,
    pub s_prime_sq: f64,
    /// `‖S_n − S'_n‖_2`.
    pub gap_error: f64,
    pub gap_terms: usize,
    /// `‖g‖_2² Δ² u`.
    pub gap_bound_l2: f64,
    /// `2 ‖g‖_∞² n^{1−β} Δ²` with `‖g‖_∞ ≤ Σ|ĝ|`.
    pub gap_bound_sup: f64,
    pub gap_bound_l2_holds: bool,
    pub gap_bound_sup_holds: bool,
}

pub fn blocked_quantities(word: &Word, g: &TrigPoly, scheme: &BlockScheme) -> Result<BlockedQuantities> {
    check_dim(word.dim(), g.dim())?;
    require_zero_mean(g)?;
    if scheme.n > word.len() {
        return Err(Error::IndexOutOfRange(format!("n = {} exceeds word length {}", scheme.n, word.len())));
    }
    let support = big_support(g);
    let mut blocks: Vec<CollisionSum> = (0..scheme.u).map(|_| CollisionSum::default()).collect();
    let mut full = CollisionSum::default();
    let mut blocked = CollisionSum::default();
    let mut gaps = CollisionSum::default();
    let mut gap_terms = 0;
    let mut p = IntMatrix::identity(word.dim())?;
    for ell in 1..=scheme.n {
        p = p.mul(word.letter(ell)?)?;
        let block = scheme.block_of(ell);
        if block.is_none() {
            gap_terms += 1;
        }
        for (v, c) in images(&p, &support)? {
            let key = v.key();
            match block {
                Some(k) => {
                    blocks[k].add(key.clone(), c);
                    blocked.add(key.clone(), c);
                }
                None => gaps.add(key.clone(), c),
            }
            full.add(key, c);
        }
    }
    let sigma_k_sq: Vec<f64> = blocks.iter().map(|b| b.exact()).collect();
    let a_n = sigma_k_sq.iter().sum();
    let gap_sq = gaps.exact();
    let norm_sq = g.l2_norm_sq();
    let sup = g.coeff_abs_sum();
    let delta2 = (scheme.delta_n * scheme.delta_n) as f64;
    let gap_bound_l2 = norm_sq * delta2 * scheme.u as f64;
    let gap_bound_sup = 2.0 * sup * sup * (scheme.n as f64).powf(1.0 - scheme.beta) * delta2;
    Ok(BlockedQuantities {
        scheme: *scheme,
        sigma_k_sq,
        a_n,
        s_n_sq: full.exact(),
        s_prime_sq: blocked.exact(),
        gap_error: gap_sq.sqrt(),
        gap_terms,
        gap_bound_l2,
        gap_bound_sup,
        gap_bound_l2_holds: gap_sq <= gap_bound_l2 * (1.0 + 1e-12),
        gap_bound_sup_holds: gap_sq <= gap_bound_sup * (1.0 + 1e-12),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum WordAveraging {
    /// Every word of length `r_max`, weighted by the letter law.
    Exhaustive,
    Sampled { words: usize, seed: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarianceSeries {
    pub sigma_sq: f64,
    pub stderr: f64,
    pub norm_sq: f64,
    /// `∫ f · f(A_1 … A_r ·)` averaged over words, for `r = 1..=r_max`.
    pub terms: Vec<f64>,
    /// Number of evaluated words with at least one collision at each `r`.
    pub colliding_words: Vec<u64>,
    /// Smallest `r_0` such that no evaluated word collides for `r_0 ≤ r ≤ r_max`.
    pub tail_zero_from: Option<usize>,
    pub averaging: WordAveraging,
}

const EXHAUSTIVE_NODE_LIMIT: f64 = 5e6;

/// `‖f‖² + 2 Σ_{r=1}^{r_max} E_ω ∫ f · f(A_1 … A_r ·)`.
pub fn variance_series(
    alphabet: &Alphabet,
    weights: &[f64],
    f: &TrigPoly,
    r_max: usize,
    averaging: WordAveraging,
) -> Result<VarianceSeries> {
    check_dim(alphabet.dim(), f.dim())?;
    require_zero_mean(f)?;
    validate_weights(weights, alphabet.len())?;
    if r_max == 0 {
        return Err(invalid("r_max must be at least 1"));
    }
    let support = big_support(f);
    let lookup: FreqMap<Vec<u8>, Complex64> = support.iter().map(|(p, c)| (p.key(), *c)).collect();
    // ∫ f · f∘T = Σ_{p'} f̂(P p') conj(f̂(p')), with the number of collisions
    let inner = |m: &IntMatrix| -> Result<(f64, bool)> {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut hit = false;
        for (v, c) in images(m, &support)? {
            if let Some(fc) = lookup.get(&v.key()) {
                acc += fc * c.conj();
                hit = true;
            }
        }
        Ok((acc.re, hit))
    };
    let norm_sq = f.l2_norm_sq();
    let mut terms = vec![0.0; r_max];
    let mut colliding = vec![0u64; r_max];
    let stderr;
    match averaging {
        WordAveraging::Exhaustive => {
            let nodes: f64 = (1..=r_max).map(|r| (alphabet.len() as f64).powi(r as i32)).sum();
            if nodes > EXHAUSTIVE_NODE_LIMIT {
                return Err(Error::BudgetExceeded { examined: nodes as u64, budget: EXHAUSTIVE_NODE_LIMIT as u64 });
            }
            if f.is_zero() {
                stderr = 0.0;
            } else {
                let mut stack = vec![(IntMatrix::identity(alphabet.dim())?, 1.0f64, 0usize)];
                while let Some((m, w, depth)) = stack.pop() {
                    if depth == r_max {
                        continue;
                    }
                    for (k, letter) in alphabet.letters().iter().enumerate() {
                        let child = m.mul(&letter.matrix)?;
                        let cw = w * weights[k];
                        let (val, hit) = inner(&child)?;
                        terms[depth] += cw * val;
                        colliding[depth] += hit as u64;
                        stack.push((child, cw, depth + 1));
                    }
                }
                stderr = 0.0;
            }
        }
        WordAveraging::Sampled { words, seed } => {
            if words == 0 {
                return Err(invalid("need at least one sampled word"));
            }
            let cdf = cumulative_weights(weights);
            let per_word: Vec<Result<(Vec<f64>, Vec<bool>)>> = (0..words)
                .into_par_iter()
                .map(|i| {
                    let mut r = rng::stream(seed, rng::domain::SERIES, i as u64);
                    let mut m = IntMatrix::identity(alphabet.dim())?;
                    let mut vals = Vec::with_capacity(r_max);
                    let mut hits = Vec::with_capacity(r_max);
                    for _ in 0..r_max {
                        m = m.mul(alphabet.matrix(draw_letter(&cdf, &mut r)))?;
                        let (v, h) = inner(&m)?;
                        vals.push(v);
                        hits.push(h);
                    }
                    Ok((vals, hits))
                })
                .collect();
            let mut totals = Vec::with_capacity(words);
            for res in per_word {
                let (vals, hits) = res?;
                for r in 0..r_max {
                    terms[r] += vals[r] / words as f64;
                    colliding[r] += hits[r] as u64;
                }
                totals.push(norm_sq + 2.0 * vals.iter().sum::<f64>());
            }
            stderr = mean_stderr(&totals).1;
        }
    }
    let mut r0 = r_max + 1;
    while r0 > 1 && colliding[r0 - 2] == 0 {
        r0 -= 1;
    }
    let tail_zero_from = (r0 <= r_max).then_some(r0);
    Ok(VarianceSeries {
        sigma_sq: norm_sq + 2.0 * terms.iter().sum::<f64>(),
        stderr,
        norm_sq,
        terms,
        colliding_words: colliding,
        tail_zero_from,
        averaging,
    })
}
