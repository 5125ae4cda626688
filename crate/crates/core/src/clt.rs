//! Monte Carlo CLT runs, multiplicative-system (Komlós) bounds, the Esseen
//! smoothing bound and the rate exponent.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_rational::Rational64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ergodic::{blocked_quantities, exact_l2_norm_sq, variance_series, BlockScheme, WordAveraging};
use crate::error::{invalid, Error, Result};
use crate::functions::Observable;
use crate::linalg::{check_dim, Word};
use crate::products::WordSource;
use crate::rng;
use crate::stats::{ks_distance_to_normal, mean_stderr};
use crate::torus::{sample_uniform, ModAlphabet, Modulus};
use crate::trig::TrigPoly;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Mean of complex samples; `stderr` is that of the complex mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
}

impl ComplexEstimate {
    fn from_samples(zs: &[Complex64]) -> Self {
        let (re, se_re) = mean_stderr(&zs.iter().map(|z| z.re).collect::<Vec<_>>());
        let (im, se_im) = mean_stderr(&zs.iter().map(|z| z.im).collect::<Vec<_>>());
        Self { re, im, stderr: (se_re * se_re + se_im * se_im).sqrt() }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// `sqrt(E X)` with a delta-method standard error.
fn root_of_mean(xs: &[f64]) -> Estimate {
    let (m, se) = mean_stderr(xs);
    let value = m.max(0.0).sqrt();
    Estimate { value, stderr: if value > 0.0 { se / (2.0 * value) } else { se.sqrt() } }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KomlosQuantities {
    pub x: f64,
    pub u: usize,
    /// Rigorous bound `max_k ‖T_k‖_∞ ≤ (v − Δ) Σ|ĝ|`.
    pub delta: f64,
    /// Largest `|T_k|` seen in the sample.
    pub delta_sampled: f64,
    pub a: f64,
    pub y_minus_a_l2: Estimate,
    pub e_z: ComplexEstimate,
    pub e_q: ComplexEstimate,
    pub q_l2: Estimate,
    pub samples: usize,
    /// `|x| δ ≤ 1`.
    pub x_delta_ok: bool,
}

pub fn komlos_quantities(
    word: &Word,
    g: &TrigPoly,
    scheme: &BlockScheme,
    x: f64,
    samples: usize,
    seed: u64,
    q: Modulus,
) -> Result<KomlosQuantities> {
    check_dim(word.dim(), g.dim())?;
    if samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    let blocked = blocked_quantities(word, g, scheme)?;
    let a = blocked.a_n;
    let ma = ModAlphabet::new(word.alphabet(), q);
    let eval = g.compile(q);
    let n = scheme.n;
    let rows: Vec<(Complex64, Complex64, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, rng::domain::MONTE_CARLO, i as u64);
            let pt = sample_uniform(&mut r, q, word.dim());
            let mut t = vec![0.0; scheme.u];
            ma.walk(&word.indices()[..n], &pt.coords, |ell, y| {
                if let Some(k) = scheme.block_of(ell) {
                    t[k] += eval.eval(y);
                }
            });
            let sum: f64 = t.iter().sum();
            let z = Complex64::new(0.0, x * sum).exp();
            let qv = t.iter().fold(Complex64::new(1.0, 0.0), |acc, tk| acc * Complex64::new(1.0, x * tk));
            let y: f64 = t.iter().map(|v| v * v).sum();
            let peak = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (z, qv, y, peak)
        })
        .collect();
    let zs: Vec<Complex64> = rows.iter().map(|r| r.0).collect();
    let qs: Vec<Complex64> = rows.iter().map(|r| r.1).collect();
    let dev: Vec<f64> = rows.iter().map(|r| (r.2 - a).powi(2)).collect();
    let q2: Vec<f64> = qs.iter().map(|z| z.norm_sqr()).collect();
    let delta = (scheme.v - scheme.delta_n) as f64 * g.coeff_abs_sum();
    Ok(KomlosQuantities {
        x,
        u: scheme.u,
        delta,
        delta_sampled: rows.iter().map(|r| r.3).fold(0.0, f64::max),
        a,
        y_minus_a_l2: root_of_mean(&dev),
        e_z: ComplexEstimate::from_samples(&zs),
        e_q: ComplexEstimate::from_samples(&qs),
        q_l2: root_of_mean(&q2),
        samples,
        x_delta_ok: x.abs() * delta <= 1.0,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub hypotheses_hold: bool,
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// Right side without the `C u |x|³ δ³` term.
    pub rest: f64,
    /// `u |x|³ δ³`.
    pub cubic: f64,
    pub rhs_at_probe: f64,
    /// Smallest `C ≥ 0` making the inequality hold; `None` when no finite
    /// `C` does.
    pub minimal_c: Option<f64>,
    /// `lhs / cubic`: the constant needed if the other terms were dropped.
    pub cubic_only_c: Option<f64>,
    pub holds_at_probe: bool,
    /// Violated beyond four standard errors for every `C ≤ c_max`.
    pub fail: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KomlosReport {
    pub c_probe: f64,
    pub c_max: f64,
    /// `|E Q − 1|` within four standard errors of zero.
    pub e_q_is_one: bool,
    pub checks: Vec<InequalityCheck>,
}

impl KomlosReport {
    pub fn any_fail(&self) -> bool {
        self.checks.iter().any(|c| c.fail)
    }

    pub fn check(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const DEFAULT_C_MAX: f64 = 1e6;

/// Evaluates the three multiplicative-system inequalities.
pub fn verify_komlos_inequalities(k: &KomlosQuantities, c_probe: f64, c_max: f64) -> KomlosReport {
    let x = k.x.abs();
    let gauss = (-0.5 * k.a * x * x).exp();
    let lhs = (k.e_z.value() - gauss).norm();
    let lhs_se = k.e_z.stderr;
    let cubic = k.u as f64 * x.powi(3) * k.delta.powi(3);
    let one_minus_q = (Complex64::new(1.0, 0.0) - k.e_q.value()).norm();
    let e_q_is_one = one_minus_q <= 4.0 * k.e_q.stderr;
    let root = k.y_minus_a_l2.value.sqrt();
    let second_hyp = x * root <= 1.0;
    let mid = (3.0 + 2.0 * gauss * k.q_l2.value) * x * root;
    let make = |name: &str, hyp: bool, rest: f64| {
        let minimal_c = if lhs <= rest {
            Some(0.0)
        } else if cubic > 0.0 {
            Some((lhs - rest) / cubic)
        } else {
            None
        };
        InequalityCheck {
            name: name.to_string(),
            hypotheses_hold: hyp,
            lhs,
            lhs_stderr: lhs_se,
            rest,
            cubic,
            rhs_at_probe: c_probe * cubic + rest,
            minimal_c,
            cubic_only_c: (cubic > 0.0).then(|| lhs / cubic),
            holds_at_probe: lhs <= c_probe * cubic + rest,
            fail: hyp && lhs - 4.0 * lhs_se > c_max * cubic + rest,
        }
    };
    let checks = vec![
        make("general", k.x_delta_ok, 0.5 * x * x * k.q_l2.value * k.y_minus_a_l2.value + one_minus_q),
        make("refined", k.x_delta_ok && second_hyp, mid + gauss * one_minus_q),
        make("separated", k.x_delta_ok && second_hyp && e_q_is_one, mid),
    ];
    KomlosReport { c_probe, c_max, e_q_is_one, checks }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Standardization {
    /// `‖S_n f‖₂` from the exact collision scan of a trigonometric polynomial.
    ExactL2,
    /// `σ̂ √n` with `σ̂²` from the decorrelation series.
    SeriesSigma { r_max: usize, averaging: WordAveraging },
    /// A caller-supplied `σ`.
    Fixed { sigma: f64 },
}

pub struct CltExperiment<'a> {
    pub source: WordSource,
    pub f: &'a dyn Observable,
    /// Polynomial standing in for `f` when standardizing; `f` itself when it
    /// is a polynomial.
    pub proxy: Option<&'a TrigPoly>,
    pub n_grid: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub q: Modulus,
    pub standardization: Standardization,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CltReport {
    pub n_grid: Vec<usize>,
    /// `σ̂_n` used for `S_n / (σ̂_n √n)`.
    pub sigma_hat: Vec<f64>,
    pub ks_distance: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub standardization: Standardization,
}

/// Standardized sums `S_n / (σ̂_n √n)`, one vector per `n`.
pub struct CltSamples {
    pub report: CltReport,
    pub values: Vec<Vec<f64>>,
}

fn sigma_hats(exp: &CltExperiment<'_>, word: &Word, grid: &[usize]) -> Result<Vec<f64>> {
    match &exp.standardization {
        Standardization::ExactL2 => {
            let g = exp.proxy.ok_or_else(|| invalid("exact standardization needs a polynomial"))?;
            grid.iter().map(|&n| Ok((exact_l2_norm_sq(word, g, n)? / n as f64).sqrt())).collect()
        }
        Standardization::SeriesSigma { r_max, averaging } => {
            let g = exp.proxy.ok_or_else(|| invalid("series standardization needs a polynomial"))?;
            let weights = match &exp.source {
                WordSource::Iid { weights, .. } => weights.clone(),
                _ => return Err(invalid("series standardization needs an i.i.d. word source")),
            };
            let s = variance_series(word.alphabet(), &weights, g, *r_max, *averaging)?;
            Ok(vec![s.sigma_sq.max(0.0).sqrt(); grid.len()])
        }
        Standardization::Fixed { sigma } => Ok(vec![*sigma; grid.len()]),
    }
}

pub fn run_clt_samples(exp: &CltExperiment<'_>) -> Result<CltSamples> {
    let mut grid = exp.n_grid.clone();
    if grid.is_empty() || grid.contains(&0) {
        return Err(invalid("n grid must be nonempty and positive"));
    }
    grid.sort_unstable();
    grid.dedup();
    if exp.samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let n_max = *grid.last().expect("nonempty");
    let source = exp.source.with_seed(exp.seed);
    let word = source.sample_trial(n_max, 0)?;
    check_dim(word.dim(), exp.f.dim())?;
    let sigma = sigma_hats(exp, &word, &grid)?;
    let f_norm = match exp.proxy {
        Some(g) => g.l2_norm_sq().sqrt(),
        None => 1.0,
    };
    let threshold = 1e-6 * f_norm;
    if let Some(&s) = sigma.iter().find(|&&s| !(s > threshold)) {
        return Err(Error::ZeroVariance { sigma: s, threshold });
    }
    let ma = ModAlphabet::new(word.alphabet(), exp.q);
    let eval = exp.f.evaluator(exp.q);
    let raw: Vec<Vec<f64>> = (0..exp.samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(exp.seed, rng::domain::TRIAL, i as u64);
            let pt = sample_uniform(&mut r, exp.q, word.dim());
            let mut out = Vec::with_capacity(grid.len());
            let mut acc = 0.0;
            let mut gi = 0;
            ma.walk(word.indices(), &pt.coords, |k, y| {
                acc += eval(y);
                if k == grid[gi] {
                    out.push(acc);
                    gi += 1;
                }
            });
            out
        })
        .collect();
    let values: Vec<Vec<f64>> = grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            let scale = sigma[gi] * (n as f64).sqrt();
            raw.iter().map(|v| v[gi] / scale).collect()
        })
        .collect();
    let ks_distance = values.iter().map(|v| ks_distance_to_normal(v)).collect();
    Ok(CltSamples {
        report: CltReport {
            n_grid: grid,
            sigma_hat: sigma,
            ks_distance,
            samples: exp.samples,
            seed: exp.seed,
            standardization: exp.standardization.clone(),
        },
        values,
    })
}

pub fn run_clt(exp: &CltExperiment<'_>) -> Result<CltReport> {
    Ok(run_clt_samples(exp)?.report)
}

/// `E e^{ixX}` for each `x` in the grid.
pub fn empirical_char_fn(values: &[f64], x_grid: &[f64]) -> Vec<Complex64> {
    let n = values.len().max(1) as f64;
    x_grid
        .par_iter()
        .map(|&x| values.iter().map(|v| Complex64::new(0.0, x * v).exp()).sum::<Complex64>() / n)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsseenBound {
    pub u: f64,
    pub integral: f64,
    pub tail: f64,
    pub total: f64,
}

/// `(1/π) ∫_{−U}^{U} H(x)/|x| dx + 24/(π σ √(2π) U)` with
/// `H(x) = |φ(x) − e^{−σ²x²/2}|` and `φ` sampled on `x_grid`.
pub fn esseen_bound(x_grid: &[f64], char_fn: &[Complex64], sigma: f64, u: f64) -> Result<EsseenBound> {
    if x_grid.len() != char_fn.len() {
        return Err(invalid("grid and characteristic function lengths differ"));
    }
    let h: Vec<f64> = x_grid
        .iter()
        .zip(char_fn)
        .map(|(&x, c)| (c - Complex64::new((-0.5 * sigma * sigma * x * x).exp(), 0.0)).norm())
        .collect();
    esseen_from_h(x_grid, &h, sigma, u)
}

pub fn esseen_from_h(x_grid: &[f64], h: &[f64], sigma: f64, u: f64) -> Result<EsseenBound> {
    if !(u > 0.0) || !(sigma > 0.0) {
        return Err(invalid("need U > 0 and σ > 0"));
    }
    if x_grid.len() != h.len() || x_grid.len() < 2 {
        return Err(invalid("need matching grids with at least two points"));
    }
    if x_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("grid must be strictly increasing"));
    }
    let tol = 1e-12 * u;
    if x_grid[0] > -u + tol || x_grid[x_grid.len() - 1] < u - tol {
        return Err(invalid("grid must cover [-U, U]"));
    }
    let pts: Vec<(f64, f64)> = x_grid.iter().copied().zip(h.iter().copied()).filter(|(x, _)| x.abs() <= u + tol).collect();
    let ratio = |i: usize| -> f64 {
        let (x, hv) = pts[i];
        if x != 0.0 {
            return hv / x.abs();
        }
        // removable singularity: H(0) = 0, use the neighbouring slopes
        let mut near = Vec::new();
        if i > 0 {
            near.push(pts[i - 1].1 / pts[i - 1].0.abs());
        }
        if i + 1 < pts.len() {
            near.push(pts[i + 1].1 / pts[i + 1].0.abs());
        }
        near.iter().sum::<f64>() / near.len().max(1) as f64
    };
    let mut integral = 0.0;
    for i in 0..pts.len() - 1 {
        integral += 0.5 * (ratio(i) + ratio(i + 1)) * (pts[i + 1].0 - pts[i].0);
    }
    integral /= PI;
    let tail = 24.0 / (PI * sigma * (2.0 * PI).sqrt() * u);
    Ok(EsseenBound { u, integral, tail, total: integral + tail })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RateExponent {
    pub gamma: Rational64,
    /// The exponent is not positive, so no rate follows.
    pub no_rate: bool,
}

/// `min((−2β−1+3δ)/4, (−3β−1+4δ)/8, (β−1+2δ)/6)`, exactly.
pub fn rate_exponent(beta: Rational64, delta: Rational64) -> RateExponent {
    let one = Rational64::from_integer(1);
    let r = |n: i64| Rational64::from_integer(n);
    let a = (-r(2) * beta - one + r(3) * delta) / r(4);
    let b = (-r(3) * beta - one + r(4) * delta) / r(8);
    let c = (beta - one + r(2) * delta) / r(6);
    let gamma = a.min(b).min(c);
    RateExponent { gamma, no_rate: gamma <= Rational64::from_integer(0) }
}
