//! Test functions on the torus: Hölder functions, regular-set indicators and
//! their Fejér approximants.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::torus::Modulus;
use crate::trig::TrigPoly;

/// Anything that can be evaluated at exact torus points.
pub trait Observable: Send + Sync {
    fn dim(&self) -> usize;
    /// Evaluator at residues modulo `q`.
    fn evaluator(&self, q: Modulus) -> Box<dyn Fn(&[u64]) -> f64 + Send + Sync + '_>;
}

impl Observable for TrigPoly {
    fn dim(&self) -> usize {
        TrigPoly::dim(self)
    }

    fn evaluator(&self, q: Modulus) -> Box<dyn Fn(&[u64]) -> f64 + Send + Sync + '_> {
        let c = self.compile(q);
        Box::new(move |x| c.eval(x))
    }
}

fn to_unit(x: &[u64], q: Modulus) -> Vec<f64> {
    let qf = q.value() as f64;
    x.iter().map(|&c| c as f64 / qf).collect()
}

/// Sup-norm distance on the torus.
pub fn torus_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = (a - b).rem_euclid(1.0);
            d.min(1.0 - d)
        })
        .fold(0.0, f64::max)
}

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Black-box function with a declared Hölder exponent and norm bound.
#[derive(Clone)]
pub struct HolderFn {
    pub label: String,
    pub dim: usize,
    pub alpha: f64,
    pub holder_norm: f64,
    evaluator: Evaluator,
}

impl fmt::Debug for HolderFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HolderFn")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("alpha", &self.alpha)
            .field("holder_norm", &self.holder_norm)
            .finish()
    }
}

impl HolderFn {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        alpha: f64,
        holder_norm: f64,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid(format!("Hölder exponent must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { label: label.into(), dim, alpha, holder_norm, evaluator: Arc::new(f) })
    }

    /// `d(x, c)^α`: sup norm `(1/2)^α`, Hölder seminorm at most 1.
    pub fn distance_power(center: Vec<f64>, alpha: f64) -> Result<Self> {
        let dim = center.len();
        Self::new(format!("dist^{alpha}"), dim, alpha, 0.5f64.powf(alpha) + 1.0, move |x| {
            torus_distance(x, &center).powf(alpha)
        })
    }

    /// `cos(2π x_1)`: Lipschitz with constant `2π` for the sup distance.
    pub fn cos_first(dim: usize) -> Self {
        Self::new("cos(2 pi x1)", dim, 1.0, 1.0 + TAU, |x| (TAU * x[0]).cos()).expect("valid exponent")
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.evaluator)(x)
    }

    /// Largest `|f(x) − f(y)| / (holder_norm · d(x, y)^α)` over random pairs;
    /// at most 1 when the declared norm is valid.
    pub fn holder_check<R: Rng>(&self, rng: &mut R, pairs: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let x: Vec<f64> = (0..self.dim).map(|_| rng.random()).collect();
            let scale: f64 = 10f64.powf(-rng.random_range(0.0..4.0));
            let y: Vec<f64> = x.iter().map(|v| (v + scale * (rng.random::<f64>() - 0.5)).rem_euclid(1.0)).collect();
            let d = torus_distance(&x, &y);
            if d > 0.0 {
                let ratio = (self.eval(&x) - self.eval(&y)).abs() / (self.holder_norm * d.powf(self.alpha));
                worst = worst.max(ratio);
            }
        }
        worst
    }
}

impl Observable for HolderFn {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluator(&self, q: Modulus) -> Box<dyn Fn(&[u64]) -> f64 + Send + Sync + '_> {
        Box::new(move |x| self.eval(&to_unit(x, q)))
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    /// `Π [lo_i, hi_i)` with `0 ≤ lo_i < hi_i ≤ 1`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Euclidean ball of radius `< 1/2`, wrapped on the torus.
    Ball { center: Vec<f64>, radius: f64 },
}

/// Indicator of a box or ball with collar constants `λ(d(t, ∂E) ≤ ε) ≤ C ε^α`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularSetIndicator {
    pub shape: Shape,
    pub c: f64,
    pub alpha: f64,
}

fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

impl RegularSetIndicator {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(invalid("box corners must have equal nonzero length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(0.0 <= *a && a < b && *b <= 1.0)) {
            return Err(invalid("box needs 0 <= lo < hi <= 1 on each axis"));
        }
        let d = lo.len() as f64;
        Ok(Self { shape: Shape::Box { lo, hi }, c: 4.0 * d, alpha: 1.0 })
    }

    pub fn new_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius < 0.5) {
            return Err(invalid("ball radius must lie in (0, 1/2)"));
        }
        // annulus area for the Euclidean collar in d = 2, crude otherwise
        let c = if center.len() == 2 { PI * (4.0 * radius + 1.0) } else { 2.0 * center.len() as f64 * 4.0 };
        Ok(Self { shape: Shape::Ball { center, radius }, c, alpha: 1.0 })
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Box { lo, .. } => lo.len(),
            Shape::Ball { center, .. } => center.len(),
        }
    }

    pub fn measure(&self) -> f64 {
        match &self.shape {
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            Shape::Ball { center, radius } => {
                let d = center.len() as f64;
                PI.powf(d / 2.0) / statrs::function::gamma::gamma(d / 2.0 + 1.0) * radius.powf(d)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.shape {
            Shape::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(t, (a, b))| *a <= *t && *t < *b),
            Shape::Ball { center, radius } => {
                x.iter().zip(center).map(|(t, c)| circ_dist(*t, *c).powi(2)).sum::<f64>().sqrt() <= *radius
            }
        }
    }

    /// Distance from `x` to the boundary (sup distance for boxes, Euclidean
    /// for balls).
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Box { lo, hi } => {
                if self.contains(x) {
                    x.iter()
                        .zip(lo.iter().zip(hi))
                        .map(|(t, (a, b))| {
                            let mut m = f64::INFINITY;
                            if *a > 0.0 || *b < 1.0 {
                                m = circ_dist(*t, *a).min(circ_dist(*t, *b));
                            }
                            m
                        })
                        .fold(f64::INFINITY, f64::min)
                } else {
                    x.iter()
                        .zip(lo.iter().zip(hi))
                        .map(|(t, (a, b))| if *a <= *t && *t < *b { 0.0 } else { circ_dist(*t, *a).min(circ_dist(*t, *b)) })
                        .fold(0.0, f64::max)
                }
            }
            Shape::Ball { center, radius } => {
                let r = x.iter().zip(center).map(|(t, c)| circ_dist(*t, *c).powi(2)).sum::<f64>().sqrt();
                (r - radius).abs()
            }
        }
    }

    /// Monte Carlo estimate of `λ(d(t, ∂E) ≤ ε)` with its standard error.
    pub fn collar_measure<R: Rng>(&self, rng: &mut R, eps: f64, samples: usize) -> (f64, f64) {
        let d = self.dim();
        let hits = (0..samples)
            .filter(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                self.boundary_distance(&x) <= eps
            })
            .count();
        let p = hits as f64 / samples as f64;
        (p, (p * (1.0 - p) / samples as f64).sqrt())
    }

    /// Fourier coefficient at `p` in closed form (boxes in any dimension,
    /// balls in dimension 2).
    pub fn fourier_coeff(&self, p: &[i64]) -> Option<Complex64> {
        match &self.shape {
            Shape::Box { lo, hi } => Some(
                p.iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(&k, (a, b))| interval_coeff(k, *a, *b))
                    .product(),
            ),
            Shape::Ball { center, radius } if center.len() == 2 => {
                let norm = ((p[0] * p[0] + p[1] * p[1]) as f64).sqrt();
                let phase = Complex64::from_polar(1.0, -TAU * (p[0] as f64 * center[0] + p[1] as f64 * center[1]));
                if norm == 0.0 {
                    Some(Complex64::new(PI * radius * radius, 0.0))
                } else {
                    Some(phase * radius * bessel_j1(TAU * radius * norm) / norm)
                }
            }
            Shape::Ball { .. } => None,
        }
    }
}

impl Observable for RegularSetIndicator {
    fn dim(&self) -> usize {
        RegularSetIndicator::dim(self)
    }

    fn evaluator(&self, q: Modulus) -> Box<dyn Fn(&[u64]) -> f64 + Send + Sync + '_> {
        Box::new(move |x| if self.contains(&to_unit(x, q)) { 1.0 } else { 0.0 })
    }
}

/// `∫_a^b e^{−2πikt} dt`.
fn interval_coeff(k: i64, a: f64, b: f64) -> Complex64 {
    if k == 0 {
        return Complex64::new(b - a, 0.0);
    }
    let w = -TAU * k as f64;
    (Complex64::from_polar(1.0, w * b) - Complex64::from_polar(1.0, w * a)) / Complex64::new(0.0, w)
}

/// Bessel `J_1` by the trapezoid rule on the periodic integral
/// `J_1(x) = (1/2π) ∫ cos(x sin τ − τ) dτ`, exact to rounding once the node
/// count exceeds `|x|` comfortably.
pub fn bessel_j1(x: f64) -> f64 {
    let n = (2.0 * x.abs()) as usize + 64;
    let h = TAU / n as f64;
    (0..n).map(|k| (x * (k as f64 * h).sin() - k as f64 * h).cos()).sum::<f64>() / n as f64
}

/// Source for [`fejer_approx`].
pub enum FejerSource<'a> {
    Holder { f: &'a HolderFn, mesh: usize },
    Set(&'a RegularSetIndicator),
    Trig(&'a TrigPoly),
}

pub const DEFAULT_MESH: usize = 1 << 10;
/// Largest number of quadrature nodes accepted.
pub const QUADRATURE_LIMIT: u128 = 1 << 24;
const DROP_BELOW: f64 = 1e-14;

/// Fejér weight `Π_i (1 − |p_i| / (n + 1))`.
pub fn fejer_weight(p: &[i64], n: usize) -> f64 {
    p.iter().map(|&k| (1.0 - k.unsigned_abs() as f64 / (n as f64 + 1.0)).max(0.0)).product()
}

fn half_box(dim: usize, n: i64) -> Vec<Vec<i64>> {
    let mut all = vec![Vec::new()];
    for _ in 0..dim {
        let mut next = Vec::new();
        for v in &all {
            for k in -n..=n {
                let mut w = v.clone();
                w.push(k);
                next.push(w);
            }
        }
        all = next;
    }
    // keep one of each ±p pair
    all.retain(|p| p.iter().find(|&&x| x != 0).is_none_or(|&x| x > 0));
    all
}

/// Fejér approximant `φ_n * f` of order `n`.
pub fn fejer_approx(source: FejerSource<'_>, n: usize) -> Result<TrigPoly> {
    if n == 0 {
        return Err(invalid("Fejér order must be at least 1"));
    }
    let ni = n as i64;
    match source {
        FejerSource::Trig(g) => {
            let terms = g
                .pairs()
                .filter(|(p, _)| p.iter().all(|k| k.abs() <= ni))
                .map(|(p, c)| (p.clone(), c * fejer_weight(p, n)));
            TrigPoly::from_terms(g.dim(), terms.collect::<Vec<_>>())
        }
        FejerSource::Set(set) => {
            let d = set.dim();
            if set.fourier_coeff(&vec![0; d]).is_none() {
                let mesh = DEFAULT_MESH;
                let f = |x: &[f64]| if set.contains(x) { 1.0 } else { 0.0 };
                return quadrature_fejer(&f, d, n, mesh);
            }
            let terms: Vec<(Vec<i64>, Complex64)> = half_box(d, ni)
                .into_iter()
                .filter_map(|p| {
                    let c = set.fourier_coeff(&p)? * fejer_weight(&p, n);
                    (c.norm() >= DROP_BELOW).then_some((p, c))
                })
                .collect();
            TrigPoly::from_terms(d, terms)
        }
        FejerSource::Holder { f, mesh } => quadrature_fejer(&|x| f.eval(x), f.dim, n, mesh),
    }
}

/// Fourier coefficients from samples on the grid `(Z/m)^d` by a d-dimensional
/// FFT, then Fejér-weighted.
fn quadrature_fejer(f: &dyn Fn(&[f64]) -> f64, d: usize, n: usize, mesh: usize) -> Result<TrigPoly> {
    let points = (mesh as u128).pow(d as u32);
    if points > QUADRATURE_LIMIT {
        return Err(Error::QuadratureBudget { points, limit: QUADRATURE_LIMIT });
    }
    if 2 * n >= mesh {
        return Err(invalid("quadrature mesh must exceed twice the Fejér order"));
    }
    let total = points as usize;
    let mut data: Vec<Complex64> = (0..total)
        .map(|idx| {
            let mut rem = idx;
            let mut x = vec![0.0; d];
            for i in (0..d).rev() {
                x[i] = (rem % mesh) as f64 / mesh as f64;
                rem /= mesh;
            }
            Complex64::new(f(&x), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(mesh);
    let mut line = vec![Complex64::new(0.0, 0.0); mesh];
    for axis in 0..d {
        let stride = mesh.pow((d - 1 - axis) as u32);
        for base in 0..total {
            if (base / stride) % mesh != 0 {
                continue;
            }
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[base + k * stride];
            }
            fft.process(&mut line);
            for (k, v) in line.iter().enumerate() {
                data[base + k * stride] = *v;
            }
        }
    }
    let scale = 1.0 / total as f64;
    let terms: Vec<(Vec<i64>, Complex64)> = half_box(d, n as i64)
        .into_iter()
        .filter_map(|p| {
            let idx = p.iter().fold(0usize, |acc, &k| acc * mesh + k.rem_euclid(mesh as i64) as usize);
            let c = data[idx] * scale * fejer_weight(&p, n);
            (c.norm() >= DROP_BELOW).then_some((p, c))
        })
        .collect();
    TrigPoly::from_terms(d, terms)
}

/// Conservative Fejér order `⌈(C ‖f‖_α n^5)^{1/α}⌉` targeting an `n^{−4}`
/// approximation of `S_n f` in `L²`.
pub fn conservative_order(c: f64, holder_norm: f64, alpha: f64, n: usize) -> f64 {
    (c * holder_norm * (n as f64).powi(5)).powf(1.0 / alpha).ceil()
}
