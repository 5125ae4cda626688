//! Coboundary detection for trigonometric polynomials.
//!
//! For a single automorphism the support of `f` is split into forward orbit
//! chains; `f = h∘τ − h` has a polynomial solution exactly when the running
//! coefficient sums along every chain return to zero. For a general word only
//! the collision counts and partial sums are reported.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::ergodic::{big_support, CollisionSum};
use crate::error::{invalid, Error, Result};
use crate::lattice::{FreqMap, FreqVector};
use crate::linalg::{check_dim, IntMatrix, Word};
use crate::trig::TrigPoly;

pub const DEFAULT_HORIZON: usize = 200;

const CLOSE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CoboundaryVerdict {
    NonzeroVarianceCertified,
    TelescopeFound { h: TrigPoly },
    Undecided { horizon: usize },
}

/// `c(j, p) = #{k ≤ K : A_0^k j = p}` over support frequencies `j, p`;
/// only positive counts are listed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CountEntry {
    pub j: FreqVector,
    pub p: FreqVector,
    pub count: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoboundaryReport {
    pub verdict: CoboundaryVerdict,
    pub horizon: usize,
    pub counts: Vec<CountEntry>,
    pub max_count: u64,
    /// `Σ_p |Σ_j c_k(j, p) f̂(j)|²` for `k = 0..=K`.
    pub partial_sums: Vec<f64>,
}

pub enum CoboundarySource<'a> {
    Letter(&'a IntMatrix),
    Word(&'a Word),
}

/// Classifies `f` as a coboundary, a function of positive asymptotic
/// variance, or neither within `horizon` steps. `assume_condition` stands in
/// for positivity of the letter when the caller vouches for the hypothesis.
pub fn coboundary_detect(
    source: CoboundarySource<'_>,
    f: &TrigPoly,
    horizon: usize,
    assume_condition: bool,
) -> Result<CoboundaryReport> {
    if !f.is_zero_mean() {
        return Err(invalid("polynomial must have zero mean"));
    }
    let support = big_support(f);
    match source {
        CoboundarySource::Letter(a) => {
            check_dim(a.dim(), f.dim())?;
            let mut powers = Vec::with_capacity(horizon + 1);
            let mut m = IntMatrix::identity(a.dim())?;
            powers.push(m.clone());
            for _ in 0..horizon {
                m = m.mul(a)?;
                powers.push(m.clone());
            }
            let (counts, max_count, partial_sums) = scan(&powers, &support)?;
            let verdict = single_letter_verdict(a, f, &support, horizon, a.is_positive() || assume_condition)?;
            Ok(CoboundaryReport { verdict, horizon, counts, max_count, partial_sums })
        }
        CoboundarySource::Word(w) => {
            check_dim(w.dim(), f.dim())?;
            if horizon > w.len() {
                return Err(Error::IndexOutOfRange(format!("horizon {horizon} exceeds word length {}", w.len())));
            }
            let powers: Vec<IntMatrix> = w.prefix_products().take(horizon + 1).collect();
            let (counts, max_count, partial_sums) = scan(&powers, &support)?;
            Ok(CoboundaryReport { verdict: CoboundaryVerdict::Undecided { horizon }, horizon, counts, max_count, partial_sums })
        }
    }
}

type ScanOut = (Vec<CountEntry>, u64, Vec<f64>);

fn scan(powers: &[IntMatrix], support: &[(FreqVector, Complex64)]) -> Result<ScanOut> {
    let index: FreqMap<Vec<u8>, usize> = support.iter().enumerate().map(|(i, (p, _))| (p.key(), i)).collect();
    let mut counts: FreqMap<(usize, usize), u64> = FreqMap::default();
    let mut sums = CollisionSum::default();
    let mut partial = Vec::with_capacity(powers.len());
    for (k, m) in powers.iter().enumerate() {
        for (j, (p, c)) in support.iter().enumerate() {
            let v = FreqVector::apply(m, p)?;
            let key = v.key();
            if let Some(&i) = index.get(&key) {
                *counts.entry((j, i)).or_insert(0) += 1;
            }
            sums.add(key, *c);
        }
        partial.push(if k + 1 == powers.len() { sums.exact() } else { sums.running() });
    }
    let mut entries: Vec<CountEntry> = counts
        .into_iter()
        .map(|((j, p), count)| CountEntry { j: support[j].0.clone(), p: support[p].0.clone(), count })
        .collect();
    entries.sort_by(|a, b| (a.j.key(), a.p.key()).cmp(&(b.j.key(), b.p.key())));
    let max_count = entries.iter().map(|e| e.count).max().unwrap_or(0);
    Ok((entries, max_count, partial))
}

fn in_closed_cone(v: &FreqVector) -> bool {
    v.0.iter().all(|x| !x.is_negative()) || v.0.iter().all(|x| !x.is_positive())
}

struct Link {
    next: usize,
    steps: usize,
}

fn single_letter_verdict(
    a: &IntMatrix,
    f: &TrigPoly,
    support: &[(FreqVector, Complex64)],
    horizon: usize,
    positive: bool,
) -> Result<CoboundaryVerdict> {
    let undecided = CoboundaryVerdict::Undecided { horizon };
    let index: FreqMap<Vec<u8>, usize> = support.iter().enumerate().map(|(i, (p, _))| (p.key(), i)).collect();
    let max_norm = support.iter().map(|(p, _)| p.sup_norm()).max().unwrap_or_else(BigInt::zero);
    let mut links: Vec<Option<Link>> = Vec::with_capacity(support.len());
    let mut all_certified = true;
    for (p, _) in support {
        let mut v = p.clone();
        let mut link = None;
        for k in 1..=horizon {
            v = FreqVector::apply(a, &v)?;
            if let Some(&i) = index.get(&v.key()) {
                link = Some(Link { next: i, steps: k });
                break;
            }
        }
        if link.is_none() {
            // iterates of a positive matrix on the closed cone never shrink
            let escaped = positive && a.is_positive() && in_closed_cone(&v) && v.sup_norm() > max_norm;
            all_certified &= escaped;
        }
        links.push(link);
    }
    let mut has_pred = vec![false; support.len()];
    for l in links.iter().flatten() {
        has_pred[l.next] = true;
    }
    let scale = f.coeff_abs_sum().max(1.0);
    let mut visited = vec![false; support.len()];
    let mut all_closed = true;
    let mut h_terms: Vec<(Vec<i64>, Complex64)> = Vec::new();
    let mut representable = true;
    for start in 0..support.len() {
        if has_pred[start] {
            continue;
        }
        let mut node = start;
        let mut cum = Complex64::new(0.0, 0.0);
        loop {
            visited[node] = true;
            cum += support[node].1;
            match &links[node] {
                Some(l) => {
                    let mut v = support[node].0.clone();
                    for _ in 0..l.steps {
                        match v.to_i64() {
                            Some(p) => h_terms.push((p, -cum)),
                            None => representable = false,
                        }
                        v = FreqVector::apply(a, &v)?;
                    }
                    node = l.next;
                }
                None => break,
            }
        }
        if cum.norm() > CLOSE_TOL * scale {
            all_closed = false;
        }
    }
    if visited.iter().any(|v| !v) {
        // a periodic orbit through the support
        return Ok(nonnegative_rule(f, positive).unwrap_or(undecided));
    }
    if all_closed && representable {
        let h_terms: Vec<(Vec<i64>, Complex64)> =
            h_terms.into_iter().filter(|(_, c)| c.norm() > CLOSE_TOL * scale).collect();
        let h = TrigPoly::from_terms(f.dim(), h_terms)?;
        if verify_telescope(a, f, &h)? {
            return Ok(CoboundaryVerdict::TelescopeFound { h });
        }
        return Ok(undecided);
    }
    if !all_closed && all_certified {
        return Ok(CoboundaryVerdict::NonzeroVarianceCertified);
    }
    Ok(nonnegative_rule(f, positive).unwrap_or(undecided))
}

fn nonnegative_rule(f: &TrigPoly, positive: bool) -> Option<CoboundaryVerdict> {
    let nonneg = f.pairs().all(|(_, c)| c.im.abs() <= CLOSE_TOL && c.re >= 0.0);
    (positive && nonneg && !f.is_zero()).then_some(CoboundaryVerdict::NonzeroVarianceCertified)
}

/// Checks `(h∘τ)^ − ĥ = f̂` at every frequency, using `(h∘τ)^(Ap) = ĥ(p)`.
pub fn verify_telescope(a: &IntMatrix, f: &TrigPoly, h: &TrigPoly) -> Result<bool> {
    let mut diff: FreqMap<Vec<u8>, Complex64> = FreqMap::default();
    for (p, c) in h.full_support() {
        let p = FreqVector::from_i64(&p);
        *diff.entry(FreqVector::apply(a, &p)?.key()).or_default() += c;
        *diff.entry(p.key()).or_default() -= c;
    }
    for (p, c) in big_support(f) {
        *diff.entry(p.key()).or_default() -= c;
    }
    let scale = f.coeff_abs_sum().max(h.coeff_abs_sum()).max(1.0);
    Ok(diff.values().all(|c| c.norm() <= CLOSE_TOL * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Alphabet;
    use std::sync::Arc;

    fn cat() -> IntMatrix {
        IntMatrix::m2(2, 1, 1, 1)
    }

    #[test]
    fn telescope_pair_is_found() {
        let f = TrigPoly::cosine(&[2, 1], 1.0).sub(&TrigPoly::cosine(&[1, 0], 1.0));
        let r = coboundary_detect(CoboundarySource::Letter(&cat()), &f, DEFAULT_HORIZON, false).unwrap();
        match r.verdict {
            CoboundaryVerdict::TelescopeFound { h } => {
                assert_eq!(h, TrigPoly::cosine(&[1, 0], 1.0));
                assert!(verify_telescope(&cat(), &f, &h).unwrap());
            }
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn longer_telescope() {
        // h = cos(2π x₁) + 0.5 sin(2π⟨(1,3),x⟩), f = h∘τ − h
        let a = cat();
        let h = TrigPoly::cosine(&[1, 0], 1.0).add(&TrigPoly::sine(&[1, 3], 0.5));
        let ah = TrigPoly::cosine(&[2, 1], 1.0).add(&TrigPoly::sine(&[5, 4], 0.5));
        let f = ah.sub(&h);
        let r = coboundary_detect(CoboundarySource::Letter(&a), &f, 50, false).unwrap();
        assert_eq!(r.verdict, CoboundaryVerdict::TelescopeFound { h });
    }

    #[test]
    fn cosine_has_positive_variance() {
        let f = TrigPoly::cosine(&[1, 0], 1.0);
        let r = coboundary_detect(CoboundarySource::Letter(&cat()), &f, DEFAULT_HORIZON, false).unwrap();
        assert_eq!(r.verdict, CoboundaryVerdict::NonzeroVarianceCertified);
        assert_eq!(r.partial_sums.len(), DEFAULT_HORIZON + 1);
        assert!((r.partial_sums[10] - 11.0 * 0.5).abs() < 1e-9);
    }

    #[test]
    fn nonnegative_coefficients_rule() {
        // (1,−1) under the letter enters the cone only after a step, and
        // nonnegativity certifies anyway
        let f = TrigPoly::cosine(&[1, -1], 1.0).add(&TrigPoly::cosine(&[3, 7], 2.0));
        let r = coboundary_detect(CoboundarySource::Letter(&cat()), &f, 3, false).unwrap();
        assert_eq!(r.verdict, CoboundaryVerdict::NonzeroVarianceCertified);
    }

    #[test]
    fn rotation_is_undecided() {
        let rot = IntMatrix::m2(0, -1, 1, 0);
        let f = TrigPoly::cosine(&[1, 0], 1.0).sub(&TrigPoly::cosine(&[0, 1], 1.0));
        let r = coboundary_detect(CoboundarySource::Letter(&rot), &f, 20, false).unwrap();
        assert_eq!(r.verdict, CoboundaryVerdict::Undecided { horizon: 20 });
        assert!(r.max_count >= 5);
    }

    #[test]
    fn word_source_reports_counts() {
        let a = Arc::new(Alphabet::standard_positive());
        let w = Word::new(a, vec![0, 1, 0, 0, 1, 1, 0, 1]).unwrap();
        let f = TrigPoly::cosine(&[1, 0], 1.0);
        let r = coboundary_detect(CoboundarySource::Word(&w), &f, 8, false).unwrap();
        assert_eq!(r.verdict, CoboundaryVerdict::Undecided { horizon: 8 });
        assert_eq!(r.max_count, 1);
        assert!((r.partial_sums[8] - 4.5).abs() < 1e-12);
        assert!(coboundary_detect(CoboundarySource::Word(&w), &f, 9, false).is_err());
    }

    #[test]
    fn report_serializes() {
        let f = TrigPoly::cosine(&[2, 1], 1.0).sub(&TrigPoly::cosine(&[1, 0], 1.0));
        let r = coboundary_detect(CoboundarySource::Letter(&cat()), &f, 5, false).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("TELESCOPE_FOUND"));
        assert!(coboundary_detect(CoboundarySource::Letter(&cat()), &TrigPoly::constant(2, 1.0), 5, false).is_err());
    }
}
