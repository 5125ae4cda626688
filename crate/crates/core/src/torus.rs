//! Exact iteration of toral automorphisms on points with a fixed denominator.

use std::io::Write;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{check_dim, Alphabet, IntMatrix, Word};

pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Modulus `q ≥ 2`. The Mersenne prime `2^61 − 1` takes a fast reduction path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Modulus(u64);

impl Default for Modulus {
    fn default() -> Self {
        Modulus(MERSENNE_61)
    }
}

impl Modulus {
    pub fn new(q: u64) -> Result<Self> {
        if q < 2 {
            return Err(invalid(format!("modulus must be at least 2, got {q}")));
        }
        Ok(Modulus(q))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        let p = a as u128 * b as u128;
        if self.0 == MERSENNE_61 {
            let lo = (p as u64) & MERSENNE_61;
            let hi = (p >> 61) as u64;
            let s = lo + hi;
            if s >= MERSENNE_61 {
                s - MERSENNE_61
            } else {
                s
            }
        } else {
            (p % self.0 as u128) as u64
        }
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        let s = a as u128 + b as u128;
        let q = self.0 as u128;
        (if s >= q { s - q } else { s }) as u64
    }

    pub fn reduce_i64(self, x: i64) -> u64 {
        (x as i128).rem_euclid(self.0 as i128) as u64
    }

    pub fn reduce(self, x: &BigInt) -> u64 {
        x.mod_floor(&BigInt::from(self.0)).to_u64().expect("residue fits in u64")
    }
}

/// Point `coords / q` of the torus.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModularPoint {
    pub q: Modulus,
    pub coords: Vec<u64>,
}

impl ModularPoint {
    pub fn new(q: Modulus, coords: Vec<u64>) -> Result<Self> {
        if coords.iter().any(|&c| c >= q.value()) {
            return Err(invalid("coordinates must be reduced modulo q"));
        }
        Ok(Self { q, coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Coordinates as floats in `[0, 1)`.
    pub fn unit_coords(&self) -> Vec<f64> {
        self.coords.iter().map(|&c| c as f64 / self.q.value() as f64).collect()
    }
}

/// Transpose of an integer matrix reduced modulo `q`, ready for iteration.
#[derive(Clone, Debug)]
pub struct ModMatrix {
    dim: usize,
    q: Modulus,
    /// `t[i * d + j] = m[j][i] mod q`
    t: Vec<u64>,
}

impl ModMatrix {
    pub fn new(m: &IntMatrix, q: Modulus) -> Self {
        let d = m.dim();
        let mut t = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                t.push(q.reduce(m.get(j, i)));
            }
        }
        Self { dim: d, q, t }
    }

    /// `out = mᵗ · x mod q`.
    #[inline]
    pub fn apply_into(&self, x: &[u64], out: &mut [u64]) {
        let d = self.dim;
        let q = self.q;
        if d == 2 {
            out[0] = q.add(q.mul(self.t[0], x[0]), q.mul(self.t[1], x[1]));
            out[1] = q.add(q.mul(self.t[2], x[0]), q.mul(self.t[3], x[1]));
            return;
        }
        for i in 0..d {
            let mut acc = 0u64;
            for j in 0..d {
                acc = q.add(acc, q.mul(self.t[i * d + j], x[j]));
            }
            out[i] = acc;
        }
    }
}

/// Reduced transposes of every alphabet member.
#[derive(Clone, Debug)]
pub struct ModAlphabet {
    pub q: Modulus,
    pub dim: usize,
    letters: Vec<ModMatrix>,
}

impl ModAlphabet {
    pub fn new(alphabet: &Alphabet, q: Modulus) -> Self {
        Self {
            q,
            dim: alphabet.dim(),
            letters: alphabet.letters().iter().map(|l| ModMatrix::new(&l.matrix, q)).collect(),
        }
    }

    /// Walks the orbit of `x` along `indices`, calling `visit(k, point)` for
    /// `k = 1..=indices.len()`.
    pub fn walk(&self, indices: &[usize], x: &[u64], mut visit: impl FnMut(usize, &[u64])) {
        let mut cur = x.to_vec();
        let mut next = vec![0u64; self.dim];
        for (k, &idx) in indices.iter().enumerate() {
            self.letters[idx].apply_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
            visit(k + 1, &cur);
        }
    }
}

/// `τ(x) = mᵗ x mod q`.
pub fn apply(m: &IntMatrix, pt: &ModularPoint) -> Result<ModularPoint> {
    check_dim(m.dim(), pt.dim())?;
    let mm = ModMatrix::new(m, pt.q);
    let mut out = vec![0; pt.dim()];
    mm.apply_into(&pt.coords, &mut out);
    Ok(ModularPoint { q: pt.q, coords: out })
}

/// Points `τ_k … τ_1 x` for `k = 1..=n`.
pub fn orbit(word: &Word, pt: &ModularPoint, n: usize) -> Result<Vec<ModularPoint>> {
    check_dim(word.dim(), pt.dim())?;
    if n > word.len() {
        return Err(Error::IndexOutOfRange(format!("orbit length {n} exceeds word length {}", word.len())));
    }
    let ma = ModAlphabet::new(word.alphabet(), pt.q);
    let mut out = Vec::with_capacity(n);
    ma.walk(&word.indices()[..n], &pt.coords, |_, c| {
        out.push(ModularPoint { q: pt.q, coords: c.to_vec() })
    });
    Ok(out)
}

pub fn sample_uniform<R: Rng>(rng: &mut R, q: Modulus, d: usize) -> ModularPoint {
    let coords = (0..d).map(|_| rng.random_range(0..q.value())).collect();
    ModularPoint { q, coords }
}

/// Writes an orbit as CSV rows `k, x1, ..., xd` of residues.
pub fn write_orbit_csv<W: Write>(w: W, points: &[ModularPoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let d = points.first().map_or(0, |p| p.dim());
    let mut header = vec!["k".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    wr.write_record(&header)?;
    for (k, p) in points.iter().enumerate() {
        let mut row = vec![(k + 1).to_string()];
        row.extend(p.coords.iter().map(|c| c.to_string()));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::sync::Arc;

    #[test]
    fn mersenne_mul_matches_generic() {
        let q = Modulus::default();
        let mut r = rng::stream(3, rng::domain::INSTANCE, 0);
        for _ in 0..10_000 {
            let a = r.random_range(0..MERSENNE_61);
            let b = r.random_range(0..MERSENNE_61);
            let expect = ((a as u128 * b as u128) % MERSENNE_61 as u128) as u64;
            assert_eq!(q.mul(a, b), expect);
        }
        let m = MERSENNE_61 - 1;
        assert_eq!(q.mul(m, m), 1);
    }

    #[test]
    fn reduce_negative_values() {
        let q = Modulus::new(101).unwrap();
        assert_eq!(q.reduce(&BigInt::from(-1)), 100);
        assert_eq!(q.reduce_i64(-1), 100);
        assert_eq!(q.reduce_i64(-202), 0);
        assert!(Modulus::new(1).is_err());
    }

    #[test]
    fn apply_examples() {
        let q = Modulus::new(101).unwrap();
        let pt = ModularPoint::new(q, vec![10, 20]).unwrap();
        assert_eq!(apply(&IntMatrix::identity(2).unwrap(), &pt).unwrap(), pt);
        assert_eq!(apply(&IntMatrix::m2(2, 1, 1, 1), &pt).unwrap().coords, vec![40, 30]);
        let pt = ModularPoint::new(q, vec![100, 1]).unwrap();
        assert_eq!(apply(&IntMatrix::m2(1, 1, 0, 1), &pt).unwrap().coords, vec![100, 0]);
        assert!(ModularPoint::new(q, vec![101, 0]).is_err());
    }

    #[test]
    fn orbit_composes_apply() {
        let alpha = Arc::new(Alphabet::standard_positive());
        let w = Word::new(alpha, vec![0, 1, 1, 0]).unwrap();
        let pt = ModularPoint::new(Modulus::default(), vec![12345, 678910]).unwrap();
        assert!(orbit(&w, &pt, 0).unwrap().is_empty());
        let o = orbit(&w, &pt, 4).unwrap();
        let mut cur = pt.clone();
        for k in 1..=4 {
            cur = apply(w.letter(k).unwrap(), &cur).unwrap();
            assert_eq!(o[k - 1], cur);
        }
        assert!(orbit(&w, &pt, 5).is_err());
    }

    #[test]
    fn apply_in_three_dimensions() {
        let m = IntMatrix::from_i64(&[vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]]).unwrap();
        let q = Modulus::new(1000).unwrap();
        let pt = ModularPoint::new(q, vec![1, 2, 3]).unwrap();
        // mᵗ = [[1,0,1],[1,1,0],[0,1,1]]
        assert_eq!(apply(&m, &pt).unwrap().coords, vec![4, 3, 5]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let q = Modulus::default();
        let a = sample_uniform(&mut rng::stream(9, rng::domain::POINT, 0), q, 2);
        let b = sample_uniform(&mut rng::stream(9, rng::domain::POINT, 0), q, 2);
        assert_eq!(a, b);
    }

    #[test]
    fn orbit_csv_has_header_and_rows() {
        let q = Modulus::new(101).unwrap();
        let pts = vec![ModularPoint::new(q, vec![1, 2]).unwrap(), ModularPoint::new(q, vec![3, 4]).unwrap()];
        let mut buf = Vec::new();
        write_orbit_csv(&mut buf, &pts).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,x1,x2\n1,1,2\n2,3,4\n");
    }
}
