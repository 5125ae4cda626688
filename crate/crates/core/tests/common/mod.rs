//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::Rng;
use toral_core::{Alphabet, IntMatrix};

pub type M2 = [[i64; 2]; 2];

pub const CAT: M2 = [[2, 1], [1, 1]];
pub const CAT_T: M2 = [[1, 1], [1, 2]];

pub fn mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn apply(m: &M2, p: [i64; 2]) -> [i64; 2] {
    [m[0][0] * p[0] + m[0][1] * p[1], m[1][0] * p[0] + m[1][1] * p[1]]
}

pub fn to_int(m: &M2) -> IntMatrix {
    IntMatrix::m2(m[0][0], m[0][1], m[1][0], m[1][1])
}

pub fn two_letter_alphabet() -> Arc<Alphabet> {
    Arc::new(Alphabet::from_matrices(vec![to_int(&CAT), to_int(&CAT_T)]).unwrap())
}

/// `P_0 = I, P_ℓ = P_{ℓ−1} A_ℓ`.
pub fn prefixes(letters: &[M2]) -> Vec<M2> {
    let mut out = vec![[[1, 0], [0, 1]]];
    for a in letters {
        let next = mul(out.last().unwrap(), a);
        out.push(next);
    }
    out
}

pub fn freq_box(d: i64) -> Vec<[i64; 2]> {
    let mut out = Vec::new();
    for a in -d..=d {
        for b in -d..=d {
            out.push([a, b]);
        }
    }
    out
}

/// Unpruned decision of the separation property: every chain of at most
/// `s_max` gapped blocks, every frequency choice, exact deduplicated sums.
/// Returns `true` when some admissible chain sums to zero.
pub fn brute_separation_violated(p: &[M2], d: i64, gap: usize, s_max: usize, particular: bool) -> bool {
    let n = p.len() - 1;
    let freqs = freq_box(d);
    let block_values = |a: usize, b: usize| -> Vec<[i64; 2]> {
        let mut vals = Vec::new();
        for x in &freqs {
            let u = apply(&p[a], *x);
            if particular {
                vals.push(u);
            } else {
                for y in &freqs {
                    let v = apply(&p[b], *y);
                    vals.push([u[0] + v[0], u[1] + v[1]]);
                }
            }
        }
        vals
    };
    let positions = |hi: usize| -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 1..=hi {
            if particular {
                out.push((a, a));
            } else {
                for b in a..=hi {
                    out.push((a, b));
                }
            }
        }
        out
    };
    // reach[k][m]: sums of at most k blocks inside [1, m]
    let mut reach: HashMap<(usize, usize), HashSet<[i64; 2]>> = HashMap::new();
    fn get(
        k: usize,
        m: usize,
        reach: &mut HashMap<(usize, usize), HashSet<[i64; 2]>>,
        gap: usize,
        positions: &dyn Fn(usize) -> Vec<(usize, usize)>,
        block_values: &dyn Fn(usize, usize) -> Vec<[i64; 2]>,
    ) -> HashSet<[i64; 2]> {
        if k == 0 || m == 0 {
            return HashSet::from([[0, 0]]);
        }
        if let Some(s) = reach.get(&(k, m)) {
            return s.clone();
        }
        let mut out = get(k - 1, m, reach, gap, positions, block_values);
        for (a, b) in positions(m) {
            let earlier = if a > gap { get(k - 1, a - gap, reach, gap, positions, block_values) } else { HashSet::from([[0, 0]]) };
            for v in block_values(a, b) {
                for r in &earlier {
                    out.insert([v[0] + r[0], v[1] + r[1]]);
                }
            }
        }
        reach.insert((k, m), out.clone());
        out
    }
    if s_max < 2 {
        return false;
    }
    for (a, b) in positions(n) {
        if a <= gap {
            continue;
        }
        let earlier = get(s_max - 1, a - gap, &mut reach, gap, &positions, &block_values);
        for v in block_values(a, b) {
            if v != [0, 0] && earlier.contains(&[-v[0], -v[1]]) {
                return true;
            }
        }
    }
    false
}

const Q: u128 = (1 << 61) - 1;

/// Monte Carlo mean and standard error of `|S_n g|²` for a real polynomial
/// given by `(frequency, coefficient)` over its full support, iterating
/// `x ↦ Aᵗx` exactly modulo `2^61 − 1`.
pub fn mc_sum_sq<R: Rng>(
    rng: &mut R,
    letters: &[M2],
    n: usize,
    support: &[([i64; 2], (f64, f64))],
    samples: usize,
) -> (f64, f64) {
    let reduce = |v: i128| -> u128 { v.rem_euclid(Q as i128) as u128 };
    let mut acc = 0.0;
    let mut acc2 = 0.0;
    for _ in 0..samples {
        let mut x = [rng.random_range(0..Q as u64) as u128, rng.random_range(0..Q as u64) as u128];
        let mut s = 0.0;
        for a in &letters[..n] {
            // transpose action
            let y0 = (a[0][0] as u128 * x[0] + a[1][0] as u128 * x[1]) % Q;
            let y1 = (a[0][1] as u128 * x[0] + a[1][1] as u128 * x[1]) % Q;
            x = [y0, y1];
            for (p, (re, im)) in support {
                let phase = (reduce(p[0] as i128) * x[0] + reduce(p[1] as i128) * x[1]) % Q;
                let t = 2.0 * std::f64::consts::PI * (phase as f64 / Q as f64);
                s += re * t.cos() - im * t.sin();
            }
        }
        let v = s * s;
        acc += v;
        acc2 += v * v;
    }
    let m = acc / samples as f64;
    let var = (acc2 / samples as f64 - m * m).max(0.0) * samples as f64 / (samples - 1) as f64;
    (m, (var / samples as f64).sqrt())
}
