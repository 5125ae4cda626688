//! Lattice frequencies, their pushforwards under words, the separation
//! property `S(D, Δ)` and exact products of trigonometric polynomials.

use std::cell::{Cell, RefCell};
use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;
use std::fmt;
use std::rc::Rc;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{check_dim, IntMatrix, JsonInt, Word};
use crate::trig::TrigPoly;

/// Hash map with a fixed hasher, so iteration order (and float sums over it)
/// is reproducible.
pub(crate) type FreqMap<K, V> = HashMap<K, V, BuildHasherDefault<DefaultHasher>>;

/// Frequency `p ∈ Z^d` with arbitrary-precision coordinates.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FreqVector(pub Vec<BigInt>);

impl fmt::Debug for FreqVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for FreqVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.iter().map(|x| JsonInt(x.clone())).collect::<Vec<_>>().serialize(s)
    }
}

impl<'de> Deserialize<'de> for FreqVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(FreqVector(Vec::<JsonInt>::deserialize(d)?.into_iter().map(|x| x.0).collect()))
    }
}

impl FreqVector {
    pub fn from_i64(v: &[i64]) -> Self {
        FreqVector(v.iter().map(|&x| BigInt::from(x)).collect())
    }

    pub fn zero(dim: usize) -> Self {
        FreqVector(vec![BigInt::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|x| x.is_zero())
    }

    pub fn sup_norm(&self) -> BigInt {
        self.0.iter().map(|x| x.abs()).max().unwrap_or_default()
    }

    pub fn add(&self, other: &FreqVector) -> FreqVector {
        FreqVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &FreqVector) -> FreqVector {
        FreqVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> FreqVector {
        FreqVector(self.0.iter().map(|a| -a).collect())
    }

    pub fn to_i64(&self) -> Option<Vec<i64>> {
        self.0.iter().map(|x| x.to_i64()).collect()
    }

    /// Injective byte encoding used as a hash key.
    pub fn key(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.0.len() * 12);
        for x in &self.0 {
            let (sign, mag) = x.to_bytes_le();
            out.push(sign as u8);
            out.extend_from_slice(&(mag.len() as u32).to_le_bytes());
            out.extend_from_slice(&mag);
        }
        out
    }

    pub fn apply(m: &IntMatrix, p: &FreqVector) -> Result<FreqVector> {
        Ok(FreqVector(m.mul_vec(&p.0)?))
    }
}

/// `A_1^ℓ p`, with `A_1^0 = Id`.
pub fn pushforward(word: &Word, ell: usize, p: &FreqVector) -> Result<FreqVector> {
    check_dim(word.dim(), p.dim())?;
    if ell > word.len() {
        return Err(Error::IndexOutOfRange(format!("ell = {ell} for word of length {}", word.len())));
    }
    if ell == 0 {
        return Ok(p.clone());
    }
    // right to left keeps every intermediate a vector
    let mut v = p.0.clone();
    for k in (1..=ell).rev() {
        v = word.letter(k)?.mul_vec(&v)?;
    }
    Ok(FreqVector(v))
}

/// All prefix products `P_0..=P_n` of `word`.
pub(crate) fn prefix_matrices(word: &Word, n: usize) -> Result<Vec<IntMatrix>> {
    if n > word.len() {
        return Err(Error::IndexOutOfRange(format!("n = {n} for word of length {}", word.len())));
    }
    Ok(word.prefix_products().take(n + 1).collect())
}

/// All `p ∈ Z^d` with `‖p‖ ≤ bound`, in lexicographic order.
pub fn box_frequencies(dim: usize, bound: u64) -> Vec<FreqVector> {
    let b = bound as i64;
    let mut out = vec![Vec::<i64>::new()];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * (2 * bound as usize + 1));
        for prefix in &out {
            for x in -b..=b {
                let mut v = prefix.clone();
                v.push(x);
                next.push(v);
            }
        }
        out = next;
    }
    out.iter().map(|v| FreqVector::from_i64(v)).collect()
}

#[derive(Clone, Debug)]
pub struct SeparationInstance {
    pub word: Word,
    pub d_bound: u64,
    pub gap: usize,
    pub s_max: usize,
    /// Force every `p'_j = 0` (single-sequence variant of the property).
    pub particular: bool,
    pub budget: u64,
}

pub const DEFAULT_SEPARATION_BUDGET: u64 = 100_000_000;

impl SeparationInstance {
    pub fn new(word: Word, d_bound: u64, gap: usize, s_max: usize) -> Self {
        Self { word, d_bound, gap, s_max, particular: false, budget: DEFAULT_SEPARATION_BUDGET }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SeparationVerdict {
    /// No violation among chains with at most `s_max` blocks.
    HoldsExhaustive,
    /// No violation among chains of any length: the capped search found none
    /// and norm domination rules out every longer chain.
    HoldsCertified,
    Violated,
}

/// One block of a chain: positions `ℓ ≤ ℓ'` and frequencies `p, p'`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessBlock {
    pub ell: usize,
    pub ell_prime: usize,
    pub p: FreqVector,
    pub p_prime: FreqVector,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub blocks: Vec<WitnessBlock>,
}

impl Witness {
    /// Re-checks every hypothesis of the property and that the sum vanishes.
    pub fn verify(&self, word: &Word, d_bound: u64, gap: usize, particular: bool) -> Result<bool> {
        let s = self.blocks.len();
        if s == 0 {
            return Ok(false);
        }
        let dbound = BigInt::from(d_bound);
        let mut total = FreqVector::zero(word.dim());
        for (j, b) in self.blocks.iter().enumerate() {
            if b.ell < 1 || b.ell > b.ell_prime || b.ell_prime > word.len() {
                return Ok(false);
            }
            if j > 0 && b.ell < self.blocks[j - 1].ell_prime + gap {
                return Ok(false);
            }
            if b.p.sup_norm() > dbound || b.p_prime.sup_norm() > dbound {
                return Ok(false);
            }
            if particular && !b.p_prime.is_zero() {
                return Ok(false);
            }
            let v = pushforward(word, b.ell_prime, &b.p_prime)?.add(&pushforward(word, b.ell, &b.p)?);
            if j == s - 1 && v.is_zero() {
                return Ok(false);
            }
            total = total.add(&v);
        }
        Ok(total.is_zero())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub candidate_sums: u64,
    pub final_blocks_pruned: u64,
    pub s_cap: usize,
    /// Largest number of blocks any chain can have in this word.
    pub s_feasible: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparationReport {
    pub verdict: SeparationVerdict,
    pub witness: Option<Witness>,
    pub search_stats: SearchStats,
}

struct BlockValues {
    ell: usize,
    ell_prime: usize,
    /// (value, index of p, index of p')
    values: Vec<(FreqVector, usize, usize)>,
}

struct Searcher<'a> {
    inst: &'a SeparationInstance,
    freqs: Vec<FreqVector>,
    zero_idx: usize,
    /// `images[ℓ][i] = P_ℓ · freqs[i]`
    images: Vec<Vec<FreqVector>>,
    /// `maxnorm[m] = max_{1 ≤ ℓ ≤ m} ‖P_ℓ‖`, `maxnorm[0] = 0`
    maxnorm: Vec<BigInt>,
    blocks: RefCell<HashMap<(usize, usize), Rc<BlockValues>>>,
    examined: Cell<u64>,
}

impl<'a> Searcher<'a> {
    fn new(inst: &'a SeparationInstance) -> Result<Self> {
        let n = inst.word.len();
        let freqs = box_frequencies(inst.word.dim(), inst.d_bound);
        let zero_idx = freqs.iter().position(|p| p.is_zero()).expect("box contains zero");
        let mats = prefix_matrices(&inst.word, n)?;
        let images = mats
            .iter()
            .map(|m| freqs.iter().map(|p| FreqVector::apply(m, p)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let mut maxnorm = vec![BigInt::zero(); n + 1];
        for l in 1..=n {
            maxnorm[l] = maxnorm[l - 1].clone().max(mats[l].sup_norm());
        }
        Ok(Self {
            inst,
            freqs,
            zero_idx,
            images,
            maxnorm,
            blocks: RefCell::new(HashMap::new()),
            examined: Cell::new(0),
        })
    }

    fn charge(&self, k: u64) -> Result<()> {
        let total = self.examined.get() + k;
        self.examined.set(total);
        if total > self.inst.budget {
            return Err(Error::BudgetExceeded { examined: total, budget: self.inst.budget });
        }
        Ok(())
    }

    /// Upper bound on `‖Σ‖` over `k` blocks lying in `[1, m]`.
    fn reach(&self, k: usize, m: usize) -> BigInt {
        if k == 0 || m == 0 {
            return BigInt::zero();
        }
        BigInt::from(2 * k as u64 * self.inst.d_bound) * &self.maxnorm[m]
    }

    fn block(&self, ell: usize, ell_prime: usize) -> Rc<BlockValues> {
        if let Some(b) = self.blocks.borrow().get(&(ell, ell_prime)) {
            return b.clone();
        }
        let nf = self.freqs.len();
        let mut values = Vec::new();
        for i in 0..nf {
            if self.inst.particular {
                values.push((self.images[ell][i].clone(), i, self.zero_idx));
            } else {
                for j in 0..nf {
                    values.push((self.images[ell][i].add(&self.images[ell_prime][j]), i, j));
                }
            }
        }
        let b = Rc::new(BlockValues { ell, ell_prime, values });
        self.blocks.borrow_mut().insert((ell, ell_prime), b.clone());
        b
    }

    fn block_positions(&self, max_end: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 1..=max_end {
            if self.inst.particular {
                out.push((a, a));
            } else {
                for b in a..=max_end {
                    out.push((a, b));
                }
            }
        }
        out
    }

    fn witness_block(&self, block: &BlockValues, i: usize, j: usize) -> WitnessBlock {
        WitnessBlock {
            ell: block.ell,
            ell_prime: block.ell_prime,
            p: self.freqs[i].clone(),
            p_prime: self.freqs[j].clone(),
        }
    }

    /// Looks for at most `cap` blocks inside `[1, max_end]` summing to `target`.
    fn find(&self, target: &FreqVector, cap: usize, max_end: usize) -> Result<Option<Vec<WitnessBlock>>> {
        if cap == 0 || max_end == 0 || target.sup_norm() > self.reach(cap, max_end) {
            return Ok(None);
        }
        for (a, b) in self.block_positions(max_end).into_iter().rev() {
            let block = self.block(a, b);
            self.charge(block.values.len() as u64)?;
            for (v, i, j) in &block.values {
                let rest = target.sub(v);
                if rest.is_zero() {
                    return Ok(Some(vec![self.witness_block(&block, *i, *j)]));
                }
                if a > self.inst.gap {
                    if let Some(mut chain) = self.find(&rest, cap - 1, a - self.inst.gap)? {
                        chain.push(self.witness_block(&block, *i, *j));
                        return Ok(Some(chain));
                    }
                }
            }
        }
        Ok(None)
    }
}

/// Decides `S(D, Δ)` on a finite word by pruned exhaustive search.
pub fn check_separation(inst: &SeparationInstance) -> Result<SeparationReport> {
    let n = inst.word.len();
    if n == 0 {
        return Err(invalid("separation check needs a nonempty word"));
    }
    if inst.d_bound == 0 || inst.gap == 0 || inst.s_max == 0 {
        return Err(invalid("D, gap and s_max must be positive"));
    }
    let s = Searcher::new(inst)?;
    let s_feasible = 1 + (n - 1) / inst.gap;
    let mut pruned = 0u64;
    let stats = |s: &Searcher, pruned| SearchStats {
        candidate_sums: s.examined.get(),
        final_blocks_pruned: pruned,
        s_cap: inst.s_max,
        s_feasible,
    };
    if inst.s_max >= 2 {
        for (a, b) in s.block_positions(n) {
            if a <= inst.gap {
                continue;
            }
            let max_end = a - inst.gap;
            let block = s.block(a, b);
            s.charge(block.values.len() as u64)?;
            for (v, i, j) in &block.values {
                if v.is_zero() {
                    continue;
                }
                if v.sup_norm() > s.reach(inst.s_max - 1, max_end) {
                    pruned += 1;
                    continue;
                }
                if let Some(mut chain) = s.find(&v.neg(), inst.s_max - 1, max_end)? {
                    chain.push(s.witness_block(&block, *i, *j));
                    return Ok(SeparationReport {
                        verdict: SeparationVerdict::Violated,
                        witness: Some(Witness { blocks: chain }),
                        search_stats: stats(&s, pruned),
                    });
                }
            }
        }
    }
    let verdict = if inst.s_max >= s_feasible {
        SeparationVerdict::HoldsExhaustive
    } else {
        // every final value must outgrow anything s_feasible − 1 earlier blocks can reach
        let mut certified = true;
        'outer: for (a, b) in s.block_positions(n) {
            if a <= inst.gap {
                continue;
            }
            let reach = s.reach(s_feasible - 1, a - inst.gap);
            let block = s.block(a, b);
            s.charge(block.values.len() as u64)?;
            for (v, _, _) in &block.values {
                if !v.is_zero() && v.sup_norm() <= reach {
                    certified = false;
                    break 'outer;
                }
            }
        }
        if certified {
            SeparationVerdict::HoldsCertified
        } else {
            SeparationVerdict::HoldsExhaustive
        }
    };
    Ok(SeparationReport { verdict, witness: None, search_stats: stats(&s, pruned) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntegralValue {
    ZeroCertified,
    Value { re: f64, im: f64 },
}

/// `∫ Π_j g(τ_{ℓ_j} … τ_1 t) dt`, expanded exactly in Fourier space.
pub fn zero_integral_check(
    word: &Word,
    g: &TrigPoly,
    ells: &[usize],
    gap: usize,
    budget: u64,
) -> Result<IntegralValue> {
    check_dim(word.dim(), g.dim())?;
    if ells.is_empty() {
        return Err(invalid("need at least one factor"));
    }
    for w in ells.windows(2) {
        if w[1] < w[0] + gap.max(1) {
            return Err(invalid("ells must increase by at least the gap"));
        }
    }
    let support = g.full_support();
    let mut states: FreqMap<Vec<u8>, (FreqVector, Complex64)> = FreqMap::default();
    states.insert(FreqVector::zero(g.dim()).key(), (FreqVector::zero(g.dim()), Complex64::new(1.0, 0.0)));
    let mut work = 0u64;
    for &ell in ells {
        let images: Vec<(FreqVector, Complex64)> = support
            .iter()
            .map(|(p, c)| Ok((pushforward(word, ell, &FreqVector::from_i64(p))?, *c)))
            .collect::<Result<_>>()?;
        let mut next: FreqMap<Vec<u8>, (FreqVector, Complex64)> = FreqMap::default();
        for (v, c) in states.values() {
            for (img, gc) in &images {
                work += 1;
                if work > budget {
                    return Err(Error::BudgetExceeded { examined: work, budget });
                }
                let w = v.add(img);
                next.entry(w.key()).or_insert_with(|| (w, Complex64::new(0.0, 0.0))).1 += c * gc;
            }
        }
        states = next;
    }
    let zero = FreqVector::zero(g.dim()).key();
    Ok(match states.get(&zero) {
        None => IntegralValue::ZeroCertified,
        Some((_, c)) => IntegralValue::Value { re: c.re, im: c.im },
    })
}
