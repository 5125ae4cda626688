//! Property-based checks of algebraic invariants.

mod common;

use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex64;
use proptest::prelude::*;

use common::{apply, mul, prefixes, two_letter_alphabet, CAT, CAT_T, M2};
use toral_core::clt::rate_exponent;
use toral_core::ergodic::exact_l2_norm_sq;
use toral_core::lattice::{check_separation, pushforward, FreqVector, SeparationInstance, SeparationVerdict};
use toral_core::linalg::iwasawa;
use toral_core::torus::apply as torus_apply;
use toral_core::{IntMatrix, ModularPoint, Modulus, TrigPoly, Word};

fn indices(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..2usize, 1..=max_len)
}

fn letters(idx: &[usize]) -> Vec<M2> {
    idx.iter().map(|&i| if i == 0 { CAT } else { CAT_T }).collect()
}

fn small_matrix() -> impl Strategy<Value = IntMatrix> {
    prop::array::uniform4(-20i64..=20).prop_map(|[a, b, c, d]| IntMatrix::m2(a, b, c, d))
}

fn trig() -> impl Strategy<Value = TrigPoly> {
    prop::collection::vec(((-3i64..=3, -3i64..=3), -1.0f64..1.0, -1.0f64..1.0), 1..=3).prop_map(|terms| {
        let mut out = TrigPoly::zero(2);
        for ((a, b), re, im) in terms {
            if (a, b) != (0, 0) {
                let t = TrigPoly::from_terms(2, [(vec![a, b], Complex64::new(re, im))]).unwrap();
                out = out.add(&t);
            }
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn determinant_is_multiplicative(a in small_matrix(), b in small_matrix()) {
        prop_assert_eq!(a.mul(&b).unwrap().det(), a.det() * b.det());
    }

    #[test]
    fn products_are_unimodular_and_match_i64(idx in indices(40)) {
        let w = Word::new(two_letter_alphabet(), idx.clone()).unwrap();
        let n = idx.len();
        let p = w.product(1, n).unwrap();
        prop_assert_eq!(p.det(), BigInt::from(1));
        if n <= 20 {
            let oracle = prefixes(&letters(&idx))[n];
            prop_assert_eq!(p, common::to_int(&oracle));
        }
    }

    #[test]
    fn product_splits(idx in indices(30), cut in 0usize..30) {
        let w = Word::new(two_letter_alphabet(), idx.clone()).unwrap();
        let n = idx.len();
        let k = 1 + cut % n;
        if k < n {
            let whole = w.product(1, n).unwrap();
            let split = w.product(1, k).unwrap().mul(&w.product(k + 1, n).unwrap()).unwrap();
            prop_assert_eq!(whole, split);
        }
    }

    #[test]
    fn pushforward_is_linear(idx in indices(25), p in prop::array::uniform2(-50i64..=50), q in prop::array::uniform2(-50i64..=50)) {
        let w = Word::new(two_letter_alphabet(), idx.clone()).unwrap();
        let n = idx.len();
        let fp = FreqVector::from_i64(&p);
        let fq = FreqVector::from_i64(&q);
        let lhs = pushforward(&w, n, &fp.add(&fq)).unwrap();
        let rhs = pushforward(&w, n, &fp).unwrap().add(&pushforward(&w, n, &fq).unwrap());
        prop_assert_eq!(&lhs, &rhs);
        if n <= 15 {
            let oracle = apply(&prefixes(&letters(&idx))[n], [p[0] + q[0], p[1] + q[1]]);
            prop_assert_eq!(lhs, FreqVector::from_i64(&oracle));
        }
    }

    #[test]
    fn character_duality(a in small_matrix(), p in prop::array::uniform2(-5i64..=5), x in prop::array::uniform2(0u64..1000)) {
        // ⟨A p, x⟩ = ⟨p, Aᵗ x⟩ mod q
        let q = Modulus::new(1009).unwrap();
        let pt = ModularPoint::new(q, x.to_vec()).unwrap();
        let image = torus_apply(&a, &pt).unwrap();
        let ap = FreqVector::apply(&a, &FreqVector::from_i64(&p)).unwrap().to_i64().unwrap();
        let dot = |f: &[i64], y: &[u64]| -> i64 {
            f.iter().zip(y).map(|(a, b)| a * *b as i64).sum::<i64>().rem_euclid(1009)
        };
        prop_assert_eq!(dot(&ap, &x), dot(&p, &image.coords));
    }

    #[test]
    fn iwasawa_reconstructs(idx in indices(30)) {
        let w = Word::new(two_letter_alphabet(), idx.clone()).unwrap();
        let m = w.product(1, idx.len()).unwrap();
        let f = iwasawa(&m).unwrap();
        prop_assert!(f.log_diag.iter().sum::<f64>().abs() < 1e-9);
        prop_assert!(f.orthogonality_residual() < 1e-9);
        let rec = f.reconstruct();
        let rows = m.to_f64_rows();
        let scale = rows.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((rec[i * 2 + j] - rows[i][j]).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn l2_norm_is_additive_in_n_for_one_step(g in trig()) {
        let w = Word::new(two_letter_alphabet(), vec![0]).unwrap();
        prop_assume!(!g.is_zero());
        let v = exact_l2_norm_sq(&w, &g, 1).unwrap();
        prop_assert!((v - g.l2_norm_sq()).abs() <= 1e-12 * g.l2_norm_sq().max(1.0));
    }

    #[test]
    fn exact_variance_matches_brute_collisions(idx in indices(12), g in trig()) {
        prop_assume!(!g.is_zero());
        let w = Word::new(two_letter_alphabet(), idx.clone()).unwrap();
        let n = idx.len();
        let pre = prefixes(&letters(&idx));
        let support = g.full_support();
        let mut terms: Vec<([i64; 2], Complex64)> = Vec::new();
        for ell in 1..=n {
            for (p, c) in &support {
                terms.push((apply(&pre[ell], [p[0], p[1]]), *c));
            }
        }
        let mut brute = Complex64::new(0.0, 0.0);
        for (u, c) in &terms {
            for (v, e) in &terms {
                if u == v {
                    brute += c * e.conj();
                }
            }
        }
        let exact = exact_l2_norm_sq(&w, &g, n).unwrap();
        prop_assert!((exact - brute.re).abs() <= 1e-9 * brute.re.abs().max(1.0));
    }

    #[test]
    fn trig_eval_is_linear(f in trig(), g in trig(), x in prop::array::uniform2(0.0f64..1.0), s in -3.0f64..3.0) {
        let lhs = f.add(&g.scale(s)).eval_unit(&x);
        let rhs = f.eval_unit(&x) + s * g.eval_unit(&x);
        prop_assert!((lhs - rhs).abs() < 1e-9);
        prop_assert_eq!(f.center().center(), f.center());
    }

    #[test]
    fn separation_is_monotone_in_gap(idx in indices(6), gap in 1usize..4) {
        // enlarging the gap only removes chains
        let w = Word::new(two_letter_alphabet(), idx).unwrap();
        let tight = check_separation(&SeparationInstance::new(w.clone(), 1, gap, 2)).unwrap();
        let loose = check_separation(&SeparationInstance::new(w, 1, gap + 1, 2)).unwrap();
        if tight.verdict != SeparationVerdict::Violated {
            prop_assert_ne!(loose.verdict, SeparationVerdict::Violated);
        }
    }

    #[test]
    fn rate_exponent_is_monotone_in_delta(bn in 1i64..20, dn in 1i64..20, step in 1i64..10) {
        let beta = num_rational::Rational64::new(bn, 20);
        let d1 = num_rational::Rational64::new(dn, 20);
        let d2 = d1 + num_rational::Rational64::new(step, 20);
        prop_assert!(rate_exponent(beta, d2).gamma > rate_exponent(beta, d1).gamma);
    }
}

#[test]
fn product_of_i64_oracle_agrees_for_mixed_words() {
    let idx = vec![0, 1, 1, 0, 1, 0, 0, 1];
    let w = Word::new(Arc::clone(&two_letter_alphabet()), idx.clone()).unwrap();
    let mut m = [[1, 0], [0, 1]];
    for a in letters(&idx) {
        m = mul(&m, &a);
    }
    assert_eq!(w.product(1, idx.len()).unwrap(), common::to_int(&m));
}
