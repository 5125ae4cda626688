//! Worked examples checked against hand calculations and independent oracles.

mod common;

use std::sync::Arc;

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_separation_violated, prefixes, two_letter_alphabet, CAT, CAT_T};
use toral_core::coboundary::{coboundary_detect, CoboundarySource, CoboundaryVerdict};
use toral_core::ergodic::{blocked_quantities, ergodic_sum, exact_l2_norm_sq, variance_series, BlockScheme, WordAveraging};
use toral_core::functions::{fejer_approx, FejerSource, HolderFn, RegularSetIndicator};
use toral_core::lattice::{
    check_separation, pushforward, zero_integral_check, FreqVector, IntegralValue, SeparationInstance,
    SeparationVerdict,
};
use toral_core::linalg::{diag_log_ratios, iwasawa};
use toral_core::products::{empirical_block_norm_growth, empirical_small_norm, sample_word, WordSource};
use toral_core::sl2::{cone_entry_time, delta_from_d, gap_conditions, growth_rate, slope_bounds, spectral, DilationConstants};
use toral_core::torus::{apply, orbit, sample_uniform};
use toral_core::{Alphabet, IntMatrix, ModularPoint, Modulus, TrigPoly, Word};

fn cat_word(n: usize) -> Word {
    let a = Arc::new(Alphabet::from_matrices(vec![IntMatrix::m2(2, 1, 1, 1)]).unwrap());
    Word::constant(a, 0, n).unwrap()
}

#[test]
fn products_and_norms() {
    let a = two_letter_alphabet();
    let w = Word::new(a.clone(), vec![0, 1]).unwrap();
    assert_eq!(w.product(1, 1).unwrap(), IntMatrix::m2(2, 1, 1, 1));
    let p = w.product(1, 2).unwrap();
    assert_eq!(p, IntMatrix::m2(3, 4, 2, 3));
    assert_eq!(p.det(), BigInt::from(1));
    assert_eq!(p.sup_norm(), BigInt::from(7));
    assert_eq!(IntMatrix::m2(2, 1, 1, 1).sup_norm(), BigInt::from(3));
    assert_eq!(cat_word(30).product(1, 30).unwrap().det(), BigInt::from(1));
}

#[test]
fn iwasawa_of_long_products() {
    let a = two_letter_alphabet();
    let f = iwasawa(&IntMatrix::identity(2).unwrap()).unwrap();
    assert_eq!(f.log_diag, vec![0.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let idx: Vec<usize> = (0..50).map(|_| rng.random_range(0..2)).collect();
        let m = Word::new(a.clone(), idx).unwrap().product(1, 50).unwrap();
        let f = iwasawa(&m).unwrap();
        assert!(f.log_diag.iter().sum::<f64>().abs() < 1e-6);
        let r = diag_log_ratios(&f);
        assert_eq!(r.len(), 1);
        assert!(r[0] < 0.0);
    }
}

#[test]
fn pushforward_by_hand() {
    let a = two_letter_alphabet();
    let w = Word::new(a, vec![0, 1]).unwrap();
    let p = FreqVector::from_i64(&[5, -3]);
    assert_eq!(pushforward(&w, 0, &p).unwrap(), p);
    let e1 = FreqVector::from_i64(&[1, 0]);
    assert_eq!(pushforward(&w, 1, &e1).unwrap(), FreqVector::from_i64(&[2, 1]));
    assert_eq!(pushforward(&w, 2, &e1).unwrap(), FreqVector::from_i64(&[3, 2]));
}

#[test]
fn separation_small_instances_match_oracle() {
    let w = cat_word(1);
    for d in 1..=3 {
        let r = check_separation(&SeparationInstance::new(w.clone(), d, 1, 1)).unwrap();
        assert_eq!(r.verdict, SeparationVerdict::HoldsExhaustive);
    }

    let w = cat_word(12);
    let r = check_separation(&SeparationInstance::new(w, 1, 3, 2)).unwrap();
    assert_eq!(r.verdict, SeparationVerdict::HoldsExhaustive);
    assert!(!brute_separation_violated(&prefixes(&[CAT; 12]), 1, 3, 2, false));

    let alt = Word::new(two_letter_alphabet(), vec![0, 1, 0, 1, 0, 1]).unwrap();
    let r = check_separation(&SeparationInstance::new(alt.clone(), 2, 1, 2)).unwrap();
    let oracle = brute_separation_violated(&prefixes(&[CAT, CAT_T, CAT, CAT_T, CAT, CAT_T]), 2, 1, 2, false);
    assert_eq!(r.verdict == SeparationVerdict::Violated, oracle);
    if let Some(w) = r.witness {
        assert!(w.verify(&alt, 2, 1, false).unwrap());
    }
}

#[test]
fn zero_integral_examples() {
    let w = cat_word(4);
    let g = TrigPoly::cosine(&[1, 0], 1.0);
    assert_eq!(zero_integral_check(&w, &g, &[2], 1, 1 << 20).unwrap(), IntegralValue::ZeroCertified);
    assert_eq!(zero_integral_check(&w, &g, &[1, 4], 1, 1 << 20).unwrap(), IntegralValue::ZeroCertified);
    let g1 = g.add(&TrigPoly::constant(2, 1.0));
    assert_eq!(zero_integral_check(&w, &g1, &[1, 4], 1, 1 << 20).unwrap(), IntegralValue::Value { re: 1.0, im: 0.0 });
}

#[test]
fn torus_maps_by_hand() {
    let q = Modulus::new(101).unwrap();
    let pt = ModularPoint::new(q, vec![10, 20]).unwrap();
    assert_eq!(apply(&IntMatrix::identity(2).unwrap(), &pt).unwrap(), pt);
    assert_eq!(apply(&IntMatrix::m2(2, 1, 1, 1), &pt).unwrap().coords, vec![40, 30]);
    let pt2 = ModularPoint::new(q, vec![100, 1]).unwrap();
    assert_eq!(apply(&IntMatrix::m2(1, 1, 0, 1), &pt2).unwrap().coords, vec![100, 0]);

    let f = TrigPoly::cosine(&[1, 0], 1.0);
    let v = ergodic_sum(&cat_word(1), &f, &pt, 1).unwrap();
    assert!((v - (2.0 * std::f64::consts::PI * 40.0 / 101.0).cos()).abs() < 1e-12);
    assert!(f.eval(&ModularPoint::new(Modulus::new(8).unwrap(), vec![2, 0]).unwrap()).unwrap().abs() < 1e-15);

    let orb = orbit(&cat_word(3), &pt, 0).unwrap();
    assert!(orb.is_empty());
}

#[test]
fn orbit_equidistribution() {
    let a = two_letter_alphabet();
    let idx: Vec<usize> = (0..10_000).map(|i| i % 2).collect();
    let w = Word::new(a, idx).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = Modulus::default();
    let pt = sample_uniform(&mut rng, q, 2);
    let orb = orbit(&w, &pt, 10_000).unwrap();
    let vals: Vec<f64> = orb.iter().map(|p| (2.0 * std::f64::consts::PI * p.unit_coords()[0]).cos()).collect();
    let (m, se) = toral_core::stats::mean_stderr(&vals);
    assert!(m.abs() < 4.0 * se, "mean {m} se {se}");
}

#[test]
fn uniform_points() {
    let q = Modulus::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| sample_uniform(&mut rng, q, 2).coords[1] as f64).collect();
    let (m, se) = toral_core::stats::mean_stderr(&xs);
    assert!((m - (q.value() - 1) as f64 / 2.0).abs() < 4.0 * se);
    let mut a = ChaCha8Rng::seed_from_u64(1);
    let mut b = ChaCha8Rng::seed_from_u64(2);
    let same = (0..10_000).filter(|_| sample_uniform(&mut a, q, 2) == sample_uniform(&mut b, q, 2)).count();
    assert_eq!(same, 0);
}

#[test]
fn fejer_examples() {
    let one = HolderFn::new("one", 2, 1.0, 0.0, |_: &[f64]| 1.0).unwrap();
    let t = fejer_approx(FejerSource::Holder { f: &one, mesh: 64 }, 5).unwrap();
    assert!((t.coeff(&[0, 0]).re - 1.0).abs() < 1e-12);
    assert!(t.pairs().filter(|(p, _)| p.iter().any(|&x| x != 0)).all(|(_, c)| c.norm() < 1e-12));

    let c = TrigPoly::cosine(&[1, 0], 1.0);
    for n in [1, 4, 16] {
        let t = fejer_approx(FejerSource::Trig(&c), n).unwrap();
        assert!((t.coeff(&[1, 0]).re - 0.5 * (1.0 - 1.0 / (n as f64 + 1.0))).abs() < 1e-12);
    }

    let set = RegularSetIndicator::new_box(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap();
    let t = fejer_approx(FejerSource::Set(&set), 64).unwrap();
    assert!((t.coeff(&[0, 0]).re - 0.25).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 100_000 {
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        if set.boundary_distance(&x) < 1.0 / 64.0 {
            continue;
        }
        let truth = if set.contains(&x) { 1.0 } else { 0.0 };
        worst = worst.max((t.eval_unit(&x) - truth).abs());
        checked += 1;
    }
    assert!(worst <= 0.2, "sup error {worst}");
}

#[test]
fn centering() {
    let g = TrigPoly::constant(2, 0.25).add(&TrigPoly::cosine(&[1, 0], 1.0));
    let c = g.center();
    assert_eq!(c, TrigPoly::cosine(&[1, 0], 1.0));
    assert_eq!(c.center(), c);
}

#[test]
fn variance_examples() {
    let a = two_letter_alphabet();
    let f = TrigPoly::cosine(&[1, 0], 1.0);
    let w = sample_word(&WordSource::uniform(a.clone(), 2), 64).unwrap();
    assert_eq!(exact_l2_norm_sq(&w, &f, 1).unwrap(), 0.5);
    let s = BlockScheme::new(64, 0.5, 2).unwrap();
    assert_eq!((s.v, s.u), (8, 8));
    let b = blocked_quantities(&w, &f, &s).unwrap();
    assert!(b.sigma_k_sq.iter().all(|&x| x == 3.0));
    assert!(b.gap_bound_l2_holds);

    let series = variance_series(&a, &[0.5, 0.5], &f, 10, WordAveraging::Exhaustive).unwrap();
    assert_eq!(series.sigma_sq, 0.5);
    assert!(series.terms.iter().all(|&t| t == 0.0));

    let cat = Arc::new(Alphabet::from_matrices(vec![IntMatrix::m2(2, 1, 1, 1)]).unwrap());
    let cob = TrigPoly::cosine(&[2, 1], 1.0).sub(&TrigPoly::cosine(&[1, 0], 1.0));
    let s = variance_series(&cat, &[1.0], &cob, 3, WordAveraging::Exhaustive).unwrap();
    assert_eq!(s.norm_sq, 1.0);
    assert_eq!(s.terms[0], -0.5);
    assert!(s.sigma_sq.abs() < 1e-15);
}

#[test]
fn coboundary_examples() {
    let a = IntMatrix::m2(2, 1, 1, 1);
    let cob = TrigPoly::cosine(&[2, 1], 1.0).sub(&TrigPoly::cosine(&[1, 0], 1.0));
    match coboundary_detect(CoboundarySource::Letter(&a), &cob, 200, false).unwrap().verdict {
        CoboundaryVerdict::TelescopeFound { h } => {
            let expected = TrigPoly::cosine(&[1, 0], 1.0);
            assert!(h == expected || h == expected.scale(-1.0), "h = {h:?}");
        }
        v => panic!("{v:?}"),
    }
    let cosine = TrigPoly::cosine(&[1, 0], 1.0);
    let r = coboundary_detect(CoboundarySource::Letter(&a), &cosine, 200, false).unwrap();
    assert!(matches!(r.verdict, CoboundaryVerdict::NonzeroVarianceCertified));
}

#[test]
fn spectral_examples() {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let s = spectral(&IntMatrix::m2(2, 1, 1, 1)).unwrap();
    assert!((s.r - phi * phi).abs() < 1e-12 && (s.s - 1.0 / (phi * phi)).abs() < 1e-12);
    assert!((s.lambda - (phi - 1.0)).abs() < 1e-12);
    let t = spectral(&IntMatrix::m2(1, 1, 1, 2)).unwrap();
    assert!((t.r - s.r).abs() < 1e-12 && (t.lambda - phi).abs() < 1e-12);
    let sq = spectral(&IntMatrix::m2(5, 3, 3, 2)).unwrap();
    assert!((sq.r - s.r * s.r).abs() < 1e-9);
}

#[test]
fn cone_entry_examples() {
    let w = cat_word(80);
    assert_eq!(cone_entry_time(&w, &FreqVector::from_i64(&[1, 1]), 80).unwrap().closed, 0);
    let e = cone_entry_time(&w, &FreqVector::from_i64(&[1, -1]), 80).unwrap();
    assert_eq!((e.closed, e.strict), (1, Some(2)));
    // (F_k, −F_{k+1}) approaches the contracting direction (1, −φ)
    let fib: Vec<i64> = (0..40).scan((0i64, 1i64), |st, _| {
        *st = (st.1, st.0 + st.1);
        Some(st.0)
    }).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 1..=25 {
        let t = cone_entry_time(&w, &FreqVector::from_i64(&[fib[k], -fib[k + 1]]), 80).unwrap();
        xs.push((fib[k + 1] as f64).ln());
        ys.push(t.closed as f64);
        // the swapped vector (F_{k+1}, −F_k) is mapped into the cone at once
        let swapped = cone_entry_time(&w, &FreqVector::from_i64(&[fib[k + 1], -fib[k]]), 80).unwrap();
        assert!(swapped.closed <= 1);
    }
    let fit = toral_core::stats::linear_fit(&xs, &ys).unwrap();
    assert!(fit.slope > 0.5, "slope {}", fit.slope);
}

#[test]
fn dilation_examples() {
    let cat = Alphabet::from_matrices(vec![IntMatrix::m2(2, 1, 1, 1)]).unwrap();
    assert!(growth_rate(&cat).unwrap().0 >= 2.618);
    let (lo, hi) = slope_bounds(&two_letter_alphabet(), 6).unwrap();
    assert!(lo >= 0.38 && hi <= 2.62);

    let k = DilationConstants::manual(1.0, 2.0, 1.0, 1.0);
    let g = delta_from_d(1.0, &k).unwrap();
    assert_eq!(g.rho1, 2);
    let (a, b) = gap_conditions(1.0, &k, g.rho1, g.delta);
    assert!(a < 0.0 && b < 0.0);
    let (a, b) = gap_conditions(1.0, &k, g.rho1, g.delta - 1);
    assert!(a >= 0.0 || b >= 0.0);
    let mut prev = 0;
    for d in 1..=8 {
        let delta = delta_from_d(d as f64, &k).unwrap().delta;
        assert!(delta >= prev);
        prev = delta;
    }
}

#[test]
fn random_product_examples() {
    let a = two_letter_alphabet();
    let src = WordSource::uniform(a.clone(), 4);
    let w = sample_word(&src, 100_000).unwrap();
    let ones = w.indices().iter().filter(|&&i| i == 1).count() as f64;
    let n = 100_000f64;
    assert!((ones / n - 0.5).abs() < 4.0 * (0.25 / n).sqrt());

    let explicit = WordSource::Explicit(Word::new(a.clone(), vec![1, 0, 1]).unwrap());
    assert_eq!(sample_word(&explicit, 2).unwrap().indices(), &[1, 0]);

    let small = empirical_small_norm(&src, 40, 1e-3, 4000, &[1.0, 0.0]).unwrap();
    assert!(small.frequency <= 0.05);
    assert_eq!(empirical_small_norm(&src, 40, 1.0, 200, &[1.0, 0.0]).unwrap().frequency, 1.0);
    assert_eq!(empirical_small_norm(&src, 40, 0.0, 200, &[1.0, 0.0]).unwrap().frequency, 0.0);

    let zeta = spectral(&IntMatrix::m2(2, 1, 1, 1)).unwrap().r;
    assert_eq!(empirical_block_norm_growth(&src, 200, 10, zeta).unwrap().violations, 0);
    assert!(empirical_block_norm_growth(&src, 200, 10, 1e6).unwrap().violations > 0);
}
