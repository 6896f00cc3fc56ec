mod common;

use common::*;
use dalat::tpsa::Descriptor;
use dalat::Tpsa;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn descriptor_strategy() -> impl Strategy<Value = (usize, u8, usize, u8)> {
    (1usize..=6, 0u8..=5, 0usize..=32, 0u8..=2)
        .prop_map(|(nv, mo, np, po)| (nv, mo, np, po.min(mo)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn index_roundtrip_over_full_range((nv, mo, np, po) in descriptor_strategy()) {
        let d = Descriptor::new(nv, mo, np, po, &[]).unwrap();
        let mut last_deg = 0;
        for i in 0..d.size() {
            let m = d.index_mono(i).unwrap();
            prop_assert_eq!(d.mono_index(&m).unwrap(), i);
            let deg: u8 = m.iter().sum();
            prop_assert!(deg >= last_deg, "graded order broken at {}", i);
            last_deg = deg;
        }
    }

    #[test]
    fn unrank_agrees_with_table((nv, mo, np, po) in descriptor_strategy(), seed in any::<u64>()) {
        let d = Descriptor::new(nv, mo, np, po, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let i = rand::Rng::gen_range(&mut rng, 0..d.size());
            prop_assert_eq!(d.unrank(i).unwrap(), d.index_mono(i).unwrap());
        }
    }

    #[test]
    fn ring_axioms_on_integer_series(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Descriptor::new(3, 4, 2, 2, &[]).unwrap();
        let a = random_int_series(&d, &mut rng, 0.3);
        let b = random_int_series(&d, &mut rng, 0.3);
        let c = random_int_series(&d, &mut rng, 0.3);
        let ab = &a * &b;
        let ba = &b * &a;
        prop_assert_eq!(ab.coefs(), ba.coefs());
        let ab_c = &ab * &c;
        let a_bc = &a * &(&b * &c);
        prop_assert_eq!(ab_c.coefs(), a_bc.coefs());
        let lhs = &a * &(&b + &c);
        let rhs = &(&a * &b) + &(&a * &c);
        prop_assert_eq!(lhs.coefs(), rhs.coefs());
    }

    #[test]
    fn product_respects_caps(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Descriptor::new(2, 4, 3, 1, &[]).unwrap();
        let a = random_series(&d, &mut rng, 0.5);
        let b = random_series(&d, &mut rng, 0.5);
        let p = &a * &b;
        let oracle = poly_mul(&to_poly(&a), &to_poly(&b), 2, 4, 1);
        for (m, c) in &oracle {
            prop_assert!(admissible(m, 2, 4, 1));
            prop_assert!((p.getm(m).unwrap() - c).abs() < 1e-12);
        }
        for (i, _) in p.nonzero() {
            prop_assert!(admissible(&d.index_mono(i).unwrap(), 2, 4, 1));
        }
    }

    #[test]
    fn exp_of_negation_is_reciprocal(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Descriptor::new(3, 5, 1, 1, &[]).unwrap();
        let mut a = random_series(&d, &mut rng, 0.4);
        let norm = a.coefs().iter().map(|c| c.abs()).sum::<f64>();
        if norm > 1.0 {
            a.scale(1.0 / norm);
        }
        let one = &a.exp().unwrap() * &(-&a).exp().unwrap();
        prop_assert!((one.get0() - 1.0).abs() < 1e-12);
        for i in 1..d.size() {
            prop_assert!(one.coef(i).abs() < 1e-12);
        }
    }
}

#[test]
fn sparse_product_matches_convolution_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = Descriptor::new(4, 4, 0, 0, &[]).unwrap();
    for _ in 0..20 {
        let a = random_series(&d, &mut rng, 0.1);
        let b = random_series(&d, &mut rng, 0.1);
        let p = a.try_mul(&b).unwrap();
        let o = poly_mul(&to_poly(&a), &to_poly(&b), 4, 4, 0);
        for i in 0..d.size() {
            let m = d.index_mono(i).unwrap();
            let want = o.get(&m).copied().unwrap_or(0.0);
            assert!((p.coef(i) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn lincomb_matches_per_index_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = Descriptor::new(3, 3, 2, 1, &[]).unwrap();
    let a = random_series(&d, &mut rng, 0.6);
    let b = random_series(&d, &mut rng, 0.6);
    let c = Tpsa::lincomb(&[(0.5, &a), (-2.0, &b)]).unwrap();
    for i in 0..d.size() {
        assert_eq!(c.coef(i), 0.5 * a.coef(i) + -2.0 * b.coef(i));
    }
}

#[test]
fn derivative_matches_term_by_term_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = Descriptor::new(3, 4, 2, 1, &[]).unwrap();
    let a = random_series(&d, &mut rng, 0.5);
    for slot in 0..5 {
        let da = a.deriv(slot).unwrap();
        let mut want = std::collections::HashMap::new();
        for (m, c) in to_poly(&a) {
            if m[slot] > 0 {
                let mut e = m.clone();
                e[slot] -= 1;
                *want.entry(e).or_insert(0.0) += c * m[slot] as f64;
            }
        }
        for i in 0..d.size() {
            let m = d.index_mono(i).unwrap();
            let w = want.get(&m).copied().unwrap_or(0.0);
            assert!((da.coef(i) - w).abs() < 1e-14);
        }
    }
}

#[test]
fn size_ratio_operands() {
    let s4 = Descriptor::new(6, 4, 0, 0, &[]).unwrap().size();
    let s5 = Descriptor::new(6, 5, 0, 0, &[]).unwrap().size();
    assert_eq!(6 * s4, 1260);
    assert_eq!(6 * s5, 2772);
}
