mod common;

use std::sync::Arc;

use common::*;
use dalat::{DaMap, Descriptor, Tpsa};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random map whose linear block is near the identity and whose orbit is
/// zero, so compositions stay in the region where truncation is exact.
fn random_map(desc: &Arc<Descriptor>, rng: &mut impl Rng, scale: f64) -> DaMap {
    let mut m = DaMap::identity_on(desc);
    for row in m.rows_mut() {
        let extra = random_series(desc, rng, 0.4);
        for (i, c) in extra.nonzero() {
            if i == 0 {
                continue;
            }
            row.set_coef(i, row.coef(i) + scale * c);
        }
    }
    m
}

fn small_point(rng: &mut impl Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-r..r)).collect()
}

#[test]
fn compose_with_identity_is_neutral() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = Descriptor::new(4, 3, 1, 1, &[]).unwrap();
    let f = random_map(&d, &mut rng, 0.3);
    let id = DaMap::identity_on(&d);
    assert!(f.compose(&id).unwrap().max_diff(&f) < 1e-15);
    assert!(id.compose(&f).unwrap().max_diff(&f) < 1e-15);
}

#[test]
fn linear_compose_is_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = Descriptor::new(6, 1, 0, 0, &[]).unwrap();
    let a = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
    let b = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
    let z = vec![0.0; 6];
    let fa = DaMap::from_linear(&d, &z, &a).unwrap();
    let fb = DaMap::from_linear(&d, &z, &b).unwrap();
    let (_, r) = fa.compose(&fb).unwrap().extract();
    assert!((r - &a * &b).amax() < 1e-14);
}

#[test]
fn compose_matches_pointwise_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // po = mo here: with a lower parameter cap the dropped k^2 terms are
    // not a small tail and the pointwise oracle would not apply
    let d = Descriptor::new(4, 3, 2, 3, &[]).unwrap();
    let f = random_map(&d, &mut rng, 0.5);
    let g = random_map(&d, &mut rng, 0.5);
    let fg = f.compose(&g).unwrap();
    for _ in 0..20 {
        // products of three order-3 maps spill past order 3; the dropped
        // tail is O(|p|^4), so points stay small
        let p = small_point(&mut rng, 4, 2e-4);
        let k = small_point(&mut rng, 2, 2e-4);
        let direct = f.eval(&g.eval(&p, &k).unwrap(), &k).unwrap();
        let via = fg.eval(&p, &k).unwrap();
        for (a, b) in direct.iter().zip(&via) {
            assert!((a - b).abs() < 1e-10, "{a} {b}");
        }
    }
}

#[test]
fn compose_is_associative_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = Descriptor::new(4, 3, 0, 0, &[]).unwrap();
    let f = random_map(&d, &mut rng, 0.5);
    let g = random_map(&d, &mut rng, 0.5);
    let h = random_map(&d, &mut rng, 0.5);
    let left = f.compose(&g).unwrap().compose(&h).unwrap();
    let right = f.compose(&g.compose(&h).unwrap()).unwrap();
    // without orbit parts both groupings are the same truncated polynomial
    assert!(left.max_diff(&right) < 1e-12);
    for _ in 0..10 {
        let p = small_point(&mut rng, 4, 1e-3);
        let a = left.eval(&p, &[]).unwrap();
        let b = right.eval(&p, &[]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn inverse_of_linear_map_is_matrix_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = Descriptor::new(4, 2, 0, 0, &[]).unwrap();
    let r = DMatrix::from_fn(4, 4, |i, j| {
        if i == j { 1.0 } else { 0.0 }
    }) + DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-0.3..0.3));
    let m = DaMap::from_linear(&d, &[0.0; 4], &r).unwrap();
    let (_, ri) = m.invert().unwrap().extract();
    let oracle = r.try_inverse().unwrap();
    assert!((ri - oracle).amax() < 1e-13);
}

#[test]
fn identity_inverts_to_identity() {
    let d = Descriptor::new(6, 3, 2, 1, &[]).unwrap();
    let id = DaMap::identity_on(&d);
    assert!(id.invert().unwrap().max_diff(&id) == 0.0);
}

#[test]
fn order_four_inverse_is_two_sided() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = Descriptor::new(4, 4, 1, 1, &[]).unwrap();
    let id = DaMap::identity_on(&d);
    for _ in 0..5 {
        let m = random_map(&d, &mut rng, 0.2);
        let mi = m.invert().unwrap();
        assert!(m.compose(&mi).unwrap().max_diff(&id) < 1e-10);
        assert!(mi.compose(&m).unwrap().max_diff(&id) < 1e-10);
    }
}

#[test]
fn inverse_with_orbit_maps_orbit_back() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = Descriptor::new(2, 4, 0, 0, &[]).unwrap();
    let mut m = random_map(&d, &mut rng, 0.2);
    m.rows_mut()[0].set0(0.01);
    m.rows_mut()[1].set0(-0.02);
    let mi = m.invert().unwrap();
    let id = DaMap::identity_on(&d);
    assert!(m.compose(&mi).unwrap().max_diff(&id) < 1e-12);
    // mi is a Taylor expansion about w = 0, so evaluating it at the orbit
    // only recovers the origin up to the truncated tail
    let back = mi.eval(&[0.01, -0.02], &[]).unwrap();
    assert!(back.iter().all(|v| v.abs() < 1e-8), "{back:?}");
}

#[test]
fn parameter_derivative_obeys_chain_rule() {
    // f and g both depend on k; d/dk of (f∘g) at the origin against FD in k
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = Descriptor::new(2, 3, 1, 1, &["k"]).unwrap();
    let f = random_map(&d, &mut rng, 0.5);
    let mut g = random_map(&d, &mut rng, 0.5);
    g.rows_mut()[0].set_coef(3, 0.7); // pure k term gives g an orbit in k
    let fg = f.compose(&g).unwrap();
    let kslot = d.mono_index(&[0, 0, 1]).unwrap();
    let h = 1e-6;
    for row in 0..2 {
        let plus = f.eval(&g.eval(&[0.0, 0.0], &[h]).unwrap(), &[h]).unwrap()[row];
        let minus = f.eval(&g.eval(&[0.0, 0.0], &[-h]).unwrap(), &[-h]).unwrap()[row];
        let fd = (plus - minus) / (2.0 * h);
        let exact = fg.rows()[row].coef(kslot);
        assert!((fd - exact).abs() < 1e-6, "{fd} {exact}");
    }
}

#[test]
fn drift_jacobian_matches_closed_form() {
    // order-1 drift with beta0 = 0.8 built by hand from the exact formulas
    let d = Descriptor::new(6, 1, 0, 0, &[]).unwrap();
    let (l, b) = (1.5, 0.8);
    let x = DaMap::identity_on(&d);
    let r = x.rows();
    let one = Tpsa::constant(&d, 1.0);
    let pz2 = &(&(&one + &(&r[5] * (2.0 / b))) + &(&r[5] * &r[5])) - &(&(&r[1] * &r[1]) + &(&r[3] * &r[3]));
    let pz = pz2.sqrt().unwrap();
    let ipz = pz.inv().unwrap();
    let mut rows = r.to_vec();
    rows[0] = &r[0] + &(&(&r[1] * &ipz) * l);
    rows[2] = &r[2] + &(&(&r[3] * &ipz) * l);
    rows[4] = &(&r[4] + &(&(&(&r[5] + 1.0 / b) * &ipz) * l)) - l / b;
    let m = DaMap::from_rows(rows).unwrap();
    let (e, jac) = m.extract();
    assert!(e.amax() < 1e-15);
    assert!((jac - drift_matrix(l, b)).amax() < 1e-14);
}
