mod common;

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use dalat::lattice::{Beam, Element, Env, Kind, Refer, Sequence, Value};
use dalat::optics::*;
use dalat::mtable::MTable;
use dalat::{DaMap, Descriptor};
use nalgebra::{DMatrix, Matrix4};

use common::*;

/// Newton on particle tracking with a finite-difference Jacobian.
fn orbit_oracle(seq: &Sequence, env: &Env) -> [f64; 6] {
    let mut z = vec![0.0; 4];
    let f = |v: &[f64]| {
        let full = [v[0], v[1], v[2], v[3], 0.0, 0.0];
        let o = one_turn_particle(seq, env, &full);
        (0..4).map(|i| o[i] - v[i]).collect::<Vec<_>>()
    };
    for _ in 0..30 {
        let r = f(&z);
        if r.iter().all(|x| x.abs() < 1e-15) {
            break;
        }
        let j = common::fd_jacobian(&f, &z, 1e-7);
        let dz = j.lu().solve(&nalgebra::DVector::from_vec(r)).unwrap();
        for i in 0..4 {
            z[i] -= dz[i];
        }
    }
    [z[0], z[1], z[2], z[3], 0.0, 0.0]
}

fn kicked_ring(kick: f64) -> (Env, Sequence) {
    let env = Env::new();
    env.set_beam(Beam::default());
    let mut entries = Vec::new();
    for c in 0..25 {
        let s0 = 9.0 * c as f64;
        let ang = PI / 25.0;
        let mut push = |e: Element, at: f64| entries.push((Arc::new(e), Some(s0 + at)));
        push(Element::new("qf", Kind::Quadrupole).with("l", 1.0).with("k1", 0.29601), 0.0);
        if c == 3 {
            push(Element::new("hk", Kind::HKicker).with("kick", kick), 1.5);
            push(Element::new("vk", Kind::VKicker).with("kick", -0.5 * kick), 1.6);
        }
        push(Element::new("mb1", Kind::Sbend).with("l", 2.0).with("angle", ang), 2.0);
        push(Element::new("qd", Kind::Quadrupole).with("l", 1.0).with("k1", -0.30242), 5.0);
        push(Element::new("mb2", Kind::Sbend).with("l", 2.0).with("angle", ang), 7.0);
    }
    let seq = Sequence::build("ring", entries, Refer::Entry, Some(225.0), &env).unwrap();
    (env, seq)
}

#[test]
fn ideal_ring_orbit_is_zero() {
    let (env, seq) = fodo_ring(25, 0.0, 0.0);
    let co = cofind(&seq, &env, &CoOpts::default()).unwrap();
    assert!(co.orbit.iter().all(|&v| v == 0.0));
    assert!(co.residual < 1e-10);
}

#[test]
fn kicked_orbit_matches_root_find_oracle() {
    let (env, seq) = kicked_ring(1e-4);
    let co = cofind(&seq, &env, &CoOpts::default()).unwrap();
    let oracle = orbit_oracle(&seq, &env);
    for i in 0..4 {
        assert!((co.orbit[i] - oracle[i]).abs() < 1e-9, "{i}: {} vs {}", co.orbit[i], oracle[i]);
    }
    assert!(co.orbit[0].abs() > 1e-5 && co.orbit[2].abs() > 1e-6);
    let back = one_turn_particle(&seq, &env, &co.orbit);
    assert!((0..4).all(|i| (back[i] - co.orbit[i]).abs() < 1e-10));
}

#[test]
fn cofind_rejects_bad_requests() {
    let (env, seq) = fodo_ring(25, 0.0, 0.0);
    let e = cofind(&seq, &env, &CoOpts { codim: 6, ..CoOpts::default() }).unwrap_err();
    assert!(e.to_string().contains("cavity"), "{e}");
    assert!(cofind(&seq, &env, &CoOpts { codim: 3, ..CoOpts::default() }).is_err());
}

#[test]
fn six_dimensional_orbit_with_cavity() {
    let (env, mut seq) = fodo_ring(25, 0.0, 0.0);
    let cav = Element::new("cav", Kind::RfCavity).with("volt", 5.0).with("harmon", 10.0).with("lag", 0.5);
    let mut entries: Vec<_> = seq.items[1..seq.items.len() - 1]
        .iter()
        .filter(|it| !it.implicit)
        .map(|it| (Arc::clone(&it.elem), Some(it.s)))
        .collect();
    entries.push((Arc::new(cav), Some(1.5)));
    entries.sort_by(|a, b| a.1.unwrap().total_cmp(&b.1.unwrap()));
    seq = Sequence::build("ring", entries, Refer::Entry, Some(225.0), &env).unwrap();
    let guess = [0.0, 0.0, 0.0, 0.0, 1e-3, 1e-5];
    let co = cofind(&seq, &env, &CoOpts { codim: 6, guess, ..CoOpts::default() }).unwrap();
    let back = one_turn_particle(&seq, &env, &co.orbit);
    assert!((0..6).all(|i| (back[i] - co.orbit[i]).abs() < 1e-10), "{back:?} vs {:?}", co.orbit);
}

#[test]
fn twiss_matches_eigen_oracle() {
    let (env, seq) = fodo_ring(25, 0.0, 0.0);
    let tw = twiss(&seq, &env, &TwissOpts::default()).unwrap();
    let mats = transfer_matrices(&seq, &env, &[0.0; 6]);
    let one = &mats.last().unwrap().2;
    // tunes are phases of the eigenvalues
    let r4 = Matrix4::from_fn(|i, j| one[(i, j)]);
    let phases: Vec<f64> = r4.complex_eigenvalues().iter().map(|l| l.im.atan2(l.re).rem_euclid(TAU) / TAU).collect();
    for (p, h) in ["q1", "q2"].iter().enumerate() {
        let q = tw.header_num(h).unwrap();
        let frac = q.fract();
        assert!(phases.iter().any(|&e| (e - frac).abs() < 1e-10), "{h} {q} vs {phases:?}");
        let (_, _, mu) = cs(block(one, 2 * p));
        assert!((frac - mu / TAU).abs() < 1e-10);
    }
    let (b0x, a0x, _) = cs(block(one, 0));
    let (b0y, a0y, _) = cs(block(one, 2));
    let beta11 = tw.real("beta11").unwrap();
    let beta22 = tw.real("beta22").unwrap();
    let alfa11 = tw.real("alfa11").unwrap();
    let mu1 = tw.real("mu1").unwrap();
    let mu2 = tw.real("mu2").unwrap();
    let mut acc = [0.0f64; 2];
    let mut prev = [0.0f64; 2];
    for (i, (_, _, m)) in mats.iter().enumerate() {
        // one-turn matrix seen at this exit: M R M⁻¹
        let inv = m.clone().try_inverse().unwrap();
        let local = m * one * inv;
        let (bx, ax, _) = cs(block(&local, 0));
        let (by, _, _) = cs(block(&local, 2));
        assert!((beta11[i] - bx).abs() < 1e-8 * bx, "beta11 row {i}: {} vs {bx}", beta11[i]);
        assert!((beta22[i] - by).abs() < 1e-8 * by);
        assert!((alfa11[i] - ax).abs() < 1e-8 * (1.0 + ax.abs()));
        // phase advance from the start: atan2(M12, beta0 M11 - alpha0 M12)
        for (p, (b0, a0)) in [(b0x, a0x), (b0y, a0y)].iter().enumerate() {
            let k = 2 * p;
            let ph = m[(k, k + 1)].atan2(b0 * m[(k, k)] - a0 * m[(k, k + 1)]);
            let d = (ph - prev[p]).rem_euclid(TAU);
            acc[p] += if d > TAU - 1e-9 { d - TAU } else { d };
            prev[p] = ph;
        }
        assert!((mu1[i] - acc[0] / TAU).abs() < 1e-8 * (1.0 + acc[0]));
        assert!((mu2[i] - acc[1] / TAU).abs() < 1e-8 * (1.0 + acc[1]));
        if i > 0 {
            assert!(mu1[i] >= mu1[i - 1] && mu2[i] >= mu2[i - 1]);
        }
    }
    let q1 = tw.header_num("q1").unwrap();
    assert!((q1 - mu1[mu1.len() - 1]).abs() < 1e-9);
    assert!(tw.header_num("length").unwrap() == 225.0);
    assert!(tw.header_num("energy").unwrap() > 0.0);
    assert!(tw.header_num("dq1").is_err());
}

#[test]
fn dispersion_follows_off_momentum_orbit() {
    let (env, seq) = fodo_ring(25, 0.0, 0.0);
    let tw = twiss(&seq, &env, &TwissOpts::default()).unwrap();
    let h = 1e-7;
    let orb = |pt: f64| {
        let co = cofind(&seq, &env, &CoOpts { guess: [0.0, 0.0, 0.0, 0.0, 0.0, pt], ..CoOpts::default() }).unwrap();
        co.orbit
    };
    let (p, m) = (orb(h), orb(-h));
    let dx = tw.real("dx").unwrap();
    let dpx = tw.real("dpx").unwrap();
    let d0x = (p[0] - m[0]) / (2.0 * h);
    let d0px = (p[1] - m[1]) / (2.0 * h);
    let last = dx.len() - 1;
    assert!(dx[last] > 0.1, "dispersion {}", dx[last]);
    assert!((dx[last] - d0x).abs() < 1e-6 * dx[last].abs(), "{} vs {d0x}", dx[last]);
    assert!((dpx[last] - d0px).abs() < 1e-6);
}

#[test]
fn chromaticity_matches_finite_differences() {
    for (k2, k3) in [(0.0, 0.0), (0.4, 0.0)] {
        let (env, seq) = fodo_ring(25, k2, k3);
        let tw = twiss(&seq, &env, &TwissOpts { order: 2, ..TwissOpts::default() }).unwrap();
        let h = 1e-6;
        let (p, m) = (q_at_pt(&seq, &env, h), q_at_pt(&seq, &env, -h));
        for (i, name) in ["dq1", "dq2"].iter().enumerate() {
            let dq = tw.header_num(name).unwrap();
            let fd = (p[i] - m[i]) / (2.0 * h);
            assert!((dq - fd).abs() < 1e-4 * dq.abs().max(1.0), "{name}: {dq} vs {fd}");
        }
    }
}

#[test]
fn tunes_do_not_depend_on_the_start() {
    let (env, seq) = knob_ring(5, 0.3, 2.0);
    let opts = TwissOpts { order: 3, ..TwissOpts::default() };
    let nf0 = ring_normal(&seq, &env, &opts).unwrap();
    for at in ["qd", "sf[3]", "mb2[4]"] {
        let cyc = seq.cycle(at).unwrap();
        let nf = ring_normal(&cyc, &env, &opts).unwrap();
        assert!((nf.q1(None).unwrap() - nf0.q1(None).unwrap()).abs() < 1e-10);
        assert!((nf.q2(None).unwrap() - nf0.q2(None).unwrap()).abs() < 1e-10);
        assert!((nf.dq(0).unwrap() - nf0.dq(0).unwrap()).abs() < 1e-8);
    }
}

fn linear_map(r4: &Matrix4<f64>) -> DaMap {
    let d = Descriptor::new(6, 3, 0, 0, &[]).unwrap();
    let mut r = DMatrix::identity(6, 6);
    for i in 0..4 {
        for j in 0..4 {
            r[(i, j)] = r4[(i, j)];
        }
    }
    DaMap::from_linear(&d, &[0.0; 6], &r).unwrap()
}

fn rot(mu: [f64; 2]) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for p in 0..2 {
        let (s, c) = mu[p].sin_cos();
        let k = 2 * p;
        m[(k, k)] = c;
        m[(k, k + 1)] = s;
        m[(k + 1, k)] = -s;
        m[(k + 1, k + 1)] = c;
    }
    m
}

#[test]
fn pure_rotation_has_identity_normalizing_map() {
    let nf = normal(&linear_map(&rot([0.31 * TAU, 0.72 * TAU])), &NfOpts::default()).unwrap();
    let id = DaMap::identity_on(nf.desc());
    assert!(nf.a.max_diff(&id) < 1e-14);
    assert!((nf.q1(None).unwrap() - 0.31).abs() < 1e-14);
    assert!((nf.q2(None).unwrap() - 0.72).abs() < 1e-14);
    assert_eq!(nf.anhx(&[1, 0]).unwrap(), 0.0);
}

#[test]
fn courant_snyder_matrix_is_read_from_a() {
    let (b, a): ([f64; 2], [f64; 2]) = ([7.5, 2.0], [-1.2, 0.8]);
    let mut am = Matrix4::zeros();
    for p in 0..2 {
        let k = 2 * p;
        am[(k, k)] = b[p].sqrt();
        am[(k + 1, k)] = -a[p] / b[p].sqrt();
        am[(k + 1, k + 1)] = 1.0 / b[p].sqrt();
    }
    let r = am * rot([0.17 * TAU, 0.43 * TAU]) * am.try_inverse().unwrap();
    let nf = normal(&linear_map(&r), &NfOpts::default()).unwrap();
    assert!((nf.a0 - am).abs().max() < 1e-12);
    let (beta, alpha, disp) = nf.linear_optics();
    for p in 0..2 {
        assert!((beta[p] - b[p]).abs() < 1e-12 && (alpha[p] - a[p]).abs() < 1e-12);
    }
    assert!(disp.iter().all(|d| d.abs() < 1e-15));
}

/// `|Δ| <= tol * max(1, |c|)` on every coefficient.
fn assert_maps_close(a: &DaMap, b: &DaMap, tol: f64) {
    assert_maps_close_to_knob_order(a, b, tol, u8::MAX);
}

/// Same, skipping terms above knob degree `kpo` (slots after `pt`), which a
/// map tracked at that knob order does not hold.
fn assert_maps_close_to_knob_order(a: &DaMap, b: &DaMap, tol: f64, kpo: u8) {
    for (ra, rb) in a.rows().iter().zip(b.rows()) {
        let d = ra.desc();
        for i in 0..d.size() {
            if d.exponents(i)[5..].iter().sum::<u8>() > kpo {
                continue;
            }
            let (x, y) = (ra.coef(i), rb.coef(i));
            assert!((x - y).abs() <= tol * y.abs().max(1.0), "coefficient {i}: {x} vs {y}");
        }
    }
}

#[test]
fn normal_form_reassembles_the_map() {
    let (env, seq) = fodo_ring(25, 0.4, 3.0);
    let nf = ring_normal(&seq, &env, &TwissOpts { order: 4, ..TwissOpts::default() }).unwrap();
    let back = nf.a.compose(&nf.r.compose(&nf.a.invert().unwrap()).unwrap()).unwrap();
    assert_maps_close(&back, &nf.m, 1e-9);
    let scale = nf.phasor_r().iter().map(|r| r.max_abs()).fold(0.0, f64::max);
    assert!(nf.nonresonant_residual() < 1e-10 * scale.max(1.0), "{}", nf.nonresonant_residual());
    // the linear part of r is a pure rotation
    for (i, row) in nf.r.rows().iter().enumerate() {
        for j in 0..4 {
            let want = rot(nf.mu)[(i, j)];
            assert!((row.coef(j + 1) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn parametric_normal_form_reassembles_the_map() {
    let (env, seq) = knob_ring(5, 0.3, 2.0);
    let opts = TwissOpts { order: 3, knobs: vec!["kqf".into(), "ksf".into()], ..TwissOpts::default() };
    let nf = ring_normal(&seq, &env, &opts).unwrap();
    let back = nf.a.compose(&nf.r.compose(&nf.a.invert().unwrap()).unwrap()).unwrap();
    assert_maps_close_to_knob_order(&back, &nf.m, 1e-9, nf.m6.desc().po());
    // knobs are restored afterwards
    assert_eq!(env.get("kqf").unwrap().as_num(), Some(0.29601));
}

#[test]
fn accessor_errors() {
    let (env, seq) = fodo_ring(25, 0.4, 3.0);
    let nf = ring_normal(&seq, &env, &TwissOpts { order: 2, ..TwissOpts::default() }).unwrap();
    let e = nf.anhx(&[1, 0]).unwrap_err().to_string();
    assert!(e.contains("order 3"), "{e}");
    assert!(nf.gnfu("4000", None).unwrap_err().to_string().contains("order 4"));
    assert!(nf.gnfu("40x0", None).unwrap_err().to_string().contains("malformed"));
    assert!(nf.gnfu("400", None).is_err());
    assert!(nf.q1(Some(1)).is_err());
}

#[test]
fn detuning_matches_tracking() {
    let (env, seq) = fodo_ring(25, 0.0, 3.0);
    let nf = ring_normal(&seq, &env, &TwissOpts { order: 4, ..TwissOpts::default() }).unwrap();
    let anh = nf.anhx(&[1, 0]).unwrap();
    let q0 = nf.q1(None).unwrap();
    // slope of (Q - Q0)/J against J, extrapolated to J = 0
    let js = [1e-6, 2e-6, 3e-6];
    let ys: Vec<f64> = js.iter().map(|&j| (tracked_tune(&seq, &env, &nf.a0, j, 512) - q0) / j).collect();
    let n = 3.0;
    let (sx, sy) = (js.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxx: f64 = js.iter().map(|j| j * j).sum();
    let sxy: f64 = js.iter().zip(&ys).map(|(j, y)| j * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    assert!((intercept - anh).abs() < 0.05 * anh.abs(), "tracking {intercept} vs normal form {anh}");
}

#[test]
fn parametric_derivatives_match_finite_differences() {
    let knobs = ["kqf", "ksf", "kof"];
    let (env, seq) = knob_ring(5, 0.3, 2.0);
    let opts = TwissOpts { order: 5, knobs: knobs.iter().map(|s| s.to_string()).collect(), ..TwissOpts::default() };
    let nf = ring_normal(&seq, &env, &opts).unwrap();
    let plain = TwissOpts { order: 4, ..TwissOpts::default() };
    let h = 1e-6;
    for (k, name) in knobs.iter().enumerate() {
        let v0 = env.get_num(name).unwrap();
        let at = |v: f64| {
            env.set(name, Value::Num(v));
            let nf = ring_normal(&seq, &env, &plain).unwrap();
            env.set(name, Value::Num(v0));
            nf
        };
        let (p, m) = (at(v0 + h), at(v0 - h));
        let close = |exact: f64, fd: f64, what: &str| {
            assert!((exact - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "{what} by {name}: {exact} vs {fd}");
        };
        let fd = |f: &dyn Fn(&NormalForm) -> f64| (f(&p) - f(&m)) / (2.0 * h);
        close(nf.q1(Some(k + 1)).unwrap(), fd(&|n| n.q1(None).unwrap()), "q1");
        close(nf.q2(Some(k + 1)).unwrap(), fd(&|n| n.q2(None).unwrap()), "q2");
        for label in ["3000", "2002", "4000", "0040", "1002"] {
            let g = nf.gnfu(label, Some(k + 1)).unwrap();
            close(g.re, fd(&|n| n.gnfu(label, None).unwrap().re), label);
            close(g.im, fd(&|n| n.gnfu(label, None).unwrap().im), label);
        }
    }
}

#[test]
fn open_line_twiss_reproduces_periodic_solution() {
    let (env, seq) = fodo_ring(25, 0.0, 0.0);
    let ring = twiss(&seq, &env, &TwissOpts::default()).unwrap();
    let (b1, b2) = (ring.real("beta11").unwrap(), ring.real("beta22").unwrap());
    let (a1, a2) = (ring.real("alfa11").unwrap(), ring.real("alfa22").unwrap());
    let (dx, dpx) = (ring.real("dx").unwrap(), ring.real("dpx").unwrap());
    let last = b1.len() - 1;
    let init = TwissInit {
        beta: [b1[last], b2[last]],
        alpha: [a1[last], a2[last]],
        disp: [dx[last], dpx[last], 0.0, 0.0],
        orbit: [0.0; 6],
    };
    let line = twiss(&seq, &env, &TwissOpts { init: Some(init), ..TwissOpts::default() }).unwrap();
    let lb = line.real("beta11").unwrap();
    let ld = line.real("dx").unwrap();
    for i in 0..=last {
        assert!((lb[i] - b1[i]).abs() < 1e-9 * b1[i]);
        assert!((ld[i] - dx[i]).abs() < 1e-9);
    }
}

#[test]
fn unstable_ring_names_the_plane() {
    let (env, seq) = fodo_ring(25, 0.0, 0.0);
    let entries: Vec<_> = seq.items[1..seq.items.len() - 1]
        .iter()
        .filter(|it| !it.implicit)
        .map(|it| {
            let e = if it.elem.name == "qf" { it.elem.derive("qf").with("k1", 0.9) } else { (*it.elem).clone() };
            (Arc::new(e), Some(it.s))
        })
        .collect();
    let bad = Sequence::build("ring", entries, Refer::Entry, Some(225.0), &env).unwrap();
    let e = twiss(&bad, &env, &TwissOpts::default()).unwrap_err().to_string();
    assert!(e.contains("plane"), "{e}");
}

#[test]
fn twiss_range_selects_rows() {
    let (env, seq) = fodo_ring(25, 0.0, 0.0);
    let all = twiss(&seq, &env, &TwissOpts::default()).unwrap();
    let part = twiss(&seq, &env, &TwissOpts { range: Some("qd[2]/qd[3]".into()), ..TwissOpts::default() }).unwrap();
    assert!(part.nrows() > 2 && part.nrows() < all.nrows());
    assert_eq!(part.strings("name").unwrap()[0], "qd");
    let none = twiss(&seq, &env, &TwissOpts { range: Some(String::new()), ..TwissOpts::default() }).unwrap();
    assert_eq!(none.nrows(), 0);
}

/// FODO ring without bends, optionally with one thin octupole. Drifts and
/// quadrupoles are even in `(x, px)` and `(y, py)`.
fn straight_ring(nc: usize, k3l: f64) -> (Env, Sequence) {
    let env = Env::new();
    env.set_beam(Beam::default());
    let mut entries = Vec::new();
    for c in 0..nc {
        let s0 = 9.0 * c as f64;
        entries.push((Arc::new(Element::new("qf", Kind::Quadrupole).with("l", 1.0).with("k1", 0.29601)), Some(s0)));
        if c == 0 {
            let oct = Element::new("oct", Kind::Multipole).with_list("knl", &[0.0, 0.0, 0.0, k3l]);
            entries.push((Arc::new(oct), Some(s0 + 1.5)));
        }
        entries.push((Arc::new(Element::new("qd", Kind::Quadrupole).with("l", 1.0).with("k1", -0.30242)), Some(s0 + 5.0)));
    }
    let seq = Sequence::build("ring", entries, Refer::Entry, Some(9.0 * nc as f64), &env).unwrap();
    (env, seq)
}

#[test]
fn mirror_symmetric_ring_has_no_odd_terms() {
    let (env, seq) = straight_ring(25, 3.0);
    let nf = ring_normal(&seq, &env, &TwissOpts { order: 4, ..TwissOpts::default() }).unwrap();
    for l in ["3000", "f1020", "2100", "0111"] {
        assert!(nf.gnfu(l, None).unwrap().norm() < 1e-12, "{l}");
    }
    assert!(nf.gnfu("4000", None).unwrap().norm() > 1e-3);
    // drifts alone already detune (kinematic terms); the octupole adds to it
    let (env, seq) = straight_ring(25, 0.0);
    let bare = ring_normal(&seq, &env, &TwissOpts { order: 4, ..TwissOpts::default() }).unwrap();
    assert!(bare.anhx(&[1, 0]).unwrap() > 0.0);
    assert!(nf.anhx(&[1, 0]).unwrap() > bare.anhx(&[1, 0]).unwrap());
}

#[test]
fn mirror_symmetric_ring_has_no_odd_driving_terms_along_it() {
    let (env, seq) = straight_ring(5, 0.0);
    let labels = vec!["f3000".to_string(), "f1020".to_string(), "f2001".to_string()];
    let t = rdt_along(&seq, &env, &TwissOpts { order: 4, ..TwissOpts::default() }, &labels).unwrap();
    assert!(t.nrows() > 0);
    for l in &labels {
        for suffix in ["_re", "_im"] {
            assert!(t.real(&format!("{l}{suffix}")).unwrap().iter().all(|v| v.abs() < 1e-10));
        }
    }
}

#[test]
fn single_octupole_driving_term() {
    // the octupole's share: difference of two strengths on the same ring
    let (k1, k2) = (0.25, 0.5);
    let opts = TwissOpts { order: 4, trkrdt: vec!["f4000".into()], ..TwissOpts::default() };
    let (env, seq) = straight_ring(25, k1);
    let (ta, nfa) = twiss_nf(&seq, &env, &opts).unwrap();
    let (env2, seq2) = straight_ring(25, k2);
    let (tb, _) = twiss_nf(&seq2, &env2, &opts).unwrap();
    let col = |t: &MTable, c: &str| t.real(c).unwrap().to_vec();
    let (ra, ia, rb, ib) = (col(&ta, "f4000_re"), col(&ta, "f4000_im"), col(&tb, "f4000_re"), col(&tb, "f4000_im"));
    let diff: Vec<f64> = (0..ra.len()).map(|i| (rb[i] - ra[i]).hypot(ib[i] - ia[i])).collect();
    // first-order closed form: |f4000| = k3l β² / (384 |1 - exp(4iμ)|)
    let io = ta.strings("name").unwrap().iter().position(|n| n == "oct").unwrap();
    let beta = ta.real("beta11").unwrap()[io];
    let z = num_complex::Complex64::from_polar(1.0, 4.0 * nfa.unwrap().mu[0]) - 1.0;
    let closed = (k2 - k1) * beta * beta / (384.0 * z.norm());
    for d in &diff {
        assert!((d - closed).abs() < 1e-10 * closed, "{d} vs {closed}");
    }
    // direct normal forms of the cycled ring at two azimuths
    let (re, im) = (&ra, &ia);
    for at in ["qd[3]", "qf[17]"] {
        let k = seq.resolve(at).unwrap();
        // rows start with the $start marker, like the items
        let row = k;
        let next = &seq.items[k + 1].elem.name;
        let occ = seq.items[..=k + 1].iter().filter(|it| &it.elem.name == next).count();
        let cyc = seq.cycle(&format!("{next}[{occ}]")).unwrap();
        let nfc = ring_normal(&cyc, &env, &TwissOpts { order: 4, ..TwissOpts::default() }).unwrap();
        let g = nfc.gnfu("4000", None).unwrap();
        let tol = 1e-8 * g.norm();
        assert!((g.re - re[row]).abs() < tol && (g.im - im[row]).abs() < tol, "{at}: {g} vs {} {}", re[row], im[row]);
    }
}
