//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use dalat::engine::{element_steps, plan, track_element, track_particles, Ctx, Observe, State, Step, TrackOpts};
use dalat::lattice::{Beam, Element, Env, Kind, Sequence};
use dalat::optics::{ring_normal, CoOpts, TwissOpts};
use dalat::{DaMap, Descriptor, Tpsa};
use nalgebra::{DMatrix, Matrix2, Matrix4};
use rand::Rng;
use std::f64::consts::TAU;

/// Sparse polynomial keyed by exponent vector.
pub type Poly = HashMap<Vec<u8>, f64>;

pub fn admissible(m: &[u8], nv: usize, mo: u8, po: u8) -> bool {
    let total: u32 = m.iter().map(|&e| e as u32).sum();
    let pd: u32 = m[nv..].iter().map(|&e| e as u32).sum();
    total <= mo as u32 && pd <= po as u32
}

pub fn to_poly(t: &Tpsa) -> Poly {
    let d = t.desc();
    (0..d.size())
        .filter(|&i| t.coef(i) != 0.0)
        .map(|i| (d.index_mono(i).unwrap(), t.coef(i)))
        .collect()
}

/// Convolution over all exponent pairs, dropping inadmissible products.
pub fn poly_mul(a: &Poly, b: &Poly, nv: usize, mo: u8, po: u8) -> Poly {
    let mut out = Poly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let m: Vec<u8> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            if admissible(&m, nv, mo, po) {
                *out.entry(m).or_insert(0.0) += ca * cb;
            }
        }
    }
    out
}

pub fn poly_eval(p: &Poly, point: &[f64]) -> f64 {
    p.iter()
        .map(|(e, c)| {
            c * e
                .iter()
                .zip(point)
                .map(|(&k, &x)| x.powi(k as i32))
                .product::<f64>()
        })
        .sum()
}

/// Random series with about `density` of its coefficients set in [-1, 1].
pub fn random_series(desc: &Arc<Descriptor>, rng: &mut impl Rng, density: f64) -> Tpsa {
    let mut t = Tpsa::new(desc);
    for i in 0..desc.size() {
        if rng.gen::<f64>() < density {
            t.set_coef(i, rng.gen_range(-1.0..1.0));
        }
    }
    t
}

/// Random series with small integer coefficients.
pub fn random_int_series(desc: &Arc<Descriptor>, rng: &mut impl Rng, density: f64) -> Tpsa {
    let mut t = Tpsa::new(desc);
    for i in 0..desc.size() {
        if rng.gen::<f64>() < density {
            t.set_coef(i, rng.gen_range(-3..=3) as f64);
        }
    }
    t
}

/// Exact drift transfer matrix for the 6D coordinates at the origin:
/// `dx/dpx = dy/dpy = L`, `dt/dpt = L (1 - 1/beta0^2)`.
pub fn drift_matrix(l: f64, beta0: f64) -> nalgebra::DMatrix<f64> {
    let mut r = nalgebra::DMatrix::identity(6, 6);
    r[(0, 1)] = l;
    r[(2, 3)] = l;
    r[(4, 5)] = l * (1.0 - 1.0 / (beta0 * beta0));
    r
}

pub fn symplectic_form(n: usize) -> nalgebra::DMatrix<f64> {
    let mut s = nalgebra::DMatrix::zeros(n, n);
    for k in 0..n / 2 {
        s[(2 * k, 2 * k + 1)] = 1.0;
        s[(2 * k + 1, 2 * k)] = -1.0;
    }
    s
}

/// Ring of `nc` FODO cells: 1 m quadrupoles and 2 m sector bends of
/// `pi/nc`, with optional thin sextupoles and octupoles after each
/// quadrupole.
pub fn fodo_ring(nc: usize, k2: f64, k3: f64) -> (dalat::lattice::Env, dalat::lattice::Sequence) {
    use dalat::lattice::*;
    let env = Env::new();
    env.set_beam(Beam::default());
    let ang = std::f64::consts::PI / nc as f64;
    let mut entries = Vec::new();
    for c in 0..nc {
        let s0 = 9.0 * c as f64;
        let mut push = |e: Element, at: f64| entries.push((Arc::new(e), Some(s0 + at)));
        push(Element::new("qf", Kind::Quadrupole).with("l", 1.0).with("k1", 0.29601), 0.0);
        if k2 != 0.0 || k3 != 0.0 {
            push(Element::new("msf", Kind::Multipole).with_list("knl", &[0.0, 0.0, k2, k3]), 1.0);
        }
        push(Element::new("mb1", Kind::Sbend).with("l", 2.0).with("angle", ang), 2.0);
        push(Element::new("qd", Kind::Quadrupole).with("l", 1.0).with("k1", -0.30242), 5.0);
        if k2 != 0.0 || k3 != 0.0 {
            push(Element::new("msd", Kind::Multipole).with_list("knl", &[0.0, 0.0, -k2, k3]), 6.0);
        }
        push(Element::new("mb2", Kind::Sbend).with("l", 2.0).with("angle", ang), 7.0);
    }
    let seq = Sequence::build("ring", entries, Refer::Entry, Some(9.0 * nc as f64), &env).unwrap();
    (env, seq)
}

/// Jacobian by central differences of a vector function.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> nalgebra::DMatrix<f64> {
    let n = x.len();
    let m = f(x).len();
    let mut j = nalgebra::DMatrix::zeros(m, n);
    for k in 0..n {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[k] += h;
        b[k] -= h;
        let (fa, fb) = (f(&a), f(&b));
        for i in 0..m {
            j[(i, k)] = (fa[i] - fb[i]) / (2.0 * h);
        }
    }
    j
}

/// Canonical form for `(x, px, y, py, t, pt)` when `t` grows with late
/// arrival: the conjugate of `pt` is `-t`, so the last block is reversed.
pub fn canonical_form() -> nalgebra::DMatrix<f64> {
    let mut s = symplectic_form(6);
    s[(4, 5)] = -1.0;
    s[(5, 4)] = 1.0;
    s
}

/// Exit coordinates of a particle crossing a uniform field `k0` between
/// the entry plane and the plane turned by `angle` about the centre of a
/// reference arc of radius `rho`, computed as the intersection of a
/// circle with a ray.
pub fn circle_bend(z: [f64; 6], rho: f64, angle: f64, k0: f64, beta0: f64) -> [f64; 6] {
    let [x, px, y, py, t, pt] = z;
    let p2 = 1.0 + 2.0 * pt / beta0 + pt * pt;
    let pw = (p2 - py * py).sqrt();
    let pz = (pw * pw - px * px).sqrt();
    let r = pw / k0;
    // centre of the orbit circle; the field turns momenta towards -x
    let (cx, cz) = (x - r * pz / pw, r * px / pw);
    // exit plane: points (-rho + u cos a, u sin a), u > 0
    let (s, c) = angle.sin_cos();
    let (ox, oz) = (-rho - cx, -cz);
    // |o + u e|² = r² with e = (c, s)
    let b = ox * c + oz * s;
    let cc = ox * ox + oz * oz - r * r;
    let disc = (b * b - cc).sqrt();
    let u = [-b + disc, -b - disc]
        .into_iter()
        .min_by(|a, b| (a - rho).abs().total_cmp(&(b - rho).abs()))
        .unwrap();
    let (qx, qz) = (-rho + u * c, u * s);
    // clockwise tangent at q
    let (dx, dz) = ((qx - cx) / r, (qz - cz) / r);
    let (tx, tz) = (-dz, dx);
    let (mx, mz) = (pw * tx, pw * tz);
    let pxf = mx * c + mz * s;
    // turned angle between the initial and final momentum directions
    let a0 = px.atan2(pz);
    let a1 = mx.atan2(mz);
    let turn = a0 - a1;
    let path_plane = turn * r;
    let path = path_plane * p2.sqrt() / pw;
    let lref = rho * angle;
    [
        u - rho,
        pxf,
        y + path_plane * py / pw,
        py,
        t + path * (1.0 / beta0 + pt) / p2.sqrt() - lref / beta0,
        pt,
    ]
}

/// FODO ring of `nc` cells whose strengths read the variables `kqf`,
/// `kqd` (quadrupoles), `ksf`, `ksd` (0.2 m sextupoles) and `kof`, `kod`
/// (0.2 m octupoles), all set in the returned environment.
pub fn knob_ring(nc: usize, ks: f64, ko: f64) -> (dalat::lattice::Env, dalat::lattice::Sequence) {
    use dalat::lattice::*;
    let env = Env::new();
    env.set_beam(Beam::default());
    for (n, v) in [("kqf", 0.29601), ("kqd", -0.30242), ("ksf", ks), ("ksd", -ks), ("kof", ko), ("kod", ko)] {
        env.set(n, Value::Num(v));
    }
    let var = |n: &str| Expr::Var(n.to_string());
    let ang = std::f64::consts::PI / nc as f64;
    let mut entries = Vec::new();
    for c in 0..nc {
        let s0 = 9.0 * c as f64;
        let mut push = |e: Element, at: f64| entries.push((Arc::new(e), Some(s0 + at)));
        push(Element::new("qf", Kind::Quadrupole).with("l", 1.0).with_lazy("k1", var("kqf")), 0.0);
        push(Element::new("sf", Kind::Sextupole).with("l", 0.2).with_lazy("k2", var("ksf")), 1.1);
        push(Element::new("of", Kind::Octupole).with("l", 0.2).with_lazy("k3", var("kof")), 1.5);
        push(Element::new("mb1", Kind::Sbend).with("l", 2.0).with("angle", ang), 2.0);
        push(Element::new("qd", Kind::Quadrupole).with("l", 1.0).with_lazy("k1", var("kqd")), 5.0);
        push(Element::new("sd", Kind::Sextupole).with("l", 0.2).with_lazy("k2", var("ksd")), 6.1);
        push(Element::new("od", Kind::Octupole).with("l", 0.2).with_lazy("k3", var("kod")), 6.5);
        push(Element::new("mb2", Kind::Sbend).with("l", 2.0).with("angle", ang), 7.0);
    }
    let seq = Sequence::build("ring", entries, Refer::Entry, Some(9.0 * nc as f64), &env).unwrap();
    (env, seq)
}

pub fn beam_with_beta(beta0: f64) -> Beam {
    if beta0 == 1.0 {
        let mut b = Beam::default();
        b.beta0 = 1.0;
        b
    } else {
        let gamma = 1.0 / (1.0 - beta0 * beta0).sqrt();
        Beam::from_gamma("proton", gamma).unwrap()
    }
}

pub fn steps_of(e: &Element, env: &Env, beam: &Beam) -> Vec<Step> {
    element_steps(e, &Ctx { env, beam, seq_len: 100.0 }).unwrap()
}

/// Order-1 Jacobian of the element about `orbit`.
pub fn jacobian(e: &Element, env: &Env, beam: &Beam, orbit: &[f64; 6]) -> DMatrix<f64> {
    let d = Descriptor::new(6, 1, 0, 0, &[]).unwrap();
    let m = DaMap::around(&d, orbit).unwrap();
    let mut z: State<dalat::Tpsa> = m.into_rows().try_into().unwrap();
    for s in steps_of(e, env, beam) {
        s.apply(&mut z, beam.beta0).unwrap();
    }
    DaMap::from_rows(z.to_vec()).unwrap().extract().1
}

pub fn random_element(kind: Kind, rng: &mut impl Rng) -> Element {
    let mut r = |a: f64| rng.gen_range(-a..a);
    let e = Element::new("e", kind);
    let e = match kind {
        Kind::Marker => e,
        Kind::Drift | Kind::Monitor => e.with("l", 0.5 + r(0.4)),
        Kind::Sbend => e
            .with("l", 1.5 + r(0.5))
            .with("angle", r(0.2))
            .with("k1", r(0.3))
            .with("k2", r(2.0))
            .with("tilt", r(0.5)),
        Kind::Rbend => e
            .with("l", 1.5 + r(0.5))
            .with("angle", r(0.2))
            .with("k1", r(0.3))
            .with("tilt", r(0.5)),
        Kind::Quadrupole => e.with("l", 1.0 + r(0.5)).with("k1", r(0.5)).with("k1s", r(0.1)).with("tilt", r(1.0)),
        Kind::Sextupole => e.with("l", 0.3 + r(0.2)).with("k2", r(5.0)).with("k2s", r(1.0)),
        Kind::Octupole => e.with("l", 0.3 + r(0.2)).with("k3", r(50.0)),
        Kind::Multipole => e.with_list("knl", &[r(1e-3), r(0.2), r(2.0), r(20.0)]).with_list("ksl", &[r(1e-3), r(0.2)]),
        Kind::HKicker | Kind::VKicker => e.with("l", 0.2 + r(0.1)).with("kick", r(1e-3)),
        Kind::Kicker => e.with("hkick", r(1e-3)).with("vkick", r(1e-3)),
        Kind::RfCavity => e.with("l", 0.5 + r(0.3)).with("volt", 5.0 + r(3.0)).with("freq", 400.0 + r(50.0)).with("lag", r(0.5)),
        Kind::Translate => e.with("dx", r(1e-2)).with("dy", r(1e-2)).with("ds", r(1e-1)),
        Kind::Rotate => e.with("theta", r(1e-2)).with("phi", r(1e-2)).with("psi", r(0.5)),
    };
    if kind.is_thin_only() {
        return e;
    }
    e.with("dx", r(1e-3))
        .with("dy", r(1e-3))
        .with("ds", r(1e-3))
        .with("dtheta", r(1e-3))
        .with("dphi", r(1e-3))
        .with("dpsi", r(1e-2))
}

pub fn one_turn_particle(seq: &Sequence, env: &Env, z: &[f64]) -> Vec<f64> {
    let opts = TrackOpts { observe: Observe::None, ..TrackOpts::default() };
    let (_, p) = track_particles(seq, env, &[z.try_into().unwrap()], &opts).unwrap();
    assert!(p[0].is_alive());
    p[0].z.to_vec()
}

/// Transfer matrices from the start to each element exit, on the orbit.
pub fn transfer_matrices(seq: &Sequence, env: &Env, orbit: &[f64; 6]) -> Vec<(String, f64, DMatrix<f64>)> {
    let beam = env.beam().unwrap();
    let d = Descriptor::new(6, 1, 0, 0, &[]).unwrap();
    let mut z: [Tpsa; 6] = DaMap::around(&d, orbit).unwrap().into_rows().try_into().unwrap();
    let mut out = Vec::new();
    for c in plan(seq, env, &beam, None, 1).unwrap() {
        track_element(&c, &mut z, beam.beta0).unwrap();
        let m = DMatrix::from_fn(6, 6, |i, j| z[i].coef(j + 1));
        out.push((c.name.clone(), c.s + c.l, m));
    }
    out
}

/// Courant-Snyder parameters of a 2x2 one-turn block.
pub fn cs(m: Matrix2<f64>) -> (f64, f64, f64) {
    let c = 0.5 * m.trace();
    let s = m[(0, 1)].signum() * (1.0 - c * c).sqrt();
    (m[(0, 1)] / s, (m[(0, 0)] - m[(1, 1)]) / (2.0 * s), s.atan2(c).rem_euclid(TAU))
}

pub fn block(m: &DMatrix<f64>, k: usize) -> Matrix2<f64> {
    Matrix2::new(m[(k, k)], m[(k, k + 1)], m[(k + 1, k)], m[(k + 1, k + 1)])
}

pub fn q_at_pt(seq: &Sequence, env: &Env, pt: f64) -> [f64; 2] {
    let opts = TwissOpts {
        co: CoOpts { guess: [0.0, 0.0, 0.0, 0.0, 0.0, pt], ..CoOpts::default() },
        ..TwissOpts::default()
    };
    let nf = ring_normal(seq, env, &opts).unwrap();
    [nf.q1(None).unwrap(), nf.q2(None).unwrap()]
}

/// Average tune over `n` turns in linearly normalized coordinates.
pub fn tracked_tune(seq: &Sequence, env: &Env, a0: &Matrix4<f64>, jx: f64, n: usize) -> f64 {
    let a = *a0;
    let ainv = a.try_inverse().unwrap();
    let zn = nalgebra::Vector4::new((2.0 * jx).sqrt(), 0.0, 1e-9, 0.0);
    let z = a * zn;
    let z0 = [z[0], z[1], z[2], z[3], 0.0, 0.0];
    let opts = TrackOpts { turns: n, observe: Observe::TurnEnd, ..TrackOpts::default() };
    let (t, p) = track_particles(seq, env, &[z0], &opts).unwrap();
    assert!(p[0].is_alive());
    let cols: Vec<Vec<f64>> = ["x", "px", "y", "py"].iter().map(|c| t.real(c).unwrap()).collect();
    let mut prev = 0.0;
    let mut total = 0.0;
    for k in 0..n {
        let v = ainv * nalgebra::Vector4::new(cols[0][k], cols[1][k], cols[2][k], cols[3][k]);
        // arg(x̂ - i p̂) grows by μ per turn
        let ph = (-v[1]).atan2(v[0]);
        total += (ph - prev).rem_euclid(TAU);
        prev = ph;
    }
    total / (n as f64 * TAU)
}
