//! Elementary maps of the local-frame tracker. Every step has an exact
//! inverse, which is what backward tracking applies.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geom::invert_patch;
use crate::lattice::{Value, CLIGHT};

use super::num::Num;

pub const X: usize = 0;
pub const PX: usize = 1;
pub const Y: usize = 2;
pub const PY: usize = 3;
pub const T: usize = 4;
pub const PT: usize = 5;

/// Phase-space coordinates `x, px, y, py, t, pt`.
pub type State<N> = [N; 6];

#[derive(Clone, Debug)]
pub enum Step {
    /// Exact field-free straight drift.
    Drift { l: f64 },
    /// Exact motion in a uniform vertical field `k0` through a frame
    /// curving with `h` (straight when `h` is zero); `lref` is the
    /// reference path used for the time origin.
    Body { l: f64, h: f64, k0: f64, lref: f64 },
    /// Thin kick from integrated strengths; `h` adds the curvature factor
    /// of a kick taken inside a bend.
    Kick { knl: Vec<Value>, ksl: Vec<Value>, h: f64 },
    /// Thin accelerating gap; `amp` is the peak `Δpt`.
    Cavity { amp: Value, freq: f64, lag: f64 },
    /// Move to the frame at `t` with orientation `r` (old-frame axes),
    /// carrying the particle to the new `s = 0` plane along a straight line.
    Patch { t: Vector3<f64>, r: Matrix3<f64> },
    /// Rotation of the transverse axes about `s`.
    Tilt { angle: f64 },
}

impl Step {
    pub fn inverse(&self) -> Step {
        match self {
            Step::Drift { l } => Step::Drift { l: -l },
            Step::Body { l, h, k0, lref } => Step::Body {
                l: -l,
                h: *h,
                k0: *k0,
                lref: -lref,
            },
            Step::Kick { knl, ksl, h } => Step::Kick {
                knl: knl.iter().map(|v| v.clone().neg()).collect(),
                ksl: ksl.iter().map(|v| v.clone().neg()).collect(),
                h: *h,
            },
            Step::Cavity { amp, freq, lag } => Step::Cavity {
                amp: amp.clone().neg(),
                freq: *freq,
                lag: *lag,
            },
            Step::Patch { t, r } => {
                let (t, r) = invert_patch(t, r);
                Step::Patch { t, r }
            }
            Step::Tilt { angle } => Step::Tilt { angle: -angle },
        }
    }

    pub fn apply<N: Num>(&self, z: &mut State<N>, beta0: f64) -> Result<()> {
        match self {
            Step::Drift { l } => drift(z, *l, beta0),
            Step::Body { l, h, k0, lref } => {
                if *k0 == 0.0 && *h == 0.0 {
                    drift(z, *l, beta0)
                } else if *k0 == 0.0 {
                    curved_drift(z, *l, *h, *lref, beta0)
                } else if *h == 0.0 {
                    straight_dipole(z, *l, *k0, *lref, beta0)
                } else {
                    curved_dipole(z, *l, *h, *k0, *lref, beta0)
                }
            }
            Step::Kick { knl, ksl, h } => kick(z, knl, ksl, *h),
            Step::Cavity { amp, freq, lag } => {
                let a = z[T].from_value(amp)?;
                let phase = z[T].mulc(-2.0 * PI * freq / CLIGHT).addc(2.0 * PI * lag);
                z[PT] = z[PT].add(&a.mul(&phase.sin()));
                Ok(())
            }
            Step::Patch { t, r } => patch(z, t, r, beta0),
            Step::Tilt { angle } => {
                tilt(z, *angle);
                Ok(())
            }
        }
    }
}

/// `(1+δ)² - px² - py²`, with `(1+δ)² = 1 + 2pt/β₀ + pt²`.
fn pz2<N: Num>(z: &State<N>, beta0: f64) -> N {
    let pt = &z[PT];
    pt.mulc(2.0 / beta0)
        .add(&pt.sqr())
        .addc(1.0)
        .sub(&z[PX].sqr())
        .sub(&z[PY].sqr())
}

/// `(1+δ)² - py²`, the squared momentum in the bending plane.
fn pw2<N: Num>(z: &State<N>, beta0: f64) -> N {
    let pt = &z[PT];
    pt.mulc(2.0 / beta0).add(&pt.sqr()).addc(1.0).sub(&z[PY].sqr())
}

fn sqrt_pz<N: Num>(v: &N) -> Result<N> {
    v.sqrt()
        .map_err(|_| Error::Track(format!("longitudinal momentum is not real (pz² = {:e})", v.val())))
}

pub fn drift<N: Num>(z: &mut State<N>, l: f64, beta0: f64) -> Result<()> {
    if l == 0.0 {
        return Ok(());
    }
    let pz = sqrt_pz(&pz2(z, beta0))?;
    let lpz = pz.cst(l).div(&pz)?;
    z[X] = z[X].add(&z[PX].mul(&lpz));
    z[Y] = z[Y].add(&z[PY].mul(&lpz));
    z[T] = z[T].add(&z[PT].addc(1.0 / beta0).mul(&lpz)).addc(-l / beta0);
    Ok(())
}

/// Field-free passage between two planes of a frame curving with `h`.
fn curved_drift<N: Num>(z: &mut State<N>, l: f64, h: f64, lref: f64, beta0: f64) -> Result<()> {
    let th = h * l;
    let rho = 1.0 / h;
    let (s, c) = th.sin_cos();
    let pz = sqrt_pz(&pz2(z, beta0))?;
    let rx = z[X].addc(rho);
    // path parameter to the exit plane
    let den = pz.mulc(c).sub(&z[PX].mulc(s));
    let lam = rx.mulc(s).div(&den)?;
    let pxf = z[PX].mulc(c).add(&pz.mulc(s));
    z[X] = rx.mulc(c).add(&lam.mul(&pxf)).addc(-rho);
    z[PX] = pxf;
    z[Y] = z[Y].add(&lam.mul(&z[PY]));
    z[T] = z[T].add(&lam.mul(&z[PT].addc(1.0 / beta0))).addc(-lref / beta0);
    Ok(())
}

/// Uniform field `k0` in a straight frame.
fn straight_dipole<N: Num>(z: &mut State<N>, l: f64, k0: f64, lref: f64, beta0: f64) -> Result<()> {
    let w2 = pw2(z, beta0);
    let px = z[PX].clone();
    let pz = sqrt_pz(&w2.sub(&px.sqr()))?;
    let pxf = px.addc(-k0 * l);
    let pzf = sqrt_pz(&w2.sub(&pxf.sqr()))?;
    // asin(px/pw) - asin(pxf/pw) in one call, without cancellation
    let alpha = px.mul(&pzf).sub(&pxf.mul(&pz)).div(&w2)?.asin()?;
    // (pzf - pz)/k0 rewritten so that k0 does not divide a difference
    z[X] = z[X].add(&px.add(&pxf).div(&pz.add(&pzf))?.mulc(l));
    z[PX] = pxf;
    z[Y] = z[Y].add(&alpha.mul(&z[PY]).mulc(1.0 / k0));
    z[T] = z[T]
        .add(&alpha.mul(&z[PT].addc(1.0 / beta0)).mulc(1.0 / k0))
        .addc(-lref / beta0);
    Ok(())
}

/// Uniform field `k0` in a frame curving with `h`.
fn curved_dipole<N: Num>(
    z: &mut State<N>,
    l: f64,
    h: f64,
    k0: f64,
    lref: f64,
    beta0: f64,
) -> Result<()> {
    let th = h * l;
    let rho = 1.0 / h;
    let (s, c) = th.sin_cos();
    let w2 = pw2(z, beta0);
    let px = z[PX].clone();
    let pz = sqrt_pz(&w2.sub(&px.sqr()))?;
    // momentum component along the entry s axis less the field term
    let a = pz.sub(&z[X].addc(rho).mulc(k0));
    let pxf = px.mulc(c).add(&a.mulc(s));
    let pzf = sqrt_pz(&w2.sub(&pxf.sqr()))?;
    let dpx = a.mulc(c).sub(&px.mulc(s));
    let alpha = px.mul(&pzf).sub(&pxf.mul(&pz)).div(&w2)?.asin()?.addc(th);
    // radius (pzf - dpx)/k0 with the difference of squares expanded
    let r = z[X].addc(rho).mul(&pz.add(&a)).div(&pzf.add(&dpx))?;
    z[X] = r.addc(-rho);
    z[PX] = pxf;
    z[Y] = z[Y].add(&alpha.mul(&z[PY]).mulc(1.0 / k0));
    z[T] = z[T]
        .add(&alpha.mul(&z[PT].addc(1.0 / beta0)).mulc(1.0 / k0))
        .addc(-lref / beta0);
    Ok(())
}

/// Multipole kick `Δpx - iΔpy = -Σ (knl + i ksl) (x+iy)ⁿ/n!`.
///
/// Inside a bend the kick derives from the potential
/// `(1+hx) Re Σ (knl + i ksl) (x+iy)ⁿ⁺¹/(n+1)!`, which keeps it symplectic.
pub fn kick<N: Num>(z: &mut State<N>, knl: &[Value], ksl: &[Value], h: f64) -> Result<()> {
    let n = knl.len().max(ksl.len());
    if n == 0 {
        return Ok(());
    }
    let x = z[X].clone();
    let y = z[Y].clone();
    let zero = x.cst(0.0);
    let coef = |list: &[Value], k: usize| -> Result<N> {
        match list.get(k) {
            Some(v) => x.from_value(v),
            None => Ok(zero.clone()),
        }
    };
    let mut cs = Vec::with_capacity(n);
    for k in 0..n {
        cs.push((coef(knl, k)?, coef(ksl, k)?));
    }
    // Horner in z = x + iy with the 1/n! weights (shift 0) or 1/(n+1)! (shift 1)
    let horner = |shift: usize| -> (N, N) {
        let mut fact = vec![1.0; n + 1];
        for k in 1..=n {
            fact[k] = fact[k - 1] * k as f64;
        }
        let mut br = zero.clone();
        let mut bi = zero.clone();
        for k in (0..n).rev() {
            let w = 1.0 / fact[k + shift];
            let nr = br.mul(&x).sub(&bi.mul(&y)).add(&cs[k].0.mulc(w));
            let ni = br.mul(&y).add(&bi.mul(&x)).add(&cs[k].1.mulc(w));
            br = nr;
            bi = ni;
        }
        (br, bi)
    };
    let (fr, fi) = horner(0);
    if h == 0.0 {
        z[PX] = z[PX].sub(&fr);
        z[PY] = z[PY].add(&fi);
    } else {
        let (gr, gi) = horner(1);
        let big_fr = x.mul(&gr).sub(&y.mul(&gi));
        let w = x.mulc(h).addc(1.0);
        z[PX] = z[PX].sub(&w.mul(&fr)).sub(&big_fr.mulc(h));
        z[PY] = z[PY].add(&w.mul(&fi));
    }
    Ok(())
}

pub fn tilt<N: Num>(z: &mut State<N>, angle: f64) {
    if angle == 0.0 {
        return;
    }
    let (s, c) = angle.sin_cos();
    for (a, b) in [(X, Y), (PX, PY)] {
        let u = z[a].mulc(c).add(&z[b].mulc(s));
        let v = z[b].mulc(c).sub(&z[a].mulc(s));
        z[a] = u;
        z[b] = v;
    }
}

fn patch<N: Num>(z: &mut State<N>, t: &Vector3<f64>, r: &Matrix3<f64>, beta0: f64) -> Result<()> {
    if *r == Matrix3::identity() {
        if t.z == 0.0 {
            z[X] = z[X].addc(-t.x);
            z[Y] = z[Y].addc(-t.y);
            return Ok(());
        }
    }
    let pz = sqrt_pz(&pz2(z, beta0))?;
    let pos = [z[X].addc(-t.x), z[Y].addc(-t.y), z[X].cst(-t.z)];
    let mom = [z[PX].clone(), z[PY].clone(), pz];
    // new components are the old vector dotted with the new axes (columns of r)
    let rot = |v: &[N; 3], i: usize| -> N {
        v[0].mulc(r[(0, i)])
            .add(&v[1].mulc(r[(1, i)]))
            .add(&v[2].mulc(r[(2, i)]))
    };
    let p = [rot(&pos, 0), rot(&pos, 1), rot(&pos, 2)];
    let q = [rot(&mom, 0), rot(&mom, 1), rot(&mom, 2)];
    if !(q[2].val() > 0.0) {
        return Err(Error::Track("patch turns the particle backwards".into()));
    }
    let lam = p[2].neg().div(&q[2])?;
    z[X] = p[0].add(&lam.mul(&q[0]));
    z[Y] = p[1].add(&lam.mul(&q[1]));
    z[PX] = q[0].clone();
    z[PY] = q[1].clone();
    z[T] = z[T].add(&lam.mul(&z[PT].addc(1.0 / beta0)));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rot_from_angles;

    fn v(x: f64) -> Value {
        Value::Num(x)
    }

    #[test]
    fn drift_closed_form() {
        let mut z = [0.0, 1e-3, 0.0, 0.0, 0.0, 0.0];
        drift(&mut z, 1.0, 1.0).unwrap();
        let pz = (1.0f64 - 1e-6).sqrt();
        assert!((z[X] - 1e-3 / pz).abs() < 1e-18);
        assert!((z[T] - (1.0 / pz - 1.0)).abs() < 1e-16);
    }

    #[test]
    fn tapered_kick_scales() {
        let base = [1e-3, 0.0, -2e-3, 0.0, 0.0, 0.0];
        let mut a = base;
        let mut b = base;
        kick(&mut a, &[v(0.0), v(0.3), v(2.0)], &[v(0.0), v(0.1)], 0.0).unwrap();
        kick(&mut b, &[v(0.0), v(0.3 * 1.01), v(2.0 * 1.01)], &[v(0.0), v(0.1 * 1.01)], 0.0).unwrap();
        assert!((b[PX] - 1.01 * a[PX]).abs() < 1e-18);
        assert!((b[PY] - 1.01 * a[PY]).abs() < 1e-18);
    }

    #[test]
    fn cavity_at_zero_phase() {
        let mut z = [0.0; 6];
        Step::Cavity { amp: v(1e-3), freq: 4e8, lag: 0.5 }.apply(&mut z, 1.0).unwrap();
        assert!(z[PT].abs() < 1e-18);
    }

    #[test]
    fn design_orbit_through_sector_bend() {
        for beta0 in [1.0, 0.6] {
            let (l, a) = (2.0, 0.1);
            let mut z = [0.0; 6];
            Step::Body { l, h: a / l, k0: a / l, lref: l }.apply(&mut z, beta0).unwrap();
            assert!(z.iter().all(|c| c.abs() < 1e-15), "{z:?}");
        }
    }

    #[test]
    fn curved_drift_matches_weak_field_limit() {
        let z0 = [1e-3, 2e-4, -1e-3, 1e-4, 0.0, 1e-4];
        let mut a = z0;
        let mut b = z0;
        Step::Body { l: 1.0, h: 0.05, k0: 0.0, lref: 1.0 }.apply(&mut a, 0.9).unwrap();
        Step::Body { l: 1.0, h: 0.05, k0: 1e-9, lref: 1.0 }.apply(&mut b, 0.9).unwrap();
        for i in 0..6 {
            assert!((a[i] - b[i]).abs() < 1e-8, "{i}: {} {}", a[i], b[i]);
        }
    }

    #[test]
    fn every_step_inverts() {
        let steps = [
            Step::Drift { l: 0.7 },
            Step::Body { l: 0.7, h: 0.1, k0: 0.12, lref: 0.7 },
            Step::Body { l: 0.7, h: 0.0, k0: 0.05, lref: 0.71 },
            Step::Body { l: 0.7, h: 0.1, k0: 0.0, lref: 0.7 },
            Step::Kick { knl: vec![v(1e-4), v(0.2), v(3.0)], ksl: vec![v(0.0), v(0.1)], h: 0.1 },
            Step::Cavity { amp: v(1e-3), freq: 2e8, lag: 0.3 },
            Step::Patch { t: Vector3::new(1e-3, -2e-3, 0.1), r: rot_from_angles(1e-3, 2e-3, 0.3) },
            Step::Tilt { angle: 0.4 },
        ];
        let z0 = [1e-3, -2e-4, 5e-4, 3e-4, 1e-3, -2e-4];
        for s in &steps {
            let mut z = z0;
            s.apply(&mut z, 0.8).unwrap();
            s.inverse().apply(&mut z, 0.8).unwrap();
            for i in 0..6 {
                assert!((z[i] - z0[i]).abs() < 1e-14, "{s:?} {i}");
            }
        }
    }

    #[test]
    fn invalid_drift_is_an_error() {
        let mut z = [0.0, 1.1, 0.0, 0.0, 0.0, 0.0];
        assert!(drift(&mut z, 1.0, 1.0).is_err());
    }
}
