//! Parametric nonlinear normal form `m = a ∘ r ∘ a⁻¹` of a one-turn map.
//!
//! The analysis is transverse (4 variables). The energy deviation `pt` and
//! the knobs of the map become parameters of a dedicated descriptor, so
//! tunes, detuning and generating-function coefficients come out as series
//! in them.
//!
//! Phasor basis: in normalized coordinates `(x̂, p̂)` of each plane,
//! `h⁺ = x̂ - i p̂` and `h⁻ = x̂ + i p̂`, so that the linear one-turn map is
//! `h± -> exp(±iμ) h±`. A coefficient label `"jklm"` indexes the exponents
//! of `(h⁺ₓ, h⁻ₓ, h⁺ᵧ, h⁻ᵧ)`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::damap::DaMap;
use crate::error::{Error, Result};
use crate::tpsa::{compose_many, CTpsa, Descriptor, Tpsa};

use super::linear::normalize;

/// Non-resonant terms closer than this to a resonance are small divisors.
pub const SMALL_DIVISOR: f64 = 1e-9;

#[derive(Clone, Debug, Default)]
pub struct NfOpts {
    /// Leave near-resonant terms in `r` instead of failing.
    pub preserve: bool,
}

#[derive(Clone)]
pub struct NormalForm {
    /// The 6D one-turn map the analysis started from.
    pub m6: DaMap,
    /// Transverse part of `m6` on the analysis descriptor, as deviations
    /// from the closed orbit.
    pub m: DaMap,
    /// Normalizing map: normalized coordinates to deviations. Its
    /// parameter-only part is the parametric closed-orbit shift.
    pub a: DaMap,
    /// Normalized map: amplitude- and parameter-dependent rotations.
    pub r: DaMap,
    /// Linear block of `a`.
    pub a0: Matrix4<f64>,
    /// Linear phase advances per turn, in `[0, 2π)`.
    pub mu: [f64; 2],
    pub orbit: [f64; 6],
    pub knobs: Vec<String>,
    phasor_a: Vec<CTpsa>,
    phasor_r: Vec<CTpsa>,
    gen: CTpsa,
    phase: [Tpsa; 2],
}

/// Exponent shift of each phasor row.
const UNIT: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn cplx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Descriptor of the analysis: 4 variables, `pt` then the knobs as
/// parameters, all up to the map order.
pub fn analysis_desc(d6: &Descriptor) -> Result<Arc<Descriptor>> {
    if d6.param_names().iter().any(|p| p == "pt") {
        return Err(Error::Optics("a knob may not be named 'pt'".into()));
    }
    let vn = ["x", "px", "y", "py"].map(String::from).to_vec();
    let mut pn = vec!["pt".to_string()];
    pn.extend(d6.param_names().iter().cloned());
    Descriptor::with_names(vn, d6.mo(), pn, d6.mo())
}

/// Transverse rows of a 6D map on `d4`, deviations in and out.
fn reduce(m6: &DaMap, d4: &Arc<Descriptor>) -> Result<Vec<Tpsa>> {
    let d6 = m6.desc();
    if m6.nv() != 6 {
        return Err(Error::Optics(format!("normal forms need a 6D map, got {} variables", m6.nv())));
    }
    let co = m6.orbit();
    // pt must be a constant of motion for the 5D analysis
    for (i, c) in m6.rows()[5].nonzero() {
        let e = d6.exponents(i);
        let ok = match d6.degree_of(i) {
            0 => true,
            1 => e[5] == 1 && (c - 1.0).abs() < 1e-12,
            _ => false,
        };
        if !ok && c.abs() > 1e-14 {
            return Err(Error::Optics(
                "pt changes over a turn; the transverse normal form needs RF cavities off".into(),
            ));
        }
    }
    let mut buf = vec![0u8; d4.nslots()];
    let mut rows = Vec::with_capacity(4);
    for (k, row) in m6.rows()[..4].iter().enumerate() {
        let mut out = Tpsa::new(d4);
        for (i, c) in row.nonzero() {
            let e = d6.exponents(i);
            if e[4] > 0 {
                if c.abs() > 1e-14 {
                    return Err(Error::Optics(
                        "transverse motion depends on t; the normal form is transverse only".into(),
                    ));
                }
                continue;
            }
            buf[..4].copy_from_slice(&e[..4]);
            buf[4..].copy_from_slice(&e[5..]);
            out.set_coef(d4.mono_index(&buf)?, c);
        }
        out.set0(out.get0() - co[k]);
        rows.push(out);
    }
    Ok(rows)
}

fn linear_block(rows: &[Tpsa]) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| rows[i].coef(j + 1))
}

fn apply_mat<T: crate::tpsa::Coef>(m: &Matrix4<T>, rows: &[Tpsa<T>]) -> Vec<Tpsa<T>> {
    (0..4)
        .map(|i| {
            let mut out = Tpsa::new(rows[0].desc());
            for j in 0..4 {
                if !m[(i, j)].is_zero() {
                    out.axpy(m[(i, j)], &rows[j]);
                }
            }
            out
        })
        .collect()
}

fn vars<T: crate::tpsa::Coef>(d: &Arc<Descriptor>) -> Vec<Tpsa<T>> {
    (0..4).map(|i| Tpsa::var(d, i, T::ZERO).expect("slot")).collect()
}

/// Parametric fixed point `ζ*(p)` of `F`, a series in the parameters only.
fn parametric_orbit(f: &[Tpsa], d4: &Arc<Descriptor>) -> Result<Vec<Tpsa>> {
    let r = linear_block(f);
    let inv = (Matrix4::identity() - r)
        .try_inverse()
        .ok_or_else(|| Error::Singular("I - R of the transverse map (integer tune?)".into()))?;
    let fs: Vec<&Tpsa> = f.iter().collect();
    let mut z = vec![Tpsa::new(d4); 4];
    for _ in 0..=d4.mo() as usize + 1 {
        let fz = compose_many(&fs, &z)?;
        let rz = apply_mat(&r, &z);
        let q: Vec<Tpsa> = fz.iter().zip(&rz).map(|(a, b)| a - b).collect();
        let next = apply_mat(&inv, &q);
        let delta = next.iter().zip(&z).map(|(a, b)| (a - b).max_abs()).fold(0.0, f64::max);
        z = next;
        if delta == 0.0 {
            break;
        }
    }
    Ok(z)
}

/// Drops terms whose knob degree exceeds the order the source map carries;
/// they are incomplete and never feed the lower knob degrees.
fn clip_knobs(t: &mut CTpsa, kpo: u8) {
    let d = Arc::clone(t.desc());
    let zero = Complex64::from(0.0);
    let drop: Vec<usize> = t
        .nonzero()
        .filter(|&(i, _)| d.exponents(i)[5..].iter().sum::<u8>() > kpo)
        .map(|(i, _)| i)
        .collect();
    for i in drop {
        t.set_coef(i, zero);
    }
}

/// Poisson bracket `{f, g}` in the phasor variables.
fn bracket(fd: &[CTpsa; 4], g: &CTpsa) -> Result<CTpsa> {
    let two_i = cplx(0.0, 2.0);
    let mut out = Tpsa::new(g.desc());
    for p in [0, 2] {
        let gp = g.deriv(p)?;
        let gm = g.deriv(p + 1)?;
        out += &(&fd[p] * &gm);
        out -= &(&fd[p + 1] * &gp);
    }
    out.scale(two_i);
    Ok(out)
}

fn derivs(f: &CTpsa) -> Result<[CTpsa; 4]> {
    Ok([f.deriv(0)?, f.deriv(1)?, f.deriv(2)?, f.deriv(3)?])
}

/// `exp(:f:) g`, the Lie transform of `g`.
fn lie_exp(fd: &[CTpsa; 4], g: &CTpsa) -> Result<CTpsa> {
    let mut out = g.clone();
    let mut term = g.clone();
    for n in 1..=g.desc().mo() as usize + 1 {
        term = bracket(fd, &term)?;
        term.scale(Complex64::from(1.0 / n as f64));
        if term.is_zero() {
            break;
        }
        out += &term;
    }
    Ok(out)
}

/// Generator `f` of variable degree `deg` whose vector field is `a`:
/// `{f, h⁺} = -2i ∂f/∂h⁻`, `{f, h⁻} = 2i ∂f/∂h⁺`.
fn generator(a: &[CTpsa], deg: u8) -> Result<CTpsa> {
    let d = a[0].desc();
    let mut f = Tpsa::new(d);
    let mut buf = vec![0u8; d.nslots()];
    for idx in 0..d.size() {
        let e = d.exponents(idx);
        if var_degree(e) != deg {
            continue;
        }
        // (row fed by this monomial, slot differentiated, factor)
        let pick = [(0, 1, cplx(0.0, -2.0)), (2, 3, cplx(0.0, -2.0)), (1, 0, cplx(0.0, 2.0)), (3, 2, cplx(0.0, 2.0))]
            .into_iter()
            .find(|&(_, s, _)| e[s] > 0);
        let Some((row, s, fac)) = pick else { continue };
        buf.copy_from_slice(e);
        buf[s] -= 1;
        let c = a[row].coef(d.mono_index(&buf)?);
        if c != Complex64::from(0.0) {
            f.set_coef(idx, c / (fac * e[s] as f64));
        }
    }
    Ok(f)
}

/// Rotation eigenvalue ratio `λ^m / λ_j` of a monomial in phasor row `j`,
/// with its resonance orders.
fn detuning(e: &[u8], j: usize, mu: [f64; 2]) -> (i32, i32, f64) {
    let nx = e[0] as i32 - e[1] as i32 - UNIT[j].0;
    let ny = e[2] as i32 - e[3] as i32 - UNIT[j].1;
    (nx, ny, nx as f64 * mu[0] + ny as f64 * mu[1])
}

fn var_degree(e: &[u8]) -> u8 {
    e[..4].iter().sum()
}

/// Terms of `row` with variable degree `n`, grouped by their variable
/// exponents; each group is the parameter series multiplying that monomial.
fn by_monomial(row: &CTpsa, n: u8) -> Result<BTreeMap<[u8; 4], CTpsa>> {
    let d = row.desc();
    let mut out: BTreeMap<[u8; 4], CTpsa> = BTreeMap::new();
    let mut buf = vec![0u8; d.nslots()];
    for (idx, c) in row.nonzero() {
        let e = d.exponents(idx);
        if var_degree(e) != n {
            continue;
        }
        let m: [u8; 4] = std::array::from_fn(|i| e[i]);
        buf.copy_from_slice(e);
        buf[..4].fill(0);
        out.entry(m)
            .or_insert_with(|| Tpsa::new(d))
            .set_coef(d.mono_index(&buf)?, c);
    }
    Ok(out)
}

/// Adds `h^m * s` (s a parameter series) to `out`, dropping what the
/// descriptor cannot hold.
fn place(m: &[u8; 4], s: &CTpsa, out: &mut CTpsa) -> Result<()> {
    let d = Arc::clone(s.desc());
    let mut buf = vec![0u8; d.nslots()];
    for (idx, c) in s.nonzero() {
        buf.copy_from_slice(d.exponents(idx));
        buf[..4].copy_from_slice(m);
        if d.check(&buf).is_ok() {
            let i = d.mono_index(&buf)?;
            out.set_coef(i, out.coef(i) + c);
        }
    }
    Ok(())
}

/// Solves the homological equation for the non-resonant terms of variable
/// degree `n`. The rotation eigenvalues are parameter series, so each
/// coefficient is divided by a series.
fn solve_stage(phi: &[CTpsa], n: u8, mu: [f64; 2], preserve: bool, kpo: u8) -> Result<Vec<CTpsa>> {
    let d = phi[0].desc();
    let diag: Vec<CTpsa> = (0..4)
        .map(|j| {
            let mut e = [0u8; 4];
            e[j] = 1;
            by_monomial(&phi[j], 1).map(|g| g.get(&e).cloned().unwrap_or_else(|| Tpsa::new(d)))
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<CTpsa> = vec![Tpsa::new(d); 4];
    for j in 0..4 {
        for (m, c) in by_monomial(&phi[j], n)? {
            let (nx, ny, th) = detuning(&m, j, mu);
            if nx == 0 && ny == 0 {
                continue;
            }
            let z = Complex64::from_polar(1.0, th) - 1.0;
            if z.norm() < SMALL_DIVISOR {
                if preserve {
                    continue;
                }
                return Err(Error::Optics(format!(
                    "small divisor for resonance {nx}Qx{:+}Qy = integer at order {n}",
                    ny
                )));
            }
            let mut lm = Tpsa::constant(d, Complex64::from(1.0));
            for (i, &k) in m.iter().enumerate() {
                if k > 0 {
                    lm *= &diag[i].powi(k as i32)?;
                }
            }
            let a = &c * &(&lm - &diag[j]).inv()?;
            place(&m, &a, &mut out[j])?;
        }
        clip_knobs(&mut out[j], kpo);
    }
    Ok(out)
}

/// Conjugates `phi` by the transformation whose vector field is `a` (of
/// variable degree `n`) and accumulates it into `a_tot`. Returns the Lie
/// generator of the part below the top order.
fn conjugate(a: &[CTpsa], n: u8, phi: &mut Vec<CTpsa>, a_tot: &mut Vec<CTpsa>, kpo: u8) -> Result<CTpsa> {
    let d = Arc::clone(a[0].desc());
    let mo = d.mo();
    let mut lo = a.to_vec();
    for l in lo.iter_mut() {
        l.truncate(mo - 1);
    }
    let hv = vars::<Complex64>(&d);
    let f = generator(&lo, n + 1)?;
    if !f.is_zero() {
        let fd = derivs(&f)?;
        // the vector field of f must be a
        for (j, aj) in lo.iter().enumerate() {
            let v = bracket(&fd, &hv[j])?;
            let err = (&v - aj).max_abs();
            if err > 1e-8 * (1.0 + aj.max_abs()) {
                return Err(Error::Optics(format!(
                    "map is not symplectic at order {n} (mismatch {err:e})"
                )));
            }
        }
        let neg: [CTpsa; 4] = fd.clone().map(|t| -t);
        let inv_rows: Vec<CTpsa> = hv.iter().map(|h| lie_exp(&neg, h)).collect::<Result<_>>()?;
        let moved: Vec<CTpsa> = phi.iter().map(|r| lie_exp(&fd, r)).collect::<Result<_>>()?;
        let ir: Vec<&CTpsa> = inv_rows.iter().collect();
        *phi = compose_many(&ir, &moved)?;
        *a_tot = a_tot.iter().map(|r| lie_exp(&fd, r)).collect::<Result<_>>()?;
    }
    // top order: what is left there is removed by the terms themselves
    let lam: Vec<Complex64> = (0..4).map(|j| phi[j].coef(j + 1)).collect();
    for j in 0..4 {
        for idx in d.order_range(mo) {
            let c = phi[j].coef(idx);
            let e = d.exponents(idx);
            if c == Complex64::from(0.0) || var_degree(e) != n {
                continue;
            }
            let (nx, ny, _) = detuning(e, j, [0.0; 2]);
            let div = (0..4).map(|i| lam[i].powi(e[i] as i32)).product::<Complex64>() - lam[j];
            if nx == 0 && ny == 0 || div.norm() < SMALL_DIVISOR {
                continue;
            }
            phi[j].set_coef(idx, Complex64::from(0.0));
            let old = a_tot[j].coef(idx);
            a_tot[j].set_coef(idx, old + c / div);
        }
    }
    phi.iter_mut().chain(a_tot.iter_mut()).for_each(|t| clip_knobs(t, kpo));
    Ok(f)
}

/// Rotates the normalized coordinates by a parameter-dependent phase so
/// that the linear part of the full normalizing map keeps the phase
/// convention of `a0` (`a[x, px̂] = 0`, `a[y, pŷ] = 0`) for every value of
/// the parameters.
fn fix_phase(
    a0c: &Matrix4<Complex64>,
    cinv: &Matrix4<Complex64>,
    cm: &Matrix4<Complex64>,
    phi: &mut Vec<CTpsa>,
    a_tot: &mut Vec<CTpsa>,
    kpo: u8,
) -> Result<()> {
    let d = Arc::clone(phi[0].desc());
    let lin: Vec<BTreeMap<[u8; 4], CTpsa>> = a_tot.iter().map(|r| by_monomial(r, 1)).collect::<Result<_>>()?;
    let p = a0c * cinv;
    // real linear part W = P L C, entry (i, k)
    let w = |i: usize, k: usize| -> Tpsa {
        let mut s = Tpsa::new(&d);
        for (j, row) in lin.iter().enumerate() {
            for (m, c) in row {
                let l = m.iter().position(|&x| x == 1).expect("linear monomial");
                s.axpy(p[(i, j)] * cm[(l, k)], c);
            }
        }
        s.re()
    };
    let mut rot: Vec<CTpsa> = Vec::with_capacity(4);
    for k in [0, 2] {
        let ratio = &w(k, k + 1) * &w(k, k).inv()?;
        let ang = (-ratio).atan()?;
        let mut e = ang.to_complex();
        e.scale(cplx(0.0, 1.0));
        let e = e.exp()?;
        rot.push(e.clone());
        rot.push(e.inv()?);
    }
    let hv = vars::<Complex64>(&d);
    let args: Vec<CTpsa> = hv.iter().zip(&rot).map(|(h, e)| h * e).collect();
    let ar: Vec<&CTpsa> = a_tot.iter().collect();
    *a_tot = compose_many(&ar, &args)?;
    let pr: Vec<&CTpsa> = phi.iter().collect();
    let moved = compose_many(&pr, &args)?;
    // row j of the inverse rotation multiplies by the partner factor
    *phi = moved
        .iter()
        .enumerate()
        .map(|(j, r)| r * &rot[j ^ 1])
        .collect();
    phi.iter_mut().chain(a_tot.iter_mut()).for_each(|t| clip_knobs(t, kpo));
    Ok(())
}

/// Normal form of a 6D one-turn map expanded about its closed orbit
/// (orbit part = closed orbit), such as the map returned by `cofind` or a
/// parametric map tracked around it.
pub fn normal(m6: &DaMap, opts: &NfOpts) -> Result<NormalForm> {
    let d4 = analysis_desc(m6.desc())?;
    let mo = d4.mo();
    if mo < 1 {
        return Err(Error::Optics("normal forms need a map of order 1 or more".into()));
    }
    let kpo = m6.desc().po();
    let f = reduce(m6, &d4)?;
    let zs = parametric_orbit(&f, &d4)?;
    let shifted: Vec<Tpsa> = vars::<f64>(&d4).iter().zip(&zs).map(|(v, z)| v + z).collect();
    let fs: Vec<&Tpsa> = f.iter().collect();
    let g: Vec<Tpsa> = compose_many(&fs, &shifted)?
        .iter()
        .zip(&zs)
        .map(|(a, b)| a - b)
        .collect();

    let (a0, mu) = normalize(&linear_block(&g))?;
    let a0inv = a0
        .try_inverse()
        .ok_or_else(|| Error::Singular("normalizing matrix".into()))?;
    let (cm, cinv) = phasor_matrices();
    let a0c = a0.map(Complex64::from);
    let p = a0c * cinv;
    let q = cm * a0inv.map(Complex64::from);

    // phasor map Φ = Q ∘ G ∘ P
    let hv = vars::<Complex64>(&d4);
    let args = apply_mat(&p, &hv);
    let gc: Vec<CTpsa> = g.iter().map(Tpsa::to_complex).collect();
    let gcr: Vec<&CTpsa> = gc.iter().collect();
    let mut phi = apply_mat(&q, &compose_many(&gcr, &args)?);

    // the linear part is diagonal up to rounding
    for (j, row) in phi.iter_mut().enumerate() {
        for i in 0..4 {
            let c = row.coef(i + 1);
            let want = if i == j {
                Complex64::from_polar(1.0, UNIT[j].0 as f64 * mu[0] + UNIT[j].1 as f64 * mu[1])
            } else {
                Complex64::from(0.0)
            };
            if (c - want).norm() > 1e-8 {
                return Err(Error::Optics(format!(
                    "linear normalization failed (row {j}, term {i}: {c})"
                )));
            }
            row.set_coef(i + 1, want);
        }
    }

    let mut a_tot = hv.clone();
    // parameter-dependent linear part first, one parameter order per pass
    for _ in 0..mo {
        let a = solve_stage(&phi, 1, mu, opts.preserve, kpo)?;
        if a.iter().all(|t| t.is_zero()) {
            break;
        }
        conjugate(&a, 1, &mut phi, &mut a_tot, kpo)?;
    }
    fix_phase(&a0c, &cinv, &cm, &mut phi, &mut a_tot, kpo)?;

    // then the nonlinear terms, by degree in the variables
    let mut gen = Tpsa::new(&d4);
    for n in 2..=mo {
        let a = solve_stage(&phi, n, mu, opts.preserve, kpo)?;
        if a.iter().all(|t| t.is_zero()) {
            continue;
        }
        gen += &conjugate(&a, n, &mut phi, &mut a_tot, kpo)?;
    }

    let phase = [phase_series(&phi[0], 0, mu[0])?, phase_series(&phi[2], 2, mu[1])?];

    // real maps
    let wv = vars::<Complex64>(&d4);
    let cw = apply_mat(&cm, &wv);
    let cwr: Vec<&CTpsa> = a_tot.iter().collect();
    let a_real = apply_mat(&(a0c * cinv), &compose_many(&cwr, &cw)?);
    let a_rows: Vec<Tpsa> = a_real.iter().zip(&zs).map(|(t, z)| &t.re() + z).collect();
    let pr: Vec<&CTpsa> = phi.iter().collect();
    let r_rows: Vec<Tpsa> = apply_mat(&cinv, &compose_many(&pr, &cw)?)
        .iter()
        .map(CTpsa::re)
        .collect();

    Ok(NormalForm {
        m6: m6.clone(),
        m: DaMap::from_rows(f)?,
        a: DaMap::from_rows(a_rows)?,
        r: DaMap::from_rows(r_rows)?,
        a0,
        mu,
        orbit: std::array::from_fn(|i| m6.rows()[i].get0()),
        knobs: m6.desc().param_names().to_vec(),
        phasor_a: a_tot,
        phasor_r: phi,
        gen,
        phase,
    })
}

/// `C` (normalized to phasor) and `C⁻¹` for both planes.
fn phasor_matrices() -> (Matrix4<Complex64>, Matrix4<Complex64>) {
    let z = Complex64::from(0.0);
    let mut c = Matrix4::from_element(z);
    let mut ci = Matrix4::from_element(z);
    for k in [0, 2] {
        c[(k, k)] = cplx(1.0, 0.0);
        c[(k, k + 1)] = cplx(0.0, -1.0);
        c[(k + 1, k)] = cplx(1.0, 0.0);
        c[(k + 1, k + 1)] = cplx(0.0, 1.0);
        ci[(k, k)] = cplx(0.5, 0.0);
        ci[(k, k + 1)] = cplx(0.5, 0.0);
        ci[(k + 1, k)] = cplx(0.0, 0.5);
        ci[(k + 1, k + 1)] = cplx(0.0, -0.5);
    }
    (c, ci)
}

/// Phase advance `μ(I, p)` of a plane from its rotation row
/// `h⁺ -> h⁺ exp(iμ)`; the series is in the invariant monomials
/// `(h⁺h⁻)ᵃ` and the parameters.
fn phase_series(row: &CTpsa, slot: usize, mu0: f64) -> Result<Tpsa> {
    let d = row.desc();
    let mut lam = Tpsa::new(d);
    let mut buf = vec![0u8; d.nslots()];
    for (idx, c) in row.nonzero() {
        let e = d.exponents(idx);
        if e[slot] == 0 || e[0] as i32 - e[1] as i32 != UNIT[slot].0 || e[2] as i32 - e[3] as i32 != UNIT[slot].1 {
            continue;
        }
        buf.copy_from_slice(e);
        buf[slot] -= 1;
        lam.set_coef(d.mono_index(&buf)?, c);
    }
    let l0 = lam.get0();
    if (l0.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::Optics("rotation part of the normal form is not unitary".into()));
    }
    lam.scale(Complex64::from(1.0) / l0);
    let lg = lam.log()?;
    let mut mu = lg.im();
    mu.set0(mu0);
    Ok(mu)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl NormalForm {
    pub fn desc(&self) -> &Arc<Descriptor> {
        self.m.desc()
    }

    pub fn order(&self) -> u8 {
        self.desc().mo()
    }

    /// Phasor-basis rows of `a` (without the orbit shift and linear part).
    pub fn phasor_a(&self) -> &[CTpsa] {
        &self.phasor_a
    }

    /// Phasor-basis rows of `r`.
    pub fn phasor_r(&self) -> &[CTpsa] {
        &self.phasor_r
    }

    /// Generating-function series: the sum of the Lie generators removed
    /// order by order, in the phasor variables.
    pub fn generator(&self) -> &CTpsa {
        &self.gen
    }

    /// Phase-advance series of plane 0 (x) or 1 (y), a function of
    /// `h⁺h⁻` products and the parameters.
    pub fn phase(&self, plane: usize) -> &Tpsa {
        &self.phase[plane]
    }

    /// Largest non-resonant coefficient left in the phasor rows of `r`.
    pub fn nonresonant_residual(&self) -> f64 {
        let d = self.desc();
        let mut worst: f64 = 0.0;
        for (j, row) in self.phasor_r.iter().enumerate() {
            for (idx, c) in row.nonzero() {
                if d.degree_of(idx) < 2 {
                    continue;
                }
                let (nx, ny, _) = detuning(d.exponents(idx), j, self.mu);
                if nx != 0 || ny != 0 {
                    worst = worst.max(c.norm());
                }
            }
        }
        worst
    }

    fn need(&self, what: &str, order: usize) -> Result<()> {
        if order > self.order() as usize {
            return Err(Error::Optics(format!(
                "{what} needs a map of order {order}, this one has order {}",
                self.order()
            )));
        }
        Ok(())
    }

    /// Parameter slot of knob `k` (1-based).
    fn knob_slot(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.knobs.len() {
            return Err(Error::Optics(format!(
                "knob index {k} out of range 1..={}",
                self.knobs.len()
            )));
        }
        Ok(4 + k)
    }

    fn tune(&self, plane: usize, k: Option<usize>) -> Result<f64> {
        match k {
            None => Ok(self.mu[plane] / TAU),
            Some(k) => {
                self.need("a tune derivative", 2)?;
                let s = self.knob_slot(k)?;
                Ok(self.phase[plane].coef(s + 1) / TAU)
            }
        }
    }

    /// Fractional horizontal tune, or its derivative by knob `k`.
    pub fn q1(&self, k: Option<usize>) -> Result<f64> {
        self.tune(0, k)
    }

    pub fn q2(&self, k: Option<usize>) -> Result<f64> {
        self.tune(1, k)
    }

    /// `∂Q/∂pt` of a plane.
    pub fn dq(&self, plane: usize) -> Result<f64> {
        self.need("chromaticity", 2)?;
        Ok(self.phase[plane].coef(5) / TAU)
    }

    /// `∂ⁱ⁺ʲ⁺ⁿ Q / ∂Jxⁱ ∂Jyʲ ∂ptⁿ`, optionally also `∂/∂K_k`, for one plane.
    /// `args` is `[i, j]`, `[i, j, n]` or `[i, j, n, k]`.
    pub fn anh(&self, plane: usize, args: &[usize]) -> Result<f64> {
        let (i, j, n, k) = match *args {
            [i, j] => (i, j, 0, None),
            [i, j, n] => (i, j, n, None),
            [i, j, n, k] => (i, j, n, Some(k)),
            _ => return Err(Error::Optics("detuning takes 2 to 4 arguments".into())),
        };
        let extra = usize::from(k.is_some());
        self.need("this detuning term", 2 * (i + j) + n + extra + 1)?;
        let d = self.desc();
        let mut e = vec![0u8; d.nslots()];
        e[0] = i as u8;
        e[1] = i as u8;
        e[2] = j as u8;
        e[3] = j as u8;
        e[4] = n as u8;
        if let Some(k) = k {
            e[self.knob_slot(k)?] += 1;
        }
        if d.check(&e).is_err() {
            return Ok(0.0);
        }
        let c = self.phase[plane].getm(&e)?;
        // h⁺h⁻ = 2J
        let scale = 2f64.powi((i + j) as i32) * factorial(i) * factorial(j) * factorial(n);
        Ok(c * scale / TAU)
    }

    pub fn anhx(&self, args: &[usize]) -> Result<f64> {
        self.anh(0, args)
    }

    pub fn anhy(&self, args: &[usize]) -> Result<f64> {
        self.anh(1, args)
    }

    /// Generating-function coefficient `f_jklm`, or its derivative by knob
    /// `k`. The label is four exponent digits with an optional leading `f`.
    pub fn gnfu(&self, label: &str, k: Option<usize>) -> Result<Complex64> {
        let e = parse_label(label)?;
        let extra = usize::from(k.is_some());
        let deg: usize = e.iter().map(|&x| x as usize).sum();
        self.need(&format!("f{label}"), deg + extra)?;
        let d = self.desc();
        let mut m = vec![0u8; d.nslots()];
        m[..4].copy_from_slice(&e);
        if let Some(k) = k {
            m[self.knob_slot(k)?] += 1;
        }
        if d.check(&m).is_err() {
            return Ok(Complex64::from(0.0));
        }
        self.gen.getm(&m)
    }

    /// Transverse linear optics at the start: `(beta, alpha)` per plane and
    /// the dispersion `(dx, dpx, dy, dpy)` with respect to `pt`.
    pub fn linear_optics(&self) -> ([f64; 2], [f64; 2], [f64; 4]) {
        let (beta, alpha) = beta_alpha(&self.a0);
        let disp = std::array::from_fn(|i| self.a.rows()[i].coef(5));
        (beta, alpha, disp)
    }
}

/// Mode beta and alpha functions of a normalizing matrix.
pub fn beta_alpha(a: &Matrix4<f64>) -> ([f64; 2], [f64; 2]) {
    let mut beta = [0.0; 2];
    let mut alpha = [0.0; 2];
    for p in 0..2 {
        let k = 2 * p;
        beta[p] = a[(k, k)].powi(2) + a[(k, k + 1)].powi(2);
        alpha[p] = -(a[(k, k)] * a[(k + 1, k)] + a[(k, k + 1)] * a[(k + 1, k + 1)]);
    }
    (beta, alpha)
}

/// Parses `"jklm"` or `"fjklm"` into four exponents.
pub fn parse_label(label: &str) -> Result<[u8; 4]> {
    let s = label.strip_prefix('f').unwrap_or(label);
    if s.len() != 4 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::Optics(format!(
            "malformed label '{label}': expected four exponent digits like \"2002\""
        )));
    }
    let b = s.as_bytes();
    Ok(std::array::from_fn(|i| b[i] - b'0'))
}
