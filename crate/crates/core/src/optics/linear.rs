//! Linear normalization of a 4x4 transverse one-turn matrix.

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

use std::f64::consts::TAU;

/// Normalizing matrix `A` with `R = A Rot(μ) A⁻¹`, where each plane block
/// of `Rot` is `[[cos μ, sin μ], [-sin μ, cos μ]]`, plus the phases `μ`
/// in `[0, 2π)`.
///
/// `A` is symplectic and carries the Courant-Snyder phase convention: the
/// `(x, e2)` and `(y, e2)` entries of the plane columns are zero.
pub fn normalize(r: &Matrix4<f64>) -> Result<(Matrix4<f64>, [f64; 2])> {
    let coupled = (0..2).any(|i| (2..4).any(|j| r[(i, j)] != 0.0 || r[(j, i)] != 0.0));
    if coupled {
        normalize_coupled(r)
    } else {
        let mut a = Matrix4::zeros();
        let mut mu = [0.0; 2];
        for p in 0..2 {
            let k = 2 * p;
            let m = r.fixed_view::<2, 2>(k, k).into_owned();
            let (ap, mp) = courant_snyder(&m, p)?;
            a.fixed_view_mut::<2, 2>(k, k).copy_from(&ap);
            mu[p] = mp;
        }
        Ok((a, mu))
    }
}

fn plane_name(p: usize) -> &'static str {
    if p == 0 {
        "x"
    } else {
        "y"
    }
}

/// One uncoupled plane: `A = [[√β, 0], [-α/√β, 1/√β]]`.
fn courant_snyder(m: &Matrix2<f64>, p: usize) -> Result<(Matrix2<f64>, f64)> {
    let c = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    if !(c.abs() < 1.0) {
        return Err(Error::Optics(format!(
            "unstable linear motion in plane {} (|trace|/2 = {:.6})",
            plane_name(p),
            c.abs()
        )));
    }
    let s = m[(0, 1)].signum() * (1.0 - c * c).sqrt();
    let beta = m[(0, 1)] / s;
    let alpha = (m[(0, 0)] - m[(1, 1)]) / (2.0 * s);
    let sb = beta.sqrt();
    let a = Matrix2::new(sb, 0.0, -alpha / sb, 1.0 / sb);
    Ok((a, s.atan2(c).rem_euclid(TAU)))
}

fn sympl_norm(v: &Vector4<Complex64>) -> f64 {
    // Im(v̄ᵀ S v) with S = diag(J, J)
    let mut s = Complex64::new(0.0, 0.0);
    for k in [0, 2] {
        s += v[k].conj() * v[k + 1] - v[k + 1].conj() * v[k];
    }
    s.im
}

fn normalize_coupled(r: &Matrix4<f64>) -> Result<(Matrix4<f64>, [f64; 2])> {
    let eig = r.complex_eigenvalues();
    let mut modes: Vec<(Complex64, Vector4<Complex64>)> = Vec::new();
    for lam in eig.iter() {
        if (lam.norm() - 1.0).abs() > 1e-8 || lam.im.abs() < 1e-12 {
            return Err(Error::Optics(format!(
                "unstable linear motion: eigenvalue {lam} is off the unit circle"
            )));
        }
        let m = DMatrix::from_fn(4, 4, |i, j| {
            Complex64::from(r[(i, j)]) - if i == j { *lam } else { Complex64::from(0.0) }
        });
        let svd = m.svd(false, true);
        let vt = svd.v_t.ok_or_else(|| Error::Optics("eigenvector solve failed".into()))?;
        let (k, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("four singular values");
        let v = Vector4::from_fn(|i, _| vt[(k, i)].conj());
        let n = sympl_norm(&v);
        if n > 0.0 {
            modes.push((*lam, v.unscale((0.5 * n).sqrt())));
        }
    }
    if modes.len() != 2 {
        return Err(Error::Optics(
            "degenerate coupled tunes: cannot separate the eigenmodes".into(),
        ));
    }
    let wx = |v: &Vector4<Complex64>| v[0].norm_sqr() + v[1].norm_sqr();
    if wx(&modes[1].1) > wx(&modes[0].1) {
        modes.swap(0, 1);
    }
    let mut a = Matrix4::zeros();
    let mut mu = [0.0; 2];
    for (p, (lam, v)) in modes.iter().enumerate() {
        let k = 2 * p;
        let ph = v[k].conj() / v[k].norm();
        let v = v * ph;
        for i in 0..4 {
            a[(i, k)] = v[i].re;
            a[(i, k + 1)] = v[i].im;
        }
        mu[p] = lam.im.atan2(lam.re).rem_euclid(TAU);
    }
    Ok((a, mu))
}

/// Block rotation `Rot(μ)` of both planes.
pub fn rotation(mu: [f64; 2]) -> Matrix4<f64> {
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

/// Uncoupled `A` from Courant-Snyder parameters.
pub fn from_twiss(beta: [f64; 2], alpha: [f64; 2]) -> Result<Matrix4<f64>> {
    let mut a = Matrix4::zeros();
    for p in 0..2 {
        if !(beta[p] > 0.0) {
            return Err(Error::Optics(format!("beta of plane {} must be positive", plane_name(p))));
        }
        let sb = beta[p].sqrt();
        let k = 2 * p;
        a[(k, k)] = sb;
        a[(k + 1, k)] = -alpha[p] / sb;
        a[(k + 1, k + 1)] = 1.0 / sb;
    }
    Ok(a)
}
