//! Global frames, rotations and the patches that restore the reference
//! frame behind a misaligned element.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Advances between two re-orthonormalizations of a frame.
const REORTHO_EVERY: u32 = 1024;

/// Position `v` and orientation `w` (columns are the local axes) in the
/// global coordinate system.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub v: Vector3<f64>,
    pub w: Matrix3<f64>,
    advances: u32,
}

impl Default for Frame {
    fn default() -> Self {
        Frame::new(Vector3::zeros(), Matrix3::identity())
    }
}

impl Frame {
    pub fn new(v: Vector3<f64>, w: Matrix3<f64>) -> Self {
        Frame { v, w, advances: 0 }
    }

    /// Moves to the frame `(t, r)` expressed in this frame's local axes.
    pub fn transform(&self, t: &Vector3<f64>, r: &Matrix3<f64>) -> Frame {
        Frame {
            v: self.v + self.w * t,
            w: self.w * r,
            advances: self.advances,
        }
    }

    /// Angles `(theta, phi, psi)` such that `w = rot_from_angles(theta, phi, psi)`.
    pub fn angles(&self) -> (f64, f64, f64) {
        let w = &self.w;
        let theta = w[(0, 2)].atan2(w[(2, 2)]);
        let phi = w[(1, 2)].atan2(w[(0, 2)].hypot(w[(2, 2)]));
        let psi = w[(1, 0)].atan2(w[(1, 1)]);
        (theta, phi, psi)
    }
}

/// Element misalignment: translations in meters, rotations in radians
/// about y, -x and s.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Misalignment {
    pub dx: f64,
    pub dy: f64,
    pub ds: f64,
    pub dtheta: f64,
    pub dphi: f64,
    pub dpsi: f64,
}

impl Misalignment {
    pub fn is_zero(&self) -> bool {
        *self == Misalignment::default()
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.dx, self.dy, self.ds)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rot_from_angles(self.dtheta, self.dphi, self.dpsi)
    }
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Rotation about the longitudinal axis.
pub fn rot_s(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `Ry(dtheta) Rx(-dphi) Rs(dpsi)`.
pub fn rot_from_angles(dtheta: f64, dphi: f64, dpsi: f64) -> Matrix3<f64> {
    rot_y(dtheta) * rot_x(-dphi) * rot_s(dpsi)
}

/// Largest deviation of `mᵀm` from the identity.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// Gram-Schmidt on the columns, keeping the first column's direction.
pub fn orthonormalize(m: &mut Matrix3<f64>) {
    let c0 = m.column(0).normalize();
    let mut c1: Vector3<f64> = m.column(1).into();
    c1 -= c0 * c0.dot(&c1);
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    m.set_column(0, &c0);
    m.set_column(1, &c1);
    m.set_column(2, &c2);
}

/// Misalignment of the exit frame relative to the ideal exit frame.
///
/// `(v, w)` is the displacement and rotation of the element body and
/// `(t, r)` the entry misalignment: `T̄ = wᵗ(r v + t - v)`, `R̄ = wᵗ r w`.
pub fn patch_restore(
    w: &Matrix3<f64>,
    r: &Matrix3<f64>,
    v: &Vector3<f64>,
    t: &Vector3<f64>,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    for (name, m) in [("W", w), ("R", r)] {
        let err = orthonormality_error(m);
        if !(err <= 1e-9) {
            return Err(Error::Range(format!(
                "{name} is not orthonormal (|MᵀM - I| = {err:e})"
            )));
        }
    }
    let wt = w.transpose();
    Ok((wt * (r * v + t - v), wt * r * w))
}

/// Inverse of the frame change `(t, r)`.
pub fn invert_patch(t: &Vector3<f64>, r: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let rt = r.transpose();
    (-(rt * t), rt)
}

/// Body displacement and rotation of an element of length `l` bending by
/// `angle` in the plane tilted by `tilt`.
pub fn body_displacement(l: f64, angle: f64, tilt: f64) -> (Vector3<f64>, Matrix3<f64>) {
    if angle == 0.0 {
        return (Vector3::new(0.0, 0.0, l), Matrix3::identity());
    }
    let rho = l / angle;
    // positive angles bend towards -x, as in the MAD family
    let s = Vector3::new(rho * (angle.cos() - 1.0), 0.0, rho * angle.sin());
    let q = rot_y(-angle);
    if tilt == 0.0 {
        return (s, q);
    }
    let rt = rot_s(tilt);
    (rt * s, rt * q * rt.transpose())
}

/// Frame at the exit of a straight or bent element.
pub fn survey_advance(f: &Frame, l: f64, angle: f64, tilt: f64) -> Frame {
    let (s, q) = body_displacement(l, angle, tilt);
    let mut out = f.transform(&s, &q);
    out.advances = f.advances + 1;
    if out.advances % REORTHO_EVERY == 0 {
        orthonormalize(&mut out.w);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_angles_give_identity() {
        assert_eq!(rot_from_angles(0.0, 0.0, 0.0), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_y_sends_s_to_x() {
        let r = rot_from_angles(PI / 2.0, 0.0, 0.0);
        let z = r * Vector3::new(0.0, 0.0, 1.0);
        assert!((z - Vector3::new(1.0, 0.0, 0.0)).amax() < 1e-15);
    }

    #[test]
    fn angles_roundtrip() {
        let f = Frame::new(Vector3::zeros(), rot_from_angles(0.3, -0.2, 0.1));
        let (t, p, s) = f.angles();
        assert!((t - 0.3).abs() < 1e-14 && (p + 0.2).abs() < 1e-14 && (s - 0.1).abs() < 1e-14);
    }

    #[test]
    fn trivial_patches() {
        let w = rot_from_angles(0.4, 0.1, -0.3);
        let v = Vector3::new(0.1, 0.2, 1.0);
        let (tb, rb) = patch_restore(&w, &Matrix3::identity(), &v, &Vector3::zeros()).unwrap();
        assert!(tb.amax() < 1e-15 && (rb - Matrix3::identity()).amax() < 1e-15);
        let t = Vector3::new(1.0, -2.0, 3.0);
        let (tb, rb) = patch_restore(&Matrix3::identity(), &Matrix3::identity(), &v, &t).unwrap();
        assert_eq!(tb, t);
        assert_eq!(rb, Matrix3::identity());
    }

    #[test]
    fn non_orthonormal_rejected() {
        let mut w = Matrix3::identity();
        w[(0, 1)] = 1e-6;
        assert!(patch_restore(&w, &Matrix3::identity(), &Vector3::zeros(), &Vector3::zeros()).is_err());
    }

    #[test]
    fn straight_advance() {
        let f = survey_advance(&Frame::default(), 1.0, 0.0, 0.0);
        assert_eq!(f.v, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn arc_chord_and_exit_angle() {
        let (l, a) = (2.0, PI / 25.0);
        let f = survey_advance(&Frame::default(), l, a, 0.0);
        let rho = l / a;
        // chord of length 2 rho sin(a/2) at angle a/2 from the entry axis
        let chord = 2.0 * rho * (a / 2.0).sin();
        assert!((f.v.norm() - chord).abs() < 1e-14);
        assert!((f.v.x.atan2(f.v.z) + a / 2.0).abs() < 1e-14);
        let (theta, phi, psi) = f.angles();
        assert!((theta + a).abs() < 1e-14 && phi.abs() < 1e-15 && psi.abs() < 1e-15);
    }

    #[test]
    fn vertical_bend_through_tilt() {
        let f = survey_advance(&Frame::default(), 1.0, 0.1, PI / 2.0);
        assert!(f.v.x.abs() < 1e-15);
        assert!(f.v.y < 0.0);
    }

    #[test]
    fn long_chains_stay_orthonormal() {
        let mut f = Frame::default();
        for i in 0..10_000 {
            f = survey_advance(&f, 0.7, 0.013 * ((i % 7) as f64 - 3.0), 0.2 * (i % 3) as f64);
        }
        assert!(orthonormality_error(&f.w) < 1e-10);
        assert!((f.w.determinant() - 1.0).abs() < 1e-10);
    }
}
