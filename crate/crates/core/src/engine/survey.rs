//! Global-frame engine: the design geometry of a sequence.

use crate::error::Result;
use crate::geom::{rot_from_angles, survey_advance, Frame};
use crate::lattice::{Env, Kind, Sequence};
use crate::mtable::{Column, MTable};

use nalgebra::{Matrix3, Vector3};

use super::track::range_indices;

/// One frame per element exit, starting from `start`. Misalignments are
/// ignored; translate and rotate elements move the frame.
pub fn survey(seq: &Sequence, env: &Env, range: Option<&str>, start: Frame) -> Result<(MTable, Frame)> {
    let idx = range_indices(seq, range)?;
    let mut f = start;
    let mut name = Vec::new();
    let mut kind = Vec::new();
    let mut cols: [Vec<f64>; 10] = Default::default();
    for &i in &idx {
        let it = &seq.items[i];
        let e = &it.elem;
        let l = e.length(env)?;
        let angle = e.angle(env)?;
        let tilt = if e.kind.is_thin_only() { 0.0 } else { e.num(env, "tilt")? };
        f = match e.kind {
            Kind::Translate => f.transform(
                &Vector3::new(e.num(env, "dx")?, e.num(env, "dy")?, e.num(env, "ds")?),
                &Matrix3::identity(),
            ),
            Kind::Rotate => f.transform(
                &Vector3::zeros(),
                &rot_from_angles(e.num(env, "theta")?, e.num(env, "phi")?, e.num(env, "psi")?),
            ),
            _ => survey_advance(&f, l, angle, tilt),
        };
        let (th, ph, ps) = f.angles();
        name.push(e.name.clone());
        kind.push(e.kind.name().to_string());
        for (c, v) in cols
            .iter_mut()
            .zip([it.s + it.l, l, angle, tilt, f.v.x, f.v.y, f.v.z, th, ph, ps])
        {
            c.push(v);
        }
    }
    let mut t = MTable::new("survey");
    t.add_column("name", Column::Str(name))?;
    t.add_column("kind", Column::Str(kind))?;
    let names = ["s", "l", "angle", "tilt", "x", "y", "z", "theta", "phi", "psi"];
    for (n, c) in names.iter().zip(cols) {
        t.add_column(n, Column::Real(c))?;
    }
    t.set_header_num("length", seq.length);
    Ok((t, f))
}
