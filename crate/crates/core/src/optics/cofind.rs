//! Closed-orbit search by Newton iteration on the tracked order-1 map.

use nalgebra::{DMatrix, DVector};

use crate::damap::DaMap;
use crate::engine::{track_map, Observe, TrackOpts};
use crate::error::{Error, Result};
use crate::lattice::{Env, Kind, Sequence};
use crate::tpsa::Descriptor;

pub const CO_TOL: f64 = 1e-10;
pub const CO_MAXITER: usize = 20;

#[derive(Clone, Debug)]
pub struct CoOpts {
    pub guess: [f64; 6],
    /// 4 and 5 solve the transverse coordinates at fixed `pt`; 6 also
    /// closes `t` and `pt` and needs a cavity.
    pub codim: usize,
    /// Order of the returned one-turn map.
    pub order: u8,
}

impl Default for CoOpts {
    fn default() -> Self {
        CoOpts {
            guess: [0.0; 6],
            codim: 4,
            order: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClosedOrbit {
    pub orbit: [f64; 6],
    /// One-turn map expanded about the orbit.
    pub map: DaMap,
    pub iterations: usize,
    pub residual: f64,
}

/// One-turn map about `z0` on a descriptor of the caller's choosing.
pub fn one_turn(seq: &Sequence, env: &Env, desc: &std::sync::Arc<Descriptor>, z0: &[f64; 6]) -> Result<DaMap> {
    let x0 = DaMap::around(desc, z0)?;
    let opts = TrackOpts {
        observe: Observe::None,
        ..TrackOpts::default()
    };
    Ok(track_map(seq, env, &x0, &opts)?.1)
}

pub fn cofind(seq: &Sequence, env: &Env, opts: &CoOpts) -> Result<ClosedOrbit> {
    let dims: &[usize] = match opts.codim {
        4 | 5 => &[0, 1, 2, 3],
        6 => {
            if !seq.has_kind(Kind::RfCavity) {
                return Err(Error::Optics(
                    "a 6D closed orbit needs an RF cavity in the sequence".into(),
                ));
            }
            &[0, 1, 2, 3, 4, 5]
        }
        c => return Err(Error::Optics(format!("codim must be 4, 5 or 6, got {c}"))),
    };
    let d1 = Descriptor::new(6, 1, 0, 0, &[])?;
    let n = dims.len();
    let mut z = opts.guess;
    let mut residual = f64::INFINITY;
    for it in 0..=CO_MAXITER {
        let m = one_turn(seq, env, &d1, &z)?;
        let (e, r) = m.extract();
        let res = DVector::from_fn(n, |i, _| e[dims[i]] - z[dims[i]]);
        residual = res.amax();
        if residual < CO_TOL {
            let map = if opts.order <= 1 {
                m
            } else {
                let d = Descriptor::new(6, opts.order, 0, 0, &[])?;
                one_turn(seq, env, &d, &z)?
            };
            return Ok(ClosedOrbit { orbit: z, map, iterations: it, residual });
        }
        if it == CO_MAXITER {
            break;
        }
        let jac = DMatrix::from_fn(n, n, |i, j| {
            r[(dims[i], dims[j])] - if i == j { 1.0 } else { 0.0 }
        });
        let lu = jac.lu();
        let det = lu.determinant();
        let step = lu.solve(&res).filter(|_| det.abs() > 1e-14).ok_or_else(|| {
            Error::Singular(format!(
                "R - I is singular (det = {det:e}); is a tune an integer?"
            ))
        })?;
        for (i, &k) in dims.iter().enumerate() {
            z[k] -= step[i];
        }
    }
    Err(Error::Optics(format!(
        "closed orbit did not converge in {CO_MAXITER} iterations (residual {residual:e})"
    )))
}
