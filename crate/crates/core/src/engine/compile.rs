//! Turns elements into step lists following the generic element tracker:
//! misalignment, tilt, fringe (no-op), integrated body, fringe, tilt,
//! misalignment.

use crate::error::{Error, Result};
use crate::geom::{body_displacement, invert_patch, patch_restore, rot_from_angles, rot_y};
use crate::lattice::{Beam, Element, Env, Kind, Sequence, Value, CLIGHT};

use nalgebra::Vector3;

use super::maps::Step;

/// Slices for thick magnets when the element does not set `nslice`.
pub const DEFAULT_NST: usize = 8;

/// Yoshida weights turning the order-2 step into an order-4 one.
fn yoshida_weights() -> [f64; 3] {
    let c = 2f64.powf(1.0 / 3.0);
    let w1 = 1.0 / (2.0 - c);
    [w1, -c * w1, w1]
}

/// Settings shared by every element of a run.
pub struct Ctx<'a> {
    pub env: &'a Env,
    pub beam: &'a Beam,
    /// Sequence length, used to turn a cavity harmonic into a frequency.
    pub seq_len: f64,
}

/// Element compiled for a run.
#[derive(Clone, Debug)]
pub struct Compiled {
    /// Index in the sequence.
    pub index: usize,
    pub name: String,
    pub kind: Kind,
    /// Entry position.
    pub s: f64,
    pub l: f64,
    pub steps: Vec<Step>,
}

impl Compiled {
    /// Steps of the backward pass through the element.
    pub fn reversed(&self) -> Compiled {
        Compiled {
            steps: self.steps.iter().rev().map(Step::inverse).collect(),
            ..self.clone()
        }
    }
}

fn scaled(list: &[Value], f: f64) -> Result<Vec<Value>> {
    list.iter().map(|v| v.clone().mul(Value::Num(f))).collect()
}

fn is_zero(list: &[Value]) -> bool {
    list.iter().all(|v| !v.is_series() && v.get0() == 0.0)
}

/// Adds `v` to slot `k` of a strength list.
fn add_at(list: &mut Vec<Value>, k: usize, v: Value) -> Result<()> {
    if list.len() <= k {
        list.resize(k + 1, Value::Num(0.0));
    }
    let old = std::mem::take(&mut list[k]);
    list[k] = old.add(v)?;
    Ok(())
}

/// Integrated multipole strengths `(knl, ksl)` of a thick or thin element,
/// tapering included.
fn strengths(e: &Element, env: &Env, l: f64) -> Result<(Vec<Value>, Vec<Value>)> {
    let mut knl = e.list(env, "knl")?;
    let mut ksl = e.list(env, "ksl")?;
    let body: &[usize] = match e.kind {
        Kind::Quadrupole => &[1],
        Kind::Sextupole => &[2],
        Kind::Octupole => &[3],
        Kind::Sbend | Kind::Rbend => &[1, 2],
        _ => &[],
    };
    for &n in body {
        let kn = format!("k{n}");
        let ks = format!("k{n}s");
        if e.has(&kn) {
            add_at(&mut knl, n, e.value(env, &kn)?.mul(Value::Num(l))?)?;
        }
        if e.has(&ks) {
            add_at(&mut ksl, n, e.value(env, &ks)?.mul(Value::Num(l))?)?;
        }
    }
    match e.kind {
        Kind::HKicker => add_at(&mut knl, 0, e.value(env, "kick")?.neg())?,
        Kind::VKicker => add_at(&mut ksl, 0, e.value(env, "kick")?)?,
        Kind::Kicker => {
            add_at(&mut knl, 0, e.value(env, "hkick")?.neg())?;
            add_at(&mut ksl, 0, e.value(env, "vkick")?)?;
        }
        _ => {}
    }
    let tap = 1.0 + e.num(env, "ktap")?;
    if tap != 1.0 {
        knl = scaled(&knl, tap)?;
        ksl = scaled(&ksl, tap)?;
    }
    Ok((knl, ksl))
}

/// Drift-kick-drift slices, or the order-4 composition of them.
fn integrate(
    out: &mut Vec<Step>,
    nst: usize,
    order4: bool,
    thick: impl Fn(f64) -> Step,
    kick: Option<&dyn Fn(f64) -> Result<Step>>,
) -> Result<()> {
    let Some(kick) = kick else {
        out.push(thick(1.0));
        return Ok(());
    };
    let weights: &[f64] = if order4 { &yoshida_weights() } else { &[1.0] };
    let n = nst as f64;
    for _ in 0..nst {
        for &w in weights {
            out.push(thick(0.5 * w / n));
            out.push(kick(w / n)?);
            out.push(thick(0.5 * w / n));
        }
    }
    Ok(())
}

fn slicing(e: &Element, env: &Env) -> Result<(usize, bool)> {
    let nst = e.num_or(env, "nslice", DEFAULT_NST as f64)?;
    if !(nst >= 1.0) || nst.fract() != 0.0 {
        return Err(Error::Lattice(format!("{}: nslice must be a positive integer", e.name)));
    }
    let method = e.num_or(env, "method", 2.0)?;
    let order4 = match method as i64 {
        2 => false,
        4 => true,
        m => return Err(Error::Lattice(format!("{}: integration method {m} is not 2 or 4", e.name))),
    };
    Ok((nst as usize, order4))
}

/// Body steps in the element frame (tilt and misalignment excluded).
fn body_steps(e: &Element, ctx: &Ctx) -> Result<Vec<Step>> {
    let env = ctx.env;
    let l = e.length(env)?;
    let mut out = Vec::new();
    match e.kind {
        Kind::Marker => {}
        Kind::Drift | Kind::Monitor => out.push(Step::Drift { l }),
        Kind::Translate => out.push(Step::Patch {
            t: Vector3::new(e.num(env, "dx")?, e.num(env, "dy")?, e.num(env, "ds")?),
            r: nalgebra::Matrix3::identity(),
        }),
        Kind::Rotate => out.push(Step::Patch {
            t: Vector3::zeros(),
            r: rot_from_angles(e.num(env, "theta")?, e.num(env, "phi")?, e.num(env, "psi")?),
        }),
        Kind::Multipole | Kind::HKicker | Kind::VKicker | Kind::Kicker => {
            let (knl, ksl) = strengths(e, env, l)?;
            out.push(Step::Drift { l: 0.5 * l });
            if !(is_zero(&knl) && is_zero(&ksl)) {
                out.push(Step::Kick { knl, ksl, h: 0.0 });
            }
            out.push(Step::Drift { l: 0.5 * l });
            out.retain(|s| !matches!(s, Step::Drift { l } if *l == 0.0));
        }
        Kind::RfCavity => {
            let volt = e.value(env, "volt")?;
            let mut freq = e.num(env, "freq")? * 1e6;
            let harmon = e.num(env, "harmon")?;
            if freq == 0.0 && harmon != 0.0 {
                if !(ctx.seq_len > 0.0) {
                    return Err(Error::Lattice(format!("{}: harmon needs a sequence length", e.name)));
                }
                freq = harmon * ctx.beam.beta0 * CLIGHT / ctx.seq_len;
            }
            let amp = volt.mul(Value::Num(ctx.beam.charge * 1e-3 / ctx.beam.pc))?;
            if l > 0.0 {
                out.push(Step::Drift { l: 0.5 * l });
            }
            out.push(Step::Cavity { amp, freq, lag: e.num(env, "lag")? });
            if l > 0.0 {
                out.push(Step::Drift { l: 0.5 * l });
            }
        }
        Kind::Quadrupole | Kind::Sextupole | Kind::Octupole => {
            let (knl, ksl) = strengths(e, env, l)?;
            if l == 0.0 {
                out.push(Step::Kick { knl, ksl, h: 0.0 });
                return Ok(out);
            }
            let (nst, o4) = slicing(e, env)?;
            let kick = |f: f64| -> Result<Step> {
                Ok(Step::Kick { knl: scaled(&knl, f)?, ksl: scaled(&ksl, f)?, h: 0.0 })
            };
            let has_kick = !(is_zero(&knl) && is_zero(&ksl));
            integrate(
                &mut out,
                nst,
                o4,
                |f| Step::Drift { l: l * f },
                has_kick.then_some(&kick as &dyn Fn(f64) -> Result<Step>),
            )?;
        }
        Kind::Sbend | Kind::Rbend => {
            let angle = e.num(env, "angle")?;
            if l == 0.0 {
                return Err(Error::Lattice(format!("{}: zero-length bends are not supported", e.name)));
            }
            let tap = 1.0 + e.num(env, "ktap")?;
            let (knl, ksl) = strengths(e, env, l)?;
            let (nst, o4) = slicing(e, env)?;
            let has_kick = !(is_zero(&knl) && is_zero(&ksl));
            if e.kind == Kind::Sbend {
                let h = angle / l;
                let k0 = e.num_or(env, "k0", h)? * tap;
                let kick = |f: f64| -> Result<Step> {
                    Ok(Step::Kick { knl: scaled(&knl, f)?, ksl: scaled(&ksl, f)?, h })
                };
                integrate(
                    &mut out,
                    nst,
                    o4,
                    |f| Step::Body { l: l * f, h, k0, lref: l * f },
                    has_kick.then_some(&kick as &dyn Fn(f64) -> Result<Step>),
                )?;
            } else {
                // straight reference along the chord, entered and left
                // through yaw patches of half the angle
                let chord = e.num(env, "l")?;
                let half = 0.5 * angle;
                let k0 = e.num_or(env, "k0", 2.0 * half.sin() / chord)? * tap;
                let yaw = Step::Patch { t: Vector3::zeros(), r: rot_y(-half) };
                let kick = |f: f64| -> Result<Step> {
                    Ok(Step::Kick { knl: scaled(&knl, f)?, ksl: scaled(&ksl, f)?, h: 0.0 })
                };
                if half != 0.0 {
                    out.push(yaw.clone());
                }
                integrate(
                    &mut out,
                    nst,
                    o4,
                    |f| Step::Body { l: chord * f, h: 0.0, k0, lref: l * f },
                    has_kick.then_some(&kick as &dyn Fn(f64) -> Result<Step>),
                )?;
                if half != 0.0 {
                    out.push(yaw);
                }
            }
        }
    }
    Ok(out)
}

/// Full forward step list of one element.
pub fn element_steps(e: &Element, ctx: &Ctx) -> Result<Vec<Step>> {
    let env = ctx.env;
    let body = body_steps(e, ctx)?;
    let tilt = if e.kind.is_thin_only() && e.kind != Kind::Multipole {
        0.0
    } else {
        e.num(env, "tilt")?
    };
    let mis = e.misalignment(env)?;
    let mut out = Vec::with_capacity(body.len() + 4);
    let restore = if mis.is_zero() {
        None
    } else {
        let (t, r) = (mis.translation(), mis.rotation());
        let (v, w) = body_displacement(e.length(env)?, e.angle(env)?, tilt);
        let (tb, rb) = patch_restore(&w, &r, &v, &t)?;
        out.push(Step::Patch { t, r });
        let (ti, ri) = invert_patch(&tb, &rb);
        Some(Step::Patch { t: ti, r: ri })
    };
    if tilt != 0.0 {
        out.push(Step::Tilt { angle: tilt });
    }
    // fringe fields would enter here and after the body
    out.extend(body);
    if tilt != 0.0 {
        out.push(Step::Tilt { angle: -tilt });
    }
    out.extend(restore);
    Ok(out)
}

/// Compiles every element of a sequence in forward order.
pub fn compile_sequence(seq: &Sequence, env: &Env, beam: &Beam) -> Result<Vec<Compiled>> {
    let ctx = Ctx { env, beam, seq_len: seq.length };
    seq.items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            Ok(Compiled {
                index: i,
                name: it.elem.name.clone(),
                kind: it.elem.kind,
                s: it.s,
                l: it.l,
                steps: element_steps(&it.elem, &ctx)
                    .map_err(|e| Error::Track(format!("{}: {e}", it.elem.name)))?,
            })
        })
        .collect()
}
