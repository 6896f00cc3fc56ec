//! Twiss tables: linear optics along the lattice, tunes and chromaticity
//! from the normal form, and resonance driving terms.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;

use crate::damap::DaMap;
use crate::engine::{beam_for, plan, range_indices, track_element, Compiled, State};
use crate::error::{Error, Result};
use crate::lattice::{Env, Sequence};
use crate::mtable::{Column, HeaderVal, MTable};
use crate::tpsa::{Descriptor, Tpsa};

use super::cofind::{cofind, one_turn, CoOpts};
use super::linear::from_twiss;
use super::normal::{beta_alpha, normal, parse_label, NfOpts, NormalForm};

/// Initial conditions of an open line.
#[derive(Clone, Debug)]
pub struct TwissInit {
    pub beta: [f64; 2],
    pub alpha: [f64; 2],
    /// `(dx, dpx, dy, dpy)` with respect to `pt`.
    pub disp: [f64; 4],
    pub orbit: [f64; 6],
}

impl Default for TwissInit {
    fn default() -> Self {
        TwissInit {
            beta: [1.0; 2],
            alpha: [0.0; 2],
            disp: [0.0; 4],
            orbit: [0.0; 6],
        }
    }
}

#[derive(Clone, Debug)]
pub struct TwissOpts {
    /// Order of the one-turn map; 2 or more adds chromaticities.
    pub order: u8,
    /// Environment variables promoted to map parameters.
    pub knobs: Vec<String>,
    /// Parameter order of the knobs.
    pub po: u8,
    /// Generating-function labels tracked along the lattice.
    pub trkrdt: Vec<String>,
    /// Open-line mode when set; ring mode otherwise.
    pub init: Option<TwissInit>,
    pub co: CoOpts,
    /// Rows reported (`"A/B"`); the optics always start at the sequence start.
    pub range: Option<String>,
    pub preserve: bool,
}

impl Default for TwissOpts {
    fn default() -> Self {
        TwissOpts {
            order: 1,
            knobs: Vec::new(),
            po: 1,
            trkrdt: Vec::new(),
            init: None,
            co: CoOpts::default(),
            range: None,
            preserve: false,
        }
    }
}

/// 6D map descriptor of a run with knobs.
fn map_desc(order: u8, knobs: &[String], po: u8) -> Result<Arc<Descriptor>> {
    if knobs.is_empty() {
        return Descriptor::new(6, order, 0, 0, &[]);
    }
    let names: Vec<&str> = knobs.iter().map(String::as_str).collect();
    Descriptor::new(6, order, knobs.len(), po.clamp(1, order), &names)
}

/// Runs `f` with the knobs bound to the parameters of `desc`, restoring
/// them afterwards whatever the outcome.
pub fn with_knobs<R>(
    env: &Env,
    knobs: &[String],
    desc: &Arc<Descriptor>,
    f: impl FnOnce() -> Result<R>,
) -> Result<R> {
    let names: Vec<&str> = knobs.iter().map(String::as_str).collect();
    let x0 = DaMap::identity_on(desc);
    env.bind_knobs(&names, &x0)?;
    let out = f();
    env.restore_knobs(&names)?;
    out
}

/// Closed orbit and normal form of the one-turn map at the sequence start.
pub fn ring_normal(seq: &Sequence, env: &Env, opts: &TwissOpts) -> Result<NormalForm> {
    let co = cofind(seq, env, &CoOpts { order: 1, ..opts.co.clone() })?;
    let d6 = map_desc(opts.order, &opts.knobs, opts.po)?;
    let m6 = with_knobs(env, &opts.knobs, &d6, || one_turn(seq, env, &d6, &co.orbit))?;
    normal(&m6, &NfOpts { preserve: opts.preserve })
}

struct Cols {
    name: Vec<String>,
    kind: Vec<String>,
    real: Vec<Vec<f64>>,
}

const REAL_COLS: [&str; 20] = [
    "s", "l", "beta11", "beta22", "alfa11", "alfa22", "mu1", "mu2", "dx", "dpx", "dy", "dpy", "x", "px",
    "y", "py", "t", "pt", "gama11", "gama22",
];

/// Twiss table; see [`twiss_nf`] for the normal form as well.
pub fn twiss(seq: &Sequence, env: &Env, opts: &TwissOpts) -> Result<MTable> {
    Ok(twiss_nf(seq, env, opts)?.0)
}

/// Twiss table plus the normal form of the ring (none for open lines).
pub fn twiss_nf(seq: &Sequence, env: &Env, opts: &TwissOpts) -> Result<(MTable, Option<NormalForm>)> {
    let beam = beam_for(seq, env)?;
    let (z0, a0, disp, nf) = match &opts.init {
        Some(init) => (init.orbit, from_twiss(init.beta, init.alpha)?, init.disp, None),
        None => {
            let nf = ring_normal(seq, env, opts)?;
            let (_, _, disp) = nf.linear_optics();
            (nf.orbit, nf.a0, disp, Some(nf))
        }
    };

    // linear propagation of the normalizing matrix with dispersion
    let mut b = DMatrix::<f64>::identity(6, 6);
    for i in 0..4 {
        for j in 0..4 {
            b[(i, j)] = a0[(i, j)];
        }
        b[(i, 5)] = disp[i];
    }
    let d1 = Descriptor::new(6, 1, 0, 0, &[])?;
    let x0 = DaMap::from_linear(&d1, &z0, &b)?;
    let mut z: State<Tpsa> = x0.into_rows().try_into().expect("six rows");
    let steps = plan(seq, env, &beam, None, 1)?;
    let mut cols = Cols {
        name: Vec::new(),
        kind: Vec::new(),
        real: vec![Vec::new(); REAL_COLS.len()],
    };
    let mut last = [0.0; 2];
    let mut mu = [0.0; 2];
    for c in &steps {
        track_element(c, &mut z, beam.beta0)
            .map_err(|e| Error::Optics(format!("twiss lost the orbit at {}: {e}", c.name)))?;
        let a = Matrix4::from_fn(|i, j| z[i].coef(j + 1));
        let (beta, alpha) = beta_alpha(&a);
        for p in 0..2 {
            let k = 2 * p;
            let ph = a[(k, k + 1)].atan2(a[(k, k)]);
            let mut d = (ph - last[p]).rem_euclid(TAU);
            if d > TAU - 1e-9 {
                d -= TAU;
            }
            mu[p] += d;
            last[p] = ph;
        }
        let vals = [
            c.s + c.l,
            c.l,
            beta[0],
            beta[1],
            alpha[0],
            alpha[1],
            mu[0] / TAU,
            mu[1] / TAU,
            z[0].coef(6),
            z[1].coef(6),
            z[2].coef(6),
            z[3].coef(6),
            z[0].get0(),
            z[1].get0(),
            z[2].get0(),
            z[3].get0(),
            z[4].get0(),
            z[5].get0(),
            (1.0 + alpha[0] * alpha[0]) / beta[0],
            (1.0 + alpha[1] * alpha[1]) / beta[1],
        ];
        cols.name.push(c.name.clone());
        cols.kind.push(c.kind.name().to_string());
        for (col, v) in cols.real.iter_mut().zip(vals) {
            col.push(v);
        }
    }

    let mut t = MTable::new("twiss");
    t.add_column("name", Column::Str(cols.name))?;
    t.add_column("kind", Column::Str(cols.kind))?;
    for (n, c) in REAL_COLS.iter().zip(cols.real) {
        t.add_column(n, Column::Real(c))?;
    }
    t.set_header("type", HeaderVal::Str("twiss".into()));
    t.set_header_num("length", seq.length);
    t.set_header_num("energy", beam.energy);
    let mut q = [mu[0] / TAU, mu[1] / TAU];
    if let Some(nf) = &nf {
        // integer part from the accumulated phase, fraction from the normal form
        for p in 0..2 {
            let frac = nf.mu[p] / TAU;
            q[p] = (q[p] - frac).round() + frac;
        }
        if opts.order >= 2 {
            t.set_header_num("dq1", nf.dq(0)?);
            t.set_header_num("dq2", nf.dq(1)?);
        }
    }
    t.set_header_num("q1", q[0]);
    t.set_header_num("q2", q[1]);

    if !opts.trkrdt.is_empty() {
        let rdt = rdt_along(seq, env, opts, &opts.trkrdt)?;
        for name in rdt.column_names().into_iter().skip(2) {
            t.add_column(&name, rdt.column(&name).expect("listed column").clone())?;
        }
    }
    if let Some(r) = &opts.range {
        let rows = if r.trim().is_empty() { Vec::new() } else { range_indices(seq, Some(r))? };
        t = t.select_rows(&rows)?;
    }
    Ok((t, nf))
}

/// A label with an optional knob suffix: `f2002`, `2002`, `f2002.k3`.
fn parse_rdt(label: &str) -> Result<(String, Option<usize>)> {
    let (base, k) = match label.split_once(".k") {
        Some((b, k)) => {
            let k: usize = k
                .parse()
                .map_err(|_| Error::Optics(format!("malformed knob suffix in '{label}'")))?;
            (b, Some(k))
        }
        None => (label, None),
    };
    parse_label(base)?;
    Ok((base.trim_start_matches('f').to_string(), k))
}

/// Rows minus constants: absolute coordinates to deviations.
fn deviations(m: &DaMap, c: &[f64; 6]) -> Result<DaMap> {
    let rows: Vec<Tpsa> = m.rows().iter().zip(c).map(|(r, &v)| r - v).collect();
    DaMap::from_rows(rows)
}

fn element_map(c: &Compiled, d: &Arc<Descriptor>, z0: &[f64; 6], beta0: f64) -> Result<DaMap> {
    let mut z: State<Tpsa> = DaMap::around(d, z0)?.into_rows().try_into().expect("six rows");
    track_element(c, &mut z, beta0)
        .map_err(|e| Error::Optics(format!("map lost at {}: {e}", c.name)))?;
    DaMap::from_rows(z.to_vec())
}

/// Generating-function coefficients at every element exit of a ring.
///
/// The one-turn map is carried from element to element by conjugation
/// with the element map, `m' = M ∘ m ∘ M⁻¹`, and normalized at each
/// position. Columns `<label>_re` and `<label>_im` follow `name` and `s`.
pub fn rdt_along(seq: &Sequence, env: &Env, opts: &TwissOpts, labels: &[String]) -> Result<MTable> {
    if opts.init.is_some() {
        return Err(Error::Optics("RDTs along the lattice need a closed ring".into()));
    }
    let parsed: Vec<(String, Option<usize>)> = labels.iter().map(|l| parse_rdt(l)).collect::<Result<_>>()?;
    let beam = beam_for(seq, env)?;
    let co = cofind(seq, env, &CoOpts { order: 1, ..opts.co.clone() })?;
    let d6 = map_desc(opts.order, &opts.knobs, opts.po)?;
    let nfo = NfOpts { preserve: opts.preserve };
    let steps = plan(seq, env, &beam, None, 1)?;
    let values = with_knobs(env, &opts.knobs, &d6, || {
        let mut m = one_turn(seq, env, &d6, &co.orbit)?;
        let mut zc = co.orbit;
        let mut out: Vec<Vec<Complex64>> = vec![Vec::new(); parsed.len()];
        for c in &steps {
            if !c.steps.is_empty() {
                let me = element_map(c, &d6, &zc, beam.beta0)?;
                let zn: [f64; 6] = std::array::from_fn(|i| me.rows()[i].get0());
                let mi = element_map(&c.reversed(), &d6, &zn, beam.beta0)?;
                m = me.compose(&deviations(&m, &zc)?.compose(&deviations(&mi, &zc)?)?)?;
                zc = zn;
            }
            let nf = normal(&m, &nfo)?;
            for (col, (lab, k)) in out.iter_mut().zip(&parsed) {
                col.push(nf.gnfu(lab, *k)?);
            }
        }
        Ok(out)
    })?;
    let mut t = MTable::new("rdt");
    t.add_column("name", Column::Str(steps.iter().map(|c| c.name.clone()).collect()))?;
    t.add_column("s", Column::Real(steps.iter().map(|c| c.s + c.l).collect()))?;
    for (label, v) in labels.iter().zip(values) {
        t.add_column(&format!("{label}_re"), Column::Real(v.iter().map(|c| c.re).collect()))?;
        t.add_column(&format!("{label}_im"), Column::Real(v.iter().map(|c| c.im).collect()))?;
    }
    Ok(t)
}
