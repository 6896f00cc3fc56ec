//! Local-frame tracking of particles or maps through a sequence.

use crate::damap::DaMap;
use crate::error::{Error, Result};
use crate::lattice::{Beam, Env, Sequence};
use crate::mtable::{Column, HeaderVal, MTable};
use crate::tpsa::Tpsa;

use super::compile::{compile_sequence, Compiled};
use super::maps::State;
use super::num::Num;

/// Where a particle was lost.
#[derive(Clone, Debug, PartialEq)]
pub struct Loss {
    pub turn: usize,
    pub s: f64,
    pub elem: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub z: [f64; 6],
    pub lost: Option<Loss>,
}

impl Particle {
    pub fn new(z: [f64; 6]) -> Self {
        Particle { z, lost: None }
    }

    pub fn is_alive(&self) -> bool {
        self.lost.is_none()
    }
}

/// Which element exits produce table rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Observe {
    #[default]
    All,
    /// Only the last element of each turn.
    TurnEnd,
    /// Elements with these names.
    Names(Vec<String>),
    None,
}

#[derive(Clone, Debug)]
pub struct TrackOpts {
    pub turns: usize,
    /// `+1` forward, `-1` backward (inverse maps, reversed order).
    pub sdir: i32,
    pub observe: Observe,
    /// `"from/to"` element range; the whole sequence when absent.
    pub range: Option<String>,
}

impl Default for TrackOpts {
    fn default() -> Self {
        TrackOpts {
            turns: 1,
            sdir: 1,
            observe: Observe::All,
            range: None,
        }
    }
}

/// Beam of the sequence, else the environment's.
pub fn beam_for(seq: &Sequence, env: &Env) -> Result<Beam> {
    seq.beam
        .clone()
        .or_else(|| env.beam())
        .ok_or_else(|| Error::Track(format!("sequence '{}' has no beam", seq.name)))
}

/// Element indices of a `"from/to"` range (wrapping past the end).
pub fn range_indices(seq: &Sequence, range: Option<&str>) -> Result<Vec<usize>> {
    let n = seq.len();
    let Some(r) = range.map(str::trim).filter(|r| !r.is_empty()) else {
        return Ok((0..n).collect());
    };
    let (a, b) = match r.split_once('/') {
        Some((a, b)) => (seq.resolve(a.trim())?, seq.resolve(b.trim())?),
        None => {
            let i = seq.resolve(r)?;
            (i, i)
        }
    };
    Ok(if a <= b {
        (a..=b).collect()
    } else {
        (a..n).chain(0..=b).collect()
    })
}

/// Compiled elements in traversal order for the effective direction.
pub fn plan(seq: &Sequence, env: &Env, beam: &Beam, range: Option<&str>, sdir: i32) -> Result<Vec<Compiled>> {
    let all = compile_sequence(seq, env, beam)?;
    let idx = range_indices(seq, range)?;
    let dir = seq.dir * if sdir < 0 { -1 } else { 1 };
    Ok(if dir < 0 {
        idx.iter().rev().map(|&i| all[i].reversed()).collect()
    } else {
        idx.iter().map(|&i| all[i].clone()).collect()
    })
}

/// Pushes one state through one compiled element.
pub fn track_element<N: Num>(c: &Compiled, z: &mut State<N>, beta0: f64) -> Result<()> {
    for st in &c.steps {
        st.apply(z, beta0)?;
    }
    if z.iter().any(|v| !v.finite()) {
        return Err(Error::Track("coordinates are no longer finite".into()));
    }
    Ok(())
}

struct Rows {
    name: Vec<String>,
    s: Vec<f64>,
    turn: Vec<f64>,
    id: Vec<f64>,
    z: [Vec<f64>; 6],
}

impl Rows {
    fn new() -> Self {
        Rows {
            name: Vec::new(),
            s: Vec::new(),
            turn: Vec::new(),
            id: Vec::new(),
            z: Default::default(),
        }
    }

    fn push(&mut self, name: &str, s: f64, turn: usize, id: usize, z: [f64; 6]) {
        self.name.push(name.to_string());
        self.s.push(s);
        self.turn.push(turn as f64);
        self.id.push(id as f64);
        for (c, v) in self.z.iter_mut().zip(z) {
            c.push(v);
        }
    }

    fn into_table(self, name: &str) -> MTable {
        let mut t = MTable::new(name);
        let [x, px, y, py, tt, pt] = self.z;
        let cols = [
            ("name", Column::Str(self.name)),
            ("s", Column::Real(self.s)),
            ("turn", Column::Real(self.turn)),
            ("id", Column::Real(self.id)),
            ("x", Column::Real(x)),
            ("px", Column::Real(px)),
            ("y", Column::Real(y)),
            ("py", Column::Real(py)),
            ("t", Column::Real(tt)),
            ("pt", Column::Real(pt)),
        ];
        for (n, c) in cols {
            t.add_column(n, c).expect("columns have equal length");
        }
        t
    }
}

fn observed(obs: &Observe, plan: &[Compiled], k: usize) -> bool {
    match obs {
        Observe::All => true,
        Observe::TurnEnd => k + 1 == plan.len(),
        Observe::Names(n) => n.iter().any(|x| *x == plan[k].name),
        Observe::None => false,
    }
}

/// Position reached after passing element `c` in the direction `dir`.
fn exit_s(c: &Compiled, dir: i32) -> f64 {
    if dir < 0 {
        c.s
    } else {
        c.s + c.l
    }
}

/// Tracks particles; lost ones freeze with their loss record.
pub fn track_particles(
    seq: &Sequence,
    env: &Env,
    x0: &[[f64; 6]],
    opts: &TrackOpts,
) -> Result<(MTable, Vec<Particle>)> {
    let beam = beam_for(seq, env)?;
    let plan = plan(seq, env, &beam, opts.range.as_deref(), opts.sdir)?;
    let dir = seq.dir * opts.sdir.signum();
    let mut parts: Vec<Particle> = x0.iter().map(|z| Particle::new(*z)).collect();
    let mut rows = Rows::new();
    let mut all_lost = false;
    'turns: for turn in 1..=opts.turns {
        for (k, c) in plan.iter().enumerate() {
            for p in parts.iter_mut().filter(|p| p.is_alive()) {
                let mut z = p.z;
                match track_element(c, &mut z, beam.beta0) {
                    Ok(()) => p.z = z,
                    Err(e) => {
                        p.lost = Some(Loss {
                            turn,
                            s: exit_s(c, dir),
                            elem: c.name.clone(),
                            reason: e.to_string(),
                        })
                    }
                }
            }
            if observed(&opts.observe, &plan, k) {
                for (id, p) in parts.iter().enumerate().filter(|(_, p)| p.is_alive()) {
                    rows.push(&c.name, exit_s(c, dir), turn, id + 1, p.z);
                }
            }
            if !parts.is_empty() && parts.iter().all(|p| !p.is_alive()) {
                all_lost = true;
                break 'turns;
            }
        }
    }
    let mut t = rows.into_table("track");
    t.set_header_num("nturn", opts.turns as f64);
    t.set_header_num("nlost", parts.iter().filter(|p| !p.is_alive()).count() as f64);
    t.set_header(
        "status",
        HeaderVal::Str(if all_lost { "all lost" } else { "ok" }.into()),
    );
    Ok((t, parts))
}

/// Tracks a map; the table records its orbit part. A loss is an error.
pub fn track_map(seq: &Sequence, env: &Env, x0: &DaMap, opts: &TrackOpts) -> Result<(MTable, DaMap)> {
    let beam = beam_for(seq, env)?;
    if x0.nv() != 6 {
        return Err(Error::Track(format!("tracked maps need 6 variables, found {}", x0.nv())));
    }
    let plan = plan(seq, env, &beam, opts.range.as_deref(), opts.sdir)?;
    let dir = seq.dir * opts.sdir.signum();
    let mut z: State<Tpsa> = x0.rows().to_vec().try_into().expect("six rows");
    let mut rows = Rows::new();
    for turn in 1..=opts.turns {
        for (k, c) in plan.iter().enumerate() {
            track_element(c, &mut z, beam.beta0).map_err(|e| {
                Error::Track(format!("map lost at {} (turn {turn}): {e}", c.name))
            })?;
            if observed(&opts.observe, &plan, k) {
                let orbit: [f64; 6] = std::array::from_fn(|i| z[i].get0());
                rows.push(&c.name, exit_s(c, dir), turn, 1, orbit);
            }
        }
    }
    let mut t = rows.into_table("track");
    t.set_header_num("nturn", opts.turns as f64);
    t.set_header_num("nlost", 0.0);
    t.set_header("status", HeaderVal::Str("ok".into()));
    Ok((t, DaMap::from_rows(z.to_vec())?))
}
