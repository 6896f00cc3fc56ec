//! Positioned element lists.

use std::sync::Arc;

use crate::error::{Error, Result};

use super::beam::Beam;
use super::element::{Element, Kind};
use super::env::Env;

/// Which point of an element its `at` position designates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Refer {
    Entry,
    #[default]
    Centre,
    Exit,
}

impl Refer {
    pub fn from_name(s: &str) -> Option<Refer> {
        match s {
            "entry" => Some(Refer::Entry),
            "centre" | "center" => Some(Refer::Centre),
            "exit" => Some(Refer::Exit),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Refer::Entry => "entry",
            Refer::Centre => "centre",
            Refer::Exit => "exit",
        }
    }

    /// Entry position of an element of length `l` placed at `at`.
    pub fn entry(self, at: f64, l: f64) -> f64 {
        match self {
            Refer::Entry => at,
            Refer::Centre => at - 0.5 * l,
            Refer::Exit => at - l,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeqItem {
    pub elem: Arc<Element>,
    /// Entry position.
    pub s: f64,
    pub l: f64,
    pub implicit: bool,
}

#[derive(Clone, Debug)]
pub struct Sequence {
    pub name: String,
    pub refer: Refer,
    /// Elements in order, framed by the `$start` and `$end` markers.
    pub items: Vec<SeqItem>,
    pub length: f64,
    pub beam: Option<Beam>,
    pub dir: i32,
}

const GAP_TOL: f64 = 1e-12;

impl Sequence {
    /// Builds a sequence from elements with optional entry positions;
    /// unpositioned elements follow the previous one. Gaps become implicit
    /// drifts, overlaps are errors.
    pub fn build(
        name: &str,
        entries: Vec<(Arc<Element>, Option<f64>)>,
        refer: Refer,
        total_l: Option<f64>,
        env: &Env,
    ) -> Result<Sequence> {
        let mut items = vec![SeqItem {
            elem: Arc::new(Element::new("$start", Kind::Marker)),
            s: 0.0,
            l: 0.0,
            implicit: false,
        }];
        let mut end = 0.0;
        let mut prev_name = "$start".to_string();
        let mut ndrift = 0usize;
        let mut push_drift = |items: &mut Vec<SeqItem>, from: f64, to: f64| {
            ndrift += 1;
            let d = Element::new(&format!("drift_{ndrift}"), Kind::Drift).with("l", to - from);
            items.push(SeqItem {
                elem: Arc::new(d),
                s: from,
                l: to - from,
                implicit: true,
            });
        };
        for (elem, start) in entries {
            let l = elem.length(env)?;
            let s = start.unwrap_or(end);
            let gap = s - end;
            if gap < -GAP_TOL {
                return Err(Error::Lattice(format!(
                    "'{}' at s={s} overlaps '{prev_name}' ending at s={end} in sequence '{name}'",
                    elem.name
                )));
            }
            if gap > GAP_TOL {
                push_drift(&mut items, end, s);
            }
            let s = if gap.abs() <= GAP_TOL { end } else { s };
            prev_name = elem.name.clone();
            items.push(SeqItem {
                elem,
                s,
                l,
                implicit: false,
            });
            end = s + l;
        }
        let length = match total_l {
            Some(tl) => {
                if tl < end - GAP_TOL {
                    return Err(Error::Lattice(format!(
                        "sequence '{name}' has l={tl} but its elements end at s={end}"
                    )));
                }
                if tl - end > GAP_TOL {
                    push_drift(&mut items, end, tl);
                }
                tl
            }
            None => end,
        };
        items.push(SeqItem {
            elem: Arc::new(Element::new("$end", Kind::Marker)),
            s: length,
            l: 0.0,
            implicit: false,
        });
        Ok(Sequence {
            name: name.to_string(),
            refer,
            items,
            length,
            beam: env.beam(),
            dir: 1,
        })
    }

    /// Number of elements, markers `$start`/`$end` included.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Elements other than the frame markers and implicit drifts.
    pub fn explicit_count(&self) -> usize {
        self.items.iter().filter(|i| !i.implicit).count() - 2
    }

    /// Index of the `occurrence`-th (1-based) element with this name.
    pub fn index_of(&self, name: &str, occurrence: usize) -> Option<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.elem.name == name)
            .nth(occurrence.saturating_sub(1))
            .map(|(i, _)| i)
    }

    /// Resolves `name` or `name[n]`, plus the markers `#s` and `#e`.
    pub fn resolve(&self, spec: &str) -> Result<usize> {
        match spec {
            "#s" | "$start" => return Ok(0),
            "#e" | "$end" => return Ok(self.items.len() - 1),
            _ => {}
        }
        let (name, occ) = match spec.find('[') {
            Some(p) if spec.ends_with(']') => {
                let n: usize = spec[p + 1..spec.len() - 1].trim().parse().map_err(|_| {
                    Error::Lookup(format!("bad occurrence in '{spec}'"))
                })?;
                (&spec[..p], n)
            }
            _ => (spec, 1),
        };
        self.index_of(name, occ).ok_or_else(|| {
            Error::Lookup(format!("no element '{spec}' in sequence '{}'", self.name))
        })
    }

    /// Same ring starting at the named element; positions re-based to 0.
    pub fn cycle(&self, name: &str) -> Result<Sequence> {
        let k = self.resolve(name)?;
        let n = self.items.len();
        if k == 0 || k == n - 1 {
            return Ok(self.clone());
        }
        let body = &self.items[1..n - 1];
        let k = k - 1;
        let mut items = vec![self.items[0].clone()];
        let mut s = 0.0;
        for it in body[k..].iter().chain(&body[..k]) {
            let mut it = it.clone();
            it.s = s;
            s += it.l;
            items.push(it);
        }
        let mut last = self.items[n - 1].clone();
        last.s = s;
        items.push(last);
        Ok(Sequence {
            items,
            ..self.clone()
        })
    }

    pub fn with_beam(&self, beam: Beam) -> Sequence {
        Sequence {
            beam: Some(beam),
            ..self.clone()
        }
    }

    pub fn with_dir(&self, dir: i32) -> Sequence {
        Sequence {
            dir: if dir < 0 { -1 } else { 1 },
            ..self.clone()
        }
    }

    pub fn beam_or_err(&self) -> Result<&Beam> {
        self.beam
            .as_ref()
            .ok_or_else(|| Error::Lattice(format!("sequence '{}' has no beam", self.name)))
    }

    pub fn has_kind(&self, kind: Kind) -> bool {
        self.items.iter().any(|i| i.elem.kind == kind)
    }
}
