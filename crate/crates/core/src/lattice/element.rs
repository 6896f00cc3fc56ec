//! Element definitions and their (possibly lazy) attributes.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::geom::Misalignment;

use super::env::Env;
use super::value::{Expr, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Marker,
    Drift,
    Sbend,
    Rbend,
    Quadrupole,
    Sextupole,
    Octupole,
    Multipole,
    HKicker,
    VKicker,
    Kicker,
    Monitor,
    RfCavity,
    Translate,
    Rotate,
}

impl Kind {
    pub const ALL: [Kind; 15] = [
        Kind::Marker,
        Kind::Drift,
        Kind::Sbend,
        Kind::Rbend,
        Kind::Quadrupole,
        Kind::Sextupole,
        Kind::Octupole,
        Kind::Multipole,
        Kind::HKicker,
        Kind::VKicker,
        Kind::Kicker,
        Kind::Monitor,
        Kind::RfCavity,
        Kind::Translate,
        Kind::Rotate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Marker => "marker",
            Kind::Drift => "drift",
            Kind::Sbend => "sbend",
            Kind::Rbend => "rbend",
            Kind::Quadrupole => "quadrupole",
            Kind::Sextupole => "sextupole",
            Kind::Octupole => "octupole",
            Kind::Multipole => "multipole",
            Kind::HKicker => "hkicker",
            Kind::VKicker => "vkicker",
            Kind::Kicker => "kicker",
            Kind::Monitor => "monitor",
            Kind::RfCavity => "rfcavity",
            Kind::Translate => "translate",
            Kind::Rotate => "rotate",
        }
    }

    pub fn from_name(s: &str) -> Option<Kind> {
        Kind::ALL.iter().copied().find(|k| k.name() == s)
    }

    /// Kinds that are always zero-length.
    pub fn is_thin_only(self) -> bool {
        matches!(
            self,
            Kind::Marker | Kind::Multipole | Kind::Translate | Kind::Rotate
        )
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Attribute value as written in the definition.
#[derive(Clone, Debug)]
pub enum Attr {
    Value(Value),
    Lazy(Expr),
    List(Vec<Attr>),
    Str(String),
}

impl Attr {
    pub fn eval(&self, env: &Env) -> Result<Value> {
        match self {
            Attr::Value(v) => Ok(v.clone()),
            Attr::Lazy(e) => e.eval(env),
            Attr::List(_) | Attr::Str(_) => {
                Err(Error::Eval("expected a number, found a list or string".into()))
            }
        }
    }
}

/// Attributes that hold lists of integrated multipole strengths.
pub const LIST_ATTRS: &[&str] = &["knl", "ksl"];
/// Attributes that hold text.
pub const STR_ATTRS: &[&str] = &["name", "kind", "particle", "file", "table", "from"];

#[derive(Clone, Debug)]
pub struct Element {
    pub name: String,
    pub kind: Kind,
    pub attrs: BTreeMap<String, Attr>,
}

impl Element {
    pub fn new(name: &str, kind: Kind) -> Self {
        Element {
            name: name.to_string(),
            kind,
            attrs: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.attrs.insert(key.to_string(), Attr::Value(Value::Num(v)));
        self
    }

    pub fn with_lazy(mut self, key: &str, e: Expr) -> Self {
        self.attrs.insert(key.to_string(), Attr::Lazy(e));
        self
    }

    pub fn with_list(mut self, key: &str, v: &[f64]) -> Self {
        let items = v.iter().map(|&x| Attr::Value(Value::Num(x))).collect();
        self.attrs.insert(key.to_string(), Attr::List(items));
        self
    }

    /// Copy under a new name, as done by `name: parent, ...;`.
    pub fn derive(&self, name: &str) -> Element {
        Element {
            name: name.to_string(),
            kind: self.kind,
            attrs: self.attrs.clone(),
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.attrs.contains_key(key)
    }

    /// Current value of a numeric attribute, zero when absent.
    pub fn value(&self, env: &Env, key: &str) -> Result<Value> {
        match self.attrs.get(key) {
            None => Ok(Value::Num(0.0)),
            Some(a) => a.eval(env).map_err(|e| {
                Error::Eval(format!("{}: attribute '{key}': {e}", self.name))
            }),
        }
    }

    /// Scalar part of a numeric attribute.
    pub fn num(&self, env: &Env, key: &str) -> Result<f64> {
        Ok(self.value(env, key)?.get0())
    }

    pub fn num_or(&self, env: &Env, key: &str, default: f64) -> Result<f64> {
        if self.has(key) {
            self.num(env, key)
        } else {
            Ok(default)
        }
    }

    pub fn list(&self, env: &Env, key: &str) -> Result<Vec<Value>> {
        match self.attrs.get(key) {
            None => Ok(Vec::new()),
            Some(Attr::List(items)) => items.iter().map(|a| a.eval(env)).collect(),
            Some(a) => Ok(vec![a.eval(env)?]),
        }
    }

    pub fn string(&self, key: &str) -> Option<&str> {
        match self.attrs.get(key) {
            Some(Attr::Str(s)) => Some(s),
            _ => None,
        }
    }

    /// Length along the reference path; always a plain number.
    ///
    /// For an rbend `l` is the chord and the path is the arc above it.
    pub fn length(&self, env: &Env) -> Result<f64> {
        if self.kind.is_thin_only() {
            return Ok(0.0);
        }
        let l = self.num(env, "l")?;
        if l < 0.0 {
            return Err(Error::Lattice(format!(
                "element '{}' has negative length {l}",
                self.name
            )));
        }
        if self.kind == Kind::Rbend {
            let half = 0.5 * self.num(env, "angle")?;
            if half != 0.0 {
                return Ok(l * half / half.sin());
            }
        }
        Ok(l)
    }

    /// Bending angle for bends, zero otherwise.
    pub fn angle(&self, env: &Env) -> Result<f64> {
        match self.kind {
            Kind::Sbend | Kind::Rbend => self.num(env, "angle"),
            _ => Ok(0.0),
        }
    }

    pub fn misalignment(&self, env: &Env) -> Result<Misalignment> {
        Ok(Misalignment {
            dx: self.num(env, "dx")?,
            dy: self.num(env, "dy")?,
            ds: self.num(env, "ds")?,
            dtheta: self.num(env, "dtheta")?,
            dphi: self.num(env, "dphi")?,
            dpsi: self.num(env, "dpsi")?,
        })
    }
}
