//! The variable environment: immediate and deferred bindings, element,
//! line and sequence definitions, with parent inheritance.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use crate::damap::DaMap;
use crate::error::{Error, Result};

use super::beam::Beam;
use super::element::Element;
use super::line::BLine;
use super::sequence::Sequence;
use super::value::{Expr, Value};

#[derive(Clone, Debug)]
pub enum Binding {
    Value(Value),
    Deferred(Expr),
}

#[derive(Default)]
struct Inner {
    vars: RefCell<HashMap<String, Binding>>,
    elements: RefCell<HashMap<String, Arc<Element>>>,
    lines: RefCell<HashMap<String, Arc<BLine>>>,
    sequences: RefCell<HashMap<String, Arc<Sequence>>>,
    beam: RefCell<Option<Beam>>,
    parent: Option<Env>,
    // names whose deferred expressions are being evaluated
    active: RefCell<Vec<String>>,
}

/// Handle to an environment; clones share the same state.
#[derive(Clone)]
pub struct Env(Rc<Inner>);

impl Default for Env {
    fn default() -> Self {
        Self::new()
    }
}

impl Env {
    /// Root environment with the usual constants predefined.
    pub fn new() -> Self {
        let env = Env(Rc::new(Inner::default()));
        let pi = std::f64::consts::PI;
        for (k, v) in [
            ("pi", pi),
            ("twopi", 2.0 * pi),
            ("degrad", 180.0 / pi),
            ("raddeg", pi / 180.0),
            ("clight", crate::lattice::CLIGHT),
        ] {
            env.set(k, Value::Num(v));
        }
        env
    }

    /// Child environment resolving missing names through `self`.
    pub fn child(&self) -> Env {
        Env(Rc::new(Inner {
            parent: Some(self.clone()),
            ..Inner::default()
        }))
    }

    pub fn parent(&self) -> Option<&Env> {
        self.0.parent.as_ref()
    }

    fn find_binding(&self, name: &str) -> Option<Binding> {
        if let Some(b) = self.0.vars.borrow().get(name) {
            return Some(b.clone());
        }
        self.0.parent.as_ref().and_then(|p| p.find_binding(name))
    }

    /// Reads a variable, re-evaluating deferred expressions, and creates it
    /// as zero when nobody defines it.
    pub fn get(&self, name: &str) -> Result<Value> {
        match self.find_binding(name) {
            Some(Binding::Value(v)) => Ok(v),
            Some(Binding::Deferred(e)) => {
                if self.0.active.borrow().iter().any(|n| n == name) {
                    return Err(Error::Eval(format!(
                        "deferred expression for '{name}' refers to itself"
                    )));
                }
                self.0.active.borrow_mut().push(name.to_string());
                let r = e.eval(self);
                self.0.active.borrow_mut().pop();
                r
            }
            None => {
                self.set(name, Value::Num(0.0));
                Ok(Value::Num(0.0))
            }
        }
    }

    pub fn get_num(&self, name: &str) -> Result<f64> {
        Ok(self.get(name)?.get0())
    }

    /// True when the name is bound here or in a parent.
    pub fn is_defined(&self, name: &str) -> bool {
        self.find_binding(name).is_some()
    }

    pub fn binding(&self, name: &str) -> Option<Binding> {
        self.find_binding(name)
    }

    pub fn set(&self, name: &str, v: Value) {
        self.0
            .vars
            .borrow_mut()
            .insert(name.to_string(), Binding::Value(v));
    }

    pub fn set_deferred(&self, name: &str, e: Expr) {
        self.0
            .vars
            .borrow_mut()
            .insert(name.to_string(), Binding::Deferred(e));
    }

    /// Replaces each knob by the sum of its current value and the map
    /// parameter of the same name.
    pub fn bind_knobs(&self, names: &[&str], x0: &DaMap) -> Result<()> {
        for &name in names {
            let p = x0.param(name).map_err(|_| {
                Error::Lookup(format!("'{name}' is not a parameter of the map"))
            })?;
            let cur = self.get(name)?;
            self.set(name, cur.add(Value::Series(p))?);
        }
        Ok(())
    }

    /// Turns knobs back into plain numbers (their constant part).
    pub fn restore_knobs(&self, names: &[&str]) -> Result<()> {
        for &name in names {
            let v = self.get(name)?.get0();
            self.set(name, Value::Num(v));
        }
        Ok(())
    }

    pub fn define_element(&self, e: Element) -> Arc<Element> {
        let e = Arc::new(e);
        self.0
            .elements
            .borrow_mut()
            .insert(e.name.clone(), Arc::clone(&e));
        e
    }

    pub fn element(&self, name: &str) -> Option<Arc<Element>> {
        if let Some(e) = self.0.elements.borrow().get(name) {
            return Some(Arc::clone(e));
        }
        self.0.parent.as_ref().and_then(|p| p.element(name))
    }

    pub fn define_line(&self, l: BLine) {
        self.0
            .lines
            .borrow_mut()
            .insert(l.name.clone(), Arc::new(l));
    }

    pub fn line(&self, name: &str) -> Option<Arc<BLine>> {
        if let Some(l) = self.0.lines.borrow().get(name) {
            return Some(Arc::clone(l));
        }
        self.0.parent.as_ref().and_then(|p| p.line(name))
    }

    pub fn define_sequence(&self, s: Sequence) -> Arc<Sequence> {
        let s = Arc::new(s);
        self.0
            .sequences
            .borrow_mut()
            .insert(s.name.clone(), Arc::clone(&s));
        s
    }

    pub fn sequence(&self, name: &str) -> Option<Arc<Sequence>> {
        if let Some(s) = self.0.sequences.borrow().get(name) {
            return Some(Arc::clone(s));
        }
        self.0.parent.as_ref().and_then(|p| p.sequence(name))
    }

    pub fn sequence_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.0.sequences.borrow().keys().cloned().collect();
        v.sort();
        v
    }

    pub fn set_beam(&self, b: Beam) {
        *self.0.beam.borrow_mut() = Some(b);
    }

    /// Default beam for sequences built without one.
    pub fn beam(&self) -> Option<Beam> {
        if let Some(b) = self.0.beam.borrow().as_ref() {
            return Some(b.clone());
        }
        self.0.parent.as_ref().and_then(|p| p.beam())
    }
}
