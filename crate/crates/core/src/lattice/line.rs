//! Beam lines: nested, repeated groups of elements.

use std::sync::Arc;

use crate::error::{Error, Result};

use super::element::Element;
use super::env::Env;
use super::sequence::Refer;
use super::value::Expr;

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// An element or another line, resolved when expanded.
    Name(String),
    Group(Vec<LineItem>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineItem {
    pub target: Target,
    pub times: i64,
    /// Position inside the enclosing line, per the sequence's `refer`.
    pub at: Option<Expr>,
}

impl LineItem {
    pub fn name(n: &str) -> Self {
        LineItem {
            target: Target::Name(n.to_string()),
            times: 1,
            at: None,
        }
    }

    pub fn group(items: Vec<LineItem>) -> Self {
        LineItem {
            target: Target::Group(items),
            times: 1,
            at: None,
        }
    }

    pub fn times(mut self, n: i64) -> Self {
        self.times = n;
        self
    }

    pub fn at(mut self, e: Expr) -> Self {
        self.at = Some(e);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BLine {
    pub name: String,
    pub items: Vec<LineItem>,
}

/// An element with its entry position relative to the start of the
/// expansion.
#[derive(Clone, Debug)]
pub struct Placed {
    pub elem: Arc<Element>,
    pub start: f64,
}

/// Flattened line together with its length.
#[derive(Clone, Debug, Default)]
pub struct Expansion {
    pub placed: Vec<Placed>,
    pub length: f64,
}

impl Expansion {
    pub fn elements(&self) -> impl Iterator<Item = &Arc<Element>> {
        self.placed.iter().map(|p| &p.elem)
    }
}

/// Flattens a line left to right, honoring repetitions and `at` offsets.
pub fn expand_bline(line: &BLine, env: &Env, refer: Refer) -> Result<Expansion> {
    let mut stack = vec![line.name.clone()];
    expand_items(&line.items, env, refer, &mut stack)
}

fn expand_items(
    items: &[LineItem],
    env: &Env,
    refer: Refer,
    stack: &mut Vec<String>,
) -> Result<Expansion> {
    let mut out = Expansion::default();
    let mut cursor = 0.0;
    for item in items {
        if item.times < 0 {
            return Err(Error::Lattice(format!(
                "negative repetition {} in line {}",
                item.times,
                stack.last().map(String::as_str).unwrap_or("?")
            )));
        }
        let one = expand_target(&item.target, env, refer, stack)?;
        let mut start = match &item.at {
            Some(e) => refer.entry(e.eval_num(env)?, one.length),
            None => cursor,
        };
        for _ in 0..item.times {
            for p in &one.placed {
                out.placed.push(Placed {
                    elem: Arc::clone(&p.elem),
                    start: start + p.start,
                });
            }
            start += one.length;
        }
        if item.times > 0 {
            cursor = start;
        }
        out.length = out.length.max(cursor);
    }
    Ok(out)
}

fn expand_target(
    target: &Target,
    env: &Env,
    refer: Refer,
    stack: &mut Vec<String>,
) -> Result<Expansion> {
    match target {
        Target::Group(items) => expand_items(items, env, refer, stack),
        Target::Name(n) => {
            if let Some(l) = env.line(n) {
                if stack.iter().any(|s| s == n) {
                    return Err(Error::Lattice(format!(
                        "line '{n}' contains itself ({} -> {n})",
                        stack.join(" -> ")
                    )));
                }
                stack.push(n.clone());
                let r = expand_items(&l.items, env, refer, stack);
                stack.pop();
                r
            } else if let Some(e) = env.element(n) {
                let length = e.length(env)?;
                Ok(Expansion {
                    placed: vec![Placed { elem: e, start: 0.0 }],
                    length,
                })
            } else {
                Err(Error::Lookup(format!("unknown element or line '{n}'")))
            }
        }
    }
}
