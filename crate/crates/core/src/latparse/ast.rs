//! Statements of the lattice language and their canonical text form.

use std::fmt;

use crate::lattice::Expr;

/// Right-hand side of an attribute.
#[derive(Clone, Debug, PartialEq)]
pub enum Val {
    Expr(Expr),
    Str(String),
    List(Vec<Val>),
}

/// Member of a line: `[times*]target[@at]`, where `times` is a product
/// of numbers and names evaluated when the line is defined.
#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub target: ItemTarget,
    pub times: Expr,
    pub at: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ItemTarget {
    Name(String),
    Group(Vec<Item>),
}

/// `name=val`, `name:=val`, or a positional `val`.
#[derive(Clone, Debug, PartialEq)]
pub struct Arg {
    pub name: Option<String>,
    pub deferred: bool,
    pub val: Val,
}

impl Arg {
    pub fn named(name: &str, val: Val) -> Arg {
        Arg {
            name: Some(name.to_string()),
            deferred: false,
            val,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    /// `name = expr;` or `name := expr;`
    Assign {
        name: String,
        deferred: bool,
        expr: Expr,
    },
    /// `name: class, args;` where the class is an element kind or an
    /// existing element to clone.
    Define {
        name: String,
        class: String,
        args: Vec<Arg>,
    },
    /// `name: line=(items);`
    Line { name: String, items: Vec<Item> },
    /// `name: sequence, args; body endsequence;`, or without a body
    /// when built from `line=`.
    Sequence {
        name: String,
        args: Vec<Arg>,
        body: Vec<Stmt>,
    },
    /// `command, args;`; inside a sequence body, a placement.
    Command { name: String, args: Vec<Arg> },
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Expr(e) => write!(f, "{e}"),
            Val::Str(s) => {
                if s.contains('"') {
                    write!(f, "'{s}'")
                } else {
                    write!(f, "\"{s}\"")
                }
            }
            Val::List(items) => {
                f.write_str("{")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(n) = &self.name {
            write!(f, "{n}{}", if self.deferred { ":=" } else { "=" })?;
        }
        write!(f, "{}", self.val)
    }
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Arg]) -> fmt::Result {
    for a in args {
        write!(f, ", {a}")?;
    }
    Ok(())
}

fn write_items(f: &mut fmt::Formatter<'_>, items: &[Item]) -> fmt::Result {
    f.write_str("(")?;
    for (i, it) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        if it.times != Expr::Num(1.0) {
            write!(f, "{}*", it.times)?;
        }
        match &it.target {
            ItemTarget::Name(n) => f.write_str(n)?,
            ItemTarget::Group(g) => write_items(f, g)?,
        }
        if let Some(at) = &it.at {
            write!(f, "@{at}")?;
        }
    }
    f.write_str(")")
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Assign { name, deferred, expr } => {
                write!(f, "{name} {} {expr};", if *deferred { ":=" } else { "=" })
            }
            Stmt::Define { name, class, args } => {
                write!(f, "{name}: {class}")?;
                write_args(f, args)?;
                f.write_str(";")
            }
            Stmt::Line { name, items } => {
                write!(f, "{name}: line=")?;
                write_items(f, items)?;
                f.write_str(";")
            }
            Stmt::Sequence { name, args, body } => {
                write!(f, "{name}: sequence")?;
                write_args(f, args)?;
                if args.iter().any(|a| a.name.as_deref() == Some("line")) {
                    return f.write_str(";");
                }
                f.write_str(";\n")?;
                for s in body {
                    writeln!(f, "  {s}")?;
                }
                f.write_str("endsequence;")
            }
            Stmt::Command { name, args } => {
                f.write_str(name)?;
                write_args(f, args)?;
                f.write_str(";")
            }
        }
    }
}

/// Canonical text of a statement list, one statement per line.
pub fn unparse(stmts: &[Stmt]) -> String {
    let mut s = String::new();
    for st in stmts {
        s.push_str(&st.to_string());
        s.push('\n');
    }
    s
}
