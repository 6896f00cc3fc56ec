//! Scalar-or-series values and the expression trees stored by deferred
//! assignments.

use std::fmt;

use crate::error::{Error, Result};
use crate::tpsa::Tpsa;

use super::env::Env;

/// A number, or a series once a knob has been bound to a map parameter.
#[derive(Clone, Debug)]
pub enum Value {
    Num(f64),
    Series(Tpsa),
}

impl Default for Value {
    fn default() -> Self {
        Value::Num(0.0)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<Tpsa> for Value {
    fn from(t: Tpsa) -> Self {
        Value::Series(t)
    }
}

impl Value {
    /// Scalar part (the constant coefficient of a series).
    pub fn get0(&self) -> f64 {
        match self {
            Value::Num(v) => *v,
            Value::Series(t) => t.get0(),
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Series(_) => None,
        }
    }

    pub fn is_series(&self) -> bool {
        matches!(self, Value::Series(_))
    }

    fn binary(
        self,
        rhs: Value,
        nn: impl Fn(f64, f64) -> f64,
        ss: impl Fn(&Tpsa, &Tpsa) -> Result<Tpsa>,
    ) -> Result<Value> {
        Ok(match (self, rhs) {
            (Value::Num(a), Value::Num(b)) => Value::Num(nn(a, b)),
            (Value::Series(a), Value::Series(b)) => Value::Series(ss(&a, &b)?),
            (Value::Num(a), Value::Series(b)) => {
                Value::Series(ss(&Tpsa::constant(b.desc(), a), &b)?)
            }
            (Value::Series(a), Value::Num(b)) => {
                Value::Series(ss(&a, &Tpsa::constant(a.desc(), b))?)
            }
        })
    }

    pub fn add(self, rhs: Value) -> Result<Value> {
        match (self, rhs) {
            (Value::Series(a), Value::Num(b)) | (Value::Num(b), Value::Series(a)) => {
                Ok(Value::Series(a + b))
            }
            (a, b) => a.binary(b, |x, y| x + y, |x, y| Tpsa::lincomb(&[(1.0, x), (1.0, y)])),
        }
    }

    pub fn sub(self, rhs: Value) -> Result<Value> {
        self.add(rhs.neg())
    }

    pub fn mul(self, rhs: Value) -> Result<Value> {
        match (self, rhs) {
            (Value::Series(a), Value::Num(b)) | (Value::Num(b), Value::Series(a)) => {
                Ok(Value::Series(a * b))
            }
            (a, b) => a.binary(b, |x, y| x * y, |x, y| x.try_mul(y)),
        }
    }

    pub fn div(self, rhs: Value) -> Result<Value> {
        match (self, rhs) {
            (Value::Series(a), Value::Num(b)) => Ok(Value::Series(a / b)),
            (a, Value::Series(b)) => a.mul(Value::Series(b.inv()?)),
            (Value::Num(a), Value::Num(b)) => Ok(Value::Num(a / b)),
        }
    }

    pub fn neg(self) -> Value {
        match self {
            Value::Num(v) => Value::Num(-v),
            Value::Series(t) => Value::Series(-t),
        }
    }

    pub fn pow(self, rhs: Value) -> Result<Value> {
        match (self, rhs) {
            (Value::Num(a), Value::Num(b)) => Ok(Value::Num(a.powf(b))),
            (Value::Series(a), Value::Num(b)) if b.fract() == 0.0 && b.abs() < 64.0 => {
                Ok(Value::Series(a.powi(b as i32)?))
            }
            (Value::Series(a), Value::Num(b)) => Ok(Value::Series((a.log()? * b).exp()?)),
            (a, Value::Series(b)) => {
                let la = a.apply("log")?;
                la.mul(Value::Series(b))?.apply("exp")
            }
        }
    }

    /// Applies a built-in function by name.
    pub fn apply(self, func: &str) -> Result<Value> {
        match self {
            Value::Num(v) => {
                let r = match func {
                    "sqrt" => v.sqrt(),
                    "sin" => v.sin(),
                    "cos" => v.cos(),
                    "tan" => v.tan(),
                    "exp" => v.exp(),
                    "log" => v.ln(),
                    "asin" => v.asin(),
                    "atan" => v.atan(),
                    "abs" => v.abs(),
                    _ => return Err(Error::Eval(format!("unknown function '{func}'"))),
                };
                Ok(Value::Num(r))
            }
            Value::Series(t) => {
                let r = match func {
                    "sqrt" => t.sqrt()?,
                    "sin" => t.sin()?,
                    "cos" => t.cos()?,
                    "tan" => &t.sin()? / &t.cos()?,
                    "exp" => t.exp()?,
                    "log" => t.log()?,
                    "asin" => t.asin()?,
                    "atan" => t.atan()?,
                    "abs" => {
                        if t.get0() < 0.0 {
                            -t
                        } else {
                            t
                        }
                    }
                    _ => return Err(Error::Eval(format!("unknown function '{func}'"))),
                };
                Ok(Value::Series(r))
            }
        }
    }
}

pub const FUNCTIONS: &[&str] = &[
    "sqrt", "sin", "cos", "tan", "exp", "log", "asin", "atan", "abs",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    /// Binding strength; unary minus sits at 3, between `*` and `^`.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Arithmetic expression over env names.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn eval(&self, env: &Env) -> Result<Value> {
        match self {
            Expr::Num(v) => Ok(Value::Num(*v)),
            Expr::Var(name) => env.get(name),
            Expr::Neg(e) => Ok(e.eval(env)?.neg()),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(env)?, b.eval(env)?);
                match op {
                    BinOp::Add => a.add(b),
                    BinOp::Sub => a.sub(b),
                    BinOp::Mul => a.mul(b),
                    BinOp::Div => a.div(b),
                    BinOp::Pow => a.pow(b),
                }
            }
            Expr::Call(f, args) => {
                if args.len() != 1 {
                    return Err(Error::Eval(format!(
                        "{f} takes one argument, got {}",
                        args.len()
                    )));
                }
                args[0].eval(env)?.apply(f)
            }
        }
    }

    /// Evaluates and demands a plain number.
    pub fn eval_num(&self, env: &Env) -> Result<f64> {
        Ok(self.eval(env)?.get0())
    }

    /// Names referenced by the expression.
    pub fn names(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(n) => out.push(n.clone()),
            Expr::Neg(e) => e.names(out),
            Expr::Bin(_, a, b) => {
                a.names(out);
                b.names(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.names(out)),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, outer: u8) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 {
                    write!(f, "({})", fmt_num(*v))
                } else {
                    f.write_str(&fmt_num(*v))
                }
            }
            Expr::Var(n) => f.write_str(n),
            Expr::Neg(e) => {
                let paren = outer > 3;
                if paren {
                    f.write_str("(")?;
                }
                f.write_str("-")?;
                e.fmt_prec(f, 4)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                let paren = p < outer;
                if paren {
                    f.write_str("(")?;
                }
                // ^ is right-associative, the others left-associative
                let (pl, pr) = if *op == BinOp::Pow { (p + 1, p) } else { (p, p + 1) };
                a.fmt_prec(f, pl)?;
                f.write_str(op.symbol())?;
                b.fmt_prec(f, pr)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Call(n, args) => {
                write!(f, "{n}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.fmt_prec(f, 0)?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Shortest text that parses back to the same double.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}
