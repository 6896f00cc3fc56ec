//! Least-squares matching: vary variables until equality constraints
//! evaluated on a command's result reach zero.
//!
//! The step is damped Gauss-Newton (Levenberg) with a bisection line
//! search. The Jacobian is either supplied by the caller, evaluated on
//! the result of the single command call of the iteration, or built by
//! finite differences at the cost of one extra call per variable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lattice::{Env, Value};

/// Levenberg damping used once a plain Gauss-Newton step fails, relative
/// to the largest diagonal of `JᵀJ`; it grows tenfold per failure.
pub const LAMBDA0: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub init: f64,
    /// Relative finite-difference step, also the absolute floor.
    pub rtol: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Variable {
    pub fn new(name: &str, init: f64) -> Self {
        Variable {
            name: name.to_string(),
            init,
            rtol: 1e-8,
            min: None,
            max: None,
        }
    }

    pub fn bounds(mut self, min: f64, max: f64) -> Self {
        self.min = Some(min);
        self.max = Some(max);
        self
    }

    pub fn rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    fn clamp(&self, v: f64) -> f64 {
        let v = self.min.map_or(v, |m| v.max(m));
        self.max.map_or(v, |m| v.min(m))
    }
}

type ExprFn<'a, C> = Box<dyn Fn(&C) -> Result<f64> + 'a>;

pub struct Equality<'a, C> {
    pub name: String,
    pub expr: ExprFn<'a, C>,
    pub tol: f64,
    pub weight: f64,
}

impl<'a, C> Equality<'a, C> {
    pub fn new(name: &str, tol: f64, expr: impl Fn(&C) -> Result<f64> + 'a) -> Self {
        Equality {
            name: name.to_string(),
            expr: Box::new(expr),
            tol,
            weight: 1.0,
        }
    }
}

/// Command: variable values in, evaluation context out.
pub type CommandFn<'a, C> = Box<dyn FnMut(&[f64]) -> Result<C> + 'a>;
/// Jacobian of the (unweighted) constraints, one row per equality and one
/// column per variable, from the context of the current point.
pub type JacobianFn<'a, C> = Box<dyn FnMut(&C, &[f64]) -> Result<DMatrix<f64>> + 'a>;

pub struct Problem<'a, C> {
    pub command: CommandFn<'a, C>,
    pub variables: Vec<Variable>,
    pub equalities: Vec<Equality<'a, C>>,
    pub jacobian: Option<JacobianFn<'a, C>>,
    /// Stop when the penalty `‖c‖` drops below this.
    pub fmin: f64,
    /// Maximum step halvings per iteration.
    pub bisec: usize,
    pub maxcall: usize,
    pub info: u8,
}

impl<'a, C> Problem<'a, C> {
    pub fn new(command: impl FnMut(&[f64]) -> Result<C> + 'a) -> Self {
        Problem {
            command: Box::new(command),
            variables: Vec::new(),
            equalities: Vec::new(),
            jacobian: None,
            fmin: 1e-10,
            bisec: 3,
            maxcall: 100,
            info: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    /// Penalty below `fmin`, or every constraint within its tolerance.
    Success,
    /// The call budget ran out; the result holds the best point seen.
    MaxCall,
    /// No step improves the penalty any more.
    Stalled,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Success => "SUCCESS",
            Status::MaxCall => "FMIN not reached",
            Status::Stalled => "ROUNDOFF",
        }
    }
}

#[derive(Clone, Debug)]
pub struct MatchResult {
    pub status: Status,
    pub iterations: usize,
    pub calls: usize,
    pub penalty: f64,
    pub values: Vec<f64>,
    /// Unweighted constraint values at `values`.
    pub constraints: Vec<f64>,
    /// Penalty at the start and after each accepted step.
    pub history: Vec<f64>,
    /// Per-iteration lines (info >= 2).
    pub trace: Vec<String>,
    pub summary: String,
}

struct Eval {
    x: Vec<f64>,
    raw: Vec<f64>,
    c: DVector<f64>,
    penalty: f64,
}

/// C-style `%.5e`: two-digit signed exponent.
pub fn sci(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.5e}");
    let (m, e) = s.split_once('e').expect("exponent");
    let e: i32 = e.parse().expect("exponent digits");
    format!("{m}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

pub fn summary(vars: &[Variable], init: &[f64], values: &[f64], eqs: &[(String, f64, f64)]) -> String {
    let rule = "-".repeat(63);
    let mut s = String::new();
    s.push_str("Constraints  Type         Kind         Weight     Penalty Value\n");
    s.push_str(&rule);
    s.push('\n');
    for (name, w, v) in eqs {
        s.push_str(&format!("{:<13}{:<13}{:<13}{:<11}{}\n", name, "equality", ".", w, sci(*v)));
    }
    s.push('\n');
    s.push_str("Variables    Final Value  Init. Value  Lower Limit  Upper Limit\n");
    s.push_str(&rule);
    s.push('\n');
    let lim = |l: Option<f64>| l.map_or_else(|| ".".to_string(), sci);
    for ((v, x0), x) in vars.iter().zip(init).zip(values) {
        s.push_str(&format!(
            "{:<13}{:<13}{:<13}{:<13}{}\n",
            v.name,
            sci(*x),
            sci(*x0),
            lim(v.min),
            lim(v.max)
        ));
    }
    s
}

impl<'a, C> Problem<'a, C> {
    fn validate(&self) -> Result<()> {
        if self.variables.is_empty() || self.equalities.is_empty() {
            return Err(Error::Match("needs at least one variable and one equality".into()));
        }
        for v in &self.variables {
            if let (Some(a), Some(b)) = (v.min, v.max) {
                if a >= b {
                    return Err(Error::Match(format!("variable '{}': min {a} is not below max {b}", v.name)));
                }
            }
        }
        Ok(())
    }

    fn evaluate(&mut self, x: &[f64], calls: &mut usize) -> Result<(Eval, C)> {
        *calls += 1;
        let ctx = (self.command)(x)?;
        let mut raw = Vec::with_capacity(self.equalities.len());
        for e in &self.equalities {
            let v = (e.expr)(&ctx)?;
            if !v.is_finite() {
                return Err(Error::Match(format!("constraint '{}' evaluates to {v}", e.name)));
            }
            raw.push(v);
        }
        let c = DVector::from_iterator(raw.len(), raw.iter().zip(&self.equalities).map(|(v, e)| v * e.weight));
        let penalty = c.norm();
        Ok((Eval { x: x.to_vec(), raw, c, penalty }, ctx))
    }

    fn done(&self, e: &Eval) -> bool {
        e.penalty < self.fmin || e.raw.iter().zip(&self.equalities).all(|(v, q)| v.abs() < q.tol)
    }

    fn fd_jacobian(&mut self, base: &Eval, calls: &mut usize) -> Result<DMatrix<f64>> {
        let n = self.variables.len();
        let mut j = DMatrix::zeros(base.c.len(), n);
        for k in 0..n {
            let v = &self.variables[k];
            let x = base.x[k];
            let mut h = (v.rtol * x.abs()).max(v.rtol);
            if v.max.is_some_and(|m| x + h > m) {
                h = -h;
            }
            let mut xp = base.x.clone();
            xp[k] = v.clamp(x + h);
            let dh = xp[k] - x;
            if dh == 0.0 {
                continue;
            }
            let (e, _) = self.evaluate(&xp, calls)?;
            j.set_column(k, &((&e.c - &base.c) / dh));
        }
        Ok(j)
    }

    fn weighted(&self, j: DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (m, n) = (self.equalities.len(), self.variables.len());
        if j.shape() != (m, n) {
            return Err(Error::Match(format!("jacobian is {}x{}, expected {m}x{n}", j.nrows(), j.ncols())));
        }
        let mut j = j;
        for (i, e) in self.equalities.iter().enumerate() {
            j.row_mut(i).scale_mut(e.weight);
        }
        Ok(j)
    }

    pub fn solve(mut self) -> Result<MatchResult> {
        self.validate()?;
        let init: Vec<f64> = self.variables.iter().map(|v| v.clamp(v.init)).collect();
        let mut calls = 0;
        let mut trace = Vec::new();
        let (mut cur, mut ctx) = self.evaluate(&init, &mut calls)?;
        let mut history = vec![cur.penalty];
        let mut iterations = 0;
        let mut lambda = 0.0;
        let mut status = Status::MaxCall;
        let mut fresh_j: Option<DMatrix<f64>> = None;
        loop {
            if self.done(&cur) {
                status = Status::Success;
                break;
            }
            if calls >= self.maxcall {
                break;
            }
            let j = match fresh_j.take() {
                Some(j) => j,
                None => match self.jacobian.as_mut() {
                    Some(jf) => {
                        let j = jf(&ctx, &cur.x)?;
                        self.weighted(j)?
                    }
                    None => self.fd_jacobian(&cur, &mut calls)?,
                },
            };
            let jt = j.transpose();
            let mut a = &jt * &j;
            let scale = a.diagonal().max().max(1e-300);
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * scale;
            }
            let g = &jt * &cur.c;
            let Some(step) = a.lu().solve(&(-g)) else {
                lambda = grow(lambda);
                fresh_j = Some(j);
                continue;
            };
            // bisection line search on the step length
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=self.bisec {
                if calls >= self.maxcall {
                    break;
                }
                let x: Vec<f64> = self
                    .variables
                    .iter()
                    .zip(&cur.x)
                    .zip(step.iter())
                    .map(|((v, x), d)| v.clamp(x + t * d))
                    .collect();
                if x == cur.x {
                    break;
                }
                let (e, c) = self.evaluate(&x, &mut calls)?;
                if e.penalty < cur.penalty {
                    accepted = Some((e, c));
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((e, c)) => {
                    iterations += 1;
                    cur = e;
                    ctx = c;
                    history.push(cur.penalty);
                    lambda = if lambda <= LAMBDA0 { 0.0 } else { lambda / 10.0 };
                    if self.info >= 2 {
                        trace.push(format!("iteration {iterations:3}  calls {calls:4}  penalty {}", sci(cur.penalty)));
                    }
                }
                None => {
                    if calls >= self.maxcall {
                        break;
                    }
                    lambda = grow(lambda);
                    if lambda > 1e12 {
                        status = Status::Stalled;
                        break;
                    }
                    fresh_j = Some(j);
                }
            }
        }
        let eqs: Vec<(String, f64, f64)> = self
            .equalities
            .iter()
            .zip(&cur.raw)
            .map(|(e, v)| (e.name.clone(), e.weight, *v))
            .collect();
        let summary = summary(&self.variables, &init, &cur.x, &eqs);
        Ok(MatchResult {
            status,
            iterations,
            calls,
            penalty: cur.penalty,
            values: cur.x,
            constraints: cur.raw,
            history,
            trace,
            summary,
        })
    }
}

fn grow(lambda: f64) -> f64 {
    if lambda == 0.0 {
        LAMBDA0
    } else {
        lambda * 10.0
    }
}

/// Command wrapper writing the variable values into `env` under `names`
/// before calling `f`.
pub fn env_command<'a, C>(
    env: &'a Env,
    names: Vec<String>,
    mut f: impl FnMut() -> Result<C> + 'a,
) -> impl FnMut(&[f64]) -> Result<C> + 'a {
    move |x: &[f64]| {
        for (n, v) in names.iter().zip(x) {
            env.set(n, Value::Num(*v));
        }
        f()
    }
}
