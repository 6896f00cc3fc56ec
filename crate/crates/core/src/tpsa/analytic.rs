//! Analytic functions of a series.
//!
//! Every function is applied the same way: the univariate Taylor
//! coefficients of `f` about the constant part `a0` are generated to order
//! `mo`, then evaluated by Horner's rule on the nilpotent remainder
//! `a - a0`.

use std::fmt;

use super::coef::Coef;
use super::series::Tpsa;
use crate::error::{Error, Result};

/// Functions available through [`Tpsa::analytic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Inv,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Asin,
    Atan,
}

impl fmt::Display for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Func::Inv => "inv",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Asin => "asin",
            Func::Atan => "atan",
        };
        f.write_str(s)
    }
}

/// Taylor coefficients of `f` about `a0`, orders `0..=mo`.
fn coefficients<T: Coef>(func: Func, a0: T, mo: usize) -> Result<Vec<T>> {
    let domain = |ok: bool| {
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                func: func.to_string(),
                value: a0.to_string(),
            })
        }
    };
    let mut c = vec![T::ZERO; mo + 1];
    match func {
        Func::Inv => {
            domain(!a0.is_zero() && a0.is_finite())?;
            let r = T::ONE / a0;
            let mut p = r;
            for (k, ck) in c.iter_mut().enumerate() {
                *ck = if k % 2 == 0 { p } else { -p };
                p *= r;
            }
        }
        Func::Sqrt => {
            if a0.is_zero() || !a0.is_finite() {
                domain(false)?;
            }
            if T::from(a0.re()) == a0 {
                domain(a0.re() > 0.0)?;
            }
            c[0] = a0.sqrt();
            for k in 1..=mo {
                let kf = k as f64;
                c[k] = c[k - 1] * T::from((1.5 - kf) / kf) / a0;
            }
        }
        Func::Exp => {
            domain(a0.is_finite())?;
            let e = a0.exp();
            let mut fact = 1.0;
            for (k, ck) in c.iter_mut().enumerate() {
                if k > 0 {
                    fact *= k as f64;
                }
                *ck = e / T::from(fact);
            }
        }
        Func::Log => {
            if a0.is_zero() || !a0.is_finite() {
                domain(false)?;
            }
            if T::from(a0.re()) == a0 {
                domain(a0.re() > 0.0)?;
            }
            c[0] = a0.ln();
            let r = T::ONE / a0;
            let mut p = r;
            for k in 1..=mo {
                let s = if k % 2 == 1 { 1.0 } else { -1.0 };
                c[k] = p * T::from(s / k as f64);
                p *= r;
            }
        }
        Func::Sin | Func::Cos => {
            domain(a0.is_finite())?;
            let (s, co) = (a0.sin(), a0.cos());
            // derivatives cycle sin, cos, -sin, -cos
            let cyc = match func {
                Func::Sin => [s, co, -s, -co],
                _ => [co, -s, -co, s],
            };
            let mut fact = 1.0;
            for (k, ck) in c.iter_mut().enumerate() {
                if k > 0 {
                    fact *= k as f64;
                }
                *ck = cyc[k % 4] / T::from(fact);
            }
        }
        Func::Asin => {
            domain(a0.is_finite() && (T::from(a0.re()) != a0 || a0.re().abs() < 1.0))?;
            // d/du asin = (1 - (a0+u)^2)^(-1/2)
            let mut q = vec![T::ZERO; mo];
            if mo >= 1 {
                q[0] = T::ONE - a0 * a0;
            }
            if mo >= 2 {
                q[1] = -(a0 + a0);
            }
            if mo >= 3 {
                q[2] = -T::ONE;
            }
            let g = uni_pow_half_neg(&q)?;
            c[0] = asin_scalar(a0);
            for k in 1..=mo {
                c[k] = g[k - 1] / T::from(k as f64);
            }
        }
        Func::Atan => {
            domain(a0.is_finite())?;
            // d/du atan = 1 / (1 + (a0+u)^2)
            let mut q = vec![T::ZERO; mo];
            if mo >= 1 {
                q[0] = T::ONE + a0 * a0;
            }
            if mo >= 2 {
                q[1] = a0 + a0;
            }
            if mo >= 3 {
                q[2] = T::ONE;
            }
            if mo >= 1 && q[0].is_zero() {
                domain(false)?;
            }
            let g = uni_inv(&q);
            c[0] = atan_scalar(a0);
            for k in 1..=mo {
                c[k] = g[k - 1] / T::from(k as f64);
            }
        }
    }
    Ok(c)
}

fn asin_scalar<T: Coef>(a0: T) -> T {
    // real branch; complex asin is not needed by the engine
    T::from(a0.re().asin())
}

fn atan_scalar<T: Coef>(a0: T) -> T {
    T::from(a0.re().atan())
}

/// Reciprocal of a univariate truncated series with nonzero constant term.
fn uni_inv<T: Coef>(q: &[T]) -> Vec<T> {
    let n = q.len();
    let mut r = vec![T::ZERO; n];
    if n == 0 {
        return r;
    }
    r[0] = T::ONE / q[0];
    for k in 1..n {
        let mut s = T::ZERO;
        for j in 1..=k {
            s += q[j] * r[k - j];
        }
        r[k] = -s * r[0];
    }
    r
}

/// `q^(-1/2)` of a univariate truncated series with positive constant term.
fn uni_pow_half_neg<T: Coef>(q: &[T]) -> Result<Vec<T>> {
    let n = q.len();
    let mut r = vec![T::ZERO; n];
    if n == 0 {
        return Ok(r);
    }
    // r = q^a with a = -1/2: r' q = a q' r, solved term by term
    let a = -0.5;
    r[0] = T::ONE / q[0].sqrt();
    for k in 1..n {
        let mut s = T::ZERO;
        for j in 1..=k {
            let coeff = a * j as f64 - (k - j) as f64;
            s += T::from(coeff) * q[j] * r[k - j];
        }
        r[k] = s / (q[0] * T::from(k as f64));
    }
    Ok(r)
}

impl<T: Coef> Tpsa<T> {
    /// Applies an analytic function, exact to the truncation order.
    pub fn analytic(&self, func: Func) -> Result<Self> {
        let mo = self.desc().mo() as usize;
        let a0 = self.get0();
        let c = coefficients(func, a0, mo)?;
        let mut t = self.clone();
        t.set0(T::ZERO);
        t.update_hi();
        let mut out = Tpsa::constant(self.desc(), c[mo]);
        if t.hi() == 0 {
            return Ok(Tpsa::constant(self.desc(), c[0]));
        }
        for k in (0..mo).rev() {
            out *= &t;
            out += c[k];
        }
        Ok(out)
    }

    pub fn inv(&self) -> Result<Self> {
        self.analytic(Func::Inv)
    }

    pub fn sqrt(&self) -> Result<Self> {
        self.analytic(Func::Sqrt)
    }

    pub fn exp(&self) -> Result<Self> {
        self.analytic(Func::Exp)
    }

    pub fn log(&self) -> Result<Self> {
        self.analytic(Func::Log)
    }

    pub fn sin(&self) -> Result<Self> {
        self.analytic(Func::Sin)
    }

    pub fn cos(&self) -> Result<Self> {
        self.analytic(Func::Cos)
    }

    pub fn asin(&self) -> Result<Self> {
        self.analytic(Func::Asin)
    }

    pub fn atan(&self) -> Result<Self> {
        self.analytic(Func::Atan)
    }

    /// Integer power by repeated squaring.
    pub fn powi(&self, n: i32) -> Result<Self> {
        if n < 0 {
            return self.inv()?.powi(-n);
        }
        let mut base = self.clone();
        let mut acc = Tpsa::constant(self.desc(), T::ONE);
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc *= &base;
            }
            e >>= 1;
            if e > 0 {
                let b2 = &base * &base;
                base = b2;
            }
        }
        Ok(acc)
    }
}
