//! Arithmetic shared by particle coordinates (`f64`) and map rows (`Tpsa`).

use crate::error::{Error, Result};
use crate::lattice::Value;
use crate::tpsa::Tpsa;

/// Numbers the tracking maps are written against.
pub trait Num: Clone + std::fmt::Debug {
    /// Constant of the same flavor as `self`.
    fn cst(&self, v: f64) -> Self;
    /// Scalar part.
    fn val(&self) -> f64;
    /// Attribute value as a number of this flavor; series attributes keep
    /// their knob dependence when tracking maps.
    fn from_value(&self, v: &Value) -> Result<Self>;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Result<Self>;
    fn addc(&self, c: f64) -> Self;
    fn mulc(&self, c: f64) -> Self;
    fn neg(&self) -> Self;
    fn sqrt(&self) -> Result<Self>;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn asin(&self) -> Result<Self>;
    fn finite(&self) -> bool;

    fn sqr(&self) -> Self {
        self.mul(self)
    }
}

impl Num for f64 {
    fn cst(&self, v: f64) -> Self {
        v
    }
    fn val(&self) -> f64 {
        *self
    }
    fn from_value(&self, v: &Value) -> Result<Self> {
        Ok(v.get0())
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Result<Self> {
        if *o == 0.0 {
            return Err(Error::Domain { func: "div".into(), value: "0".into() });
        }
        Ok(self / o)
    }
    fn addc(&self, c: f64) -> Self {
        self + c
    }
    fn mulc(&self, c: f64) -> Self {
        self * c
    }
    fn neg(&self) -> Self {
        -self
    }
    fn sqrt(&self) -> Result<Self> {
        if !(*self > 0.0) {
            return Err(Error::Domain { func: "sqrt".into(), value: format!("{self:e}") });
        }
        Ok(f64::sqrt(*self))
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn asin(&self) -> Result<Self> {
        if !(self.abs() <= 1.0) {
            return Err(Error::Domain { func: "asin".into(), value: format!("{self:e}") });
        }
        Ok(f64::asin(*self))
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl Num for Tpsa {
    fn cst(&self, v: f64) -> Self {
        Tpsa::constant(self.desc(), v)
    }
    fn val(&self) -> f64 {
        self.get0()
    }
    fn from_value(&self, v: &Value) -> Result<Self> {
        match v {
            Value::Num(x) => Ok(self.cst(*x)),
            Value::Series(t) if t.desc().same_as(self.desc()) => Ok(t.clone()),
            Value::Series(_) => Err(Error::Track(
                "knob series and tracked map use different descriptors".into(),
            )),
        }
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Result<Self> {
        Ok(self * &o.inv()?)
    }
    fn addc(&self, c: f64) -> Self {
        self + c
    }
    fn mulc(&self, c: f64) -> Self {
        self * c
    }
    fn neg(&self) -> Self {
        -self
    }
    fn sqrt(&self) -> Result<Self> {
        if !(self.get0() > 0.0) {
            return Err(Error::Domain { func: "sqrt".into(), value: format!("{:e}", self.get0()) });
        }
        Tpsa::sqrt(self)
    }
    fn sin(&self) -> Self {
        Tpsa::sin(self).expect("sin is entire")
    }
    fn cos(&self) -> Self {
        Tpsa::cos(self).expect("cos is entire")
    }
    fn asin(&self) -> Result<Self> {
        Tpsa::asin(self)
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}
