use std::fmt::Write as _;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::Arc;

use num_complex::Complex64;

use super::coef::Coef;
use super::descriptor::Descriptor;
use crate::error::{Error, Result};

/// A truncated multivariate power series over a [`Descriptor`].
///
/// Coefficients are stored densely in canonical monomial order. `hi` is an
/// upper bound on the highest degree holding a nonzero coefficient and lets
/// the kernels skip empty high-order blocks.
#[derive(Clone)]
pub struct Tpsa<T: Coef = f64> {
    desc: Arc<Descriptor>,
    coef: Vec<T>,
    hi: u8,
}

/// Complex-coefficient series, used by the normal-form analysis.
pub type CTpsa = Tpsa<Complex64>;

impl<T: Coef> Tpsa<T> {
    /// The zero series.
    pub fn new(desc: &Arc<Descriptor>) -> Self {
        Tpsa {
            desc: Arc::clone(desc),
            coef: vec![T::ZERO; desc.size()],
            hi: 0,
        }
    }

    pub fn constant(desc: &Arc<Descriptor>, v: T) -> Self {
        let mut t = Self::new(desc);
        t.coef[0] = v;
        t
    }

    /// `v0 + slot`: a variable or parameter expanded about `v0`.
    pub fn var(desc: &Arc<Descriptor>, slot: usize, v0: T) -> Result<Self> {
        if slot >= desc.nslots() {
            return Err(Error::Range(format!(
                "slot {slot} out of range 0..{}",
                desc.nslots()
            )));
        }
        let mut t = Self::constant(desc, v0);
        if desc.mo() >= 1 {
            t.coef[slot + 1] = T::ONE;
            t.hi = 1;
        }
        Ok(t)
    }

    /// Series of the named parameter (unit first derivative, zero value).
    pub fn param(desc: &Arc<Descriptor>, name: &str) -> Result<Self> {
        let k = desc
            .param_names()
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::Lookup(format!("no parameter named '{name}'")))?;
        Self::var(desc, desc.nv() + k, T::ZERO)
    }

    /// Builds a series from raw coefficients in canonical order.
    pub fn from_coefs(desc: &Arc<Descriptor>, coef: Vec<T>) -> Result<Self> {
        if coef.len() != desc.size() {
            return Err(Error::Range(format!(
                "expected {} coefficients, got {}",
                desc.size(),
                coef.len()
            )));
        }
        let mut t = Tpsa {
            desc: Arc::clone(desc),
            coef,
            hi: desc.mo(),
        };
        t.update_hi();
        Ok(t)
    }

    #[inline]
    pub fn desc(&self) -> &Arc<Descriptor> {
        &self.desc
    }

    #[inline]
    pub fn coefs(&self) -> &[T] {
        &self.coef
    }

    /// Upper bound on the highest nonzero order.
    #[inline]
    pub fn hi(&self) -> u8 {
        self.hi
    }

    /// Recomputes `hi` exactly.
    pub fn update_hi(&mut self) {
        let mut hi = 0;
        for d in (1..=self.desc.mo()).rev() {
            if self.coef[self.desc.order_range(d)].iter().any(|c| !c.is_zero()) {
                hi = d;
                break;
            }
        }
        self.hi = hi;
    }

    #[inline]
    pub fn coef(&self, i: usize) -> T {
        self.coef[i]
    }

    pub fn set_coef(&mut self, i: usize, v: T) {
        self.coef[i] = v;
        if !v.is_zero() {
            self.hi = self.hi.max(self.desc.degree_of(i));
        }
    }

    #[inline]
    pub fn get0(&self) -> T {
        self.coef[0]
    }

    pub fn set0(&mut self, v: T) {
        self.coef[0] = v;
    }

    pub fn getm(&self, m: &[u8]) -> Result<T> {
        Ok(self.coef[self.desc.mono_index(m)?])
    }

    pub fn setm(&mut self, m: &[u8], v: T) -> Result<()> {
        let i = self.desc.mono_index(m)?;
        self.set_coef(i, v);
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.coef.iter().all(|c| c.is_zero())
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.coef.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.coef.iter().all(|c| c.is_finite())
    }

    pub fn clear(&mut self) {
        self.coef.iter_mut().for_each(|c| *c = T::ZERO);
        self.hi = 0;
    }

    /// Drops every coefficient of degree above `order`.
    pub fn truncate(&mut self, order: u8) {
        if order >= self.desc.mo() {
            return;
        }
        let end = self.desc.end_of_order(order);
        self.coef[end..].iter_mut().for_each(|c| *c = T::ZERO);
        self.hi = self.hi.min(order);
    }

    /// Iterator over `(index, coefficient)` of nonzero terms.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        let end = self.desc.end_of_order(self.hi);
        self.coef[..end]
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, &c)| (i, c))
    }

    fn same_desc(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.desc, &other.desc) || self.desc.same_as(&other.desc)
    }

    fn ensure_same(&self, other: &Self) -> Result<()> {
        if self.same_desc(other) {
            Ok(())
        } else {
            Err(Error::DescriptorMismatch)
        }
    }

    #[track_caller]
    fn assert_same(&self, other: &Self) {
        assert!(
            self.same_desc(other),
            "series belong to different descriptors: {:?} vs {:?}",
            self.desc,
            other.desc
        );
    }

    /// Linear combination `sum(a_k * t_k)`.
    pub fn lincomb(terms: &[(T, &Tpsa<T>)]) -> Result<Self> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::Range("empty linear combination".into()))?;
        let mut out = Tpsa::new(&first.desc);
        for (a, t) in terms {
            out.ensure_same(t)?;
            out.axpy(*a, t);
        }
        Ok(out)
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: T, x: &Self) {
        self.assert_same(x);
        let end = self.desc.end_of_order(x.hi);
        for (c, &v) in self.coef[..end].iter_mut().zip(&x.coef[..end]) {
            *c += a * v;
        }
        self.hi = self.hi.max(x.hi);
    }

    pub fn scale(&mut self, a: T) {
        self.coef.iter_mut().for_each(|c| *c *= a);
    }

    /// Truncated product.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.ensure_same(other)?;
        let mut out = Tpsa::new(&self.desc);
        mul_acc(self, other, &mut out.coef);
        out.hi = (self.hi + other.hi).min(self.desc.mo());
        Ok(out)
    }

    /// Formal partial derivative with respect to a variable or parameter slot.
    pub fn deriv(&self, slot: usize) -> Result<Self> {
        let d = &self.desc;
        if slot >= d.nslots() {
            return Err(Error::Range(format!(
                "slot {slot} out of range 0..{}",
                d.nslots()
            )));
        }
        let mut out = Tpsa::new(d);
        let mut buf = vec![0u8; d.nslots()];
        for (i, c) in self.nonzero() {
            let e = d.exponents(i);
            if e[slot] == 0 {
                continue;
            }
            buf.copy_from_slice(e);
            buf[slot] -= 1;
            let k = d.index_unchecked(&buf);
            out.coef[k] += c * T::from(e[slot] as f64);
        }
        out.hi = self.hi.saturating_sub(1);
        Ok(out)
    }

    /// Formal antiderivative with respect to a slot; terms whose degree
    /// would exceed a cap are dropped.
    pub fn integ(&self, slot: usize) -> Result<Self> {
        let d = &self.desc;
        if slot >= d.nslots() {
            return Err(Error::Range(format!(
                "slot {slot} out of range 0..{}",
                d.nslots()
            )));
        }
        let mut out = Tpsa::new(d);
        let mut buf = vec![0u8; d.nslots()];
        for (i, c) in self.nonzero() {
            buf.copy_from_slice(d.exponents(i));
            buf[slot] += 1;
            if d.check(&buf).is_err() {
                continue;
            }
            let k = d.index_unchecked(&buf);
            out.coef[k] += c / T::from(buf[slot] as f64);
        }
        out.hi = (self.hi + 1).min(d.mo());
        Ok(out)
    }

    /// Evaluates the polynomial at a point holding one value per slot
    /// (variables then parameters) by direct monomial summation.
    pub fn eval(&self, point: &[T]) -> Result<T> {
        let d = &self.desc;
        if point.len() != d.nslots() {
            return Err(Error::Range(format!(
                "evaluation point has {} values, expected {}",
                point.len(),
                d.nslots()
            )));
        }
        let vals = monomial_values(d, point, self.hi);
        Ok(self
            .nonzero()
            .fold(T::ZERO, |acc, (i, c)| acc + c * vals[i]))
    }

    /// Substitutes the variable slots by `args` (one series per variable);
    /// parameter slots map to themselves.
    pub fn compose(&self, args: &[Tpsa<T>]) -> Result<Self> {
        Ok(compose_many(&[self], args)?.pop().expect("one row"))
    }

    /// Debug dump: one line per nonzero coefficient,
    /// `<index> <exponent-vector> <coefficient>` in canonical order.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, c) in self.nonzero() {
            let e: Vec<String> = self
                .desc
                .exponents(i)
                .iter()
                .map(|x| x.to_string())
                .collect();
            let _ = writeln!(s, "{i} [{}] {}", e.join(" "), c.dump());
        }
        s
    }
}

impl Tpsa<f64> {
    /// Promotes to complex coefficients.
    pub fn to_complex(&self) -> CTpsa {
        Tpsa {
            desc: Arc::clone(&self.desc),
            coef: self.coef.iter().map(|&c| Complex64::new(c, 0.0)).collect(),
            hi: self.hi,
        }
    }
}

impl CTpsa {
    pub fn re(&self) -> Tpsa<f64> {
        let mut t = Tpsa {
            desc: Arc::clone(&self.desc),
            coef: self.coef.iter().map(|c| c.re).collect(),
            hi: self.hi,
        };
        t.update_hi();
        t
    }

    pub fn im(&self) -> Tpsa<f64> {
        let mut t = Tpsa {
            desc: Arc::clone(&self.desc),
            coef: self.coef.iter().map(|c| c.im).collect(),
            hi: self.hi,
        };
        t.update_hi();
        t
    }

    pub fn conj(&self) -> CTpsa {
        Tpsa {
            desc: Arc::clone(&self.desc),
            coef: self.coef.iter().map(|c| c.conj()).collect(),
            hi: self.hi,
        }
    }
}

/// Values of every monomial of degree `<= hi` at `point`.
fn monomial_values<T: Coef>(d: &Descriptor, point: &[T], hi: u8) -> Vec<T> {
    let end = d.end_of_order(hi);
    let mut vals = vec![T::ZERO; end];
    vals[0] = T::ONE;
    let mut buf = vec![0u8; d.nslots()];
    for i in 1..end {
        let e = d.exponents(i);
        let s = e.iter().position(|&x| x > 0).expect("non-constant monomial");
        buf.copy_from_slice(e);
        buf[s] -= 1;
        let parent = d.index_unchecked(&buf);
        vals[i] = vals[parent] * point[s];
    }
    vals
}

/// Accumulates the truncated product `a * b` into `c`.
pub(crate) fn mul_acc<T: Coef>(a: &Tpsa<T>, b: &Tpsa<T>, c: &mut [T]) {
    let d = &a.desc;
    let hmax = a.hi.max(b.hi);
    let jend = d.end_of_order(hmax);
    if let Some(tab) = d.product_table() {
        for i in 0..jend {
            let ai = a.coef[i];
            let bi = b.coef[i];
            let az = ai.is_zero();
            let bz = bi.is_zero();
            if az && bz {
                continue;
            }
            let pairs = &tab.pairs[tab.start[i]..tab.start[i + 1]];
            for &(j, k) in pairs {
                let j = j as usize;
                if j >= jend {
                    break;
                }
                let mut v = T::ZERO;
                if !az {
                    v += ai * b.coef[j];
                }
                if j != i && !bz {
                    v += a.coef[j] * bi;
                }
                c[k as usize] += v;
            }
        }
    } else {
        let n = d.nslots();
        let mut buf = vec![0u8; n];
        let mo = d.mo();
        let po = d.po();
        for i in 0..jend {
            let ai = a.coef[i];
            if ai.is_zero() {
                continue;
            }
            let di = d.degree_of(i);
            let pi = d.param_degree(i);
            let ei = d.exponents(i);
            for j in 0..d.end_of_order(mo - di).min(jend) {
                let bj = b.coef[j];
                if bj.is_zero() || pi + d.param_degree(j) > po {
                    continue;
                }
                let ej = d.exponents(j);
                for s in 0..n {
                    buf[s] = ei[s] + ej[s];
                }
                c[d.index_unchecked(&buf)] += ai * bj;
            }
        }
    }
}

/// Composes several series with the same substitution, sharing the powers
/// of the arguments. Parameter slots substitute to themselves.
pub fn compose_many<T: Coef>(fs: &[&Tpsa<T>], args: &[Tpsa<T>]) -> Result<Vec<Tpsa<T>>> {
    let first = fs
        .first()
        .ok_or_else(|| Error::Range("nothing to compose".into()))?;
    let d = Arc::clone(&first.desc);
    if args.len() != d.nv() {
        return Err(Error::Range(format!(
            "composition needs {} arguments, got {}",
            d.nv(),
            args.len()
        )));
    }
    for f in fs {
        first.ensure_same(f)?;
    }
    for a in args {
        first.ensure_same(a)?;
    }
    let nv = d.nv();
    let hi = fs.iter().map(|f| f.hi).max().unwrap_or(0);
    let end = d.end_of_order(hi);
    // powers of the arguments for monomials without parameter content
    let mut powers: Vec<Option<Tpsa<T>>> = vec![None; end];
    powers[0] = Some(Tpsa::constant(&d, T::ONE));
    let mut buf = vec![0u8; d.nslots()];
    for i in 1..end {
        let e = d.exponents(i);
        if e[nv..].iter().any(|&x| x > 0) {
            continue;
        }
        let s = e.iter().rposition(|&x| x > 0).expect("non-constant");
        buf.copy_from_slice(e);
        buf[s] -= 1;
        let parent = d.index_unchecked(&buf);
        let p = powers[parent].as_ref().expect("parent computed first");
        let mut out = Tpsa::new(&d);
        mul_acc(p, &args[s], &mut out.coef);
        out.hi = (p.hi + args[s].hi).min(d.mo());
        powers[i] = Some(out);
    }

    let mut results = Vec::with_capacity(fs.len());
    for f in fs {
        let mut out = Tpsa::new(&d);
        if d.np() == 0 {
            for (i, c) in f.nonzero() {
                out.axpy(c, powers[i].as_ref().expect("power"));
            }
        } else {
            // group by variable part; coefficient becomes a parameter series
            let mut groups: Vec<Option<Tpsa<T>>> = vec![None; end];
            for (i, c) in f.nonzero() {
                let e = d.exponents(i);
                buf.copy_from_slice(e);
                buf[nv..].iter_mut().for_each(|x| *x = 0);
                let v = d.index_unchecked(&buf);
                let g = groups[v].get_or_insert_with(|| Tpsa::new(&d));
                // parameter-only monomial
                buf.copy_from_slice(e);
                buf[..nv].iter_mut().for_each(|x| *x = 0);
                let pidx = d.index_unchecked(&buf);
                g.set_coef(pidx, c);
            }
            for (v, g) in groups.into_iter().enumerate() {
                let Some(g) = g else { continue };
                let p = powers[v].as_ref().expect("power");
                if g.hi == 0 {
                    out.axpy(g.coef[0], p);
                } else {
                    mul_acc(&g, p, &mut out.coef);
                    out.hi = out.hi.max((g.hi + p.hi).min(d.mo()));
                }
            }
        }
        results.push(out);
    }
    Ok(results)
}

// ---------------------------------------------------------------------------
// operators

impl<T: Coef> Neg for Tpsa<T> {
    type Output = Tpsa<T>;
    fn neg(mut self) -> Self {
        self.coef.iter_mut().for_each(|c| *c = -*c);
        self
    }
}

impl<T: Coef> Neg for &Tpsa<T> {
    type Output = Tpsa<T>;
    fn neg(self) -> Tpsa<T> {
        -self.clone()
    }
}

impl<T: Coef> AddAssign<&Tpsa<T>> for Tpsa<T> {
    fn add_assign(&mut self, rhs: &Tpsa<T>) {
        self.axpy(T::ONE, rhs);
    }
}

impl<T: Coef> SubAssign<&Tpsa<T>> for Tpsa<T> {
    fn sub_assign(&mut self, rhs: &Tpsa<T>) {
        self.axpy(-T::ONE, rhs);
    }
}

impl<T: Coef> MulAssign<&Tpsa<T>> for Tpsa<T> {
    fn mul_assign(&mut self, rhs: &Tpsa<T>) {
        self.assert_same(rhs);
        // constant operands are common in the tracking code
        if rhs.hi == 0 {
            self.scale(rhs.coef[0]);
            return;
        }
        if self.hi == 0 {
            let c = self.coef[0];
            self.coef.copy_from_slice(&rhs.coef);
            self.hi = rhs.hi;
            self.scale(c);
            return;
        }
        let mut out = vec![T::ZERO; self.coef.len()];
        mul_acc(self, rhs, &mut out);
        self.coef = out;
        self.hi = (self.hi + rhs.hi).min(self.desc.mo());
    }
}

impl<T: Coef> AddAssign<T> for Tpsa<T> {
    fn add_assign(&mut self, rhs: T) {
        self.coef[0] += rhs;
    }
}

impl<T: Coef> SubAssign<T> for Tpsa<T> {
    fn sub_assign(&mut self, rhs: T) {
        self.coef[0] -= rhs;
    }
}

impl<T: Coef> MulAssign<T> for Tpsa<T> {
    fn mul_assign(&mut self, rhs: T) {
        self.scale(rhs);
    }
}

macro_rules! series_binop {
    ($Op:ident, $op:ident, $OpAssign:ident, $op_assign:ident) => {
        impl<T: Coef> $Op<&Tpsa<T>> for &Tpsa<T> {
            type Output = Tpsa<T>;
            fn $op(self, rhs: &Tpsa<T>) -> Tpsa<T> {
                let mut out = self.clone();
                $OpAssign::$op_assign(&mut out, rhs);
                out
            }
        }
        impl<T: Coef> $Op<Tpsa<T>> for Tpsa<T> {
            type Output = Tpsa<T>;
            fn $op(mut self, rhs: Tpsa<T>) -> Tpsa<T> {
                $OpAssign::$op_assign(&mut self, &rhs);
                self
            }
        }
        impl<T: Coef> $Op<&Tpsa<T>> for Tpsa<T> {
            type Output = Tpsa<T>;
            fn $op(mut self, rhs: &Tpsa<T>) -> Tpsa<T> {
                $OpAssign::$op_assign(&mut self, rhs);
                self
            }
        }
        impl<T: Coef> $Op<Tpsa<T>> for &Tpsa<T> {
            type Output = Tpsa<T>;
            fn $op(self, rhs: Tpsa<T>) -> Tpsa<T> {
                let mut out = self.clone();
                $OpAssign::$op_assign(&mut out, &rhs);
                out
            }
        }
        impl<T: Coef> $Op<T> for Tpsa<T> {
            type Output = Tpsa<T>;
            fn $op(mut self, rhs: T) -> Tpsa<T> {
                $OpAssign::$op_assign(&mut self, rhs);
                self
            }
        }
        impl<T: Coef> $Op<T> for &Tpsa<T> {
            type Output = Tpsa<T>;
            fn $op(self, rhs: T) -> Tpsa<T> {
                let mut out = self.clone();
                $OpAssign::$op_assign(&mut out, rhs);
                out
            }
        }
    };
}

series_binop!(Add, add, AddAssign, add_assign);
series_binop!(Sub, sub, SubAssign, sub_assign);
series_binop!(Mul, mul, MulAssign, mul_assign);

impl<T: Coef> Div<&Tpsa<T>> for &Tpsa<T> {
    type Output = Tpsa<T>;
    fn div(self, rhs: &Tpsa<T>) -> Tpsa<T> {
        let inv = rhs.inv().expect("division by a series with zero constant part");
        self * &inv
    }
}

impl<T: Coef> Div<Tpsa<T>> for Tpsa<T> {
    type Output = Tpsa<T>;
    fn div(self, rhs: Tpsa<T>) -> Tpsa<T> {
        &self / &rhs
    }
}

impl<T: Coef> Div<T> for Tpsa<T> {
    type Output = Tpsa<T>;
    fn div(mut self, rhs: T) -> Tpsa<T> {
        let r = T::ONE / rhs;
        self.scale(r);
        self
    }
}

impl<T: Coef> Div<T> for &Tpsa<T> {
    type Output = Tpsa<T>;
    fn div(self, rhs: T) -> Tpsa<T> {
        self.clone() / rhs
    }
}

impl Add<Tpsa<f64>> for f64 {
    type Output = Tpsa<f64>;
    fn add(self, rhs: Tpsa<f64>) -> Tpsa<f64> {
        rhs + self
    }
}

impl Sub<Tpsa<f64>> for f64 {
    type Output = Tpsa<f64>;
    fn sub(self, rhs: Tpsa<f64>) -> Tpsa<f64> {
        -rhs + self
    }
}

impl Mul<Tpsa<f64>> for f64 {
    type Output = Tpsa<f64>;
    fn mul(self, rhs: Tpsa<f64>) -> Tpsa<f64> {
        rhs * self
    }
}

impl Mul<&Tpsa<f64>> for f64 {
    type Output = Tpsa<f64>;
    fn mul(self, rhs: &Tpsa<f64>) -> Tpsa<f64> {
        rhs * self
    }
}

impl<T: Coef> std::fmt::Debug for Tpsa<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tpsa(mo={}, size={})\n{}", self.desc.mo(), self.coef.len(), self.dump())
    }
}
