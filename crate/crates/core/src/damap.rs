//! Phase-space maps made of one truncated series per variable.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tpsa::{compose_many, Descriptor, Tpsa};

/// Map from the variables (and parameters) of a descriptor to `nv` rows.
///
/// Parameters are never rows; they only appear inside row coefficients and
/// always map to themselves.
#[derive(Clone)]
pub struct DaMap {
    desc: Arc<Descriptor>,
    rows: Vec<Tpsa>,
}

impl DaMap {
    /// Identity map of a fresh descriptor.
    pub fn identity(nv: usize, mo: u8, np: usize, po: u8, pn: &[&str]) -> Result<Self> {
        let desc = Descriptor::new(nv, mo, np, po, pn)?;
        Ok(Self::identity_on(&desc))
    }

    pub fn identity_on(desc: &Arc<Descriptor>) -> Self {
        let rows = (0..desc.nv())
            .map(|i| Tpsa::var(desc, i, 0.0).expect("slot in range"))
            .collect();
        DaMap {
            desc: Arc::clone(desc),
            rows,
        }
    }

    /// Identity expanded about `orbit` (one value per variable).
    pub fn around(desc: &Arc<Descriptor>, orbit: &[f64]) -> Result<Self> {
        if orbit.len() != desc.nv() {
            return Err(Error::Range(format!(
                "orbit has {} values, expected {}",
                orbit.len(),
                desc.nv()
            )));
        }
        let mut m = Self::identity_on(desc);
        for (r, &v) in m.rows.iter_mut().zip(orbit) {
            r.set0(v);
        }
        Ok(m)
    }

    pub fn from_rows(rows: Vec<Tpsa>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Range("a map needs at least one row".into()))?;
        let desc = Arc::clone(first.desc());
        if rows.len() != desc.nv() {
            return Err(Error::Range(format!(
                "map has {} rows, descriptor has {} variables",
                rows.len(),
                desc.nv()
            )));
        }
        if rows.iter().any(|r| !r.desc().same_as(&desc)) {
            return Err(Error::DescriptorMismatch);
        }
        Ok(DaMap { desc, rows })
    }

    /// Map whose rows are `orbit + R z` in the variables.
    pub fn from_linear(desc: &Arc<Descriptor>, orbit: &[f64], r: &DMatrix<f64>) -> Result<Self> {
        let nv = desc.nv();
        if r.nrows() != nv || r.ncols() != nv {
            return Err(Error::Range(format!("matrix must be {nv}x{nv}")));
        }
        let mut m = Self::around(desc, orbit)?;
        for (i, row) in m.rows.iter_mut().enumerate() {
            for j in 0..nv {
                row.set_coef(j + 1, r[(i, j)]);
            }
        }
        Ok(m)
    }

    pub fn desc(&self) -> &Arc<Descriptor> {
        &self.desc
    }

    pub fn nv(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Tpsa] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [Tpsa] {
        &mut self.rows
    }

    pub fn into_rows(self) -> Vec<Tpsa> {
        self.rows
    }

    /// Row by variable name (`x`, `px`, ...).
    pub fn row(&self, name: &str) -> Option<&Tpsa> {
        self.desc
            .var_names()
            .iter()
            .position(|v| v == name)
            .map(|i| &self.rows[i])
    }

    /// First-order series of the named parameter.
    pub fn param(&self, name: &str) -> Result<Tpsa> {
        Tpsa::param(&self.desc, name)
    }

    /// Evaluates every row at a phase-space point and parameter values.
    pub fn eval(&self, point: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.desc.nv() || params.len() != self.desc.np() {
            return Err(Error::Range(format!(
                "eval expects {} variables and {} parameters, got {} and {}",
                self.desc.nv(),
                self.desc.np(),
                point.len(),
                params.len()
            )));
        }
        let full: Vec<f64> = point.iter().chain(params).copied().collect();
        self.rows.iter().map(|r| r.eval(&full)).collect()
    }

    /// `self ∘ g`: the rows of `self` with the variables replaced by the
    /// rows of `g`.
    ///
    /// Each row of `self` is treated as an exact polynomial; substituting
    /// rows that carry an orbit part re-expands it about that orbit, and
    /// only the result is truncated.
    pub fn compose(&self, g: &DaMap) -> Result<DaMap> {
        if !self.desc.same_as(&g.desc) {
            return Err(Error::DescriptorMismatch);
        }
        let fs: Vec<&Tpsa> = self.rows.iter().collect();
        let rows = compose_many(&fs, &g.rows)?;
        Ok(DaMap {
            desc: Arc::clone(&self.desc),
            rows,
        })
    }

    /// Orbit vector `E` and first-derivative matrix `R`.
    pub fn extract(&self) -> (DVector<f64>, DMatrix<f64>) {
        let nv = self.nv();
        let e = DVector::from_iterator(nv, self.rows.iter().map(|r| r.get0()));
        let mut r = DMatrix::zeros(nv, nv);
        if self.desc.mo() >= 1 {
            for (i, row) in self.rows.iter().enumerate() {
                for j in 0..nv {
                    r[(i, j)] = row.coef(j + 1);
                }
            }
        }
        (e, r)
    }

    pub fn orbit(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.get0()).collect()
    }

    /// Inverse map, so that `self.compose(&self.invert()?)` is the
    /// identity to truncation order.
    ///
    /// Solved by the fixed-point iteration `n = R⁻¹ (w - E - N(n))`, where
    /// `N` collects every term of `self` beyond the linear block; each pass
    /// fixes at least one more order.
    pub fn invert(&self) -> Result<DaMap> {
        let nv = self.nv();
        let (e, r) = self.extract();
        let det = r.determinant();
        if !(det.abs() > 1e-12) {
            return Err(Error::Singular(format!("linear part has det = {det:e}")));
        }
        let rinv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("linear part has det = {det:e}")))?;
        // nonlinear remainder N = self - E - R z
        let mut nonlin = self.clone();
        for row in nonlin.rows.iter_mut() {
            row.set0(0.0);
            if self.desc.mo() >= 1 {
                for j in 0..nv {
                    row.set_coef(j + 1, 0.0);
                }
            }
        }
        let id = DaMap::identity_on(&self.desc);
        // w - E
        let shifted: Vec<Tpsa> = id
            .rows
            .iter()
            .zip(e.iter())
            .map(|(w, &ei)| w - ei)
            .collect();
        let apply_rinv = |v: &[Tpsa]| -> Vec<Tpsa> {
            (0..nv)
                .map(|i| {
                    let mut out = Tpsa::new(&self.desc);
                    for j in 0..nv {
                        let c = rinv[(i, j)];
                        if c != 0.0 {
                            out.axpy(c, &v[j]);
                        }
                    }
                    out
                })
                .collect()
        };
        let mut n = apply_rinv(&shifted);
        let max_iter = 4 * (self.desc.mo() as usize + 2) + 20;
        for _ in 0..max_iter {
            let nn = nonlin.compose(&DaMap {
                desc: Arc::clone(&self.desc),
                rows: n.clone(),
            })?;
            let rhs: Vec<Tpsa> = shifted.iter().zip(&nn.rows).map(|(s, q)| s - q).collect();
            let next = apply_rinv(&rhs);
            let delta = next
                .iter()
                .zip(&n)
                .map(|(a, b)| (a - b).max_abs())
                .fold(0.0, f64::max);
            n = next;
            if delta == 0.0 || delta < 1e-15 * (1.0 + n.iter().map(|t| t.max_abs()).fold(0.0, f64::max)) {
                break;
            }
        }
        Ok(DaMap {
            desc: Arc::clone(&self.desc),
            rows: n,
        })
    }

    /// Largest coefficient difference to another map.
    pub fn max_diff(&self, other: &DaMap) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| (a - b).max_abs())
            .fold(0.0, f64::max)
    }

    /// Text dump: each row's series dump under an `@ <name>` header.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (name, row) in self.desc.var_names().iter().zip(&self.rows) {
            let _ = writeln!(s, "@ {name}");
            s.push_str(&row.dump());
        }
        s
    }
}

impl std::fmt::Debug for DaMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.dump())
    }
}
