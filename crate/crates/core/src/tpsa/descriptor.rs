use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

/// Default names of the phase-space variables, in slot order.
const PHASE_NAMES: [&str; 6] = ["x", "px", "y", "py", "t", "pt"];

/// Upper bound on product-table entries before the multiplication kernel
/// falls back to computing monomial indices on the fly.
const MAX_PRODUCT_PAIRS: usize = 40_000_000;

/// Signature of a truncated power series algebra.
///
/// `nv` variables and `np` parameters share one exponent vector of length
/// `nv + np`. A monomial is admissible when its total degree is at most `mo`
/// and the degree carried by the parameter slots is at most `po`.
///
/// Monomials are ordered by total degree first; inside one degree the
/// exponent vectors are sorted in decreasing lexicographic order with slot 0
/// most significant. Index 0 is the constant and indices `1..=nv+np` are the
/// unit monomials in slot order.
pub struct Descriptor {
    nv: usize,
    mo: u8,
    np: usize,
    po: u8,
    vn: Vec<String>,
    pn: Vec<String>,
    /// `counts[(k * (mo + 1) + d) * (po + 1) + p]`: number of exponent
    /// vectors over slots `k..nv+np` of total degree exactly `d` whose
    /// parameter degree is at most `p`.
    counts: Vec<u64>,
    /// `ord_start[d]` is the index of the first monomial of degree `d`;
    /// `ord_start[mo + 1]` is the size.
    ord_start: Vec<usize>,
    /// Flattened exponent table, `size * nslots` entries.
    monos: Vec<u8>,
    prod: OnceLock<Option<ProductTable>>,
}

/// Sparse multiplication table: for every monomial `i`, the admissible
/// partners `j >= i` and the index of `i + j`.
pub(crate) struct ProductTable {
    pub(crate) start: Vec<usize>,
    pub(crate) pairs: Vec<(u32, u32)>,
}

impl Descriptor {
    /// Builds a descriptor, naming variables after the phase-space
    /// coordinates when `nv <= 6`.
    pub fn new(nv: usize, mo: u8, np: usize, po: u8, pn: &[&str]) -> Result<Arc<Self>> {
        let vn: Vec<String> = (0..nv)
            .map(|i| {
                if nv <= PHASE_NAMES.len() {
                    PHASE_NAMES[i].to_string()
                } else {
                    format!("v{}", i + 1)
                }
            })
            .collect();
        let pn: Vec<String> = if pn.is_empty() {
            (1..=np).map(|k| format!("k{k}")).collect()
        } else {
            pn.iter().map(|s| s.to_string()).collect()
        };
        Self::with_names(vn, mo, pn, po)
    }

    /// Builds a descriptor from explicit variable and parameter names.
    pub fn with_names(vn: Vec<String>, mo: u8, pn: Vec<String>, po: u8) -> Result<Arc<Self>> {
        let nv = vn.len();
        let np = pn.len();
        if nv == 0 {
            return Err(Error::Descriptor("nv must be at least 1".into()));
        }
        if po > mo {
            return Err(Error::Descriptor(format!("po={po} exceeds mo={mo}")));
        }
        let mut seen = std::collections::HashSet::new();
        for name in vn.iter().chain(pn.iter()) {
            if !seen.insert(name.as_str()) {
                return Err(Error::Descriptor(format!("duplicate slot name '{name}'")));
            }
        }
        let nslots = nv + np;
        if nslots > u32::MAX as usize / 2 {
            return Err(Error::Descriptor("too many slots".into()));
        }
        let po = if np == 0 { 0 } else { po };
        let mo_us = mo as usize;
        let po_us = po as usize;
        let stride_d = po_us + 1;
        let stride_k = (mo_us + 1) * stride_d;
        let mut counts = vec![0u64; (nslots + 1) * stride_k];
        for p in 0..=po_us {
            counts[nslots * stride_k + p] = 1;
        }
        for k in (0..nslots).rev() {
            let is_param = k >= nv;
            for d in 0..=mo_us {
                for p in 0..=po_us {
                    let mut c = 0u64;
                    for e in 0..=d {
                        if is_param {
                            if e > p {
                                break;
                            }
                            c = c.saturating_add(counts[(k + 1) * stride_k + (d - e) * stride_d + (p - e)]);
                        } else {
                            c = c.saturating_add(counts[(k + 1) * stride_k + (d - e) * stride_d + p]);
                        }
                    }
                    counts[k * stride_k + d * stride_d + p] = c;
                }
            }
        }
        let mut ord_start = Vec::with_capacity(mo_us + 2);
        let mut acc = 0u64;
        for d in 0..=mo_us {
            ord_start.push(acc as usize);
            acc = acc.saturating_add(counts[d * stride_d + po_us]);
        }
        if acc > (u32::MAX as u64) {
            return Err(Error::Descriptor(format!("algebra size {acc} is too large")));
        }
        ord_start.push(acc as usize);

        let mut desc = Descriptor {
            nv,
            mo,
            np,
            po,
            vn,
            pn,
            counts,
            ord_start,
            monos: Vec::new(),
            prod: OnceLock::new(),
        };
        desc.monos = desc.enumerate();
        Ok(Arc::new(desc))
    }

    fn enumerate(&self) -> Vec<u8> {
        let n = self.nslots();
        let mut out = Vec::with_capacity(self.size() * n);
        let mut cur = vec![0u8; n];
        for d in 0..=self.mo {
            self.fill(0, d, self.po, &mut cur, &mut out);
        }
        out
    }

    fn fill(&self, k: usize, rem: u8, pcap: u8, cur: &mut [u8], out: &mut Vec<u8>) {
        let n = cur.len();
        if k == n - 1 {
            let is_param = k >= self.nv;
            if is_param && rem > pcap {
                return;
            }
            cur[k] = rem;
            out.extend_from_slice(cur);
            cur[k] = 0;
            return;
        }
        let is_param = k >= self.nv;
        let top = if is_param { rem.min(pcap) } else { rem };
        for e in (0..=top).rev() {
            cur[k] = e;
            let pc = if is_param { pcap - e } else { pcap };
            self.fill(k + 1, rem - e, pc, cur, out);
        }
        cur[k] = 0;
    }

    #[inline]
    fn count(&self, k: usize, d: usize, p: usize) -> u64 {
        let stride_d = self.po as usize + 1;
        let stride_k = (self.mo as usize + 1) * stride_d;
        self.counts[k * stride_k + d * stride_d + p]
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn np(&self) -> usize {
        self.np
    }

    pub fn mo(&self) -> u8 {
        self.mo
    }

    pub fn po(&self) -> u8 {
        self.po
    }

    /// Total number of slots, variables first.
    pub fn nslots(&self) -> usize {
        self.nv + self.np
    }

    pub fn var_names(&self) -> &[String] {
        &self.vn
    }

    pub fn param_names(&self) -> &[String] {
        &self.pn
    }

    /// Slot of a variable or parameter by name.
    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.vn
            .iter()
            .chain(self.pn.iter())
            .position(|s| s == name)
    }

    /// Number of coefficients up to and including `mo`.
    pub fn size(&self) -> usize {
        self.ord_start[self.mo as usize + 1]
    }

    /// Number of admissible monomials of total degree `<= order`.
    pub fn size_at(&self, order: u8) -> Result<usize> {
        if order > self.mo {
            return Err(Error::Range(format!("order {order} exceeds mo={}", self.mo)));
        }
        Ok(self.ord_start[order as usize + 1])
    }

    /// Index range `[start, end)` of the monomials of degree `d`.
    pub fn order_range(&self, d: u8) -> std::ops::Range<usize> {
        let d = d.min(self.mo) as usize;
        self.ord_start[d]..self.ord_start[d + 1]
    }

    /// Index one past the last monomial of degree `<= d`.
    #[inline]
    pub(crate) fn end_of_order(&self, d: u8) -> usize {
        self.ord_start[d.min(self.mo) as usize + 1]
    }

    /// Exponents of the monomial at `i` (unchecked slice view).
    #[inline]
    pub fn exponents(&self, i: usize) -> &[u8] {
        let n = self.nslots();
        &self.monos[i * n..(i + 1) * n]
    }

    /// Total degree of the monomial at index `i`.
    #[inline]
    pub fn degree_of(&self, i: usize) -> u8 {
        match self.ord_start.binary_search(&i) {
            Ok(mut d) => {
                // skip empty degree blocks
                while self.ord_start[d + 1] == i {
                    d += 1;
                }
                d as u8
            }
            Err(d) => (d - 1) as u8,
        }
    }

    /// Checks admissibility, reporting which cap is violated.
    pub fn check(&self, m: &[u8]) -> Result<()> {
        if m.len() != self.nslots() {
            return Err(Error::Monomial(format!(
                "exponent vector has length {}, expected {}",
                m.len(),
                self.nslots()
            )));
        }
        let total: u32 = m.iter().map(|&e| e as u32).sum();
        let pdeg: u32 = m[self.nv..].iter().map(|&e| e as u32).sum();
        if total > self.mo as u32 {
            return Err(Error::Monomial(format!(
                "total degree {total} exceeds mo={}",
                self.mo
            )));
        }
        if pdeg > self.po as u32 {
            return Err(Error::Monomial(format!(
                "parameter degree {pdeg} exceeds po={}",
                self.po
            )));
        }
        Ok(())
    }

    /// Canonical index of an admissible monomial.
    pub fn mono_index(&self, m: &[u8]) -> Result<usize> {
        self.check(m)?;
        Ok(self.index_unchecked(m))
    }

    /// Index of a monomial already known to be admissible. Runs in
    /// `O(nslots * mo)` with no intermediate larger than the algebra size.
    pub(crate) fn index_unchecked(&self, m: &[u8]) -> usize {
        let n = m.len();
        let d: usize = m.iter().map(|&e| e as usize).sum();
        let mut rank = 0u64;
        let mut rem = d;
        let mut pcap = self.po as usize;
        for (k, &e) in m.iter().enumerate().take(n - 1) {
            let e = e as usize;
            let is_param = k >= self.nv;
            for v in (e + 1)..=rem {
                if is_param {
                    if v > pcap {
                        break;
                    }
                    rank += self.count(k + 1, rem - v, pcap - v);
                } else {
                    rank += self.count(k + 1, rem - v, pcap);
                }
            }
            rem -= e;
            if is_param {
                pcap -= e;
            }
            if rem == 0 {
                break;
            }
        }
        self.ord_start[d] + rank as usize
    }

    /// Exponent vector of the monomial at index `i`.
    pub fn index_mono(&self, i: usize) -> Result<Vec<u8>> {
        if i >= self.size() {
            return Err(Error::Range(format!(
                "index {i} out of range 0..{}",
                self.size()
            )));
        }
        Ok(self.exponents(i).to_vec())
    }

    /// Inverse of [`Descriptor::mono_index`] computed from the counting
    /// tables alone, without the stored exponent table.
    pub fn unrank(&self, i: usize) -> Result<Vec<u8>> {
        if i >= self.size() {
            return Err(Error::Range(format!(
                "index {i} out of range 0..{}",
                self.size()
            )));
        }
        let n = self.nslots();
        let d = self.degree_of(i) as usize;
        let mut rank = (i - self.ord_start[d]) as u64;
        let mut m = vec![0u8; n];
        let mut rem = d;
        let mut pcap = self.po as usize;
        for k in 0..n - 1 {
            let is_param = k >= self.nv;
            let top = if is_param { rem.min(pcap) } else { rem };
            let mut chosen = 0;
            for v in (0..=top).rev() {
                let c = if is_param {
                    self.count(k + 1, rem - v, pcap - v)
                } else {
                    self.count(k + 1, rem - v, pcap)
                };
                if rank < c {
                    chosen = v;
                    break;
                }
                rank -= c;
            }
            m[k] = chosen as u8;
            rem -= chosen;
            if is_param {
                pcap -= chosen;
            }
        }
        m[n - 1] = rem as u8;
        Ok(m)
    }

    /// Degree carried by the parameter slots of monomial `i`.
    #[inline]
    pub(crate) fn param_degree(&self, i: usize) -> u8 {
        self.exponents(i)[self.nv..].iter().sum()
    }

    pub(crate) fn product_table(&self) -> Option<&ProductTable> {
        self.prod.get_or_init(|| self.build_product_table()).as_ref()
    }

    fn build_product_table(&self) -> Option<ProductTable> {
        let size = self.size();
        let n = self.nslots();
        let mut start = Vec::with_capacity(size + 1);
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        let mut buf = vec![0u8; n];
        let pdeg: Vec<u8> = (0..size).map(|i| self.param_degree(i)).collect();
        for i in 0..size {
            start.push(pairs.len());
            let di = self.degree_of(i);
            let ei = self.exponents(i);
            let jmax = self.end_of_order(self.mo - di);
            for j in i..jmax {
                if pdeg[i] + pdeg[j] > self.po {
                    continue;
                }
                let ej = self.exponents(j);
                for s in 0..n {
                    buf[s] = ei[s] + ej[s];
                }
                let k = self.index_unchecked(&buf);
                pairs.push((j as u32, k as u32));
            }
            if pairs.len() > MAX_PRODUCT_PAIRS {
                return None;
            }
        }
        start.push(pairs.len());
        Some(ProductTable { start, pairs })
    }

    /// Structural equality of two algebras (same slots, orders and names).
    pub fn same_as(&self, other: &Descriptor) -> bool {
        std::ptr::eq(self, other)
            || (self.nv == other.nv
                && self.mo == other.mo
                && self.np == other.np
                && self.po == other.po
                && self.vn == other.vn
                && self.pn == other.pn)
    }
}

impl fmt::Debug for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Descriptor")
            .field("nv", &self.nv)
            .field("mo", &self.mo)
            .field("np", &self.np)
            .field("po", &self.po)
            .field("pn", &self.pn)
            .field("size", &self.size())
            .finish()
    }
}
