//! Named-column tables with header scalars, generated columns, row
//! ranges and TFS text files.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::rc::Rc;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Real(Vec<f64>),
    Str(Vec<String>),
    Complex(Vec<Complex64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Real(v) => v.len(),
            Column::Str(v) => v.len(),
            Column::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Column::Real(_) => "real",
            Column::Str(_) => "str",
            Column::Complex(_) => "complex",
        }
    }

    fn pick(&self, rows: &[usize]) -> Column {
        match self {
            Column::Real(v) => Column::Real(rows.iter().map(|&i| v[i]).collect()),
            Column::Str(v) => Column::Str(rows.iter().map(|&i| v[i].clone()).collect()),
            Column::Complex(v) => Column::Complex(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeaderVal {
    Real(f64),
    Str(String),
}

/// Lazily evaluated column: value of row `i` given the table.
pub type Generator = Rc<dyn Fn(&MTable, usize) -> Result<f64>>;

#[derive(Clone, Default)]
pub struct MTable {
    pub name: String,
    header: Vec<(String, HeaderVal)>,
    cols: Vec<(String, Column)>,
    gens: Vec<(String, Generator)>,
    // generated columns currently being evaluated, for cycle detection
    active: RefCell<Vec<String>>,
}

impl std::fmt::Debug for MTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MTable")
            .field("name", &self.name)
            .field("header", &self.header)
            .field("cols", &self.cols)
            .field("generated", &self.gens.iter().map(|g| &g.0).collect::<Vec<_>>())
            .finish()
    }
}

impl PartialEq for MTable {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.header == other.header && self.cols == other.cols
    }
}

impl MTable {
    pub fn new(name: &str) -> Self {
        MTable {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn nrows(&self) -> usize {
        self.cols.first().map_or(0, |(_, c)| c.len())
    }

    pub fn ncols(&self) -> usize {
        self.cols.len() + self.gens.len()
    }

    pub fn set_header(&mut self, name: &str, v: HeaderVal) {
        match self.header.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = v,
            None => self.header.push((name.to_string(), v)),
        }
    }

    pub fn set_header_num(&mut self, name: &str, v: f64) {
        self.set_header(name, HeaderVal::Real(v));
    }

    pub fn header(&self, name: &str) -> Option<&HeaderVal> {
        self.header.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn header_num(&self, name: &str) -> Result<f64> {
        match self.header(name) {
            Some(HeaderVal::Real(v)) => Ok(*v),
            Some(HeaderVal::Str(_)) => Err(Error::Table(format!("header '{name}' is not a number"))),
            None => Err(Error::Table(format!("no header '{name}' in table '{}'", self.name))),
        }
    }

    pub fn headers(&self) -> &[(String, HeaderVal)] {
        &self.header
    }

    /// Stored (non-generated) columns in order.
    pub fn columns(&self) -> &[(String, Column)] {
        &self.cols
    }

    pub fn column_names(&self) -> Vec<String> {
        self.cols
            .iter()
            .map(|c| c.0.clone())
            .chain(self.gens.iter().map(|g| g.0.clone()))
            .collect()
    }

    pub fn add_column(&mut self, name: &str, col: Column) -> Result<()> {
        if !self.cols.is_empty() && col.len() != self.nrows() {
            return Err(Error::Table(format!(
                "column '{name}' has {} rows, table has {}",
                col.len(),
                self.nrows()
            )));
        }
        if self.has_column(name) {
            return Err(Error::Table(format!("duplicate column '{name}'")));
        }
        self.cols.push((name.to_string(), col));
        Ok(())
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.cols.iter().any(|c| c.0 == name) || self.gens.iter().any(|g| g.0 == name)
    }

    /// Adds a column computed on read from row index and table.
    pub fn addcol(&mut self, name: &str, gen: impl Fn(&MTable, usize) -> Result<f64> + 'static) -> Result<()> {
        if self.has_column(name) {
            return Err(Error::Table(format!("duplicate column '{name}'")));
        }
        self.gens.push((name.to_string(), Rc::new(gen)));
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.cols.iter().find(|c| c.0 == name).map(|c| &c.1)
    }

    /// One real value, evaluating generators as needed.
    pub fn get(&self, name: &str, row: usize) -> Result<f64> {
        if let Some(col) = self.column(name) {
            return match col {
                Column::Real(v) => v
                    .get(row)
                    .copied()
                    .ok_or_else(|| Error::Table(format!("row {row} out of range"))),
                _ => Err(Error::Table(format!("column '{name}' is not real"))),
            };
        }
        let gen = self
            .gens
            .iter()
            .find(|g| g.0 == name)
            .map(|g| Rc::clone(&g.1))
            .ok_or_else(|| Error::Table(format!("no column '{name}' in table '{}'", self.name)))?;
        if self.active.borrow().iter().any(|n| n == name) {
            return Err(Error::Table(format!("generated column '{name}' depends on itself")));
        }
        self.active.borrow_mut().push(name.to_string());
        let r = gen(self, row);
        self.active.borrow_mut().pop();
        r
    }

    /// A real column (stored or generated) as a vector.
    pub fn real(&self, name: &str) -> Result<Vec<f64>> {
        match self.column(name) {
            Some(Column::Real(v)) => Ok(v.clone()),
            Some(_) => Err(Error::Table(format!("column '{name}' is not real"))),
            None => (0..self.nrows()).map(|i| self.get(name, i)).collect(),
        }
    }

    /// Column as an algebraic vector supporting element-wise arithmetic.
    pub fn vector(&self, name: &str) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.real(name)?))
    }

    pub fn strings(&self, name: &str) -> Result<&[String]> {
        match self.column(name) {
            Some(Column::Str(v)) => Ok(v),
            _ => Err(Error::Table(format!("no string column '{name}'"))),
        }
    }

    pub fn complex(&self, name: &str) -> Result<&[Complex64]> {
        match self.column(name) {
            Some(Column::Complex(v)) => Ok(v),
            _ => Err(Error::Table(format!("no complex column '{name}'"))),
        }
    }

    /// Row of the `occurrence`-th (1-based) row whose `name` is `elem`.
    pub fn row_of(&self, elem: &str, occurrence: usize) -> Result<usize> {
        let names = self.strings("name")?;
        names
            .iter()
            .enumerate()
            .filter(|(_, n)| *n == elem)
            .nth(occurrence.saturating_sub(1))
            .map(|(i, _)| i)
            .ok_or_else(|| Error::Lookup(format!("no row '{elem}' in table '{}'", self.name)))
    }

    fn resolve_row(&self, spec: &str) -> Result<usize> {
        let spec = spec.trim();
        match spec {
            "#s" => return Ok(0),
            "#e" => return Ok(self.nrows().saturating_sub(1)),
            _ => {}
        }
        match spec.find('[') {
            Some(p) if spec.ends_with(']') => {
                let occ = spec[p + 1..spec.len() - 1]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Lookup(format!("bad occurrence in '{spec}'")))?;
                self.row_of(&spec[..p], occ)
            }
            _ => self.row_of(spec, 1),
        }
    }

    /// Rows from `A` to `B` inclusive for a spec `"A/B"` (a single name
    /// selects one row). When `B` comes before `A` the range wraps around.
    /// An empty spec selects nothing.
    pub fn select_range(&self, spec: &str) -> Result<MTable> {
        let rows: Vec<usize> = if spec.trim().is_empty() {
            Vec::new()
        } else {
            let (a, b) = match spec.split_once('/') {
                Some((a, b)) => (self.resolve_row(a)?, self.resolve_row(b)?),
                None => {
                    let r = self.resolve_row(spec)?;
                    (r, r)
                }
            };
            if a <= b {
                (a..=b).collect()
            } else {
                (a..self.nrows()).chain(0..=b).collect()
            }
        };
        self.select_rows(&rows)
    }

    /// New table holding the listed rows; generated columns are
    /// materialized.
    pub fn select_rows(&self, rows: &[usize]) -> Result<MTable> {
        let mut out = MTable::new(&self.name);
        out.header = self.header.clone();
        for (n, c) in &self.cols {
            out.cols.push((n.clone(), c.pick(rows)));
        }
        for (n, _) in &self.gens {
            let v = rows.iter().map(|&i| self.get(n, i)).collect::<Result<Vec<_>>>()?;
            out.cols.push((n.clone(), Column::Real(v)));
        }
        Ok(out)
    }

    /// Copy with generated columns turned into stored ones.
    pub fn materialize(&self) -> Result<MTable> {
        let rows: Vec<usize> = (0..self.nrows()).collect();
        self.select_rows(&rows)
    }

    pub fn to_tfs(&self) -> Result<String> {
        let t = self.materialize()?;
        let mut s = String::new();
        let _ = writeln!(s, "@ {:<16} %s \"{}\"", "name", escape(&t.name));
        for (n, v) in &t.header {
            match v {
                HeaderVal::Real(x) => {
                    let _ = writeln!(s, "@ {n:<16} %le {}", fmt_f64(*x));
                }
                HeaderVal::Str(x) => {
                    let _ = writeln!(s, "@ {n:<16} %s \"{}\"", escape(x));
                }
            }
        }
        let mut names = Vec::new();
        let mut types = Vec::new();
        for (n, c) in &t.cols {
            match c {
                Column::Real(_) => {
                    names.push(n.clone());
                    types.push("%le");
                }
                Column::Str(_) => {
                    names.push(n.clone());
                    types.push("%s");
                }
                Column::Complex(_) => {
                    names.push(format!("{n}_re"));
                    names.push(format!("{n}_im"));
                    types.push("%le");
                    types.push("%le");
                }
            }
        }
        let _ = writeln!(s, "* {}", names.join(" "));
        let _ = writeln!(s, "$ {}", types.join(" "));
        for i in 0..t.nrows() {
            let mut fields = Vec::with_capacity(names.len());
            for (_, c) in &t.cols {
                match c {
                    Column::Real(v) => fields.push(fmt_f64(v[i])),
                    Column::Str(v) => fields.push(format!("\"{}\"", escape(&v[i]))),
                    Column::Complex(v) => {
                        fields.push(fmt_f64(v[i].re));
                        fields.push(fmt_f64(v[i].im));
                    }
                }
            }
            let _ = writeln!(s, " {}", fields.join(" "));
        }
        Ok(s)
    }

    pub fn write_tfs(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_tfs()?)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
    }

    pub fn read_tfs(path: &std::path::Path) -> Result<MTable> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        MTable::from_tfs(&text)
    }

    pub fn from_tfs(text: &str) -> Result<MTable> {
        let mut t = MTable::new("");
        let mut names: Vec<String> = Vec::new();
        let mut types: Vec<String> = Vec::new();
        let mut data: Vec<Vec<String>> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let ln = ln + 1;
            let bad = |msg: &str| Error::Table(format!("TFS line {ln}: {msg}"));
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('@') {
                let toks = split_fields(rest).map_err(|m| bad(&m))?;
                if toks.len() != 3 {
                    return Err(bad("header needs a name, a type and a value"));
                }
                let (n, ty, v) = (&toks[0], toks[1].as_str(), &toks[2]);
                if n == "name" && ty == "%s" {
                    t.name = v.clone();
                    continue;
                }
                let hv = if ty == "%s" {
                    HeaderVal::Str(v.clone())
                } else if ty.starts_with('%') {
                    HeaderVal::Real(v.parse().map_err(|_| bad(&format!("bad number '{v}'")))?)
                } else {
                    return Err(bad(&format!("bad header type '{ty}'")));
                };
                t.header.push((n.clone(), hv));
            } else if let Some(rest) = trimmed.strip_prefix('*') {
                names = rest.split_whitespace().map(str::to_string).collect();
            } else if let Some(rest) = trimmed.strip_prefix('$') {
                types = rest.split_whitespace().map(str::to_string).collect();
                if types.len() != names.len() {
                    return Err(bad("type row does not match the column names"));
                }
            } else {
                if names.is_empty() || types.is_empty() {
                    return Err(bad("data row before the column definitions"));
                }
                let f = split_fields(trimmed).map_err(|m| bad(&m))?;
                if f.len() != names.len() {
                    return Err(bad(&format!(
                        "expected {} fields, found {}",
                        names.len(),
                        f.len()
                    )));
                }
                for (k, ty) in types.iter().enumerate() {
                    if ty != "%s" && f[k].parse::<f64>().is_err() {
                        return Err(bad(&format!("bad number '{}' in column {}", f[k], names[k])));
                    }
                }
                data.push(f);
            }
        }
        let mut k = 0;
        while k < names.len() {
            let n = &names[k];
            let col_f = |k: usize| -> Vec<f64> {
                data.iter().map(|r| r[k].parse().expect("checked")).collect()
            };
            if types[k] == "%s" {
                t.cols.push((n.clone(), Column::Str(data.iter().map(|r| r[k].clone()).collect())));
                k += 1;
            } else if let Some(base) = n.strip_suffix("_re") {
                if names.get(k + 1).map(String::as_str) == Some(&format!("{base}_im")) && types[k + 1] != "%s" {
                    let re = col_f(k);
                    let im = col_f(k + 1);
                    let c = re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect();
                    t.cols.push((base.to_string(), Column::Complex(c)));
                    k += 2;
                } else {
                    t.cols.push((n.clone(), Column::Real(col_f(k))));
                    k += 1;
                }
            } else {
                t.cols.push((n.clone(), Column::Real(col_f(k))));
                k += 1;
            }
        }
        Ok(t)
    }

    /// CSV of the selected columns (all when `cols` is empty).
    pub fn to_csv(&self, cols: &[&str]) -> Result<String> {
        let t = self.materialize()?;
        let chosen: Vec<&(String, Column)> = if cols.is_empty() {
            t.cols.iter().collect()
        } else {
            cols.iter()
                .map(|c| {
                    t.cols
                        .iter()
                        .find(|x| x.0 == *c)
                        .ok_or_else(|| Error::Table(format!("no column '{c}'")))
                })
                .collect::<Result<_>>()?
        };
        let mut s = String::new();
        let head: Vec<String> = chosen
            .iter()
            .flat_map(|(n, c)| match c {
                Column::Complex(_) => vec![format!("{n}_re"), format!("{n}_im")],
                _ => vec![n.clone()],
            })
            .collect();
        let _ = writeln!(s, "{}", head.join(","));
        for i in 0..t.nrows() {
            let row: Vec<String> = chosen
                .iter()
                .flat_map(|(_, c)| match c {
                    Column::Real(v) => vec![fmt_f64(v[i])],
                    Column::Str(v) => vec![v[i].clone()],
                    Column::Complex(v) => vec![fmt_f64(v[i].re), fmt_f64(v[i].im)],
                })
                .collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        Ok(s)
    }
}

/// Shortest decimal that reads back to the same double.
fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Splits on whitespace, keeping double-quoted fields (with `\"` escapes)
/// together and unquoted.
fn split_fields(s: &str) -> std::result::Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut f = String::new();
            loop {
                match chars.next() {
                    None => return Err("unterminated string".into()),
                    Some('\\') => match chars.next() {
                        Some(e) => f.push(e),
                        None => return Err("unterminated string".into()),
                    },
                    Some('"') => break,
                    Some(x) => f.push(x),
                }
            }
            out.push(f);
        } else {
            let mut f = String::new();
            while let Some(&x) = chars.peek() {
                if x.is_whitespace() {
                    break;
                }
                f.push(x);
                chars.next();
            }
            out.push(f);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MTable {
        let mut t = MTable::new("tw");
        t.set_header_num("q1", 0.25);
        t.set_header("title", HeaderVal::Str("a \"fodo\"".into()));
        t.add_column("name", Column::Str(vec!["$start".into(), "qf".into(), "qd".into(), "qf".into()])).unwrap();
        t.add_column("s", Column::Real(vec![0.0, 1.0, 0.1 + 0.2, 1.0 / 3.0])).unwrap();
        t.add_column(
            "f4000",
            Column::Complex(vec![Complex64::new(1e-300, -2.5); 4]),
        )
        .unwrap();
        t
    }

    #[test]
    fn tfs_roundtrip_is_exact() {
        let t = sample();
        let back = MTable::from_tfs(&t.to_tfs().unwrap()).unwrap();
        assert_eq!(back, t);
        let empty = MTable::new("e");
        assert_eq!(MTable::from_tfs(&empty.to_tfs().unwrap()).unwrap(), empty);
    }

    #[test]
    fn malformed_tfs_reports_line() {
        let bad = "@ name %s \"x\"\n* a b\n$ %le %le\n 1 2\n 1\n";
        let e = MTable::from_tfs(bad).unwrap_err().to_string();
        assert!(e.contains("line 5"), "{e}");
    }

    #[test]
    fn generated_columns_resolve_in_order() {
        let mut t = sample();
        t.addcol("two", |_, _| Ok(2.0)).unwrap();
        t.addcol("s2", |t, i| Ok(t.get("s", i)? * t.get("two", i)?)).unwrap();
        assert_eq!(t.real("two").unwrap(), vec![2.0; 4]);
        assert_eq!(t.get("s2", 1).unwrap(), 2.0);
        t.addcol("loop", |t, i| t.get("loop", i)).unwrap();
        assert!(t.get("loop", 0).is_err());
    }

    #[test]
    fn ranges_and_occurrences() {
        let t = sample();
        assert_eq!(t.row_of("qf", 2).unwrap(), 3);
        let r = t.select_range("qf/qd").unwrap();
        assert_eq!(r.strings("name").unwrap(), &["qf", "qd"]);
        let w = t.select_range("qd/qf").unwrap();
        assert_eq!(w.strings("name").unwrap(), &["qd", "qf", "$start", "qf"]);
        assert_eq!(t.select_range("").unwrap().nrows(), 0);
        assert_eq!(t.select_range("qf[2]").unwrap().nrows(), 1);
    }

    #[test]
    fn columns_are_vectors() {
        let t = sample();
        let s = t.vector("s").unwrap();
        let scaled = &s * 3.0 + DVector::from_element(4, 1.0);
        for i in 0..4 {
            assert_eq!(scaled[i], t.get("s", i).unwrap() * 3.0 + 1.0);
        }
    }
}
