//! Statement execution: definitions into the environment, commands into
//! the engines, tables kept by name.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::engine::{survey, track_particles, Observe, TrackOpts};
use crate::error::{Error, Result};
use crate::geom::Frame as SurveyFrame;
use crate::lattice::element::{LIST_ATTRS, STR_ATTRS};
use crate::lattice::{
    sequence_from_line, Attr, BLine, Beam, Element, Env, Expr, Kind, LineItem, Refer, Sequence, Target, Value,
};
use crate::matching::{Equality, Problem, Variable};
use crate::mtable::{Column, HeaderVal, MTable};
use crate::optics::{cofind, twiss_nf, CoOpts, NormalForm, TwissInit, TwissOpts};
use crate::protocol::Frame;
use crate::tpsa::{Descriptor, Tpsa};

use super::ast::{Arg, Item, ItemTarget, Stmt, Val};
use super::parser::{parse_located, Located};

/// Commands producing tables, which a match block can iterate.
const TABLE_COMMANDS: &[&str] = &["survey", "track", "twiss", "cofind"];

/// Accessor over the arguments of one command; every argument must be
/// consumed before [`Args::finish`].
struct Args<'a> {
    cmd: &'a str,
    list: &'a [Arg],
    env: &'a Env,
    used: Vec<bool>,
}

impl<'a> Args<'a> {
    fn new(cmd: &'a str, list: &'a [Arg], env: &'a Env) -> Self {
        Args {
            cmd,
            list,
            env,
            used: vec![false; list.len()],
        }
    }

    fn get(&mut self, key: &str) -> Option<&'a Arg> {
        let mut found = None;
        for (i, a) in self.list.iter().enumerate() {
            if a.name.as_deref() == Some(key) {
                self.used[i] = true;
                found = Some(a);
            }
        }
        found
    }

    fn mismatch(&self, key: &str, want: &str) -> Error {
        Error::Eval(format!("{}: attribute '{key}' expects {want}", self.cmd))
    }

    fn num(&mut self, key: &str) -> Result<Option<f64>> {
        match self.get(key).map(|a| &a.val) {
            None => Ok(None),
            Some(Val::Expr(e)) => Ok(Some(e.eval_num(self.env)?)),
            Some(_) => Err(self.mismatch(key, "a number")),
        }
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>> {
        match self.num(key)? {
            None => Ok(None),
            Some(v) if v >= 0.0 && v.fract() == 0.0 => Ok(Some(v as usize)),
            Some(_) => Err(self.mismatch(key, "a non-negative whole number")),
        }
    }

    fn expr(&mut self, key: &str) -> Result<Option<Expr>> {
        match self.get(key).map(|a| &a.val) {
            None => Ok(None),
            Some(Val::Expr(e)) => Ok(Some(e.clone())),
            Some(_) => Err(self.mismatch(key, "an expression")),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.get(key).map(|a| &a.val) {
            None => Ok(None),
            Some(v) => Ok(Some(word(v).ok_or_else(|| self.mismatch(key, "a name or a string"))?)),
        }
    }

    /// A list of names, or a single one.
    fn names(&mut self, key: &str) -> Result<Vec<String>> {
        match self.get(key).map(|a| &a.val) {
            None => Ok(Vec::new()),
            Some(Val::List(items)) => items
                .iter()
                .map(|v| word(v).ok_or_else(|| self.mismatch(key, "a list of names")))
                .collect(),
            Some(v) => Ok(vec![word(v).ok_or_else(|| self.mismatch(key, "a list of names"))?]),
        }
    }

    /// A list of numbers, or a single one.
    fn nums(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key).map(|a| &a.val) {
            None => Ok(None),
            Some(Val::List(items)) => items
                .iter()
                .map(|v| match v {
                    Val::Expr(e) => e.eval_num(self.env),
                    _ => Err(self.mismatch(key, "a list of numbers")),
                })
                .collect::<Result<_>>()
                .map(Some),
            Some(Val::Expr(e)) => Ok(Some(vec![e.eval_num(self.env)?])),
            Some(_) => Err(self.mismatch(key, "numbers")),
        }
    }

    /// `key`, `key=true|false` or `key=<number>`.
    fn flag(&mut self, key: &str) -> Result<bool> {
        for (i, a) in self.list.iter().enumerate() {
            if a.name.is_none() && a.val == Val::Expr(Expr::Var(key.into())) {
                self.used[i] = true;
                return Ok(true);
            }
        }
        match self.get(key).map(|a| &a.val) {
            None => Ok(false),
            Some(Val::Expr(Expr::Var(v))) if v == "true" => Ok(true),
            Some(Val::Expr(Expr::Var(v))) if v == "false" => Ok(false),
            Some(Val::Expr(e)) => Ok(e.eval_num(self.env)? != 0.0),
            Some(_) => Err(self.mismatch(key, "true or false")),
        }
    }

    fn positional(&mut self) -> Vec<&'a Val> {
        let mut out = Vec::new();
        for (i, a) in self.list.iter().enumerate() {
            if a.name.is_none() && !self.used[i] {
                self.used[i] = true;
                out.push(&a.val);
            }
        }
        out
    }

    /// Arguments nobody asked for.
    fn rest(&self) -> Vec<Arg> {
        self.list
            .iter()
            .zip(&self.used)
            .filter(|(_, u)| !**u)
            .map(|(a, _)| a.clone())
            .collect()
    }

    fn finish(self) -> Result<()> {
        match self.list.iter().zip(&self.used).find(|(_, u)| !**u) {
            None => Ok(()),
            Some((a, _)) => Err(Error::Eval(match &a.name {
                Some(n) => format!("{}: unknown attribute '{n}'", self.cmd),
                None => format!("{}: unexpected argument '{}'", self.cmd, a.val),
            })),
        }
    }
}

/// A bare name or a string literal.
fn word(v: &Val) -> Option<String> {
    match v {
        Val::Str(s) => Some(s.clone()),
        Val::Expr(Expr::Var(n)) => Some(n.clone()),
        _ => None,
    }
}

/// Element attribute from its written form.
fn attr_of(elem: &str, key: &str, deferred: bool, v: &Val, env: &Env) -> Result<Attr> {
    let mismatch = |want: &str| Error::Eval(format!("'{elem}': attribute '{key}' expects {want}"));
    if STR_ATTRS.contains(&key) {
        return word(v).map(Attr::Str).ok_or_else(|| mismatch("a name or a string"));
    }
    let scalar = |v: &Val| -> Result<Attr> {
        match v {
            Val::Expr(e) if deferred => Ok(Attr::Lazy(e.clone())),
            Val::Expr(e) => Ok(Attr::Value(e.eval(env)?)),
            _ => Err(mismatch("a number")),
        }
    };
    match v {
        Val::List(items) if LIST_ATTRS.contains(&key) => {
            Ok(Attr::List(items.iter().map(scalar).collect::<Result<_>>()?))
        }
        Val::List(_) => Err(mismatch("a number, found a list")),
        Val::Str(_) => Err(mismatch("a number, found a string")),
        v => scalar(v),
    }
}

/// Element defined by `name: class, args`, skipping the keys in `skip`.
fn build_element(name: &str, class: &str, args: &[Arg], skip: &[&str], env: &Env) -> Result<Element> {
    let mut e = match Kind::from_name(class) {
        Some(k) => Element::new(name, k),
        None => match env.element(class) {
            Some(parent) => parent.derive(name),
            None => return Err(Error::Lookup(format!("unknown element class '{class}'"))),
        },
    };
    for a in args {
        let Some(key) = &a.name else {
            return Err(Error::Eval(format!("'{name}': unexpected argument '{}'", a.val)));
        };
        if skip.contains(&key.as_str()) {
            continue;
        }
        e.attrs.insert(key.clone(), attr_of(name, key, a.deferred, &a.val, env)?);
    }
    Ok(e)
}

/// Line members with their repetition counts evaluated.
fn line_items(items: &[Item], env: &Env) -> Result<Vec<LineItem>> {
    items
        .iter()
        .map(|it| {
            let n = it.times.eval_num(env)?;
            if n < 0.0 || n.fract() != 0.0 {
                return Err(Error::Lattice(format!("repetition count {} = {n} is not a whole number", it.times)));
            }
            let target = match &it.target {
                ItemTarget::Name(s) => Target::Name(s.clone()),
                ItemTarget::Group(g) => Target::Group(line_items(g, env)?),
            };
            Ok(LineItem {
                target,
                times: n as i64,
                at: it.at.clone(),
            })
        })
        .collect()
}

/// Statements between `match` and `endmatch`.
struct MatchBlock {
    args: Vec<Arg>,
    body: Vec<(String, Vec<Arg>)>,
}

/// Interpreter state of one script run, or of a serve session.
pub struct Session {
    pub env: Env,
    pub tables: BTreeMap<String, MTable>,
    /// Text printed by `value`, `print` and `match`.
    pub messages: Vec<String>,
    /// Frames produced by `send`.
    pub sent: Vec<Frame>,
    /// Directory against which `write` resolves relative paths.
    pub base: PathBuf,
    calls: Vec<PathBuf>,
    matching: Option<MatchBlock>,
    stopped: bool,
}

impl Default for Session {
    fn default() -> Self {
        Self::new()
    }
}

impl Session {
    pub fn new() -> Self {
        Session {
            env: Env::new(),
            tables: BTreeMap::new(),
            messages: Vec::new(),
            sent: Vec::new(),
            base: PathBuf::from("."),
            calls: Vec::new(),
            matching: None,
            stopped: false,
        }
    }

    pub fn table(&self, name: &str) -> Result<&MTable> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::Lookup(format!("no table '{name}'")))
    }

    /// Parses and runs a script; errors carry the line.
    pub fn exec_str(&mut self, src: &str) -> Result<()> {
        self.stopped = false;
        let stmts = parse_located(src)?;
        self.run(&stmts, None)?;
        self.close_match()
    }

    /// Runs a file; relative `call`s inside it resolve against its directory.
    pub fn exec_file(&mut self, path: &Path) -> Result<()> {
        self.stopped = false;
        self.call(path)?;
        self.close_match()
    }

    fn close_match(&mut self) -> Result<()> {
        match self.matching.take() {
            Some(_) => Err(Error::Match("match block without endmatch".into())),
            None => Ok(()),
        }
    }

    fn call(&mut self, path: &Path) -> Result<()> {
        let canon = path
            .canonicalize()
            .map_err(|e| Error::located(path.display().to_string(), e.into()))?;
        if self.calls.contains(&canon) {
            let chain: Vec<String> = self
                .calls
                .iter()
                .chain([&canon])
                .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into()))
                .collect();
            return Err(Error::Eval(format!("call cycle: {}", chain.join(" -> "))));
        }
        let src = std::fs::read_to_string(&canon)
            .map_err(|e| Error::located(path.display().to_string(), e.into()))?;
        let stmts = parse_located(&src).map_err(|e| Error::located(path.display().to_string(), e))?;
        self.calls.push(canon);
        let r = self.run(&stmts, Some(path));
        self.calls.pop();
        r
    }

    fn run(&mut self, stmts: &[Located], file: Option<&Path>) -> Result<()> {
        for l in stmts {
            if self.stopped {
                break;
            }
            self.stmt(&l.stmt).map_err(|e| {
                let place = match file {
                    Some(f) => format!("{}:{}", f.display(), l.line),
                    None => format!("line {}", l.line),
                };
                Error::located(place, e)
            })?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<()> {
        if self.matching.is_some() {
            return match s {
                Stmt::Command { name, args } => self.in_match(name, args),
                _ => Err(Error::Match("only vary, equality and endmatch may appear inside a match block".into())),
            };
        }
        match s {
            Stmt::Assign { name, deferred, expr } => {
                if *deferred {
                    self.env.set_deferred(name, expr.clone());
                } else {
                    let v = expr.eval(&self.env)?;
                    self.env.set(name, v);
                }
                Ok(())
            }
            Stmt::Define { name, class, args } => {
                let e = build_element(name, class, args, &[], &self.env)?;
                self.env.define_element(e);
                Ok(())
            }
            Stmt::Line { name, items } => {
                let items = line_items(items, &self.env)?;
                self.env.define_line(BLine {
                    name: name.clone(),
                    items,
                });
                Ok(())
            }
            Stmt::Sequence { name, args, body } => self.sequence(name, args, body),
            Stmt::Command { name, args } => self.command(name, args),
        }
    }

    fn sequence(&mut self, name: &str, args: &[Arg], body: &[Stmt]) -> Result<()> {
        let mut a = Args::new("sequence", args, &self.env);
        let refer = match a.string("refer")? {
            None => Refer::default(),
            Some(r) => Refer::from_name(&r).ok_or_else(|| Error::Lattice(format!("unknown refer '{r}'")))?,
        };
        let total = a.num("l")?;
        let from_line = a.string("line")?;
        a.finish()?;
        if let Some(ln) = from_line {
            if !body.is_empty() {
                return Err(Error::Lattice(format!("sequence '{name}' takes either line= or placements, not both")));
            }
            let line = self.env.line(&ln).ok_or_else(|| Error::Lookup(format!("unknown line '{ln}'")))?;
            let seq = sequence_from_line(name, &line, refer, total, &self.env)?;
            self.env.define_sequence(seq);
            return Ok(());
        }
        let mut entries = Vec::new();
        // `at` of each placed element, for `from`
        let mut placed: HashMap<String, f64> = HashMap::new();
        for st in body {
            let (elem, pargs): (Arc<Element>, &[Arg]) = match st {
                Stmt::Command { name, args } => {
                    let e = self
                        .env
                        .element(name)
                        .ok_or_else(|| Error::Lookup(format!("sequence '{name}': unknown element '{name}'")))?;
                    (e, args)
                }
                Stmt::Define { name, class, args } => {
                    let e = build_element(name, class, args, &["at", "from"], &self.env)?;
                    (self.env.define_element(e), args)
                }
                _ => return Err(Error::Lattice(format!("sequence '{name}' may only hold placements"))),
            };
            let ename = elem.name.clone();
            let mut pa = Args::new(&ename, pargs, &self.env);
            let at = pa.num("at")?;
            let from = pa.string("from")?;
            if matches!(st, Stmt::Command { .. }) {
                pa.finish()?;
            }
            let start = match at {
                None => None,
                Some(at) => {
                    let at = match &from {
                        None => at,
                        Some(f) => {
                            at + placed.get(f).ok_or_else(|| {
                                Error::Lookup(format!("'{ename}' placed from '{f}', which is not placed before it"))
                            })?
                        }
                    };
                    placed.entry(ename.clone()).or_insert(at);
                    Some(refer.entry(at, elem.length(&self.env)?))
                }
            };
            entries.push((elem, start));
        }
        let seq = Sequence::build(name, entries, refer, total, &self.env)?;
        self.env.define_sequence(seq);
        Ok(())
    }

    fn command(&mut self, name: &str, args: &[Arg]) -> Result<()> {
        match name {
            "beam" => self.beam(args),
            "cycle" => {
                let mut a = Args::new(name, args, &self.env);
                let seq = find_sequence(&self.env, a.string("sequence")?)?;
                let start = a.string("start")?.ok_or_else(|| Error::Eval("cycle: 'start' is required".into()))?;
                a.finish()?;
                let s = seq.cycle(&start)?;
                self.env.define_sequence(s);
                Ok(())
            }
            "call" => {
                let mut a = Args::new(name, args, &self.env);
                let mut files: Vec<String> = a.string("file")?.into_iter().collect();
                for v in a.positional() {
                    files.push(word(v).ok_or_else(|| Error::Eval("call: expects a file name".into()))?);
                }
                a.finish()?;
                if files.is_empty() {
                    return Err(Error::Eval("call: 'file' is required".into()));
                }
                for f in files {
                    let p = self.resolve_call(&f);
                    self.call(&p)?;
                }
                Ok(())
            }
            "value" => {
                let mut a = Args::new(name, args, &self.env);
                for v in a.positional() {
                    let Val::Expr(e) = v else {
                        return Err(Error::Eval(format!("value: '{v}' is not an expression")));
                    };
                    let x = e.eval_num(&self.env)?;
                    self.messages.push(format!("{e} = {x}"));
                }
                a.finish()
            }
            "print" => {
                let mut a = Args::new(name, args, &self.env);
                let mut text: Vec<String> = a.string("text")?.into_iter().collect();
                text.extend(a.positional().into_iter().map(|v| word(v).unwrap_or_else(|| v.to_string())));
                a.finish()?;
                self.messages.push(text.join(" "));
                Ok(())
            }
            "write" => self.write(args),
            "send" => self.send(args),
            "exit" | "stop" | "return" => {
                Args::new(name, args, &self.env).finish()?;
                self.stopped = true;
                Ok(())
            }
            "match" => {
                self.matching = Some(MatchBlock {
                    args: args.to_vec(),
                    body: Vec::new(),
                });
                Ok(())
            }
            "vary" | "equality" | "endmatch" => Err(Error::Match(format!("'{name}' outside a match block"))),
            n if TABLE_COMMANDS.contains(&n) => {
                let out = compute(&self.env, n, args, None)?;
                self.keep(out.table_name, out.table);
                Ok(())
            }
            other => Err(Error::UnknownCommand(other.to_string())),
        }
    }

    fn resolve_call(&self, f: &str) -> PathBuf {
        let p = PathBuf::from(f);
        if p.is_absolute() {
            return p;
        }
        match self.calls.last().and_then(|c| c.parent()) {
            Some(dir) => dir.join(p),
            None => self.base.join(p),
        }
    }

    /// Stores a table and exposes its numeric headers as `<table>.<header>`.
    fn keep(&mut self, name: String, t: MTable) {
        expose(&self.env, &name, &t);
        self.tables.insert(name, t);
    }

    fn beam(&mut self, args: &[Arg]) -> Result<()> {
        let mut a = Args::new("beam", args, &self.env);
        let particle = a.string("particle")?.unwrap_or_else(|| "proton".into());
        let beam = match (a.num("energy")?, a.num("pc")?, a.num("gamma")?) {
            (Some(e), None, None) => Beam::from_energy(&particle, e)?,
            (None, Some(pc), None) => Beam::from_pc(&particle, pc)?,
            (None, None, Some(g)) => Beam::from_gamma(&particle, g)?,
            (None, None, None) => Beam::from_energy(&particle, Beam::default().energy)?,
            _ => return Err(Error::Eval("beam: give one of energy, pc and gamma".into())),
        };
        let target = a.string("sequence")?;
        a.finish()?;
        match target {
            Some(s) => {
                let seq = find_sequence(&self.env, Some(s))?;
                self.env.define_sequence(seq.with_beam(beam));
            }
            None => {
                // the default beam, also given to every existing sequence
                for n in self.env.sequence_names() {
                    let seq = self.env.sequence(&n).expect("listed sequence");
                    self.env.define_sequence(seq.with_beam(beam.clone()));
                }
                self.env.set_beam(beam);
            }
        }
        Ok(())
    }

    fn write(&mut self, args: &[Arg]) -> Result<()> {
        let mut a = Args::new("write", args, &self.env);
        let table = a.string("table")?.ok_or_else(|| Error::Eval("write: 'table' is required".into()))?;
        let file = a.string("file")?.ok_or_else(|| Error::Eval("write: 'file' is required".into()))?;
        let format = a.string("format")?;
        let cols = a.names("columns")?;
        a.finish()?;
        let t = self.table(&table)?;
        let path = self.base.join(&file);
        let csv = match format.as_deref() {
            Some("csv") => true,
            Some("tfs") => false,
            Some(f) => return Err(Error::Eval(format!("write: unknown format '{f}'"))),
            None => file.ends_with(".csv"),
        };
        let text = if csv {
            let c: Vec<&str> = cols.iter().map(String::as_str).collect();
            t.to_csv(&c)?
        } else {
            let mut t = t.materialize()?;
            if !cols.is_empty() {
                t = keep_columns(&t, &cols)?;
            }
            t.to_tfs()?
        };
        std::fs::write(&path, text).map_err(|e| Error::located(path.display().to_string(), e.into()))?;
        Ok(())
    }

    fn send(&mut self, args: &[Arg]) -> Result<()> {
        let mut a = Args::new("send", args, &self.env);
        let vals = a.positional();
        a.finish()?;
        for v in vals {
            let f = self.payload(v)?;
            self.sent.push(f);
        }
        Ok(())
    }

    /// Frame for one `send` argument: a table, a table column, a list of
    /// numbers, a string, or the value of an expression.
    fn payload(&self, v: &Val) -> Result<Frame> {
        match v {
            Val::Str(s) => Ok(Frame::Str(s.clone())),
            Val::List(items) => {
                let xs = items
                    .iter()
                    .map(|i| match i {
                        Val::Expr(e) => e.eval_num(&self.env),
                        _ => Err(Error::Eval(format!("send: '{i}' is not a number"))),
                    })
                    .collect::<Result<_>>()?;
                Ok(Frame::Vec(xs))
            }
            Val::Expr(Expr::Var(n)) => {
                if let Some(t) = self.tables.get(n) {
                    return Frame::table(t);
                }
                if let Some((tn, cn)) = n.split_once('.') {
                    if let Some(t) = self.tables.get(tn) {
                        if t.has_column(cn) {
                            return match t.column(cn) {
                                Some(Column::Str(s)) => Ok(Frame::Tbl(vec![(cn.to_string(), Column::Str(s.clone()))])),
                                _ => Ok(Frame::Vec(t.real(cn)?)),
                            };
                        }
                    }
                }
                Ok(Frame::Num(self.env.get_num(n)?))
            }
            Val::Expr(e) => Ok(Frame::Num(e.eval_num(&self.env)?)),
        }
    }

    fn in_match(&mut self, name: &str, args: &[Arg]) -> Result<()> {
        match name {
            "vary" | "equality" => {
                self.matching.as_mut().expect("open match block").body.push((name.to_string(), args.to_vec()));
                Ok(())
            }
            "endmatch" => {
                Args::new(name, args, &self.env).finish()?;
                let block = self.matching.take().expect("open match block");
                self.run_match(block)
            }
            other => Err(Error::Match(format!("'{other}' inside a match block; only vary, equality and endmatch may appear"))),
        }
    }

    fn run_match(&mut self, block: MatchBlock) -> Result<()> {
        let env = self.env.clone();
        let mut a = Args::new("match", &block.args, &env);
        let command = a
            .string("command")?
            .ok_or_else(|| Error::Match("'command' is required (twiss, cofind, survey or track)".into()))?;
        if !TABLE_COMMANDS.contains(&command.as_str()) {
            return Err(Error::Match(format!("cannot iterate the command '{command}'")));
        }
        let fmin = a.num("fmin")?;
        let maxcall = a.count("maxcall")?;
        let bisec = a.count("bisec")?;
        let info = a.count("info")?;
        let jacobian = a.flag("jacobian")?;
        let forwarded = a.rest();
        let final_args = forwarded.clone();
        if jacobian && command != "twiss" {
            return Err(Error::Match("jacobian=true needs command=twiss".into()));
        }

        let mut vars = Vec::new();
        let mut eqs: Vec<(String, Expr, f64, f64)> = Vec::new();
        for (kind, args) in &block.body {
            let mut b = Args::new(kind, args, &env);
            if kind == "vary" {
                let n = b.string("name")?.ok_or_else(|| Error::Match("vary: 'name' is required".into()))?;
                let init = match b.num("init")? {
                    Some(v) => v,
                    None => env.get_num(&n)?,
                };
                let mut v = Variable::new(&n, init);
                if let Some(r) = b.num("rtol")? {
                    v = v.rtol(r);
                }
                v.min = b.num("min")?;
                v.max = b.num("max")?;
                vars.push(v);
            } else {
                let expr = b.expr("expr")?.ok_or_else(|| Error::Match("equality: 'expr' is required".into()))?;
                let n = b.string("name")?.unwrap_or_else(|| format!("c{}", eqs.len() + 1));
                let tol = b.num("tol")?.unwrap_or(1e-8);
                let w = b.num("weight")?.unwrap_or(1.0);
                eqs.push((n, expr, tol, w));
            }
            b.finish()?;
        }
        let names: Vec<String> = vars.iter().map(|v| v.name.clone()).collect();
        // parameters of the derivative series, one per variable
        let pd = if jacobian {
            let pn: Vec<&str> = names.iter().map(String::as_str).collect();
            Some(Descriptor::new(1, 1, names.len(), 1, &pn)?)
        } else {
            None
        };

        let cmd_env = env.clone();
        let cmd_names = names.clone();
        let cmd_pd = pd.clone();
        let cmd = command.clone();
        let mut p = Problem::new(move |x: &[f64]| -> Result<Point> {
            for (n, v) in cmd_names.iter().zip(x) {
                cmd_env.set(n, Value::Num(*v));
            }
            let knobs = cmd_pd.as_ref().map(|_| cmd_names.as_slice());
            let out = compute(&cmd_env, &cmd, &forwarded, knobs)?;
            let headers = match (&cmd_pd, &out.nf) {
                (Some(d), Some(nf)) => series_headers(&out.table, nf, d, out.order)?,
                _ => plain_headers(&out.table),
            };
            Ok(Point {
                x: x.to_vec(),
                table: out.table_name,
                headers,
            })
        });
        for (n, e, tol, w) in &eqs {
            let (e, env, names, pd) = (e.clone(), env.clone(), names.clone(), pd.clone());
            let mut q = Equality::new(n, *tol, move |pt: &Point| Ok(eval_at(&env, pt, &e, &names, pd.as_ref())?.get0()));
            q.weight = *w;
            p.equalities.push(q);
        }
        if let Some(d) = pd.clone() {
            let (env, names) = (env.clone(), names.clone());
            let exprs: Vec<Expr> = eqs.iter().map(|q| q.1.clone()).collect();
            p.jacobian = Some(Box::new(move |pt: &Point, _: &[f64]| {
                let mut j = DMatrix::zeros(exprs.len(), names.len());
                for (i, e) in exprs.iter().enumerate() {
                    let v = eval_at(&env, pt, e, &names, Some(&d))?;
                    if let Value::Series(t) = v {
                        for k in 0..names.len() {
                            j[(i, k)] = t.getm(&param_mono(&d, k))?;
                        }
                    }
                }
                Ok(j)
            }));
        }
        p.variables = vars;
        if let Some(f) = fmin {
            p.fmin = f;
        }
        if let Some(m) = maxcall {
            p.maxcall = m;
        }
        if let Some(b) = bisec {
            p.bisec = b;
        }
        if let Some(i) = info {
            p.info = i.min(255) as u8;
        }
        let r = p.solve()?;

        for (n, v) in names.iter().zip(&r.values) {
            env.set(n, Value::Num(*v));
        }
        // refresh the tables at the final point
        let out = compute(&env, &command, &final_args, None)?;
        self.keep(out.table_name, out.table);
        self.messages.extend(r.trace.iter().cloned());
        self.messages.push(r.summary.clone());
        let mut t = MTable::new("match");
        t.set_header("status", HeaderVal::Str(r.status.as_str().into()));
        t.set_header_num("penalty", r.penalty);
        t.set_header_num("calls", r.calls as f64);
        t.set_header_num("iterations", r.iterations as f64);
        t.add_column("name", Column::Str(names))?;
        t.add_column("value", Column::Real(r.values.clone()))?;
        self.keep("match".into(), t);
        Ok(())
    }
}

/// State handed from a match command to its constraints.
struct Point {
    x: Vec<f64>,
    table: String,
    headers: Vec<(String, Value)>,
}

fn param_mono(d: &Descriptor, k: usize) -> Vec<u8> {
    let mut m = vec![0u8; d.nslots()];
    m[d.nv() + k] = 1;
    m
}

/// Evaluates a constraint with the headers of `pt`; with a derivative
/// descriptor the variables themselves become series too.
fn eval_at(env: &Env, pt: &Point, e: &Expr, names: &[String], pd: Option<&Arc<Descriptor>>) -> Result<Value> {
    for (h, v) in &pt.headers {
        env.set(&format!("{}.{h}", pt.table), v.clone());
    }
    for (n, x) in names.iter().zip(&pt.x) {
        env.set(n, Value::Num(*x));
    }
    let Some(d) = pd else {
        return e.eval(env);
    };
    for (k, (n, x)) in names.iter().zip(&pt.x).enumerate() {
        let mut t = Tpsa::constant(d, *x);
        t.setm(&param_mono(d, k), 1.0)?;
        env.set(n, Value::Series(t));
    }
    let r = e.eval(env);
    for (n, x) in names.iter().zip(&pt.x) {
        env.set(n, Value::Num(*x));
    }
    r
}

fn plain_headers(t: &MTable) -> Vec<(String, Value)> {
    t.headers()
        .iter()
        .filter_map(|(h, v)| match v {
            HeaderVal::Real(x) => Some((h.clone(), Value::Num(*x))),
            HeaderVal::Str(_) => None,
        })
        .collect()
}

/// Headers with the tune and chromaticity derivatives by the knobs.
fn series_headers(t: &MTable, nf: &NormalForm, d: &Arc<Descriptor>, order: u8) -> Result<Vec<(String, Value)>> {
    let mut out = plain_headers(t);
    for (h, v) in out.iter_mut() {
        let deriv: Box<dyn Fn(usize) -> Result<f64>> = match h.as_str() {
            "q1" => Box::new(|k| nf.q1(Some(k))),
            "q2" => Box::new(|k| nf.q2(Some(k))),
            "dq1" if order >= 3 => Box::new(|k| nf.anh(0, &[0, 0, 1, k])),
            "dq2" if order >= 3 => Box::new(|k| nf.anh(1, &[0, 0, 1, k])),
            _ => continue,
        };
        let mut s = Tpsa::constant(d, v.get0());
        for k in 0..d.np() {
            s.setm(&param_mono(d, k), deriv(k + 1)?)?;
        }
        *v = Value::Series(s);
    }
    Ok(out)
}

fn expose(env: &Env, name: &str, t: &MTable) {
    for (h, v) in t.headers() {
        if let HeaderVal::Real(x) = v {
            env.set(&format!("{name}.{h}"), Value::Num(*x));
        }
    }
}

fn keep_columns(t: &MTable, cols: &[String]) -> Result<MTable> {
    let mut out = MTable::new(&t.name);
    for (h, v) in t.headers() {
        out.set_header(h, v.clone());
    }
    for c in cols {
        let col = t.column(c).ok_or_else(|| Error::Table(format!("no column '{c}'")))?;
        out.add_column(c, col.clone())?;
    }
    Ok(out)
}

fn find_sequence(env: &Env, name: Option<String>) -> Result<Arc<Sequence>> {
    match name {
        Some(n) => env.sequence(&n).ok_or_else(|| Error::Lookup(format!("unknown sequence '{n}'"))),
        None => {
            let all = env.sequence_names();
            match all.as_slice() {
                [one] => Ok(env.sequence(one).expect("listed sequence")),
                [] => Err(Error::Lookup("no sequence defined".into())),
                _ => Err(Error::Lookup(format!("several sequences ({}); name one with sequence=", all.join(", ")))),
            }
        }
    }
}

/// Result of a table command.
pub struct Output {
    pub table_name: String,
    pub table: MTable,
    pub nf: Option<NormalForm>,
    pub order: u8,
}

const COORDS: [&str; 6] = ["x", "px", "y", "py", "t", "pt"];

fn coords(a: &mut Args) -> Result<Option<[f64; 6]>> {
    let mut z = [0.0; 6];
    let mut any = false;
    for (i, c) in COORDS.iter().enumerate() {
        if let Some(v) = a.num(c)? {
            z[i] = v;
            any = true;
        }
    }
    Ok(any.then_some(z))
}

/// Runs `survey`, `track`, `twiss` or `cofind` with the given arguments.
/// `knobs` overrides the knob list of a twiss.
pub fn compute(env: &Env, cmd: &str, args: &[Arg], knobs: Option<&[String]>) -> Result<Output> {
    let mut a = Args::new(cmd, args, env);
    let seq = find_sequence(env, a.string("sequence")?)?;
    let range = a.string("range")?;
    let tname = a.string("table")?.unwrap_or_else(|| cmd.to_string());
    let mut order = 1;
    let mut nf = None;
    let table = match cmd {
        "survey" => {
            a.finish()?;
            survey(&seq, env, range.as_deref(), SurveyFrame::default())?.0
        }
        "track" => {
            let turns = a.count("turns")?.unwrap_or(1);
            let sdir = match a.num("dir")? {
                Some(d) if d < 0.0 => -1,
                _ => 1,
            };
            let observe = match a.get("observe").map(|x| &x.val) {
                None => Observe::All,
                Some(Val::List(_)) => Observe::Names(a.names("observe")?),
                Some(v) => match word(v).as_deref() {
                    Some("all") => Observe::All,
                    Some("turnend" | "end") => Observe::TurnEnd,
                    Some("none") => Observe::None,
                    Some(n) => Observe::Names(vec![n.to_string()]),
                    None => return Err(Error::Eval("track: attribute 'observe' expects a name".into())),
                },
            };
            let mut cols: Vec<Vec<f64>> = Vec::new();
            for c in COORDS {
                cols.push(a.nums(c)?.unwrap_or_default());
            }
            a.finish()?;
            let n = cols.iter().map(Vec::len).max().unwrap_or(0).max(1);
            let mut x0 = vec![[0.0; 6]; n];
            for (i, col) in cols.iter().enumerate() {
                match col.len() {
                    0 => {}
                    1 => x0.iter_mut().for_each(|z| z[i] = col[0]),
                    m if m == n => x0.iter_mut().zip(col).for_each(|(z, v)| z[i] = *v),
                    m => {
                        return Err(Error::Eval(format!(
                            "track: '{}' has {m} values for {n} particles",
                            COORDS[i]
                        )))
                    }
                }
            }
            let opts = TrackOpts {
                turns,
                sdir,
                observe,
                range,
            };
            track_particles(&seq, env, &x0, &opts)?.0
        }
        "twiss" => {
            order = a.count("order")?.unwrap_or(1).clamp(1, 12) as u8;
            if a.flag("chrom")? {
                order = order.max(2);
            }
            let mut opts = TwissOpts {
                order,
                range,
                knobs: a.names("knobs")?,
                trkrdt: a.names("rdt")?,
                ..TwissOpts::default()
            };
            if let Some(po) = a.count("po")? {
                opts.po = po.clamp(1, 12) as u8;
            }
            if let Some(c) = a.count("codim")? {
                opts.co.codim = c;
            }
            let beta = [a.num("beta11")?, a.num("beta22")?];
            let alpha = [a.num("alfa11")?, a.num("alfa22")?];
            let disp = [a.num("dx")?, a.num("dpx")?, a.num("dy")?, a.num("dpy")?];
            let orbit = coords(&mut a)?;
            if beta.iter().any(Option::is_some) {
                opts.init = Some(TwissInit {
                    beta: beta.map(|b| b.unwrap_or(1.0)),
                    alpha: alpha.map(|x| x.unwrap_or(0.0)),
                    disp: disp.map(|x| x.unwrap_or(0.0)),
                    orbit: orbit.unwrap_or([0.0; 6]),
                });
            } else {
                if alpha.iter().chain(&disp).any(Option::is_some) {
                    return Err(Error::Eval("twiss: initial alfa or dispersion given without beta11/beta22".into()));
                }
                if let Some(z) = orbit {
                    opts.co.guess = z;
                }
            }
            a.finish()?;
            if let Some(k) = knobs {
                // knob derivatives of the tunes need a second-order map
                opts.knobs = k.to_vec();
                opts.order = opts.order.max(2);
                order = opts.order;
            }
            let (t, n) = twiss_nf(&seq, env, &opts)?;
            nf = n;
            t
        }
        "cofind" => {
            let mut co = CoOpts::default();
            if let Some(c) = a.count("codim")? {
                co.codim = c;
            }
            if let Some(z) = coords(&mut a)? {
                co.guess = z;
            }
            a.finish()?;
            if range.is_some() {
                return Err(Error::Eval("cofind: 'range' does not apply".into()));
            }
            let r = cofind(&seq, env, &co)?;
            let mut t = MTable::new("cofind");
            for (i, c) in COORDS.iter().enumerate() {
                t.add_column(c, Column::Real(vec![r.orbit[i]]))?;
            }
            t.set_header_num("iterations", r.iterations as f64);
            t.set_header_num("residual", r.residual);
            t
        }
        other => return Err(Error::UnknownCommand(other.to_string())),
    };
    Ok(Output {
        table_name: tname,
        table,
        nf,
        order,
    })
}
