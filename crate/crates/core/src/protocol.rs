//! Framing of the pipe protocol.
//!
//! Every frame starts with an ASCII header line. Payload sizes are
//! given in the header, so a stream can be cut anywhere and reassembled:
//!
//! ```text
//! EXEC <n>\n<n bytes of script>
//! NUM <double>\n
//! STR <n>\n<n bytes>
//! VEC <n>\n<8n bytes, little-endian doubles>
//! TBL <ncols> <nrows>\n then per column COL <name> <real|str>\n + payload
//! DONE\n
//! ERR <n>\n<n bytes of message>
//! ```
//!
//! A `real` column payload is `nrows` doubles, a `str` column payload is
//! `nrows` strings each prefixed by its byte length as a little-endian u32.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::latparse::Session;
use crate::mtable::{Column, MTable};

/// Longest header line accepted before the stream is declared garbage.
pub const MAX_HEADER: usize = 4096;

#[derive(Clone, Debug)]
pub enum Frame {
    Exec(String),
    Num(f64),
    Str(String),
    Vec(Vec<f64>),
    /// Columns in order; all of the same length.
    Tbl(Vec<(String, Column)>),
    Done,
    Err(String),
}

impl PartialEq for Frame {
    /// Doubles compare by their bits, so NaN payloads survive equality.
    fn eq(&self, other: &Frame) -> bool {
        fn same(a: &[f64], b: &[f64]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        match (self, other) {
            (Frame::Exec(a), Frame::Exec(b)) => a == b,
            (Frame::Num(a), Frame::Num(b)) => a.to_bits() == b.to_bits(),
            (Frame::Str(a), Frame::Str(b)) => a == b,
            (Frame::Vec(a), Frame::Vec(b)) => same(a, b),
            (Frame::Tbl(a), Frame::Tbl(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|((na, ca), (nb, cb))| {
                        na == nb
                            && match (ca, cb) {
                                (Column::Real(x), Column::Real(y)) => same(x, y),
                                (x, y) => x == y,
                            }
                    })
            }
            (Frame::Done, Frame::Done) => true,
            (Frame::Err(a), Frame::Err(b)) => a == b,
            _ => false,
        }
    }
}

impl Frame {
    /// Table frame with complex columns split into `_re`/`_im` pairs.
    pub fn table(t: &MTable) -> Result<Frame> {
        let t = t.materialize()?;
        let mut cols = Vec::new();
        for (name, c) in t.columns() {
            match c {
                Column::Complex(z) => {
                    cols.push((format!("{name}_re"), Column::Real(z.iter().map(|z| z.re).collect())));
                    cols.push((format!("{name}_im"), Column::Real(z.iter().map(|z| z.im).collect())));
                }
                c => cols.push((name.clone(), c.clone())),
            }
        }
        Ok(Frame::Tbl(cols))
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        match self {
            Frame::Exec(s) => sized(out, "EXEC", s.as_bytes()),
            Frame::Num(v) => out.extend_from_slice(format!("NUM {v:?}\n").as_bytes()),
            Frame::Str(s) => sized(out, "STR", s.as_bytes()),
            Frame::Vec(v) => {
                out.extend_from_slice(format!("VEC {}\n", v.len()).as_bytes());
                doubles(out, v);
            }
            Frame::Tbl(cols) => {
                let nrows = cols.first().map_or(0, |c| c.1.len());
                out.extend_from_slice(format!("TBL {} {nrows}\n", cols.len()).as_bytes());
                for (name, c) in cols {
                    out.extend_from_slice(format!("COL {name} {}\n", c.type_name()).as_bytes());
                    match c {
                        Column::Real(v) => doubles(out, v),
                        Column::Str(v) => {
                            for s in v {
                                out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                                out.extend_from_slice(s.as_bytes());
                            }
                        }
                        Column::Complex(_) => unreachable!("complex columns are split by Frame::table"),
                    }
                }
            }
            Frame::Done => out.extend_from_slice(b"DONE\n"),
            Frame::Err(m) => sized(out, "ERR", m.as_bytes()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.encode(&mut v);
        v
    }
}

fn sized(out: &mut Vec<u8>, tag: &str, bytes: &[u8]) {
    out.extend_from_slice(format!("{tag} {}\n", bytes.len()).as_bytes());
    out.extend_from_slice(bytes);
}

fn doubles(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Outcome of trying to read one frame from the front of a buffer.
enum Scan {
    Incomplete,
    Frame(Frame, usize),
    /// Malformed input; drop this many bytes and report.
    Bad(String, usize),
}

/// Reads `n` bytes at `*at`, or reports that more input is needed.
fn take<'a>(buf: &'a [u8], at: &mut usize, n: usize) -> Option<&'a [u8]> {
    let end = at.checked_add(n)?;
    let s = buf.get(*at..end)?;
    *at = end;
    Some(s)
}

fn line<'a>(buf: &'a [u8], at: &mut usize) -> std::result::Result<Option<&'a str>, String> {
    let rest = &buf[*at..];
    match rest.iter().position(|&b| b == b'\n') {
        Some(p) => {
            *at += p + 1;
            std::str::from_utf8(&rest[..p])
                .map(Some)
                .map_err(|_| "header is not ASCII".to_string())
        }
        None if rest.len() > MAX_HEADER => Err("header line too long".into()),
        None => Ok(None),
    }
}

fn read_doubles(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect()
}

fn scan(buf: &[u8]) -> Scan {
    let mut at = 0;
    let head = match line(buf, &mut at) {
        Ok(Some(h)) => h,
        Ok(None) => return Scan::Incomplete,
        Err(m) => {
            let skip = buf.iter().position(|&b| b == b'\n').map_or(buf.len(), |p| p + 1);
            return Scan::Bad(m, skip);
        }
    };
    let header_end = at;
    let bad = |m: String| Scan::Bad(m, header_end);
    let words: Vec<&str> = head.split(' ').collect();
    let count = |w: Option<&&str>| -> Option<usize> { w?.parse().ok() };
    match words[0] {
        "DONE" if words.len() == 1 => Scan::Frame(Frame::Done, at),
        "NUM" if words.len() == 2 => match words[1].parse::<f64>() {
            Ok(v) => Scan::Frame(Frame::Num(v), at),
            Err(_) => bad(format!("malformed number in '{head}'")),
        },
        tag @ ("EXEC" | "STR" | "ERR") if words.len() == 2 => {
            let Some(n) = count(words.get(1)) else {
                return bad(format!("malformed length in '{head}'"));
            };
            let Some(bytes) = take(buf, &mut at, n) else {
                return Scan::Incomplete;
            };
            let Ok(s) = String::from_utf8(bytes.to_vec()) else {
                return Scan::Bad(format!("{tag} payload is not UTF-8"), at);
            };
            let f = match tag {
                "EXEC" => Frame::Exec(s),
                "STR" => Frame::Str(s),
                _ => Frame::Err(s),
            };
            Scan::Frame(f, at)
        }
        "VEC" if words.len() == 2 => {
            let Some(n) = count(words.get(1)) else {
                return bad(format!("malformed length in '{head}'"));
            };
            let Some(bytes) = n.checked_mul(8).and_then(|m| take(buf, &mut at, m)) else {
                return Scan::Incomplete;
            };
            Scan::Frame(Frame::Vec(read_doubles(bytes)), at)
        }
        "TBL" if words.len() == 3 => {
            let (Some(ncols), Some(nrows)) = (count(words.get(1)), count(words.get(2))) else {
                return bad(format!("malformed sizes in '{head}'"));
            };
            let mut cols = Vec::new();
            for _ in 0..ncols {
                let col_start = at;
                let h = match line(buf, &mut at) {
                    Ok(Some(h)) => h,
                    Ok(None) => return Scan::Incomplete,
                    Err(m) => return Scan::Bad(m, col_start),
                };
                let w: Vec<&str> = h.split(' ').collect();
                if w.len() != 3 || w[0] != "COL" {
                    return Scan::Bad(format!("expected a column header, found '{h}'"), at);
                }
                let col = match w[2] {
                    "real" => {
                        let Some(bytes) = nrows.checked_mul(8).and_then(|m| take(buf, &mut at, m)) else {
                            return Scan::Incomplete;
                        };
                        Column::Real(read_doubles(bytes))
                    }
                    "str" => {
                        let mut v = Vec::with_capacity(nrows.min(1 << 16));
                        for _ in 0..nrows {
                            let Some(len) = take(buf, &mut at, 4) else {
                                return Scan::Incomplete;
                            };
                            let len = u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize;
                            let Some(bytes) = take(buf, &mut at, len) else {
                                return Scan::Incomplete;
                            };
                            match String::from_utf8(bytes.to_vec()) {
                                Ok(s) => v.push(s),
                                Err(_) => return Scan::Bad("string cell is not UTF-8".into(), at),
                            }
                        }
                        Column::Str(v)
                    }
                    other => return Scan::Bad(format!("unknown column type '{other}'"), at),
                };
                cols.push((w[1].to_string(), col));
            }
            Scan::Frame(Frame::Tbl(cols), at)
        }
        _ => bad(format!("malformed frame header '{head}'")),
    }
}

/// Incremental decoder: feed bytes in any chunking, pull whole frames.
#[derive(Default)]
pub struct Decoder {
    buf: Vec<u8>,
}

impl Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes received but not yet consumed.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// The next complete frame, `None` when more input is needed. A
    /// malformed frame is dropped and reported as a protocol error; the
    /// stream stays usable afterwards.
    pub fn next_frame(&mut self) -> Option<Result<Frame>> {
        if self.buf.is_empty() {
            return None;
        }
        match scan(&self.buf) {
            Scan::Incomplete => None,
            Scan::Frame(f, n) => {
                self.buf.drain(..n);
                Some(Ok(f))
            }
            Scan::Bad(m, n) => {
                self.buf.drain(..n.max(1));
                Some(Err(Error::Protocol(m)))
            }
        }
    }
}

/// Decodes a complete byte stream.
pub fn decode_all(bytes: &[u8]) -> Result<Vec<Frame>> {
    let mut d = Decoder::new();
    d.push(bytes);
    let mut out = Vec::new();
    while let Some(f) = d.next_frame() {
        out.push(f?);
    }
    if d.pending() > 0 {
        return Err(Error::Protocol(format!("{} trailing bytes", d.pending())));
    }
    Ok(out)
}

fn answer(session: &mut Session, script: &str) -> Vec<u8> {
    let r = session.exec_str(script);
    let mut out = Vec::new();
    for f in session.sent.drain(..) {
        f.encode(&mut out);
    }
    match r {
        Ok(()) => Frame::Done.encode(&mut out),
        Err(e) => Frame::Err(e.to_string()).encode(&mut out),
    }
    out
}

/// Serves requests until the input ends. Each `EXEC` frame runs its
/// script in `session`; the frames it sends come back first, then `DONE`
/// or `ERR`. Anything else earns an `ERR` and the loop carries on.
pub fn serve(session: &mut Session, mut input: impl Read, mut output: impl Write) -> Result<()> {
    let mut dec = Decoder::new();
    let mut chunk = vec![0u8; 1 << 16];
    loop {
        let n = input.read(&mut chunk)?;
        if n == 0 {
            if dec.pending() > 0 {
                let msg = format!("input ended inside a frame ({} bytes pending)", dec.pending());
                output.write_all(&Frame::Err(msg).to_bytes())?;
                output.flush()?;
            }
            return Ok(());
        }
        dec.push(&chunk[..n]);
        while let Some(f) = dec.next_frame() {
            let reply = match f {
                Ok(Frame::Exec(script)) => answer(session, &script),
                Ok(other) => {
                    Frame::Err(format!("expected an EXEC request, got {}", other.tag())).to_bytes()
                }
                Err(e) => Frame::Err(e.to_string()).to_bytes(),
            };
            output.write_all(&reply)?;
            output.flush()?;
        }
    }
}

impl Frame {
    pub fn tag(&self) -> &'static str {
        match self {
            Frame::Exec(_) => "EXEC",
            Frame::Num(_) => "NUM",
            Frame::Str(_) => "STR",
            Frame::Vec(_) => "VEC",
            Frame::Tbl(_) => "TBL",
            Frame::Done => "DONE",
            Frame::Err(_) => "ERR",
        }
    }
}
