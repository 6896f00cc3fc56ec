//! Lattice description: values and deferred expressions, the variable
//! environment, elements, beams, lines and sequences.

pub mod beam;
pub mod element;
pub mod env;
pub mod line;
pub mod sequence;
pub mod value;

pub use beam::Beam;
pub use element::{Attr, Element, Kind};
pub use env::{Binding, Env};
pub use line::{expand_bline, BLine, Expansion, LineItem, Placed, Target};
pub use sequence::{Refer, SeqItem, Sequence};
pub use value::{BinOp, Expr, Value};

/// Speed of light in m/s.
pub const CLIGHT: f64 = 299_792_458.0;

use std::sync::Arc;

use crate::error::Result;

/// Builds a sequence from a line, placing elements as the expansion does.
pub fn sequence_from_line(
    name: &str,
    line: &BLine,
    refer: Refer,
    total_l: Option<f64>,
    env: &Env,
) -> Result<Sequence> {
    let ex = expand_bline(line, env, refer)?;
    let entries: Vec<(Arc<Element>, Option<f64>)> = ex
        .placed
        .into_iter()
        .map(|p| (p.elem, Some(p.start)))
        .collect();
    let tl = total_l.or(Some(ex.length));
    Sequence::build(name, entries, refer, tl, env)
}
