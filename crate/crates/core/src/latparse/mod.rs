//! The lattice and job language: a MAD-X flavoured subset.
//!
//! Names are case-insensitive and stored lower-case. `^` binds tighter
//! than unary minus, which binds tighter than `*` and `/`, so `-3^2` is
//! `-9` and `2+3*4^2` is `50`.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod session;

pub use ast::{unparse, Arg, Item, ItemTarget, Stmt, Val};
pub use parser::{parse, parse_expr, parse_located, Located};
pub use session::{compute, Output, Session};
