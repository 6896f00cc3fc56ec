//! Differential-algebra toolkit for accelerator lattices.
//!
//! The crate is organized bottom-up:
//!
//! * [`tpsa`]: truncated power series with many parameters,
//! * [`damap`]: phase-space maps built from series,
//! * [`geom`]: frames, rotations and patches,
//! * [`lattice`]: elements, beam lines, sequences and the lazy variable
//!   environment,
//! * [`latparse`]: the MAD-X flavoured lattice and job language,
//! * [`engine`]: survey and track engines,
//! * [`optics`]: closed orbit, twiss and normal forms,
//! * [`matching`]: the constrained least-squares optimizer,
//! * [`mtable`]: tables and TFS files,
//! * [`protocol`]: framing used by the pipe server.

pub mod damap;
pub mod engine;
pub mod error;
pub mod geom;
pub mod lattice;
pub mod latparse;
pub mod matching;
pub mod mtable;
pub mod optics;
pub mod protocol;
pub mod tpsa;

pub use damap::DaMap;
pub use error::{Error, Result};
pub use tpsa::{CTpsa, Descriptor, Tpsa};
