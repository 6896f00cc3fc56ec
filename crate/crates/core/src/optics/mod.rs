//! Closed orbit, twiss functions and parametric normal forms.

pub mod cofind;
pub mod linear;
pub mod normal;
pub mod twiss;

pub use cofind::{cofind, one_turn, ClosedOrbit, CoOpts};
pub use normal::{analysis_desc, normal, parse_label, NfOpts, NormalForm};
pub use twiss::{ring_normal, rdt_along, twiss, twiss_nf, with_knobs, TwissInit, TwissOpts};
