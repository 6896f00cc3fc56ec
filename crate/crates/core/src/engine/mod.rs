//! Survey (global frame) and track (local frame) engines.

pub mod compile;
pub mod maps;
pub mod num;
pub mod survey;
pub mod track;

pub use compile::{compile_sequence, element_steps, Compiled, Ctx, DEFAULT_NST};
pub use maps::{State, Step, PT, PX, PY, T, X, Y};
pub use num::Num;
pub use survey::survey;
pub use track::{
    beam_for, plan, range_indices, track_element, track_map, track_particles, Loss, Observe,
    Particle, TrackOpts,
};
