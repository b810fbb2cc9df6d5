//! Deterministic non-local boxes and the protocol that extracts their hidden
//! signaling.
//!
//! The crate is organised bottom-up:
//!
//! * [`vm`]: a clocked counter machine with a canonical enumeration; the
//!   concrete class of time-bounded programs.
//! * [`learner`]: learning by enumeration over that class.
//! * [`betting`]: the betting game, the predicate-driven winning strategy and
//!   the diagonal construction of sequences that defeat a finite family.
//! * [`boxes`]: deterministic box pairs and their dependence structure.
//! * [`protocol`]: the two-party signaling protocol and its soundness checks.
//! * [`analysis`]: CHSH statistics, the seeded coin stream and physics helpers.
//! * [`io`] and [`config`]: file formats and run configuration.

pub mod analysis;
pub mod vm;
pub mod betting;
pub mod boxes;
pub mod config;
pub mod io;
pub mod learner;
pub mod protocol;
