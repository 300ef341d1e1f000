//! Dense fp64 kernel: matrices, differentiable primitives, a reverse-mode
//! tape, Adam and a finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod init;
pub mod matrix;
pub mod ops;
pub mod params;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, rel_error, GradCheckReport};
pub use matrix::{MatRef, Matrix};
pub use params::{ParamStore, Segment, SegmentId};
pub use tape::{Dropout, Gradients, NodeId, Tape};
