//! Reverse-mode automatic differentiation over [`Tensor`](crate::Tensor) values.

pub mod check;
pub mod param;
pub mod tape;

pub use check::{Coordinates, GradCheckReport, gradient_check, relative_error};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Mode, NodeId, Tape};
