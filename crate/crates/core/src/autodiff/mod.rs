//! Scalar differentiation engine.
//!
//! Two cooperating pieces:
//!
//! * [`Jet`] carries a value together with its first partials with respect
//!   to a small, declared input basis (the network inputs `t, x, y`). It is
//!   forward mode and never goes beyond first order; higher derivatives of a
//!   solution are obtained by rewriting the equation as a first-order system.
//! * [`Tape`] records scalar operations and returns the gradient of one node
//!   with respect to every registered leaf in a single reverse sweep.
//!
//! Both are generic over [`Real`], so a jet can be built from plain scalars
//! or from tape variables. In the latter case the input derivatives are
//! themselves on the tape and parameter gradients flow through them.

mod jet;
mod real;
mod tape;

pub use jet::{jet_apply, lift_input, Basis, Jet, JetOp};
pub use real::Real;
pub use tape::{grad, Gradient, LeafId, Node, OpKind, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("input index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("coordinate vector has length {got}, basis expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("jets over different input bases ({left} vs {right})")]
    BasisMismatch { left: u32, right: u32 },
    #[error("{op:?} expects {expected} argument(s), got {got}")]
    Arity { op: JetOp, expected: usize, got: usize },
    #[error("division by a jet with zero value")]
    DivisionByZero,
    #[error("pow with non-positive base {base} and a varying exponent")]
    PowDomain { base: f64 },
    #[error("node {node} is not on the tape (length {len})")]
    NoSuchNode { node: usize, len: usize },
    #[error("node {node} references operand {operand} that does not precede it")]
    DanglingOperand { node: usize, operand: usize },
}
