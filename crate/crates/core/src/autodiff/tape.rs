use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{logistic, Real};
use super::AutodiffError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    Sin,
    Cos,
    Tanh,
    Sigmoid,
    Relu,
    Exp,
    Ln,
    Powf,
}

/// One recorded operation: its operands (by node index), the local partial
/// derivative of this node with respect to each operand, and its value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node<T> {
    pub kind: OpKind,
    pub arity: u8,
    pub operands: [usize; 2],
    pub partials: [T; 2],
    pub value: T,
}

impl<T: Scalar> Node<T> {
    fn nullary(kind: OpKind, value: T) -> Self {
        Node { kind, arity: 0, operands: [0, 0], partials: [T::zero(); 2], value }
    }

    fn unary(kind: OpKind, a: usize, da: T, value: T) -> Self {
        Node { kind, arity: 1, operands: [a, 0], partials: [da, T::zero()], value }
    }

    fn binary(kind: OpKind, a: usize, b: usize, da: T, db: T, value: T) -> Self {
        Node { kind, arity: 2, operands: [a, b], partials: [da, db], value }
    }
}

/// Identifier of a registered parameter leaf, in registration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LeafId(pub usize);

/// Append-only operation record.
///
/// Nodes are pushed through a shared reference so that [`Var`] can implement
/// the arithmetic operators; the tape is single-writer while it is built.
#[derive(Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    leaves: RefCell<Vec<usize>>,
}

impl<T: Scalar> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("leaves", &self.leaves.borrow().len())
            .finish()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), leaves: RefCell::new(Vec::new()) }
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape { nodes: RefCell::new(Vec::with_capacity(nodes)), leaves: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.borrow().len()
    }

    /// Drops all nodes and leaves, keeping the allocations.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.leaves.get_mut().clear();
    }

    /// Registers a differentiable leaf.
    pub fn leaf(&self, value: T) -> Var<'_, T> {
        let index = self.push_node(Node::nullary(OpKind::Leaf, value));
        self.leaves.borrow_mut().push(index);
        Var { tape: self, index, value }
    }

    pub fn constant(&self, value: T) -> Var<'_, T> {
        let index = self.push_node(Node::nullary(OpKind::Const, value));
        Var { tape: self, index, value }
    }

    /// Node index of a leaf.
    pub fn leaf_node(&self, id: LeafId) -> Option<usize> {
        self.leaves.borrow().get(id.0).copied()
    }

    pub fn node(&self, index: usize) -> Option<Node<T>> {
        self.nodes.borrow().get(index).copied()
    }

    /// Appends a raw node without validation; [`grad`] checks structure.
    pub fn push_node(&self, node: Node<T>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    fn push(&self, node: Node<T>) -> Var<'_, T> {
        let value = node.value;
        Var { tape: self, index: self.push_node(node), value }
    }

    /// Gradient of `output` with respect to every registered leaf.
    pub fn grad(&self, output: usize) -> Result<Gradient<T>, AutodiffError> {
        grad(self, output)
    }
}

/// Reverse sweep over `tape` seeded at node `output`.
///
/// Visits nodes `output, output-1, ..., 0` exactly once; cost is linear in
/// the number of nodes.
pub fn grad<T: Scalar>(tape: &Tape<T>, output: usize) -> Result<Gradient<T>, AutodiffError> {
    let nodes = tape.nodes.borrow();
    if output >= nodes.len() {
        return Err(AutodiffError::NoSuchNode { node: output, len: nodes.len() });
    }
    for (i, node) in nodes[..=output].iter().enumerate() {
        for &operand in &node.operands[..node.arity as usize] {
            if operand >= i {
                return Err(AutodiffError::DanglingOperand { node: i, operand });
            }
        }
    }
    let mut adjoint = vec![T::zero(); output + 1];
    adjoint[output] = T::one();
    for i in (0..=output).rev() {
        let a = adjoint[i];
        let node = &nodes[i];
        for k in 0..node.arity as usize {
            adjoint[node.operands[k]] += a * node.partials[k];
        }
    }
    let leaves = tape.leaves.borrow();
    let by_leaf = leaves.iter().map(|&n| if n <= output { adjoint[n] } else { T::zero() }).collect();
    Ok(Gradient { by_leaf })
}

/// Partial derivatives of one output with respect to every leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub by_leaf: Vec<T>,
}

impl<T: Scalar> Gradient<T> {
    pub fn get(&self, id: LeafId) -> T {
        self.by_leaf[id.0]
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LeafId, T)> + '_ {
        self.by_leaf.iter().enumerate().map(|(i, &g)| (LeafId(i), g))
    }
}

/// Handle to a tape node. Arithmetic on handles records new nodes.
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    index: usize,
    value: T,
}

impl<'t, T: Scalar> fmt::Debug for Var<'t, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{} = {})", self.index, self.value)
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    #[inline]
    fn same_tape(&self, other: &Self) {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "operands recorded on different tapes");
    }

    #[inline]
    fn unary(self, kind: OpKind, value: T, partial: T) -> Self {
        self.tape.push(Node::unary(kind, self.index, partial, value))
    }
}

impl<'t, T: Scalar> Add for Var<'t, T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.same_tape(&rhs);
        self.tape.push(Node::binary(OpKind::Add, self.index, rhs.index, T::one(), T::one(), self.value + rhs.value))
    }
}

impl<'t, T: Scalar> Sub for Var<'t, T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.same_tape(&rhs);
        self.tape.push(Node::binary(OpKind::Sub, self.index, rhs.index, T::one(), -T::one(), self.value - rhs.value))
    }
}

impl<'t, T: Scalar> Mul for Var<'t, T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.same_tape(&rhs);
        self.tape.push(Node::binary(OpKind::Mul, self.index, rhs.index, rhs.value, self.value, self.value * rhs.value))
    }
}

impl<'t, T: Scalar> Div for Var<'t, T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self.same_tape(&rhs);
        let q = self.value / rhs.value;
        let inv = T::one() / rhs.value;
        self.tape.push(Node::binary(OpKind::Div, self.index, rhs.index, inv, -q * inv, q))
    }
}

impl<'t, T: Scalar> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(OpKind::Neg, -self.value, -T::one())
    }
}

impl<'t, T: Scalar> Real for Var<'t, T> {
    type Scalar = T;

    fn value(&self) -> T {
        self.value
    }

    fn lift(&self, c: T) -> Self {
        self.tape.constant(c)
    }

    fn scale(self, c: T) -> Self {
        self.unary(OpKind::Scale, self.value * c, c)
    }

    fn sin(self) -> Self {
        self.unary(OpKind::Sin, self.value.sin(), self.value.cos())
    }

    fn cos(self) -> Self {
        self.unary(OpKind::Cos, self.value.cos(), -self.value.sin())
    }

    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(OpKind::Tanh, t, T::one() - t * t)
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(OpKind::Exp, e, e)
    }

    fn ln(self) -> Self {
        self.unary(OpKind::Ln, self.value.ln(), T::one() / self.value)
    }

    fn sigmoid(self) -> Self {
        let s = logistic(self.value);
        self.unary(OpKind::Sigmoid, s, s * (T::one() - s))
    }

    fn relu(self) -> Self {
        // Subgradient at zero is taken as zero.
        if self.value > T::zero() {
            self.unary(OpKind::Relu, self.value, T::one())
        } else {
            self.unary(OpKind::Relu, T::zero(), T::zero())
        }
    }

    fn powf(self, e: T) -> Self {
        let d = if e == T::zero() { T::zero() } else { e * self.value.powf(e - T::one()) };
        self.unary(OpKind::Powf, self.value.powf(e), d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn square_has_power_rule_gradient() {
        let tape = Tape::<f64>::new();
        let w = tape.leaf(3.0);
        let f = w * w;
        let g = tape.grad(f.index()).unwrap();
        assert_eq!(g.get(LeafId(0)), 6.0);
    }

    #[test]
    fn sigmoid_of_affine_matches_difference() {
        let tape = Tape::<f64>::new();
        let w = tape.leaf(0.7);
        let b = tape.leaf(0.0);
        let x = tape.constant(0.0);
        let f = (w * x + b).sigmoid();
        let g = tape.grad(f.index()).unwrap();
        let fd_b = central(|b| logistic(0.7 * 0.0 + b), 0.0);
        assert_eq!(g.get(LeafId(0)), 0.0);
        assert!((g.get(LeafId(1)) - 0.25).abs() < 1e-12);
        assert!((g.get(LeafId(1)) - fd_b).abs() / fd_b < 1e-6);
    }

    #[test]
    fn sin_times_identity() {
        let tape = Tape::<f64>::new();
        let w = tape.leaf(1.0);
        let f = w.sin() * w;
        let g = tape.grad(f.index()).unwrap().get(LeafId(0));
        let fd = central(|w| w.sin() * w, 1.0);
        assert!((g - fd).abs() / fd.abs() < 1e-6);
        assert!((g - (1f64.sin() + 1f64.cos())).abs() < 1e-14);
        assert!((g - 1.38177).abs() < 1e-5);
    }

    #[test]
    fn unreached_leaf_gets_zero_entry() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(2.0);
        let _b = tape.leaf(5.0);
        let f = a.exp();
        let g = tape.grad(f.index()).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.get(LeafId(1)), 0.0);
        // A leaf registered after the output also has an (empty) entry.
        let _c = tape.leaf(1.0);
        assert_eq!(tape.grad(f.index()).unwrap().len(), 3);
    }

    #[test]
    fn dangling_operand_is_structural_error() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(1.0);
        let bad = tape.push_node(Node {
            kind: OpKind::Add,
            arity: 2,
            operands: [x.index(), 7],
            partials: [1.0, 1.0],
            value: 0.0,
        });
        assert_eq!(grad(&tape, bad), Err(AutodiffError::DanglingOperand { node: bad, operand: 7 }));
        assert!(matches!(grad(&tape, 99), Err(AutodiffError::NoSuchNode { .. })));
    }

    #[test]
    fn relu_subgradient_at_zero() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(0.0);
        let y = x.relu();
        assert_eq!(tape.grad(y.index()).unwrap().get(LeafId(0)), 0.0);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f = (x*y) + sin(x*y): df/dx = y (1 + cos(xy))
        let tape = Tape::<f64>::new();
        let x = tape.leaf(0.3);
        let y = tape.leaf(-1.2);
        let p = x * y;
        let f = p + p.sin();
        let g = tape.grad(f.index()).unwrap();
        let want = -1.2 * (1.0 + (0.3f64 * -1.2).cos());
        assert!((g.get(LeafId(0)) - want).abs() < 1e-14);
    }
}
