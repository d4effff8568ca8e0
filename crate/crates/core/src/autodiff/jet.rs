use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;
use super::AutodiffError;
use num_traits::{One, Zero};

use crate::scalar::Scalar;

/// Ordered input basis a jet differentiates against, e.g. `(t, x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Basis {
    pub tag: u32,
    pub dim: usize,
}

impl Basis {
    pub const fn new(tag: u32, dim: usize) -> Self {
        Basis { tag, dim }
    }
}

/// Value plus first partials with respect to the inputs of `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet<R> {
    pub value: R,
    pub d1: Vec<R>,
    pub basis: Basis,
}

/// Elementary operations accepted by [`jet_apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
    Sin,
    Cos,
    Tanh,
    Sigmoid,
    Relu,
    Exp,
    Pow,
}

impl JetOp {
    pub fn arity(self) -> usize {
        match self {
            JetOp::Add | JetOp::Sub | JetOp::Mul | JetOp::Div | JetOp::Pow => 2,
            _ => 1,
        }
    }
}

/// Seeds input coordinate `i`: value `coords[i]`, derivative `e_i`.
pub fn lift_input<R: Real>(basis: Basis, coords: &[R], i: usize) -> Result<Jet<R>, AutodiffError> {
    if coords.len() != basis.dim {
        return Err(AutodiffError::DimensionMismatch { expected: basis.dim, got: coords.len() });
    }
    if i >= basis.dim {
        return Err(AutodiffError::IndexOutOfRange { index: i, dim: basis.dim });
    }
    let x = coords[i];
    let zero = x.lift(<R::Scalar as Zero>::zero());
    let one = x.lift(<R::Scalar as One>::one());
    let d1 = (0..basis.dim).map(|k| if k == i { one } else { zero }).collect();
    Ok(Jet { value: x, d1, basis })
}

/// Checked application of an elementary operation.
pub fn jet_apply<R: Real>(op: JetOp, args: &[Jet<R>]) -> Result<Jet<R>, AutodiffError> {
    if args.len() != op.arity() {
        return Err(AutodiffError::Arity { op, expected: op.arity(), got: args.len() });
    }
    if args.len() == 2 && args[0].basis != args[1].basis {
        return Err(AutodiffError::BasisMismatch { left: args[0].basis.tag, right: args[1].basis.tag });
    }
    let x = &args[0];
    Ok(match op {
        JetOp::Add => x.add_jet(&args[1]),
        JetOp::Sub => x.sub_jet(&args[1]),
        JetOp::Mul => x.mul_jet(&args[1]),
        JetOp::Div => {
            if args[1].value.value() == <R::Scalar as Zero>::zero() {
                return Err(AutodiffError::DivisionByZero);
            }
            x.div_jet(&args[1])
        }
        JetOp::Sin => x.sin(),
        JetOp::Cos => x.cos(),
        JetOp::Tanh => x.tanh(),
        JetOp::Sigmoid => x.sigmoid(),
        JetOp::Relu => x.relu(),
        JetOp::Exp => x.exp(),
        JetOp::Pow => x.pow(&args[1])?,
    })
}

impl<R: Real> Jet<R> {
    /// Constant on `basis`: zero derivative vector.
    pub fn constant(basis: Basis, value: R) -> Self {
        let zero = value.lift(<R::Scalar as Zero>::zero());
        Jet { value, d1: vec![zero; basis.dim], basis }
    }

    /// All input coordinates seeded at once.
    pub fn inputs(basis: Basis, coords: &[R]) -> Result<Vec<Self>, AutodiffError> {
        (0..coords.len()).map(|i| lift_input(basis, coords, i)).collect()
    }

    pub fn dim(&self) -> usize {
        self.d1.len()
    }

    /// Partial with respect to input `i`.
    pub fn d(&self, i: usize) -> R {
        self.d1[i]
    }

    fn check_basis(&self, other: &Self) {
        assert_eq!(self.basis, other.basis, "jet basis mismatch (contract violation)");
    }

    /// `f(value)` with derivative scaled by `f'(value)`.
    fn chain(&self, value: R, slope: R) -> Self {
        Jet { value, d1: self.d1.iter().map(|&d| slope * d).collect(), basis: self.basis }
    }

    fn add_jet(&self, o: &Self) -> Self {
        self.check_basis(o);
        Jet {
            value: self.value + o.value,
            d1: self.d1.iter().zip(&o.d1).map(|(&a, &b)| a + b).collect(),
            basis: self.basis,
        }
    }

    fn sub_jet(&self, o: &Self) -> Self {
        self.check_basis(o);
        Jet {
            value: self.value - o.value,
            d1: self.d1.iter().zip(&o.d1).map(|(&a, &b)| a - b).collect(),
            basis: self.basis,
        }
    }

    fn mul_jet(&self, o: &Self) -> Self {
        self.check_basis(o);
        Jet {
            value: self.value * o.value,
            d1: self.d1.iter().zip(&o.d1).map(|(&a, &b)| a * o.value + self.value * b).collect(),
            basis: self.basis,
        }
    }

    fn div_jet(&self, o: &Self) -> Self {
        self.check_basis(o);
        let q = self.value / o.value;
        Jet {
            value: q,
            d1: self.d1.iter().zip(&o.d1).map(|(&a, &b)| (a - q * b) / o.value).collect(),
            basis: self.basis,
        }
    }

    /// Multiplies value and derivatives by `c`.
    pub fn scale(&self, c: R) -> Self {
        Jet { value: self.value * c, d1: self.d1.iter().map(|&d| d * c).collect(), basis: self.basis }
    }

    pub fn sin(&self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }

    pub fn cos(&self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }

    pub fn tanh(&self) -> Self {
        let t = self.value.tanh();
        let one = t.lift(<R::Scalar as One>::one());
        self.chain(t, one - t * t)
    }

    pub fn sigmoid(&self) -> Self {
        let s = self.value.sigmoid();
        let one = s.lift(<R::Scalar as One>::one());
        self.chain(s, s * (one - s))
    }

    pub fn relu(&self) -> Self {
        let zero = <R::Scalar as Zero>::zero();
        let slope = if self.value.value() > zero { <R::Scalar as One>::one() } else { zero };
        Jet { value: self.value.relu(), d1: self.d1.iter().map(|&d| d.scale(slope)).collect(), basis: self.basis }
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }

    /// `self ^ e` for a plain exponent.
    pub fn powf(&self, e: R::Scalar) -> Self {
        let one = <R::Scalar as One>::one();
        let slope =
            if e == <R::Scalar as Zero>::zero() { self.value.lift(e) } else { self.value.powf(e - one).scale(e) };
        self.chain(self.value.powf(e), slope)
    }

    /// `self ^ e` for a jet exponent. A varying exponent needs a positive base.
    pub fn pow(&self, e: &Self) -> Result<Self, AutodiffError> {
        self.check_basis(e);
        let zero = <R::Scalar as Zero>::zero();
        let exponent_varies = e.d1.iter().any(|d| d.value() != zero);
        if self.value.value() > zero {
            // x^y = exp(y ln x)
            let ln_x = self.value.ln();
            let z = (e.value * ln_x).exp();
            let dz_dx = e.value * z / self.value;
            let dz_dy = z * ln_x;
            let d1 = self.d1.iter().zip(&e.d1).map(|(&a, &b)| dz_dx * a + dz_dy * b).collect();
            Ok(Jet { value: z, d1, basis: self.basis })
        } else if exponent_varies {
            Err(AutodiffError::PowDomain { base: self.value.value().to_f64_lossy() })
        } else {
            Ok(self.powf(e.value.value()))
        }
    }

    /// Maps a numeric jet to one over another carrier (e.g. onto a tape).
    pub fn map<S: Real>(&self, f: impl Fn(R) -> S) -> Jet<S> {
        Jet { value: f(self.value), d1: self.d1.iter().map(|&d| f(d)).collect(), basis: self.basis }
    }
}

impl<R: Real> Add for Jet<R> {
    type Output = Jet<R>;
    fn add(self, rhs: Self) -> Self {
        self.add_jet(&rhs)
    }
}

impl<R: Real> Sub for Jet<R> {
    type Output = Jet<R>;
    fn sub(self, rhs: Self) -> Self {
        self.sub_jet(&rhs)
    }
}

impl<R: Real> Mul for Jet<R> {
    type Output = Jet<R>;
    fn mul(self, rhs: Self) -> Self {
        self.mul_jet(&rhs)
    }
}

impl<R: Real> Div for Jet<R> {
    type Output = Jet<R>;
    fn div(self, rhs: Self) -> Self {
        self.div_jet(&rhs)
    }
}

impl<R: Real> Neg for Jet<R> {
    type Output = Jet<R>;
    fn neg(self) -> Self {
        Jet { value: -self.value, d1: self.d1.iter().map(|&d| -d).collect(), basis: self.basis }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{LeafId, Tape};

    const B1: Basis = Basis::new(1, 1);
    const B2: Basis = Basis::new(2, 2);

    #[test]
    fn lift_seeds_standard_basis() {
        let c = [0.3, 0.7];
        let j0 = lift_input(B2, &c, 0).unwrap();
        assert_eq!((j0.value, j0.d1.clone()), (0.3, vec![1.0, 0.0]));
        let j1 = lift_input(B2, &c, 1).unwrap();
        assert_eq!((j1.value, j1.d1), (0.7, vec![0.0, 1.0]));
        assert_eq!(lift_input(B1, &[1.0], 2), Err(AutodiffError::IndexOutOfRange { index: 2, dim: 1 }));
    }

    #[test]
    fn constant_has_zero_derivative() {
        let c = Jet::constant(Basis::new(9, 3), 4.0f64);
        assert_eq!(c.d1, vec![0.0; 3]);
    }

    #[test]
    fn elementary_values() {
        let x = lift_input(B1, &[0.0f64], 0).unwrap();
        let s = jet_apply(JetOp::Sigmoid, std::slice::from_ref(&x)).unwrap();
        assert_eq!((s.value, s.d1[0]), (0.5, 0.25));
        let m = lift_input(B1, &[-1.0f64], 0).unwrap();
        let r = jet_apply(JetOp::Relu, &[m]).unwrap();
        assert_eq!((r.value, r.d1[0]), (0.0, 0.0));
        let si = jet_apply(JetOp::Sin, &[x]).unwrap();
        assert_eq!((si.value, si.d1[0]), (0.0, 1.0));
    }

    #[test]
    fn checked_errors() {
        let a = lift_input(B1, &[1.0f64], 0).unwrap();
        let b = Jet::constant(Basis::new(7, 1), 1.0f64);
        assert!(matches!(jet_apply(JetOp::Add, &[a.clone(), b]), Err(AutodiffError::BasisMismatch { .. })));
        let z = Jet::constant(B1, 0.0f64);
        assert_eq!(jet_apply(JetOp::Div, &[a.clone(), z]), Err(AutodiffError::DivisionByZero));
        assert!(matches!(jet_apply::<f64>(JetOp::Sin, &[]), Err(AutodiffError::Arity { .. })));
        let neg = Jet::constant(B1, -2.0f64);
        assert!(matches!(jet_apply(JetOp::Pow, &[neg.clone(), a]), Err(AutodiffError::PowDomain { .. })));
        let sq = jet_apply(JetOp::Pow, &[neg, Jet::constant(B1, 2.0)]).unwrap();
        assert_eq!(sq.value, 4.0);
    }

    #[test]
    fn quotient_and_pow_rules() {
        let c = [1.5f64, 0.4];
        let x = lift_input(B2, &c, 0).unwrap();
        let y = lift_input(B2, &c, 1).unwrap();
        let q = jet_apply(JetOp::Div, &[x.clone(), y.clone()]).unwrap();
        assert!((q.d1[0] - 1.0 / 0.4).abs() < 1e-14);
        assert!((q.d1[1] + 1.5 / 0.16).abs() < 1e-12);
        let p = jet_apply(JetOp::Pow, &[x, y]).unwrap();
        assert!((p.value - 1.5f64.powf(0.4)).abs() < 1e-14);
        assert!((p.d1[0] - 0.4 * 1.5f64.powf(-0.6)).abs() < 1e-14);
        assert!((p.d1[1] - 1.5f64.powf(0.4) * 1.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn taped_jet_derivative_is_differentiable() {
        // u = sin(w x) at x = 0.5; du/dx = w cos(w x); d/dw (du/dx) = cos(wx) - w x sin(wx)
        let tape = Tape::<f64>::new();
        let w = tape.leaf(1.3);
        let xv = tape.constant(0.5);
        let x = lift_input(B1, &[xv], 0).unwrap();
        let wj = Jet::constant(B1, w);
        let u = (wj * x).sin();
        let g = tape.grad(u.d1[0].index()).unwrap().get(LeafId(0));
        let want = (0.65f64).cos() - 1.3 * 0.5 * (0.65f64).sin();
        assert!((g - want).abs() < 1e-14);
        assert!((u.d1[0].value() - 1.3 * (0.65f64).cos()).abs() < 1e-15);
    }
}
