//! Forward-mode dual arithmetic.
//!
//! Every CGF operation in this crate is generic over [`Scalar`], so seeding the
//! tilt `t` or the parameter vector with [`Dual`] values produces directional
//! derivatives that are exact to machine precision (chain-rule propagation, not
//! finite differences). Nesting the type (`Dual<Dual<f64>>`) yields second
//! derivatives the same way.
//!
//! Partial vectors follow an empty-means-zero convention: a constant carries no
//! partials, and mixed-arity operands are zero-extended when combined. This
//! lets `Scalar::from_f64` build constants without knowing the seed arity.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic interface shared by `f64` and (nested) dual numbers.
pub trait Scalar:
    Clone
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Nesting depth: 0 for `f64`, one more per dual layer.
    const ORDER: usize;

    fn from_f64(value: f64) -> Self;

    /// Innermost (value-level) component.
    fn primal(&self) -> f64;

    fn exp(&self) -> Self;
    fn exp_m1(&self) -> Self;
    fn ln(&self) -> Self;
    fn ln_1p(&self) -> Self;
    fn powi(&self, n: i32) -> Self;

    /// Multiply by an `f64` constant without allocating a constant scalar.
    fn scale(&self, c: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn recip(&self) -> Self {
        Self::one() / self.clone()
    }
}

impl Scalar for f64 {
    const ORDER: usize = 0;

    #[inline]
    fn from_f64(value: f64) -> Self {
        value
    }

    #[inline]
    fn primal(&self) -> f64 {
        *self
    }

    #[inline]
    fn exp(&self) -> Self {
        f64::exp(*self)
    }

    #[inline]
    fn exp_m1(&self) -> Self {
        f64::exp_m1(*self)
    }

    #[inline]
    fn ln(&self) -> Self {
        f64::ln(*self)
    }

    #[inline]
    fn ln_1p(&self) -> Self {
        f64::ln_1p(*self)
    }

    #[inline]
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }

    #[inline]
    fn scale(&self, c: f64) -> Self {
        *self * c
    }
}

/// A value together with its partial derivatives along some seed directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual<T> {
    pub value: T,
    pub partials: Vec<T>,
}

/// First-order dual over `f64`, the workhorse for gradients.
pub type DualScalar = Dual<f64>;

/// Second-order (nested) dual, used for Hessians.
pub type Dual2 = Dual<Dual<f64>>;

impl<T: Scalar> Dual<T> {
    pub fn new(value: T, partials: Vec<T>) -> Self {
        Dual { value, partials }
    }

    /// A constant: all partials are zero.
    pub fn constant(value: T) -> Self {
        Dual { value, partials: Vec::new() }
    }

    /// A variable seeded with the unit direction `index` out of `arity`.
    pub fn seeded(value: T, arity: usize, index: usize) -> Self {
        let mut partials = vec![T::zero(); arity];
        partials[index] = T::one();
        Dual { value, partials }
    }

    /// Partial along direction `k`, zero-extending constants.
    pub fn partial(&self, k: usize) -> T {
        self.partials.get(k).cloned().unwrap_or_else(T::zero)
    }

    fn zip_partials(a: &[T], b: &[T], f: impl Fn(Option<&T>, Option<&T>) -> T) -> Vec<T> {
        let len = a.len().max(b.len());
        (0..len).map(|k| f(a.get(k), b.get(k))).collect()
    }

    /// Apply the chain rule for a univariate function: `d` is `f'(value)`.
    fn chain(&self, value: T, d: T) -> Self {
        let partials = self
            .partials
            .iter()
            .map(|p| p.clone() * d.clone())
            .collect();
        Dual { value, partials }
    }
}

/// Seed each parameter with its own first-order direction.
pub fn seed_gradient(theta: &[f64]) -> Vec<DualScalar> {
    let p = theta.len();
    theta
        .iter()
        .enumerate()
        .map(|(i, &v)| Dual::seeded(v, p, i))
        .collect()
}

/// Seed each parameter at both dual levels so second partials accumulate.
pub fn seed_hessian(theta: &[f64]) -> Vec<Dual2> {
    let p = theta.len();
    theta
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let inner = Dual::seeded(v, p, i);
            let mut outer = vec![Dual::constant(0.0); p];
            outer[i] = Dual::constant(1.0);
            Dual { value: inner, partials: outer }
        })
        .collect()
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        let partials = Self::zip_partials(&self.partials, &rhs.partials, |a, b| match (a, b) {
            (Some(a), Some(b)) => a.clone() + b.clone(),
            (Some(a), None) => a.clone(),
            (None, Some(b)) => b.clone(),
            (None, None) => T::zero(),
        });
        Dual { value: self.value + rhs.value, partials }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        let partials = Self::zip_partials(&self.partials, &rhs.partials, |a, b| match (a, b) {
            (Some(a), Some(b)) => a.clone() - b.clone(),
            (Some(a), None) => a.clone(),
            (None, Some(b)) => -b.clone(),
            (None, None) => T::zero(),
        });
        Dual { value: self.value - rhs.value, partials }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;

    // product rule mixes + and * by necessity
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: Self) -> Self {
        let partials = Self::zip_partials(&self.partials, &rhs.partials, |a, b| {
            let left = match a {
                Some(a) => a.clone() * rhs.value.clone(),
                None => T::zero(),
            };
            let right = match b {
                Some(b) => self.value.clone() * b.clone(),
                None => T::zero(),
            };
            left + right
        });
        Dual { value: self.value.clone() * rhs.value.clone(), partials }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;

    // quotient rule mixes -, * and / by necessity
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        let value = self.value.clone() / rhs.value.clone();
        // (a/b)' = (a' - (a/b) b') / b
        let partials = Self::zip_partials(&self.partials, &rhs.partials, |a, b| {
            let num = match (a, b) {
                (Some(a), Some(b)) => a.clone() - value.clone() * b.clone(),
                (Some(a), None) => a.clone(),
                (None, Some(b)) => -(value.clone() * b.clone()),
                (None, None) => T::zero(),
            };
            num / rhs.value.clone()
        });
        Dual { value, partials }
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;

    fn neg(self) -> Self {
        Dual {
            value: -self.value,
            partials: self.partials.into_iter().map(|p| -p).collect(),
        }
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    const ORDER: usize = T::ORDER + 1;

    fn from_f64(value: f64) -> Self {
        Dual::constant(T::from_f64(value))
    }

    fn primal(&self) -> f64 {
        self.value.primal()
    }

    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e.clone(), e)
    }

    fn exp_m1(&self) -> Self {
        self.chain(self.value.exp_m1(), self.value.exp())
    }

    fn ln(&self) -> Self {
        self.chain(self.value.ln(), self.value.clone().recip())
    }

    fn ln_1p(&self) -> Self {
        let d = (T::one() + self.value.clone()).recip();
        self.chain(self.value.ln_1p(), d)
    }

    fn powi(&self, n: i32) -> Self {
        let d = self.value.powi(n - 1).scale(n as f64);
        self.chain(self.value.powi(n), d)
    }

    fn scale(&self, c: f64) -> Self {
        Dual {
            value: self.value.scale(c),
            partials: self.partials.iter().map(|p| p.scale(c)).collect(),
        }
    }
}

/// Extract primal values from a scalar slice.
pub fn primals<S: Scalar>(values: &[S]) -> Vec<f64> {
    values.iter().map(Scalar::primal).collect()
}

/// Lift an `f64` slice into constants of any scalar type.
pub fn constants<S: Scalar>(values: &[f64]) -> Vec<S> {
    values.iter().map(|&v| S::from_f64(v)).collect()
}
