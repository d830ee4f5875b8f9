//! Abstract linear operators and matvec accounting.

use std::cell::Cell;

/// A square linear map `x -> A x` on `R^n`.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// Writes `A x` into `y`. Both slices have length `dim()`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Returns true when the operator is (numerically) symmetric.
    ///
    /// The default is conservative; sparse matrices override it with a probe.
    fn is_symmetric(&self) -> bool {
        false
    }

    /// A cheap upper estimate of a matrix norm, if one is available.
    fn norm_estimate(&self) -> Option<f64> {
        None
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn is_symmetric(&self) -> bool {
        (**self).is_symmetric()
    }
    fn norm_estimate(&self) -> Option<f64> {
        (**self).norm_estimate()
    }
}

/// Counts operator applications. Owned by the caller of a method, never global.
#[derive(Debug, Default)]
pub struct MatvecCounter {
    count: Cell<usize>,
}

impl MatvecCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> usize {
        self.count.get()
    }

    pub fn bump(&self) {
        self.count.set(self.count.get() + 1);
    }
}

/// Operator wrapper that increments a counter on every application.
pub struct Counted<'a, A: ?Sized> {
    pub op: &'a A,
    pub counter: &'a MatvecCounter,
}

impl<'a, A: LinearOperator + ?Sized> Counted<'a, A> {
    pub fn new(op: &'a A, counter: &'a MatvecCounter) -> Self {
        Self { op, counter }
    }
}

impl<A: LinearOperator + ?Sized> LinearOperator for Counted<'_, A> {
    fn dim(&self) -> usize {
        self.op.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.counter.bump();
        self.op.apply(x, y)
    }
    fn is_symmetric(&self) -> bool {
        self.op.is_symmetric()
    }
    fn norm_estimate(&self) -> Option<f64> {
        self.op.norm_estimate()
    }
}

/// `x -> c * A x`.
pub struct Scaled<'a, A: ?Sized> {
    pub op: &'a A,
    pub factor: f64,
}

impl<A: LinearOperator + ?Sized> LinearOperator for Scaled<'_, A> {
    fn dim(&self) -> usize {
        self.op.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.op.apply(x, y);
        for yi in y.iter_mut() {
            *yi *= self.factor;
        }
    }
    fn is_symmetric(&self) -> bool {
        self.op.is_symmetric()
    }
    fn norm_estimate(&self) -> Option<f64> {
        self.op.norm_estimate().map(|n| n * self.factor.abs())
    }
}

/// The identity on `R^n`.
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
    fn is_symmetric(&self) -> bool {
        true
    }
    fn norm_estimate(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Applies `op` to `x`, allocating the output.
pub fn apply_alloc<A: LinearOperator + ?Sized>(op: &A, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; op.dim()];
    op.apply(x, &mut y);
    y
}
