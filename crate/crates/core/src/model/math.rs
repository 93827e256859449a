use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Scalar type of model parameters. Training runs in `f32`; gradient checks
/// cast the model to `f64`.
pub trait Real: Float + AddAssign + SubAssign + MulAssign + Sum + Debug + Send + Sync + 'static {
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = F::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a·x`
#[inline]
pub fn axpy<F: Real>(y: &mut [F], a: F, x: &[F]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

/// `out[r] += W[r,:]·x` for row-major `W` of shape `out.len() × x.len()`.
#[inline]
pub fn matvec_acc<F: Real>(out: &mut [F], w: &[F], x: &[F]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ·dy`
#[inline]
pub fn matvec_t_acc<F: Real>(out: &mut [F], w: &[F], dy: &[F]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), dy.len() * cols);
    for (d, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if *d != F::zero() {
            axpy(out, *d, row);
        }
    }
}

/// `G += dy ⊗ x`
#[inline]
pub fn outer_acc<F: Real>(g: &mut [F], dy: &[F], x: &[F]) {
    let cols = x.len();
    debug_assert_eq!(g.len(), dy.len() * cols);
    for (d, row) in dy.iter().zip(g.chunks_exact_mut(cols)) {
        if *d != F::zero() {
            axpy(row, *d, x);
        }
    }
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..19).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..19).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn matvec_and_transpose() {
        // W = [[1,2,3],[4,5,6]]
        let w = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = [0.0; 2];
        matvec_acc(&mut out, &w, &[1.0, 0.0, -1.0]);
        assert_eq!(out, [-2.0, -2.0]);
        let mut back = [0.0; 3];
        matvec_t_acc(&mut back, &w, &[1.0, 1.0]);
        assert_eq!(back, [5.0, 7.0, 9.0]);
        let mut g = [0.0; 6];
        outer_acc(&mut g, &[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(g, [1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
    }
}
