//! Small dense helpers for complex Hermitian matrices.

use num_complex::Complex64;

use crate::model::{CMat, CVec};

/// `Re Tr(A^H B)`, which equals `Tr(A B)` when `A` is Hermitian.
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// `(A + A^H) / 2`.
pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()) * Complex64::from(0.5)
}

/// `||A - A^H||_F / ||A||_F`, zero for the zero matrix.
pub fn asymmetry(a: &CMat) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.adjoint()).norm() / norm
}

/// `v v^H`.
pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// `v^H A v`, real part only (exact for Hermitian `A`).
pub fn quad_form(a: &CMat, v: &CVec) -> f64 {
    (v.adjoint() * a * v)[(0, 0)].re
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_rayleigh, substream};

    #[test]
    fn inner_is_trace_of_product() {
        let mut rng = substream(1, 1, 1);
        let x = sample_rayleigh(4, 4, &mut rng);
        let y = sample_rayleigh(4, 4, &mut rng);
        let a = hermitize(&x);
        let b = hermitize(&y);
        let tr = (&a * &b).trace();
        assert!((re_inner(&a, &b) - tr.re).abs() < 1e-12);
        assert!(tr.im.abs() < 1e-12);
        assert!(asymmetry(&a) < 1e-15);
        assert!(asymmetry(&x) > 0.1);
    }
}
