//! Small complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Condition-number ceiling on the Gram matrix before zero-forcing is refused.
pub const GRAM_COND_LIMIT: f64 = 1e12;

pub fn frob_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn frob(m: &CMat) -> f64 {
    frob_sq(m).sqrt()
}

pub fn norm_sq(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `a^H b` for column vectors.
pub fn inner(a: &CVec, b: &CVec) -> C64 {
    a.dotc(b)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let sym = (m + m.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Inverse of a Hermitian positive-definite matrix with a condition check.
pub fn hpd_inverse(gram: &CMat) -> Result<CMat> {
    let ev = hermitian_eigenvalues(gram);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if !(lo > 0.0) || hi / lo > GRAM_COND_LIMIT {
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        return Err(Error::IllConditioned { cond, limit: GRAM_COND_LIMIT });
    }
    let chol = nalgebra::Cholesky::new(gram.clone()).ok_or(Error::IllConditioned {
        cond: f64::INFINITY,
        limit: GRAM_COND_LIMIT,
    })?;
    Ok(chol.inverse())
}

/// Unit-modulus phase of `z`; zero maps to `1`.
pub fn unit_phase(z: C64) -> C64 {
    if z.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        C64::from_polar(1.0, z.arg())
    }
}
