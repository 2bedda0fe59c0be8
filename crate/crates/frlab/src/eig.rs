//! Dense complex eigendecomposition via Schur reduction.
//!
//! The von Neumann symbols are small (`(p + 1) x (p + 1)`) general complex
//! matrices for which we need both eigenvalues and right eigenvectors. The
//! eigenvalues come from the diagonal of the complex Schur form `A = Q T Q^H`;
//! eigenvectors follow by back-substitution on the upper-triangular factor.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Maximum QR iterations handed to the Schur reduction.
const MAX_SCHUR_ITER: usize = 20_000;

/// Eigenvalues of a general complex matrix, in Schur order.
pub fn eigenvalues_complex(a: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let t = schur_t(a)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Eigenvalues and unit-norm right eigenvectors (as matrix columns) of a
/// general complex matrix. For defective matrices the returned vectors span
/// the appropriate invariant subspace approximately; residuals degrade
/// gracefully rather than failing.
pub fn eigen_complex(a: &DMatrix<Complex64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let n = square_dim(a)?;
    if n == 1 {
        return Ok((
            vec![a[(0, 0)]],
            DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
        ));
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, MAX_SCHUR_ITER)
        .ok_or_else(|| Error::Eigen("Schur reduction did not converge".into()))?;
    let (q, t) = schur.unpack();
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();

    // Small-pivot floor for the triangular solves: repeated eigenvalues make
    // T[(i, i)] - lambda vanish; nudging the pivot yields a vector that is
    // dominated by the true eigendirection after normalization.
    let scale = t.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let floor = scale * f64::EPSILON * f64::EPSILON;

    let mut vectors = DMatrix::zeros(n, n);
    for (m, &lambda) in values.iter().enumerate() {
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        y[m] = Complex64::new(1.0, 0.0);
        for i in (0..m).rev() {
            let mut rhs = Complex64::new(0.0, 0.0);
            for j in i + 1..=m {
                rhs -= t[(i, j)] * y[j];
            }
            let mut pivot = t[(i, i)] - lambda;
            if pivot.norm() < floor {
                pivot = Complex64::new(floor, 0.0);
            }
            y[i] = rhs / pivot;
        }
        let mut v = &q * DMatrix::from_column_slice(n, 1, &y);
        let norm = v.column(0).norm();
        if norm > 0.0 {
            v /= Complex64::new(norm, 0.0);
        }
        vectors.set_column(m, &v.column(0));
    }
    Ok((values, vectors))
}

fn square_dim(a: &DMatrix<Complex64>) -> Result<usize> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "eigendecomposition needs a nonempty square matrix, got {} x {}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(n)
}

fn schur_t(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = square_dim(a)?;
    if n == 1 {
        return Ok(a.clone());
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, MAX_SCHUR_ITER)
        .ok_or_else(|| Error::Eigen("Schur reduction did not converge".into()))?;
    Ok(schur.unpack().1)
}
