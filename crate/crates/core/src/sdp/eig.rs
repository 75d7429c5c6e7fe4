use nalgebra::{DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, hermitize};
use crate::model::CMat;

use super::HERMITIAN_TOL;

/// Eigendecomposition `Z = U diag(lambda) U^H` with eigenvalues in
/// descending order and the columns of `U` permuted to match.
pub fn hermitian_eig(z: &CMat) -> Result<(CMat, DVector<f64>)> {
    if z.nrows() != z.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {:?}",
            z.shape()
        )));
    }
    let asym = asymmetry(z);
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    let n = z.nrows();
    let eig = SymmetricEigen::new(hermitize(z));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut u = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((u, lambda))
}
