//! Small dense linear-algebra helpers shared by the GP modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Diagonal jitter added on the single retry after a failed factorization.
pub const JITTER: f64 = 1e-10;

/// Cholesky factorization with one jittered retry.
pub fn cholesky(matrix: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        return Ok(chol);
    }
    let n = matrix.nrows();
    let jittered = matrix + DMatrix::<f64>::identity(n, n) * JITTER;
    Cholesky::new(jittered).ok_or_else(|| {
        Error::Factorization(format!(
            "{n}x{n} matrix is not positive definite after jitter {JITTER:e}"
        ))
    })
}

/// `log det A` from the Cholesky factor of `A`.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solve `L x = b` for the lower factor of `chol`.
pub fn solve_lower(chol: &Cholesky<f64, Dyn>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let l = chol.l();
    l.solve_lower_triangular(b)
        .expect("cholesky factor has a positive diagonal")
}

pub fn solve_lower_vec(chol: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    let l = chol.l();
    l.solve_lower_triangular(b)
        .expect("cholesky factor has a positive diagonal")
}

/// Symmetric square root `R` with `R R^T = S`, negative eigenvalues clamped to zero.
pub fn psd_sqrt(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&v| v.max(0.0).sqrt()));
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    scaled * eig.eigenvectors.transpose()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    if s.nrows() == 0 {
        return 0.0;
    }
    let sym = (s + s.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest absolute row sum, the induced infinity norm.
pub fn max_abs_row_sum(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Index of the maximum, lowest index on ties. `None` for an empty slice.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax(&[0.0, 0.0]), Some(0));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky(m).is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky(bad), Err(Error::Factorization(_))));
    }

    #[test]
    fn psd_sqrt_reconstructs() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = psd_sqrt(&s);
        assert!((&r * r.transpose() - &s).abs().max() < 1e-12);
    }

    #[test]
    fn zero_size_cholesky() {
        let c = cholesky(DMatrix::zeros(0, 0)).unwrap();
        assert_eq!(log_det(&c), 0.0);
    }
}
