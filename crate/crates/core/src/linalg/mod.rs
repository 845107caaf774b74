//! Dense and matrix-free linear algebra for `m`-symmetric operators.

mod expm;
mod krylov;
mod sparse;
mod symmetric;

pub use expm::{exp_action, exp_action_scaled, exp_integral_action};
pub use krylov::{conjugate_gradient, lanczos_lowest, tridiagonal_lowest, LanczosResult};
pub use sparse::CsrMatrix;
pub use symmetric::{Spectrum, SymOperator};

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Up to this many states, semigroups are evaluated through a full eigendecomposition.
pub const DENSE_EIGEN_LIMIT: usize = 5000;

/// Up to this many states, spectral bounds and linear solves use dense factorizations;
/// above it, Lanczos and conjugate gradients.
pub const DENSE_SOLVE_LIMIT: usize = 1024;

/// Solves `(alpha I - A) u = rhs` through the symmetrized system, which must be positive definite.
pub fn solve_shifted(op: &SymOperator, alpha: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = op.n();
    if rhs.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: rhs.len(),
        });
    }
    let sqrt_m: Vec<f64> = op.mass().iter().map(|&m| libm::sqrt(m)).collect();
    let b: Vec<f64> = rhs.iter().zip(&sqrt_m).map(|(r, s)| r * s).collect();
    let w = if n <= DENSE_SOLVE_LIMIT {
        let mut s = op.neg_symmetrized_dense();
        for i in 0..n {
            s[(i, i)] += alpha;
        }
        let chol =
            nalgebra::Cholesky::new(s).ok_or(Error::Solve("matrix is not positive definite"))?;
        let x = chol.solve(&nalgebra::DVector::from_vec(b));
        x.iter().copied().collect()
    } else {
        conjugate_gradient(
            |v, out| {
                op.neg_symmetrized_apply(&sqrt_m, v, out);
                for (o, x) in out.iter_mut().zip(v) {
                    *o += alpha * x;
                }
            },
            &b,
            1e-13,
            20 * n + 1000,
        )?
    };
    Ok(w.iter().zip(&sqrt_m).map(|(x, s)| x / s).collect())
}

/// Lowest eigenvalue of the symmetrized `-A`, with the right Perron vector of `A` if requested.
pub fn lowest_eigen(op: &SymOperator, want_vector: bool) -> (f64, Option<Vec<f64>>) {
    let n = op.n();
    if n <= DENSE_SOLVE_LIMIT {
        let spec = op.spectrum();
        let v = want_vector.then(|| spec.perron_vector());
        return (spec.lowest(), v);
    }
    let sqrt_m: Vec<f64> = op.mass().iter().map(|&m| libm::sqrt(m)).collect();
    let start: Vec<f64> = sqrt_m.clone();
    let r = lanczos_lowest(
        |v, out| op.neg_symmetrized_apply(&sqrt_m, v, out),
        &start,
        1e-14,
        5000,
        want_vector,
    );
    let v = r.vector.map(|phi| {
        let sign = if phi.iter().sum::<f64>() < 0.0 {
            -1.0
        } else {
            1.0
        };
        phi.iter()
            .zip(&sqrt_m)
            .map(|(p, s)| (sign * p).max(0.0) / s)
            .collect()
    });
    (r.value, v)
}
