//! Finite `m`-symmetric Markov chains with killing, their generators, semigroups and Green operators.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, CsrMatrix, Spectrum, SymOperator, DENSE_EIGEN_LIMIT};

/// Relative tolerance on `m[x] q[x][y] = m[y] q[y][x]`.
pub const DETAILED_BALANCE_TOL: f64 = 1e-12;

/// A finite, irreducible, `m`-symmetric chain: masses `m`, off-diagonal jump rates `q`
/// (the Lévy kernel `N(x, {y})` with clock `H_t = t`) and killing rates `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricChain {
    m: Vec<f64>,
    q: CsrMatrix,
    k: Vec<f64>,
}

impl SymmetricChain {
    /// Validates and builds a chain. Pairs within [`DETAILED_BALANCE_TOL`] are symmetrized in
    /// place via `q[x][y] <- (m[x]q[x][y] + m[y]q[y][x]) / (2 m[x])`; larger defects are rejected
    /// unless `repair` is set.
    pub fn new(m: Vec<f64>, q: CsrMatrix, k: Vec<f64>, repair: bool) -> Result<Self> {
        let n = m.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        if q.n() != n {
            return Err(Error::Dimension {
                expected: n,
                got: q.n(),
            });
        }
        if k.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: k.len(),
            });
        }
        for (state, &value) in m.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite("m"));
            }
            if value <= 0.0 {
                return Err(Error::NonPositiveMass { state, value });
            }
        }
        for (state, &value) in k.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite("k"));
            }
            if value < 0.0 {
                return Err(Error::NegativeKilling { state, value });
            }
        }
        for (from, to, value) in q.triplets() {
            if !value.is_finite() {
                return Err(Error::NonFinite("q"));
            }
            if from == to {
                return Err(Error::InvalidParameter(alloc::format!(
                    "rate matrix has a diagonal entry at state {from}"
                )));
            }
            if value < 0.0 {
                return Err(Error::NegativeRate { from, to, value });
            }
        }
        let mut sym = Vec::with_capacity(q.nnz());
        for (x, y, v) in q.triplets() {
            let back = q.get(y, x);
            let fwd_flux = m[x] * v;
            let back_flux = m[y] * back;
            let defect = (fwd_flux - back_flux).abs() / fwd_flux.max(back_flux);
            if defect > DETAILED_BALANCE_TOL && !repair {
                return Err(Error::DetailedBalance {
                    from: x,
                    to: y,
                    defect,
                });
            }
            sym.push((x, y, 0.5 * (fwd_flux + back_flux) / m[x]));
        }
        // Entries present only as (y, x) need their mirror added.
        for (x, y, v) in q.triplets() {
            if q.get(y, x) == 0.0 {
                sym.push((y, x, 0.5 * m[x] * v / m[y]));
            }
        }
        let q = CsrMatrix::from_triplets(n, sym);
        let chain = Self { m, q, k };
        if let Some(unreachable) = chain.first_unreachable() {
            return Err(Error::NotConnected { unreachable });
        }
        Ok(chain)
    }

    fn first_unreachable(&self) -> Option<usize> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(x) = queue.pop_front() {
            for (y, v) in self.q.row(x) {
                if v > 0.0 && !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen.iter().position(|s| !s)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.m.len()
    }

    #[inline]
    pub fn mass(&self) -> &[f64] {
        &self.m
    }

    #[inline]
    pub fn rates(&self) -> &CsrMatrix {
        &self.q
    }

    #[inline]
    pub fn killing(&self) -> &[f64] {
        &self.k
    }

    pub fn is_conservative(&self) -> bool {
        self.k.iter().all(|&k| k == 0.0)
    }

    /// Total jump rate out of each state, excluding killing.
    pub fn jump_rates(&self) -> Vec<f64> {
        self.q.row_sums()
    }

    pub fn check_state(&self, x: usize) -> Result<()> {
        if x < self.n() {
            Ok(())
        } else {
            Err(Error::StateOutOfRange {
                index: x,
                n: self.n(),
            })
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.n(),
                got: len,
            })
        }
    }

    /// Same masses with jump rates replaced (pattern kept). Used by the Girsanov transform.
    pub(crate) fn with_rates(&self, q: CsrMatrix) -> Self {
        Self {
            m: self.m.clone(),
            q,
            k: self.k.clone(),
        }
    }

    /// The generator `Q`, with killing folded into the diagonal.
    pub fn generator(&self) -> GeneratorMatrix {
        let diag = self
            .q
            .row_sums()
            .iter()
            .zip(&self.k)
            .map(|(s, k)| -(s + k))
            .collect();
        GeneratorMatrix {
            op: SymOperator::new(self.m.clone(), self.q.clone(), diag),
            killing_folded: true,
        }
    }

    /// Green operator `G_alpha = (alpha I - Q)^{-1}`.
    pub fn green(&self, alpha: f64) -> Result<GreenOperator> {
        if alpha < 0.0 || !alpha.is_finite() {
            return Err(Error::NegativeAlpha(alpha));
        }
        if alpha == 0.0 && self.is_conservative() {
            return Err(Error::NotTransient);
        }
        let n = self.n();
        let mut s = self.generator().op.neg_symmetrized_dense();
        for i in 0..n {
            s[(i, i)] += alpha;
        }
        let chol = nalgebra::Cholesky::new(s).ok_or(if alpha == 0.0 {
            Error::NotTransient
        } else {
            Error::Solve("resolvent matrix is not positive definite")
        })?;
        let mut g = chol.inverse();
        let sqrt_m: Vec<f64> = self.m.iter().map(|&m| libm::sqrt(m)).collect();
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] *= sqrt_m[j] / sqrt_m[i];
            }
        }
        Ok(GreenOperator { alpha, matrix: g })
    }

    /// The `alpha`-subprocess: extra uniform killing at rate `alpha`.
    pub fn alpha_subprocess(&self, alpha: f64) -> Result<Self> {
        if alpha < 0.0 || !alpha.is_finite() {
            return Err(Error::NegativeAlpha(alpha));
        }
        Ok(Self {
            m: self.m.clone(),
            q: self.q.clone(),
            k: self.k.iter().map(|k| k + alpha).collect(),
        })
    }

    /// `E(u, u) = 1/2 sum_{x,y} m[x] q[x][y] (u[x] - u[y])^2 + sum_x k[x] m[x] u[x]^2`.
    pub fn dirichlet_energy(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u.len())?;
        let mut jump = 0.0;
        for x in 0..self.n() {
            for (y, v) in self.q.row(x) {
                let d = u[x] - u[y];
                jump += self.m[x] * v * d * d;
            }
        }
        let kill: f64 = (0..self.n())
            .map(|x| self.k[x] * self.m[x] * u[x] * u[x])
            .sum();
        Ok(0.5 * jump + kill)
    }
}

/// The generator matrix of a chain: `Q[x][y] = q[x][y]`, `Q[x][x] = -(sum_y q[x][y] + k[x])`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    op: SymOperator,
    killing_folded: bool,
}

impl GeneratorMatrix {
    pub fn operator(&self) -> &SymOperator {
        &self.op
    }

    pub fn into_operator(self) -> SymOperator {
        self.op
    }

    pub fn killing_folded(&self) -> bool {
        self.killing_folded
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.op.to_dense()
    }

    /// Row sums `Q 1`, equal to `-k`.
    pub fn row_sums(&self) -> Vec<f64> {
        self.op.apply(&vec![1.0; self.op.n()])
    }
}

/// `e^{tA} f` for any `m`-symmetric operator: through the eigendecomposition up to
/// [`DENSE_EIGEN_LIMIT`] states, uniformization above.
pub fn operator_semigroup_apply(op: &SymOperator, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if f.len() != op.n() {
        return Err(Error::Dimension {
            expected: op.n(),
            got: f.len(),
        });
    }
    if t == 0.0 {
        return Ok(f.to_vec());
    }
    Ok(if op.n() <= DENSE_EIGEN_LIMIT {
        op.spectrum().exp_apply(t, f)
    } else {
        linalg::exp_action(op, t, f)
    })
}

/// `\int_0^t e^{sA} f ds`, exact on the spectrum for dense sizes and by quadrature above.
pub fn operator_semigroup_integral(op: &SymOperator, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if f.len() != op.n() {
        return Err(Error::Dimension {
            expected: op.n(),
            got: f.len(),
        });
    }
    Ok(if op.n() <= DENSE_EIGEN_LIMIT {
        op.spectrum().exp_integral_apply(t, f)
    } else {
        linalg::exp_integral_action(op, t, f)
    })
}

/// `P_t f = e^{tQ} f`.
pub fn semigroup_apply(q: &GeneratorMatrix, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    operator_semigroup_apply(&q.op, t, f)
}

/// Resolvent `G_alpha` stored as a matrix against counting measure. The Green kernel against
/// `m` is `G(x, y) = matrix[x][y] / m[y]`, so `E_x \int f(X_s) ds = sum_y G(x,y) f(y) m[y]`.
#[derive(Clone, Debug)]
pub struct GreenOperator {
    alpha: f64,
    matrix: DMatrix<f64>,
}

impl GreenOperator {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Kernel density `G(x, y)` with respect to `m`.
    pub fn kernel(&self, x: usize, y: usize, mass: &[f64]) -> f64 {
        self.matrix[(x, y)] / mass[y]
    }

    /// `G nu (x) = sum_y G(x, y) nu[y]` for a measure given by its atoms.
    pub fn potential(&self, nu: &[f64], mass: &[f64]) -> Vec<f64> {
        let n = self.matrix.nrows();
        (0..n)
            .map(|x| (0..n).map(|y| self.matrix[(x, y)] / mass[y] * nu[y]).sum())
            .collect()
    }
}

/// Cached eigendecomposition of a chain's generator for repeated semigroup evaluations.
pub fn generator_spectrum(chain: &SymmetricChain) -> Spectrum {
    chain.generator().op.spectrum()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_state() -> SymmetricChain {
        SymmetricChain::new(
            vec![1.0, 1.0],
            CsrMatrix::from_triplets(2, [(0, 1, 1.0), (1, 0, 1.0)]),
            vec![1.0, 1.0],
            false,
        )
        .unwrap()
    }

    #[test]
    fn two_state_generator_and_green() {
        let c = two_state();
        let q = c.generator().to_dense();
        assert_eq!(q, DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]));
        let g = c.green(0.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]) / 3.0;
        assert!((g.matrix() - expected).amax() < 1e-15);
        assert!((c.dirichlet_energy(&[1.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        let v = semigroup_apply(&c.generator(), 1.0, &[1.0, 1.0]).unwrap();
        let e = libm::exp(-1.0);
        assert!((v[0] - e).abs() < 1e-15 && (v[1] - e).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let q = CsrMatrix::from_triplets(2, [(0, 1, 1.0), (1, 0, 1.0)]);
        assert!(matches!(
            SymmetricChain::new(vec![1.0, 0.0], q.clone(), vec![0.0; 2], false),
            Err(Error::NonPositiveMass { state: 1, .. })
        ));
        assert!(matches!(
            SymmetricChain::new(vec![1.0, 1.0], q.clone(), vec![0.0, -1.0], false),
            Err(Error::NegativeKilling { state: 1, .. })
        ));
        let neg = CsrMatrix::from_triplets(2, [(0, 1, -1.0), (1, 0, -1.0)]);
        assert!(matches!(
            SymmetricChain::new(vec![1.0, 1.0], neg, vec![0.0; 2], false),
            Err(Error::NegativeRate { .. })
        ));
        let split = CsrMatrix::from_triplets(3, [(0, 1, 1.0), (1, 0, 1.0)]);
        assert!(matches!(
            SymmetricChain::new(vec![1.0; 3], split, vec![0.0; 3], false),
            Err(Error::NotConnected { unreachable: 2 })
        ));
        let c = SymmetricChain::new(vec![1.0; 2], q, vec![0.0; 2], false).unwrap();
        assert!(matches!(c.green(0.0), Err(Error::NotTransient)));
        assert!(matches!(
            c.alpha_subprocess(-1.0),
            Err(Error::NegativeAlpha(_))
        ));
        assert!(matches!(
            semigroup_apply(&c.generator(), -1.0, &[1.0, 1.0]),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn detailed_balance_tolerance_and_repair() {
        // m = (1, 2): balanced rates are q01 = 2 q10.
        let m = vec![1.0, 2.0];
        let near = CsrMatrix::from_triplets(2, [(0, 1, 2.0 * (1.0 + 1e-14)), (1, 0, 1.0)]);
        let c = SymmetricChain::new(m.clone(), near, vec![0.0; 2], false).unwrap();
        assert_eq!(m[0] * c.rates().get(0, 1), m[1] * c.rates().get(1, 0));
        let far = CsrMatrix::from_triplets(2, [(0, 1, 3.0), (1, 0, 1.0)]);
        assert!(matches!(
            SymmetricChain::new(m.clone(), far.clone(), vec![0.0; 2], false),
            Err(Error::DetailedBalance { .. })
        ));
        let fixed = SymmetricChain::new(m.clone(), far, vec![0.0; 2], true).unwrap();
        // (1*3 + 2*1) / 2 = 2.5 flux each way
        assert!((fixed.rates().get(0, 1) - 2.5).abs() < 1e-15);
        assert!((fixed.rates().get(1, 0) - 1.25).abs() < 1e-15);
        let one_sided = CsrMatrix::from_triplets(2, [(0, 1, 2.0)]);
        let c = SymmetricChain::new(m, one_sided, vec![0.0; 2], true).unwrap();
        assert!((c.rates().get(1, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn subprocess_green_equals_resolvent() {
        let c = two_state();
        let sub = c.alpha_subprocess(1.3).unwrap();
        let a = sub.green(0.0).unwrap();
        let b = c.green(1.3).unwrap();
        assert!((a.matrix() - b.matrix()).amax() < 1e-10);
        assert_eq!(c.alpha_subprocess(0.0).unwrap(), c);
    }
}
