//! Local and non-local Feynman-Kac generators, their semigroups, and the gauge function.
//!
//! For a chain with generator `Q`, a signed measure `mu` and a symmetric jump weight `F`,
//! the Schrödinger generator is
//!
//! ```text
//! A[x][y] = q[x][y] e^{F[x][y]}          (x != y)
//! A[x][x] = Q[x][x] + mu[x] / m[x]
//! ```
//!
//! so that `e^{tA} f (x) = E_x[exp(A^mu_t + sum_{s <= t} F(X_{s-}, X_s)) f(X_t)]`. The gauge
//! `g(x) = E_x[exp(A^mu_zeta + sum F)]` solves `(-A) g = k` and is finite exactly when the
//! bottom of the spectrum of `-A` is positive.

use alloc::vec::Vec;

use crate::chain::{operator_semigroup_apply, SymmetricChain};
use crate::error::{Error, Result};
use crate::linalg::{lowest_eigen, solve_shifted, CsrMatrix, SymOperator};

/// Positivity threshold on `lambda2` for computing the gauge.
pub const GAUGE_TOL: f64 = 1e-10;
/// Half-width of the band around `lambda2 = 0` reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-8;
/// Upper end of the super-gauge search.
pub const SUPER_GAUGE_CAP: f64 = 10.0;
/// Bisection steps of the super-gauge search.
pub const SUPER_GAUGE_ITERS: usize = 40;

const SYMMETRY_TOL: f64 = 1e-12;

/// A signed measure on the states, given by its atoms. Its additive functional is
/// `A_t = \int_0^t (mu / m)(X_s) ds`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothMeasure {
    atoms: Vec<f64>,
}

impl SmoothMeasure {
    pub fn new(atoms: Vec<f64>) -> Result<Self> {
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("measure"));
        }
        Ok(Self { atoms })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            atoms: alloc::vec![0.0; n],
        }
    }

    pub fn point(n: usize, x: usize, mass: f64) -> Self {
        let mut atoms = alloc::vec![0.0; n];
        atoms[x] = mass;
        Self { atoms }
    }

    /// The measure with density `c` against `m`.
    pub fn uniform_density(mass: &[f64], c: f64) -> Self {
        Self {
            atoms: mass.iter().map(|m| c * m).collect(),
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn positive_part(&self) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| a.max(0.0)).collect(),
        }
    }

    pub fn negative_part(&self) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| (-a).max(0.0)).collect(),
        }
    }

    pub fn abs(&self) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| a.abs()).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| c * a).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .zip(&other.atoms)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.atoms.iter().all(|&a| a >= 0.0)
    }

    pub(crate) fn require_nonnegative(&self) -> Result<()> {
        match self.atoms.iter().position(|&a| a < 0.0) {
            Some(state) => Err(Error::NegativeMeasure {
                state,
                value: self.atoms[state],
            }),
            None => Ok(()),
        }
    }

    /// Density `mu[x] / m[x]` against the symmetrizing measure.
    pub fn density(&self, mass: &[f64]) -> Vec<f64> {
        self.atoms.iter().zip(mass).map(|(a, m)| a / m).collect()
    }
}

/// A bounded symmetric jump weight `F` with zero diagonal, stored sparsely.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpPerturbation {
    f: CsrMatrix,
}

impl JumpPerturbation {
    pub fn zero(n: usize) -> Self {
        Self {
            f: CsrMatrix::zeros(n),
        }
    }

    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let t: Vec<_> = triplets.into_iter().collect();
        for &(i, j, v) in &t {
            for idx in [i, j] {
                if idx >= n {
                    return Err(Error::StateOutOfRange { index: idx, n });
                }
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("F"));
            }
        }
        Self::from_csr(CsrMatrix::from_triplets(n, t))
    }

    pub fn from_csr(f: CsrMatrix) -> Result<Self> {
        for (i, j, v) in f.triplets() {
            if i == j {
                return Err(Error::DiagonalJump(i));
            }
            let back = f.get(j, i);
            if (v - back).abs() > SYMMETRY_TOL * v.abs().max(back.abs()).max(1.0) {
                return Err(Error::AsymmetricJump { from: i, to: j });
            }
        }
        Ok(Self { f })
    }

    pub fn n(&self) -> usize {
        self.f.n()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.f
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.f.get(x, y)
    }

    pub fn max_abs(&self) -> f64 {
        self.f.max_abs()
    }

    pub fn is_zero(&self) -> bool {
        self.f.vals().iter().all(|&v| v == 0.0)
    }

    /// Values of `F` at every stored entry of `q`, in `q`'s storage order.
    pub fn aligned(&self, q: &CsrMatrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(q.nnz());
        for i in 0..q.n() {
            for p in q.row_range(i) {
                out.push(self.f.get(i, q.cols()[p]));
            }
        }
        out
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Self {
        Self {
            f: self.f.map_entries(|_, _, v| g(v)),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `F + eps |F|`.
    pub fn plus_abs(&self, eps: f64) -> Self {
        self.map(|v| v + eps * v.abs())
    }
}

/// The matrix of `L + mu_H F + mu` together with the data it was assembled from.
#[derive(Clone, Debug, PartialEq)]
pub struct SchrodingerOperator {
    op: SymOperator,
    mu: SmoothMeasure,
    f: JumpPerturbation,
}

impl SchrodingerOperator {
    pub fn operator(&self) -> &SymOperator {
        &self.op
    }

    pub fn measure(&self) -> &SmoothMeasure {
        &self.mu
    }

    pub fn jump(&self) -> &JumpPerturbation {
        &self.f
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    /// `A - alpha I`, the generator of the same pair on the `alpha`-subprocess.
    pub fn subprocess(&self, alpha: f64) -> Self {
        Self {
            op: self.op.shifted(-alpha),
            mu: self.mu.clone(),
            f: self.f.clone(),
        }
    }

    /// Wraps a bare operator (e.g. a plain generator) with zero `mu` and `F`.
    pub fn from_operator(op: SymOperator) -> Self {
        let n = op.n();
        Self {
            op,
            mu: SmoothMeasure::zero(n),
            f: JumpPerturbation::zero(n),
        }
    }
}

fn check_inputs(chain: &SymmetricChain, mu: &SmoothMeasure, f: &JumpPerturbation) -> Result<()> {
    if mu.len() != chain.n() {
        return Err(Error::Dimension {
            expected: chain.n(),
            got: mu.len(),
        });
    }
    if f.n() != chain.n() {
        return Err(Error::Dimension {
            expected: chain.n(),
            got: f.n(),
        });
    }
    Ok(())
}

/// Assembles `A = L + mu_H F + mu`.
pub fn schrodinger_generator(
    chain: &SymmetricChain,
    mu: &SmoothMeasure,
    f: &JumpPerturbation,
) -> Result<SchrodingerOperator> {
    check_inputs(chain, mu, f)?;
    let gen = chain.generator();
    let q = chain.rates();
    let off = if f.is_zero() {
        q.clone()
    } else {
        q.map_entries(|i, j, v| v * libm::exp(f.get(i, j)))
    };
    let diag = gen
        .operator()
        .diag()
        .iter()
        .zip(mu.density(chain.mass()))
        .map(|(d, w)| d + w)
        .collect();
    Ok(SchrodingerOperator {
        op: SymOperator::new(chain.mass().to_vec(), off, diag),
        mu: mu.clone(),
        f: f.clone(),
    })
}

/// `T_t^{mu,F} f = e^{tA} f`.
pub fn fk_semigroup_apply(op: &SchrodingerOperator, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    operator_semigroup_apply(&op.op, t, f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GaugeStatus {
    Gaugeable,
    /// `|lambda2| <= MARGINAL_BAND`: too close to the threshold to call.
    Marginal,
    NotGaugeable,
}

impl GaugeStatus {
    pub fn from_lambda2(lambda2: f64) -> Self {
        if lambda2 > MARGINAL_BAND {
            GaugeStatus::Gaugeable
        } else if lambda2 < -MARGINAL_BAND {
            GaugeStatus::NotGaugeable
        } else {
            GaugeStatus::Marginal
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Gauge {
    /// The gauge function, `None` when it is identically infinite.
    pub g: Option<Vec<f64>>,
    pub gaugeable: bool,
    pub lambda2: f64,
    pub status: GaugeStatus,
}

/// Lowest eigenvalue of the symmetrized `-A`.
pub fn principal_value(op: &SchrodingerOperator) -> f64 {
    lowest_eigen(&op.op, false).0
}

/// The gauge `g = (-A)^{-1} k`, finite iff the principal value of `-A` is positive.
/// Every state of a finite chain is regular, so the bounded-or-infinite dichotomy holds at every
/// state and no exceptional set is tracked.
pub fn gauge_function(
    chain: &SymmetricChain,
    mu: &SmoothMeasure,
    f: &JumpPerturbation,
) -> Result<Gauge> {
    if chain.is_conservative() {
        return Err(Error::NoLifetime);
    }
    let op = schrodinger_generator(chain, mu, f)?;
    let lambda2 = principal_value(&op);
    let status = GaugeStatus::from_lambda2(lambda2);
    let gaugeable = lambda2 > GAUGE_TOL;
    let g = if gaugeable {
        Some(solve_shifted(&op.op, 0.0, chain.killing())?)
    } else {
        None
    };
    Ok(Gauge {
        g,
        gaugeable,
        lambda2,
        status,
    })
}

/// Largest `eps` in `[0, SUPER_GAUGE_CAP]` keeping `(mu + eps|mu|, F + eps|F|)` gaugeable.
pub fn super_gauge_margin(
    chain: &SymmetricChain,
    mu: &SmoothMeasure,
    f: &JumpPerturbation,
) -> Result<f64> {
    if chain.is_conservative() {
        return Err(Error::NoLifetime);
    }
    let lambda_at = |eps: f64| -> Result<f64> {
        let m = mu.add(&mu.abs().scaled(eps));
        let ff = f.plus_abs(eps);
        Ok(principal_value(&schrodinger_generator(chain, &m, &ff)?))
    };
    let base = lambda_at(0.0)?;
    if base <= GAUGE_TOL {
        return Err(Error::NotGaugeable { lambda2: base });
    }
    if lambda_at(SUPER_GAUGE_CAP)? > GAUGE_TOL {
        return Ok(SUPER_GAUGE_CAP);
    }
    let (mut lo, mut hi) = (0.0, SUPER_GAUGE_CAP);
    for _ in 0..SUPER_GAUGE_ITERS {
        let mid = 0.5 * (lo + hi);
        if lambda_at(mid)? > GAUGE_TOL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `x -> E_x[(e^{A^mu_zeta} Z_zeta)^p]` where `Z = Exp(M)` is the exponential martingale of `F`.
/// Since `Z_zeta^p = exp(p sum F - p A^F_zeta)`, this is the gauge of `(p(mu - nu_F), pF)`.
pub fn exponential_lifetime_moment(
    chain: &SymmetricChain,
    mu: &SmoothMeasure,
    f: &JumpPerturbation,
    p: f64,
) -> Result<Vec<f64>> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!(
            "moment order must be >= 1, got {p}"
        )));
    }
    check_inputs(chain, mu, f)?;
    let nu_f = crate::revuz::jump_measure_of_f(chain, f, crate::revuz::JumpWeight::ExpMinusOne)?;
    let mu_p = mu.add(&nu_f.scaled(-1.0)).scaled(p);
    let gauge = gauge_function(chain, &mu_p, &f.scaled(p))?;
    gauge.g.ok_or(Error::MomentInfinite {
        p,
        lambda2: gauge.lambda2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::two_state;
    use nalgebra::DMatrix;

    #[test]
    fn two_state_operator_examples() {
        let c = two_state();
        let zero =
            schrodinger_generator(&c, &SmoothMeasure::zero(2), &JumpPerturbation::zero(2)).unwrap();
        assert_eq!(zero.operator(), c.generator().operator());
        let a = schrodinger_generator(
            &c,
            &SmoothMeasure::point(2, 0, 0.5),
            &JumpPerturbation::zero(2),
        )
        .unwrap();
        assert_eq!(
            a.operator().to_dense(),
            DMatrix::from_row_slice(2, 2, &[-1.5, 1.0, 1.0, -2.0])
        );
        let ln2 = core::f64::consts::LN_2;
        let f = JumpPerturbation::from_triplets(2, [(0, 1, ln2), (1, 0, ln2)]).unwrap();
        let b = schrodinger_generator(&c, &SmoothMeasure::zero(2), &f).unwrap();
        assert!(
            (b.operator().to_dense() - DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 2.0, -2.0]))
                .amax()
                < 1e-15
        );
    }

    #[test]
    fn gauge_examples() {
        let c = two_state();
        let z = JumpPerturbation::zero(2);
        let unit = gauge_function(&c, &SmoothMeasure::zero(2), &z).unwrap();
        for v in unit.g.unwrap() {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let g = gauge_function(&c, &SmoothMeasure::point(2, 0, 0.5), &z).unwrap();
        assert!(g.gaugeable && g.status == GaugeStatus::Gaugeable);
        let g = g.g.unwrap();
        assert!((g[0] - 1.5).abs() < 1e-12 && (g[1] - 1.25).abs() < 1e-12);
        let bad = gauge_function(&c, &SmoothMeasure::point(2, 0, 5.0), &z).unwrap();
        assert!(!bad.gaugeable && bad.g.is_none() && bad.status == GaugeStatus::NotGaugeable);
    }

    #[test]
    fn super_gauge_two_state_closed_form() {
        // -A(eps) = [[a, -1], [-1, 2]] with a = 1.5 - 0.5 eps is singular at eps = 2. The search
        // stops where the lowest eigenvalue hits GAUGE_TOL: (a - tol)(2 - tol) = 1.
        let c = two_state();
        let e = super_gauge_margin(
            &c,
            &SmoothMeasure::point(2, 0, 0.5),
            &JumpPerturbation::zero(2),
        )
        .unwrap();
        let a = GAUGE_TOL + 1.0 / (2.0 - GAUGE_TOL);
        let root = (1.5 - a) / 0.5;
        assert!((e - root).abs() < 1e-10, "{e} vs {root}");
        assert!(e < 2.0 && 2.0 - e < 1e-9);
        let cap =
            super_gauge_margin(&c, &SmoothMeasure::zero(2), &JumpPerturbation::zero(2)).unwrap();
        assert_eq!(cap, SUPER_GAUGE_CAP);
        // Threshold for a point mass at 0 is mu0 = 1.5; just below it the margin is tiny but positive.
        let near = super_gauge_margin(
            &c,
            &SmoothMeasure::point(2, 0, 1.5 - 1e-6),
            &JumpPerturbation::zero(2),
        )
        .unwrap();
        assert!(near > 1e-9 && near < 1e-5, "{near}");
        assert!(matches!(
            super_gauge_margin(
                &c,
                &SmoothMeasure::point(2, 0, 5.0),
                &JumpPerturbation::zero(2)
            ),
            Err(Error::NotGaugeable { .. })
        ));
    }

    #[test]
    fn lifetime_moments() {
        let c = two_state();
        let ln2 = core::f64::consts::LN_2;
        let f = JumpPerturbation::from_triplets(2, [(0, 1, ln2), (1, 0, ln2)]).unwrap();
        let one = exponential_lifetime_moment(&c, &SmoothMeasure::zero(2), &f, 1.0).unwrap();
        assert!(one.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let flat = exponential_lifetime_moment(
            &c,
            &SmoothMeasure::zero(2),
            &JumpPerturbation::zero(2),
            3.0,
        )
        .unwrap();
        assert!(flat.iter().all(|v| (v - 1.0).abs() < 1e-12));
        // p = 2: gauge of (mu = -2 nu_F, 2F); nu_F = (1, 1), e^{2F} q = 4.
        // -A = [[2 + 2, -4], [-4, 2 + 2]] is singular, so the second moment is infinite.
        assert!(matches!(
            exponential_lifetime_moment(&c, &SmoothMeasure::zero(2), &f, 2.0),
            Err(Error::MomentInfinite { .. })
        ));
        // F = log(1.2): nu_F = 0.2 per state, e^{2F} = 1.44, so -A = [[2.4, -1.44], [-1.44, 2.4]]
        // and by symmetry g = 1 / (2.4 - 1.44) on both states.
        let l = libm::log(1.2);
        let f = JumpPerturbation::from_triplets(2, [(0, 1, l), (1, 0, l)]).unwrap();
        let g = exponential_lifetime_moment(&c, &SmoothMeasure::zero(2), &f, 2.0).unwrap();
        for v in g {
            assert!((v - 1.0 / 0.96).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn jump_perturbation_validation() {
        assert!(matches!(
            JumpPerturbation::from_triplets(2, [(0, 1, 1.0), (1, 0, 0.5)]),
            Err(Error::AsymmetricJump { .. })
        ));
        assert!(matches!(
            JumpPerturbation::from_triplets(2, [(1, 1, 1.0)]),
            Err(Error::DiagonalJump(1))
        ));
        let c = two_state();
        let f3 = JumpPerturbation::zero(3);
        assert!(matches!(
            schrodinger_generator(&c, &SmoothMeasure::zero(2), &f3),
            Err(Error::Dimension { .. })
        ));
    }
}
