//! The pure-jump Girsanov transform `X -> Y` under `dP^Y = Exp(M)_t dP^X`, with
//! `M` the compensated sum of `e^F - 1` over jumps.
//!
//! `Y` jumps at rates `q e^F` with the same masses and killing. Its Dirichlet form is
//! `E^Y(u, u) = E(u, u) + 1/2 sum m q (e^F - 1)(u_x - u_y)^2`, and the Schrödinger generator
//! of `(X, mu, F)` is the plain generator of `Y` shifted by `(mu + nu_F) / m`.

use alloc::vec::Vec;

use crate::chain::{operator_semigroup_integral, SymmetricChain};
use crate::error::{Error, Result};
use crate::feynman_kac::{
    exponential_lifetime_moment, schrodinger_generator, JumpPerturbation, SmoothMeasure,
};
use crate::revuz::{jump_measure_of_f, potential, JumpWeight};

/// The transformed chain `Y` with the data it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedChain {
    pub chain: SymmetricChain,
    pub source: SymmetricChain,
    pub f: JumpPerturbation,
}

impl TransformedChain {
    pub fn chain(&self) -> &SymmetricChain {
        &self.chain
    }
}

/// `q_Y = q e^F`, `m` and `k` unchanged.
pub fn transform_chain(chain: &SymmetricChain, f: &JumpPerturbation) -> Result<TransformedChain> {
    chain.check_len(f.n())?;
    let q = chain
        .rates()
        .map_entries(|x, y, v| v * libm::exp(f.get(x, y)));
    Ok(TransformedChain {
        chain: chain.with_rates(q),
        source: chain.clone(),
        f: f.clone(),
    })
}

/// `|E^Y(u,u) - E(u,u) - 1/2 sum_{x,y} m q (e^F - 1)(u_x - u_y)^2|`.
pub fn form_identity_residual(
    chain: &SymmetricChain,
    f: &JumpPerturbation,
    u: &[f64],
) -> Result<f64> {
    let y = transform_chain(chain, f)?;
    let lhs = y.chain.dirichlet_energy(u)?;
    let mut extra = 0.0;
    for x in 0..chain.n() {
        for (z, rate) in chain.rates().row(x) {
            let d = u[x] - u[z];
            extra += chain.mass()[x] * rate * libm::expm1(f.get(x, z)) * d * d;
        }
    }
    Ok((lhs - chain.dirichlet_energy(u)? - 0.5 * extra).abs())
}

/// `|| A^{mu,F}(X) - (Q_Y + diag((mu + nu_F)/m)) ||_max`.
pub fn reduction_identity_residual(
    chain: &SymmetricChain,
    mu: &SmoothMeasure,
    f: &JumpPerturbation,
) -> Result<f64> {
    let a = schrodinger_generator(chain, mu, f)?;
    let y = transform_chain(chain, f)?;
    let nu_f = jump_measure_of_f(chain, f, JumpWeight::ExpMinusOne)?;
    let shift = mu.add(&nu_f);
    let b = schrodinger_generator(&y.chain, &shift, &JumpPerturbation::zero(chain.n()))?;
    Ok((a.operator().to_dense() - b.operator().to_dense()).amax())
}

/// Both sides of `||G^Y nu||_inf <= c0 (k!)^{1/k} ||G nu||_inf`, with
/// `c0 = sup_x (E_x Z_zeta^p)^{1/p}` at `p = k/(k-1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransferBound {
    pub lhs: f64,
    pub rhs: f64,
    pub c0: f64,
    pub p: f64,
    pub k: u32,
    /// `lhs <= rhs + 1e-9`.
    pub holds: bool,
    /// A bounded potential under `X` stays bounded under `Y`.
    pub bounded: bool,
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

pub fn kato_transfer_bound(
    chain: &SymmetricChain,
    nu: &SmoothMeasure,
    f: &JumpPerturbation,
    k: u32,
) -> Result<TransferBound> {
    if k < 2 {
        return Err(Error::InvalidParameter(alloc::format!(
            "k must be at least 2, got {k}"
        )));
    }
    chain.check_len(nu.len())?;
    nu.require_nonnegative()?;
    let p = k as f64 / (k as f64 - 1.0);
    let moment = exponential_lifetime_moment(chain, &SmoothMeasure::zero(chain.n()), f, p)?;
    let c0 = moment
        .iter()
        .fold(0.0f64, |a, &v| a.max(libm::pow(v, 1.0 / p)));
    let y = transform_chain(chain, f)?;
    let sup = |v: Vec<f64>| v.into_iter().fold(0.0f64, f64::max);
    let gx = sup(potential(chain, nu, 0.0)?);
    let gy = sup(potential(&y.chain, nu, 0.0)?);
    let rhs = c0 * libm::pow(factorial(k), 1.0 / k as f64) * gx;
    Ok(TransferBound {
        lhs: gy,
        rhs,
        c0,
        p,
        k,
        holds: gy <= rhs + 1e-9,
        bounded: !gx.is_finite() || gy.is_finite(),
    })
}

/// The small-time Revuz limit of `A^nu` computed under `Y` and under `X` reweighted by `Exp(M)`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RevuzInvariance {
    pub under_y: f64,
    pub under_x: f64,
    /// `nu(E)`, the common limit as `t -> 0` when evaluated against `f = 1`.
    pub total: f64,
    pub residual: f64,
}

/// `(1/t) E_m[A_t^nu]` under `Y` (its own semigroup) and under `X` with the reweighting
/// `E^Y_x[.] = E_x[Z_t .]`, i.e. through the Feynman-Kac semigroup of `(-nu_F, F)` on `X`.
pub fn revuz_invariance_check(
    chain: &SymmetricChain,
    f: &JumpPerturbation,
    nu: &SmoothMeasure,
    t: f64,
) -> Result<RevuzInvariance> {
    chain.check_len(nu.len())?;
    nu.require_nonnegative()?;
    if !(t > 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let density = nu.density(chain.mass());
    let pair = |v: Vec<f64>| v.iter().zip(chain.mass()).map(|(a, m)| a * m).sum::<f64>() / t;
    let y = transform_chain(chain, f)?;
    let under_y = pair(operator_semigroup_integral(
        y.chain.generator().operator(),
        t,
        &density,
    )?);
    let nu_f = jump_measure_of_f(chain, f, JumpWeight::ExpMinusOne)?;
    let reweighted = schrodinger_generator(chain, &nu_f.scaled(-1.0), f)?;
    let under_x = pair(operator_semigroup_integral(
        reweighted.operator(),
        t,
        &density,
    )?);
    Ok(RevuzInvariance {
        under_y,
        under_x,
        total: nu.total(),
        residual: (under_y - under_x).abs(),
    })
}
