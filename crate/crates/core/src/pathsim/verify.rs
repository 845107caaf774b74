//! Monte Carlo checks against exact matrix oracles: the mean-one property of the Doléans-Dade
//! exponential, the quadratic variation of the jump martingale, the Girsanov reweighting and
//! the Feynman-Kac representation.

use alloc::vec;
use alloc::vec::Vec;

use super::estimate::{estimate_with, BlockRunner, McEstimate, McProblem, PathFunctional};
use super::{FunctionalWeights, JumpSampler, Trajectory};
use crate::chain::{operator_semigroup_apply, operator_semigroup_integral, SymmetricChain};
use crate::error::{Error, Result};
use crate::feynman_kac::{
    fk_semigroup_apply, schrodinger_generator, JumpPerturbation, SmoothMeasure,
};
use crate::girsanov::transform_chain;
use crate::revuz::{jump_measure_of_f, potential, JumpWeight};

/// Agreement band in standard errors.
pub const SE_BAND: f64 = 3.0;
pub const GIRSANOV_MIN_SAMPLES: usize = 10_000;

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!(
            "time must be positive and finite, got {t}"
        )))
    }
}

/// `(e^{tQ} 1)(x)`, the probability of being alive at `t`.
pub fn survival_probability(chain: &SymmetricChain, x: usize, t: f64) -> Result<f64> {
    chain.check_state(x)?;
    Ok(operator_semigroup_apply(chain.generator().operator(), t, &vec![1.0; chain.n()])?[x])
}

/// Smallest `T = 2^j` with `sup_x P_x(zeta > T) < tol`: a finite stand-in for the lifetime.
pub fn lifetime_horizon(chain: &SymmetricChain, tol: f64) -> Result<f64> {
    if chain.is_conservative() {
        return Err(Error::NoLifetime);
    }
    let op = chain.generator();
    let ones = vec![1.0; chain.n()];
    let mut t = 1.0;
    for _ in 0..60 {
        let alive = operator_semigroup_apply(op.operator(), t, &ones)?;
        if alive.iter().fold(0.0f64, |a, &v| a.max(v)) < tol {
            return Ok(t);
        }
        t *= 2.0;
    }
    Err(Error::NotConverged(alloc::format!(
        "survival stays above {tol} up to t = {t}"
    )))
}

/// Row `x` of `e^{tA}` for an `m`-symmetric `A`, from a single column solve.
fn semigroup_row(
    op: &crate::linalg::SymOperator,
    x: usize,
    t: f64,
    integral: bool,
) -> Result<Vec<f64>> {
    let mut delta = vec![0.0; op.n()];
    delta[x] = 1.0;
    let col = if integral {
        operator_semigroup_integral(op, t, &delta)?
    } else {
        operator_semigroup_apply(op, t, &delta)?
    };
    let m = op.mass();
    Ok(col.iter().zip(m).map(|(c, my)| c * my / m[x]).collect())
}

/// `[Z_{t ^ zeta}, Z_t 1{t < zeta}, 1{t < zeta}]`.
pub struct MeanOneFunctional {
    pub weights: FunctionalWeights,
    pub t: f64,
}

impl PathFunctional for MeanOneFunctional {
    fn dim(&self) -> usize {
        3
    }

    fn evaluate(&self, traj: &Trajectory, out: &mut [f64]) {
        let z = self.weights.doleans(traj, self.t);
        let alive = !traj.is_killed();
        out[0] = z;
        out[1] = if alive { z } else { 0.0 };
        out[2] = if alive { 1.0 } else { 0.0 };
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanOne {
    pub state: usize,
    pub t: f64,
    /// `E_x[Z_{t ^ zeta}]`, target 1.
    pub closed: McEstimate,
    /// `E_x[Z_t; t < zeta]`, which equals the survival probability of the transformed chain.
    pub alive: McEstimate,
    pub alive_exact: f64,
    pub survival: McEstimate,
    pub survival_exact: f64,
    pub passes: bool,
    /// The alive part never exceeds 1 beyond the band.
    pub supermartingale_ok: bool,
}

pub fn mc_mean_one(
    chain: &SymmetricChain,
    f: &JumpPerturbation,
    x: usize,
    t: f64,
    n: usize,
    seed: u64,
    runner: &impl BlockRunner,
) -> Result<MeanOne> {
    chain.check_state(x)?;
    check_time(t)?;
    let functional = MeanOneFunctional {
        weights: FunctionalWeights::new(chain, &SmoothMeasure::zero(chain.n()), f)?,
        t,
    };
    let sampler = JumpSampler::new(chain);
    let est = estimate_with(
        &McProblem {
            sampler: &sampler,
            start: x,
            horizon: t,
            functional: &functional,
            seed,
            n,
        },
        runner,
    )?;
    let y = transform_chain(chain, f)?;
    let alive_exact = survival_probability(&y.chain, x, t)?;
    let survival_exact = survival_probability(chain, x, t)?;
    Ok(MeanOne {
        state: x,
        t,
        closed: est[0],
        alive: est[1],
        alive_exact,
        survival: est[2],
        survival_exact,
        passes: est[0].within(1.0, SE_BAND),
        supermartingale_ok: est[1].mean <= 1.0 + SE_BAND * est[1].stderr,
    })
}

/// `sum_{s <= T ^ zeta} b(X_{s-}, X_s)^2`.
pub struct QuadVarFunctional {
    pub b: JumpPerturbation,
}

impl PathFunctional for QuadVarFunctional {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, traj: &Trajectory, out: &mut [f64]) {
        let mut s = 0.0;
        traj.for_each_jump(traj.horizon, |x, y| {
            let b = self.b.get(x, y);
            s += b * b;
        });
        out[0] = s;
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadVar {
    pub state: usize,
    pub horizon: f64,
    pub estimate: McEstimate,
    /// `(\int_0^T e^{sQ} (mu_{b^2} / m) ds)(x)`.
    pub exact: f64,
    pub sup_exact: f64,
    /// `sup_x G mu_{b^2}` on a transient chain.
    pub green_sup: Option<f64>,
    pub uniformly_integrable: bool,
    pub passes: bool,
}

/// Rejects `b <= -1`, the jump size below which `1 + b` is no longer a valid density factor.
pub fn check_jump_bound(b: &JumpPerturbation) -> Result<()> {
    match b
        .matrix()
        .triplets()
        .into_iter()
        .find(|&(_, _, v)| v <= -1.0)
    {
        Some((from, to, value)) => Err(Error::JumpBoundViolated { from, to, value }),
        None => Ok(()),
    }
}

pub fn mc_quadratic_variation(
    chain: &SymmetricChain,
    b: &JumpPerturbation,
    x: usize,
    horizon: f64,
    n: usize,
    seed: u64,
    runner: &impl BlockRunner,
) -> Result<QuadVar> {
    chain.check_state(x)?;
    chain.check_len(b.n())?;
    check_time(horizon)?;
    check_jump_bound(b)?;
    let mu_b2 = jump_measure_of_f(chain, b, JumpWeight::Square)?;
    let exact_all = operator_semigroup_integral(
        chain.generator().operator(),
        horizon,
        &mu_b2.density(chain.mass()),
    )?;
    let sup_exact = exact_all.iter().fold(0.0f64, |a, &v| a.max(v));
    let green_sup = if chain.is_conservative() {
        None
    } else {
        Some(
            potential(chain, &mu_b2, 0.0)?
                .into_iter()
                .fold(0.0f64, f64::max),
        )
    };
    let functional = QuadVarFunctional { b: b.clone() };
    let sampler = JumpSampler::new(chain);
    let est = estimate_with(
        &McProblem {
            sampler: &sampler,
            start: x,
            horizon,
            functional: &functional,
            seed,
            n,
        },
        runner,
    )?[0];
    Ok(QuadVar {
        state: x,
        horizon,
        estimate: est,
        exact: exact_all[x],
        sup_exact,
        green_sup,
        uniformly_integrable: sup_exact.is_finite() && green_sup.map_or(true, f64::is_finite),
        passes: est.within(exact_all[x], SE_BAND),
    })
}

/// Pearson statistic with a Wilson-Hilferty upper-tail p-value.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl ChiSquare {
    pub fn new(statistic: f64, df: usize) -> Self {
        Self {
            statistic,
            df,
            p_value: chi_square_upper_tail(statistic, df),
        }
    }
}

/// `P(chi^2_k > s)` by the Wilson-Hilferty cube-root normal approximation.
pub fn chi_square_upper_tail(s: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let k = k as f64;
    let v = 2.0 / (9.0 * k);
    let z = (libm::cbrt(s / k) - (1.0 - v)) / libm::sqrt(v);
    0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
}

struct Indicators {
    n: usize,
}

impl PathFunctional for Indicators {
    fn dim(&self) -> usize {
        self.n
    }

    fn evaluate(&self, traj: &Trajectory, out: &mut [f64]) {
        out.fill(0.0);
        if let Some(y) = traj.state_at(traj.horizon) {
            out[y] = 1.0;
        }
    }
}

/// `Z_t 1{X_t = y}` for every state, then `Z_t N_{a -> b}(t)` for every rate entry in storage order.
struct Reweighted {
    weights: FunctionalWeights,
    q: crate::linalg::CsrMatrix,
}

impl PathFunctional for Reweighted {
    fn dim(&self) -> usize {
        self.q.n() + self.q.nnz()
    }

    fn evaluate(&self, traj: &Trajectory, out: &mut [f64]) {
        out.fill(0.0);
        let t = traj.horizon;
        let z = self.weights.doleans(traj, t);
        if let Some(y) = traj.state_at(t) {
            out[y] = z;
        }
        let n = self.q.n();
        traj.for_each_jump(t, |a, b| {
            if let Some(p) = self.q.position(a, b) {
                out[n + p] += z;
            }
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateCell {
    pub state: usize,
    /// `e^{tQ_Y}(x, state)`.
    pub exact: f64,
    pub direct: McEstimate,
    pub reweighted: McEstimate,
    pub direct_ok: bool,
    pub reweighted_ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JumpPairCell {
    pub from: usize,
    pub to: usize,
    /// `q e^F`, the jump intensity of the transformed chain.
    pub rate: f64,
    /// Expected number of `from -> to` jumps before `t`: `\int_0^t e^{sQ_Y}(x, from) ds * rate`.
    pub exact: f64,
    pub reweighted: McEstimate,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GirsanovEmpirical {
    pub state: usize,
    pub t: f64,
    pub states: Vec<StateCell>,
    pub jumps: Vec<JumpPairCell>,
    /// Direct samples of the transformed chain (cemetery included) against the exact law.
    pub chi_square_direct: ChiSquare,
    /// Direct against reweighted, per state.
    pub chi_square_two_sample: ChiSquare,
    pub states_ok: bool,
    pub jumps_ok: bool,
    pub passes: bool,
}

pub fn girsanov_empirical(
    chain: &SymmetricChain,
    f: &JumpPerturbation,
    x: usize,
    t: f64,
    n: usize,
    seed: u64,
    runner: &impl BlockRunner,
) -> Result<GirsanovEmpirical> {
    chain.check_state(x)?;
    check_time(t)?;
    if n < GIRSANOV_MIN_SAMPLES {
        return Err(Error::InvalidParameter(alloc::format!(
            "the Girsanov check needs at least {GIRSANOV_MIN_SAMPLES} paths, got {n}"
        )));
    }
    let y = transform_chain(chain, f)?;
    let dim = chain.n();
    let row = semigroup_row(y.chain.generator().operator(), x, t, false)?;
    let occupation = semigroup_row(y.chain.generator().operator(), x, t, true)?;

    let y_sampler = JumpSampler::new(&y.chain);
    let direct = estimate_with(
        &McProblem {
            sampler: &y_sampler,
            start: x,
            horizon: t,
            functional: &Indicators { n: dim },
            seed,
            n,
        },
        runner,
    )?;
    let functional = Reweighted {
        weights: FunctionalWeights::new(chain, &SmoothMeasure::zero(dim), f)?,
        q: chain.rates().clone(),
    };
    let x_sampler = JumpSampler::new(chain);
    // A distinct seed keeps the two samples independent for the two-sample statistic.
    let reweighted = estimate_with(
        &McProblem {
            sampler: &x_sampler,
            start: x,
            horizon: t,
            functional: &functional,
            seed: seed ^ 0x9e37_79b9_7f4a_7c15,
            n,
        },
        runner,
    )?;

    let states: Vec<StateCell> = (0..dim)
        .map(|s| StateCell {
            state: s,
            exact: row[s],
            direct: direct[s],
            reweighted: reweighted[s],
            direct_ok: direct[s].within(row[s], SE_BAND),
            reweighted_ok: reweighted[s].within(row[s], SE_BAND),
        })
        .collect();

    let q = chain.rates();
    let mut jumps = Vec::with_capacity(q.nnz());
    for a in 0..dim {
        for p in q.row_range(a) {
            let b = q.cols()[p];
            let rate = y.chain.rates().get(a, b);
            let exact = occupation[a] * rate;
            let est = reweighted[dim + p];
            jumps.push(JumpPairCell {
                from: a,
                to: b,
                rate,
                exact,
                reweighted: est,
                ok: est.within(exact, SE_BAND),
            });
        }
    }

    let total = n as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    let dead = 1.0 - row.iter().sum::<f64>();
    let dead_obs = 1.0 - direct.iter().map(|e| e.mean).sum::<f64>();
    for (p, o) in row
        .iter()
        .copied()
        .chain([dead])
        .zip(direct.iter().map(|e| e.mean).chain([dead_obs]))
    {
        if p > 1e-12 {
            stat += total * (o - p) * (o - p) / p;
            cells += 1;
        }
    }
    let chi_square_direct = ChiSquare::new(stat, cells.saturating_sub(1));
    let mut two = 0.0;
    let mut df = 0usize;
    for c in &states {
        let v = c.direct.stderr * c.direct.stderr + c.reweighted.stderr * c.reweighted.stderr;
        if v > 0.0 {
            let d = c.direct.mean - c.reweighted.mean;
            two += d * d / v;
            df += 1;
        }
    }
    let states_ok = states.iter().all(|c| c.direct_ok && c.reweighted_ok);
    let jumps_ok = jumps.iter().all(|c| c.ok);
    Ok(GirsanovEmpirical {
        state: x,
        t,
        states,
        jumps,
        chi_square_direct,
        chi_square_two_sample: ChiSquare::new(two, df),
        states_ok,
        jumps_ok,
        passes: states_ok && jumps_ok,
    })
}

/// `e^{A^mu_t + S_F(t)} g(X_t)` on `X` paths.
struct FkDirect<'a> {
    weights: FunctionalWeights,
    g: &'a [f64],
}

impl PathFunctional for FkDirect<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, traj: &Trajectory, out: &mut [f64]) {
        out[0] = match traj.state_at(traj.horizon) {
            Some(y) => {
                let v = self.weights.evaluate(traj, traj.horizon);
                libm::exp(v.a_mu + v.s_f) * self.g[y]
            }
            None => 0.0,
        };
    }
}

/// `e^{A^mu_t + A^F_t} g(Y_t)` on paths of the transformed chain, with the additive
/// functionals taken from the original chain.
struct FkReweighted<'a> {
    weights: FunctionalWeights,
    g: &'a [f64],
}

impl PathFunctional for FkReweighted<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, traj: &Trajectory, out: &mut [f64]) {
        out[0] = match traj.state_at(traj.horizon) {
            Some(y) => {
                let v = self.weights.evaluate(traj, traj.horizon);
                libm::exp(v.a_mu + v.a_f) * self.g[y]
            }
            None => 0.0,
        };
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FkCrossCheck {
    pub state: usize,
    pub t: f64,
    /// `(e^{tA} g)(x)`.
    pub exact: f64,
    pub direct: McEstimate,
    pub reweighted: McEstimate,
    pub direct_ok: bool,
    pub reweighted_ok: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn fk_cross_check(
    chain: &SymmetricChain,
    mu: &SmoothMeasure,
    f: &JumpPerturbation,
    g: &[f64],
    x: usize,
    t: f64,
    n: usize,
    seed: u64,
    runner: &impl BlockRunner,
) -> Result<FkCrossCheck> {
    chain.check_state(x)?;
    chain.check_len(g.len())?;
    check_time(t)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("test function"));
    }
    let exact = fk_semigroup_apply(&schrodinger_generator(chain, mu, f)?, t, g)?[x];
    let weights = FunctionalWeights::new(chain, mu, f)?;
    let x_sampler = JumpSampler::new(chain);
    let direct = estimate_with(
        &McProblem {
            sampler: &x_sampler,
            start: x,
            horizon: t,
            functional: &FkDirect {
                weights: weights.clone(),
                g,
            },
            seed,
            n,
        },
        runner,
    )?[0];
    let y = transform_chain(chain, f)?;
    let y_sampler = JumpSampler::new(&y.chain);
    let reweighted = estimate_with(
        &McProblem {
            sampler: &y_sampler,
            start: x,
            horizon: t,
            functional: &FkReweighted { weights, g },
            seed,
            n,
        },
        runner,
    )?[0];
    Ok(FkCrossCheck {
        state: x,
        t,
        exact,
        direct,
        reweighted,
        direct_ok: direct.within(exact, SE_BAND),
        reweighted_ok: reweighted.within(exact, SE_BAND),
    })
}

#[cfg(test)]
mod tests {
    use super::super::estimate::Serial;
    use super::super::tests::log2_jump;
    use super::*;
    use crate::test_support::two_state;

    #[test]
    fn mean_one_without_jump_weight_is_exact() {
        let c = two_state();
        let r = mc_mean_one(&c, &JumpPerturbation::zero(2), 0, 1.0, 2000, 5, &Serial).unwrap();
        assert_eq!((r.closed.mean, r.closed.stderr), (1.0, 0.0));
        assert!(r.passes);
        assert!((r.alive_exact - r.survival_exact).abs() < 1e-15);
    }

    #[test]
    fn mean_one_two_state() {
        let c = two_state();
        for x in 0..2 {
            let r = mc_mean_one(&c, &log2_jump(), x, 1.0, 100_000, 17, &Serial).unwrap();
            assert!(r.passes, "{r:?}");
            assert!(r.supermartingale_ok);
            assert!(r.alive.within(r.alive_exact, 3.0));
            assert!(r.survival.within(r.survival_exact, 3.0));
        }
        // Survival from either state is e^{-t}, so 1e-6 is first reached at t = 16.
        assert!((survival_probability(&c, 0, 1.0).unwrap() - libm::exp(-1.0)).abs() < 1e-14);
        assert_eq!(lifetime_horizon(&c, 1e-6).unwrap(), 16.0);
    }

    #[test]
    fn quadratic_variation_two_state() {
        let c = two_state();
        let zero = mc_quadratic_variation(&c, &JumpPerturbation::zero(2), 0, 1.0, 1000, 1, &Serial)
            .unwrap();
        assert_eq!((zero.estimate.mean, zero.exact), (0.0, 0.0));
        // b = 1 on the edge: mu_{b^2} = m, so the long-horizon value is (-Q)^{-1} 1 = 1.
        let b = JumpPerturbation::from_triplets(2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let r = mc_quadratic_variation(&c, &b, 0, 50.0, 100_000, 2, &Serial).unwrap();
        assert!((r.exact - 1.0).abs() < 1e-12);
        assert!((r.green_sup.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.passes && r.uniformly_integrable, "{r:?}");
        let bad = JumpPerturbation::from_triplets(2, [(0, 1, -1.0), (1, 0, -1.0)]).unwrap();
        assert_eq!(
            mc_quadratic_variation(&c, &bad, 0, 1.0, 1000, 1, &Serial),
            Err(Error::JumpBoundViolated {
                from: 0,
                to: 1,
                value: -1.0
            })
        );
    }

    #[test]
    fn girsanov_two_state() {
        let c = two_state();
        let r = girsanov_empirical(&c, &log2_jump(), 0, 1.0, 100_000, 23, &Serial).unwrap();
        assert!(r.passes, "{r:?}");
        // Transformed rates are 2: P^Y_1(0, 0) = e^{-1}(1 + e^{-4}) / 2.
        assert!(
            (r.states[0].exact - libm::exp(-1.0) * (1.0 + libm::exp(-4.0)) / 2.0).abs() < 1e-14
        );
        assert!(r.chi_square_direct.p_value > 1e-3);
        assert!(girsanov_empirical(&c, &log2_jump(), 0, 1.0, 9_999, 23, &Serial).is_err());
    }

    #[test]
    fn chi_square_tail() {
        // chi^2_1 median is 0.4549; chi^2_10 upper 5% point is 18.307.
        assert!((chi_square_upper_tail(18.307, 10) - 0.05).abs() < 2e-3);
        assert!((chi_square_upper_tail(0.4549, 1) - 0.5).abs() < 0.03);
        assert_eq!(chi_square_upper_tail(3.0, 0), 1.0);
    }

    #[test]
    fn feynman_kac_cross_check() {
        let c = two_state();
        let mu = SmoothMeasure::point(2, 0, 0.5);
        let r = fk_cross_check(
            &c,
            &mu,
            &JumpPerturbation::zero(2),
            &[1.0, 1.0],
            0,
            1.0,
            100_000,
            3,
            &Serial,
        )
        .unwrap();
        assert!(r.direct_ok && r.reweighted_ok, "{r:?}");
        let l = fk_cross_check(
            &c,
            &mu,
            &log2_jump(),
            &[1.0, 0.5],
            1,
            1.0,
            100_000,
            4,
            &Serial,
        )
        .unwrap();
        assert!(l.direct_ok && l.reweighted_ok, "{l:?}");
        assert!(l.reweighted.stderr < l.direct.stderr);
    }
}
