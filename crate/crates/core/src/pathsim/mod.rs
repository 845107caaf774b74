//! Exact event-driven simulation of chain trajectories, their additive functionals, and the
//! Doléans-Dade exponential `Z_t = exp(sum_{s <= t} F(X_{s-}, X_s) - A^F_t)`.
//!
//! There is no time discretization anywhere: holding times are exponential with the full exit
//! rate, so all Monte Carlo error is statistical.

mod estimate;
mod rng;
mod verify;

pub use estimate::{
    estimate, estimate_with, merge_blocks, run_block, BlockRunner, BlockStats, McEstimate,
    McProblem, PathFunctional, Serial, BLOCK_SIZE, MIN_SAMPLES,
};
pub use rng::{exponential, path_rng, uniform, PathRng};
pub use verify::{
    check_jump_bound, chi_square_upper_tail, fk_cross_check, girsanov_empirical, lifetime_horizon,
    mc_mean_one, mc_quadratic_variation, survival_probability, ChiSquare, FkCrossCheck,
    GirsanovEmpirical, JumpPairCell, MeanOne, MeanOneFunctional, QuadVar, QuadVarFunctional,
    StateCell, GIRSANOV_MIN_SAMPLES, SE_BAND,
};

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::chain::SymmetricChain;
use crate::error::Result;
use crate::feynman_kac::{JumpPerturbation, SmoothMeasure};
use crate::revuz::{jump_measure_of_f, JumpWeight};

/// One trajectory on `[0, horizon]`: `states[i]` is occupied on `[jump_times[i-1], jump_times[i])`
/// (with `jump_times[-1] = 0`); `killed_at` is the lifetime if the path was killed before the horizon.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub jump_times: Vec<f64>,
    pub killed_at: Option<f64>,
    pub horizon: f64,
}

impl Trajectory {
    pub fn start(&self) -> usize {
        self.states[0]
    }

    /// `zeta ^ horizon`.
    pub fn lifetime(&self) -> f64 {
        self.killed_at.unwrap_or(self.horizon)
    }

    pub fn is_killed(&self) -> bool {
        self.killed_at.is_some()
    }

    /// `X_t`, or `None` on the cemetery.
    pub fn state_at(&self, t: f64) -> Option<usize> {
        if self.killed_at.is_some_and(|z| t >= z) {
            return None;
        }
        let i = self.jump_times.partition_point(|&s| s <= t);
        Some(self.states[i])
    }

    /// Calls `visit(state, from, to)` for every holding interval intersected with `[0, t]`.
    pub fn for_each_holding(&self, t: f64, mut visit: impl FnMut(usize, f64, f64)) {
        let end = t.min(self.lifetime());
        let mut from = 0.0;
        for (i, &x) in self.states.iter().enumerate() {
            let to = self
                .jump_times
                .get(i)
                .copied()
                .unwrap_or(f64::INFINITY)
                .min(end);
            if to > from {
                visit(x, from, to);
            }
            if to >= end {
                break;
            }
            from = to;
        }
    }

    /// Calls `jump(from, to)` for every jump between states at a time `<= t` (killing excluded).
    pub fn for_each_jump(&self, t: f64, mut jump: impl FnMut(usize, usize)) {
        for (i, &s) in self.jump_times.iter().enumerate() {
            if s > t {
                break;
            }
            jump(self.states[i], self.states[i + 1]);
        }
    }

    /// Checks the structural invariants: distinct consecutive states, increasing times inside the horizon.
    pub fn is_valid(&self) -> bool {
        self.states.len() == self.jump_times.len() + 1
            && self.states.windows(2).all(|w| w[0] != w[1])
            && self.jump_times.windows(2).all(|w| w[0] < w[1])
            && self
                .jump_times
                .iter()
                .all(|&s| s > 0.0 && s <= self.lifetime())
            && self.killed_at.map_or(true, |z| z <= self.horizon)
    }
}

/// Cumulative jump rates per state, prepared once per chain.
#[derive(Clone, Debug)]
pub struct JumpSampler {
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
    killing: Vec<f64>,
    total: Vec<f64>,
}

impl JumpSampler {
    pub fn new(chain: &SymmetricChain) -> Self {
        let n = chain.n();
        let mut targets = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        let mut total = Vec::with_capacity(n);
        for x in 0..n {
            let mut t = Vec::new();
            let mut c = Vec::new();
            let mut acc = chain.killing()[x];
            for (y, rate) in chain.rates().row(x) {
                if rate > 0.0 {
                    acc += rate;
                    t.push(y);
                    c.push(acc);
                }
            }
            targets.push(t);
            cumulative.push(c);
            total.push(acc);
        }
        Self {
            targets,
            cumulative,
            killing: chain.killing().to_vec(),
            total,
        }
    }

    pub fn n(&self) -> usize {
        self.total.len()
    }

    /// Samples a path from `x0` on `[0, horizon]` into `traj`, reusing its buffers.
    pub fn sample_into(
        &self,
        x0: usize,
        horizon: f64,
        rng: &mut impl RngCore,
        traj: &mut Trajectory,
    ) {
        traj.states.clear();
        traj.jump_times.clear();
        traj.killed_at = None;
        traj.horizon = horizon;
        traj.states.push(x0);
        let mut x = x0;
        let mut t = 0.0;
        loop {
            let rate = self.total[x];
            if rate <= 0.0 {
                return;
            }
            t += rng::exponential(rng) / rate;
            if t > horizon {
                return;
            }
            let u = rng::uniform(rng) * rate;
            if u < self.killing[x] {
                traj.killed_at = Some(t);
                return;
            }
            let c = &self.cumulative[x];
            let i = c.partition_point(|&v| v <= u).min(c.len() - 1);
            x = self.targets[x][i];
            traj.states.push(x);
            traj.jump_times.push(t);
        }
    }

    pub fn sample(&self, x0: usize, horizon: f64, rng: &mut impl RngCore) -> Trajectory {
        let mut t = Trajectory::default();
        self.sample_into(x0, horizon, rng, &mut t);
        t
    }
}

/// Exact simulation of the chain from `x0` on `[0, horizon]`.
pub fn sample_path(
    chain: &SymmetricChain,
    x0: usize,
    horizon: f64,
    rng: &mut impl RngCore,
) -> Result<Trajectory> {
    chain.check_state(x0)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(crate::Error::InvalidParameter(alloc::format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    Ok(JumpSampler::new(chain).sample(x0, horizon, rng))
}

/// `A^mu`, `S_F = sum F(X_{s-}, X_s)` and `A^F = \int sum_y (e^F - 1) q ds` along a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Functionals {
    pub a_mu: f64,
    pub s_f: f64,
    pub a_f: f64,
}

/// Per-state densities needed to evaluate functionals quickly.
#[derive(Clone, Debug)]
pub struct FunctionalWeights {
    pub mu_density: Vec<f64>,
    pub nu_f_density: Vec<f64>,
    pub f: JumpPerturbation,
}

impl FunctionalWeights {
    pub fn new(chain: &SymmetricChain, mu: &SmoothMeasure, f: &JumpPerturbation) -> Result<Self> {
        chain.check_len(mu.len())?;
        let nu_f = jump_measure_of_f(chain, f, JumpWeight::ExpMinusOne)?;
        Ok(Self {
            mu_density: mu.density(chain.mass()),
            nu_f_density: nu_f.density(chain.mass()),
            f: f.clone(),
        })
    }

    /// Functionals over `[0, t ^ zeta]`.
    pub fn evaluate(&self, traj: &Trajectory, t: f64) -> Functionals {
        let mut a_mu = 0.0;
        let mut a_f = 0.0;
        traj.for_each_holding(t, |x, from, to| {
            a_mu += self.mu_density[x] * (to - from);
            a_f += self.nu_f_density[x] * (to - from);
        });
        let mut s_f = 0.0;
        traj.for_each_jump(t, |x, y| s_f += self.f.get(x, y));
        Functionals { a_mu, s_f, a_f }
    }

    /// `Z_{t ^ zeta}`: the killing jump carries `F = 0`, so `Z` is frozen at the lifetime.
    pub fn doleans(&self, traj: &Trajectory, t: f64) -> f64 {
        let v = self.evaluate(traj, t);
        libm::exp(v.s_f - v.a_f)
    }
}

pub fn functionals(
    chain: &SymmetricChain,
    traj: &Trajectory,
    mu: &SmoothMeasure,
    f: &JumpPerturbation,
) -> Result<Functionals> {
    Ok(FunctionalWeights::new(chain, mu, f)?.evaluate(traj, traj.horizon))
}

/// `Exp(M)_t = exp(S_F(t) - A^F_t)` for `t <= horizon`, frozen after the lifetime.
pub fn doleans_exp(
    chain: &SymmetricChain,
    traj: &Trajectory,
    f: &JumpPerturbation,
    t: f64,
) -> Result<f64> {
    if !(t >= 0.0 && t <= traj.horizon) {
        return Err(crate::Error::InvalidParameter(alloc::format!(
            "time {t} outside [0, {}]",
            traj.horizon
        )));
    }
    Ok(FunctionalWeights::new(chain, &SmoothMeasure::zero(chain.n()), f)?.doleans(traj, t))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::test_support::two_state;
    use alloc::vec;

    pub(crate) fn log2_jump() -> JumpPerturbation {
        let l = core::f64::consts::LN_2;
        JumpPerturbation::from_triplets(2, [(0, 1, l), (1, 0, l)]).unwrap()
    }

    #[test]
    fn hand_built_functionals() {
        let c = two_state();
        let traj = Trajectory {
            states: vec![0, 1, 0],
            jump_times: vec![0.3, 0.8],
            killed_at: Some(1.1),
            horizon: 2.0,
        };
        assert!(traj.is_valid());
        let f = log2_jump();
        let v = functionals(
            &c,
            &traj,
            &SmoothMeasure::uniform_density(c.mass(), 1.0),
            &f,
        )
        .unwrap();
        assert!((v.a_mu - 1.1).abs() < 1e-15);
        assert!((v.s_f - 2.0 * core::f64::consts::LN_2).abs() < 1e-15);
        assert!((v.a_f - 1.1).abs() < 1e-15);
        // Two jumps, alive time 1.1: Z = 4 e^{-1.1}, frozen after killing.
        let z = doleans_exp(&c, &traj, &f, 2.0).unwrap();
        assert!((z - 4.0 * libm::exp(-1.1)).abs() < 1e-14);
        assert_eq!(doleans_exp(&c, &traj, &f, 0.0).unwrap(), 1.0);
        let one = Trajectory {
            states: vec![0, 1],
            jump_times: vec![0.5],
            killed_at: None,
            horizon: 1.0,
        };
        let v = functionals(&c, &one, &SmoothMeasure::zero(2), &f).unwrap();
        assert!((v.s_f - core::f64::consts::LN_2).abs() < 1e-15 && (v.a_f - 1.0).abs() < 1e-15);
        assert_eq!(traj.state_at(0.5), Some(1));
        assert_eq!(traj.state_at(1.2), None);
    }

    #[test]
    fn frozen_chain_never_jumps() {
        let c = SymmetricChain::new(
            vec![1.0],
            crate::linalg::CsrMatrix::zeros(1),
            vec![0.0],
            false,
        )
        .unwrap();
        let mut r = path_rng(1, 0);
        let t = sample_path(&c, 0, 5.0, &mut r).unwrap();
        assert!(t.jump_times.is_empty() && t.killed_at.is_none());
    }

    #[test]
    fn sampled_paths_are_valid() {
        let c = two_state();
        let s = JumpSampler::new(&c);
        let mut r = path_rng(3, 0);
        let mut lifetimes = 0.0;
        for _ in 0..2000 {
            let t = s.sample(0, 100.0, &mut r);
            assert!(t.is_valid());
            lifetimes += t.lifetime();
        }
        assert!((lifetimes / 2000.0 - 1.0).abs() < 0.1);
    }
}
