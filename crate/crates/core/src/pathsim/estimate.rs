//! Block-wise Monte Carlo estimation. Paths are grouped into fixed blocks of [`BLOCK_SIZE`];
//! each block accumulates Welford statistics and blocks are merged pairwise in index order,
//! so the result is bit-identical however the blocks are scheduled.

use alloc::vec;
use alloc::vec::Vec;

use super::rng::path_rng;
use super::{JumpSampler, Trajectory};
use crate::error::{Error, Result};

pub const BLOCK_SIZE: usize = 1024;
pub const MIN_SAMPLES: usize = 100;

/// Mean and standard error of one Monte Carlo coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

impl McEstimate {
    /// `|mean - target| <= k * stderr`, with a rounding-level allowance for zero-variance samples.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12 * target.abs().max(1.0)
    }

    /// Deviation in units of the standard error (0 when both vanish).
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

/// Running mean and centred second moment for a vector of functionals.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockStats {
    pub n: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl BlockStats {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, v: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(v) {
            let d = x - *mean;
            *mean += d / n;
            *m2 += d * (x - *mean);
        }
    }

    /// Chan's parallel update.
    pub fn merge(&self, other: &Self) -> Self {
        if other.n == 0 {
            return self.clone();
        }
        if self.n == 0 {
            return other.clone();
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let mut out = Self::new(self.dim());
        out.n = self.n + other.n;
        for i in 0..self.dim() {
            let d = other.mean[i] - self.mean[i];
            out.mean[i] = self.mean[i] + d * nb / n;
            out.m2[i] = self.m2[i] + other.m2[i] + d * d * na * nb / n;
        }
        out
    }

    pub fn estimates(&self, seed: u64) -> Vec<McEstimate> {
        let n = self.n as usize;
        (0..self.dim())
            .map(|i| {
                let var = if n > 1 {
                    self.m2[i].max(0.0) / (n as f64 - 1.0)
                } else {
                    0.0
                };
                McEstimate {
                    mean: self.mean[i],
                    stderr: libm::sqrt(var / n as f64),
                    n,
                    seed,
                }
            })
            .collect()
    }
}

/// Pairwise reduction in a fixed tree over block order.
pub fn merge_blocks(mut blocks: Vec<BlockStats>, dim: usize) -> BlockStats {
    if blocks.is_empty() {
        return BlockStats::new(dim);
    }
    while blocks.len() > 1 {
        blocks = blocks
            .chunks(2)
            .map(|c| {
                if c.len() == 2 {
                    c[0].merge(&c[1])
                } else {
                    c[0].clone()
                }
            })
            .collect();
    }
    blocks.pop().unwrap()
}

/// A vector-valued function of a trajectory.
pub trait PathFunctional: Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, traj: &Trajectory, out: &mut [f64]);
}

/// Everything needed to run paths `0..n` from one start state.
pub struct McProblem<'a, P: PathFunctional> {
    pub sampler: &'a JumpSampler,
    pub start: usize,
    pub horizon: f64,
    pub functional: &'a P,
    pub seed: u64,
    pub n: usize,
}

impl<P: PathFunctional> McProblem<'_, P> {
    pub fn blocks(&self) -> usize {
        self.n.div_ceil(BLOCK_SIZE)
    }
}

/// Statistics of the paths in block `block`.
pub fn run_block<P: PathFunctional>(problem: &McProblem<'_, P>, block: usize) -> BlockStats {
    let dim = problem.functional.dim();
    let mut stats = BlockStats::new(dim);
    let mut traj = Trajectory::default();
    let mut out = vec![0.0; dim];
    let end = ((block + 1) * BLOCK_SIZE).min(problem.n);
    for path in block * BLOCK_SIZE..end {
        let mut rng = path_rng(problem.seed, path as u64);
        problem
            .sampler
            .sample_into(problem.start, problem.horizon, &mut rng, &mut traj);
        problem.functional.evaluate(&traj, &mut out);
        stats.push(&out);
    }
    stats
}

/// Schedules blocks; a parallel runner must return them in index order.
pub trait BlockRunner {
    fn run(&self, blocks: usize, job: &(dyn Fn(usize) -> BlockStats + Sync)) -> Vec<BlockStats>;
}

/// Runs blocks one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Serial;

impl BlockRunner for Serial {
    fn run(&self, blocks: usize, job: &(dyn Fn(usize) -> BlockStats + Sync)) -> Vec<BlockStats> {
        (0..blocks).map(job).collect()
    }
}

pub fn estimate_with<P: PathFunctional>(
    problem: &McProblem<'_, P>,
    runner: &impl BlockRunner,
) -> Result<Vec<McEstimate>> {
    if problem.n < MIN_SAMPLES {
        return Err(Error::TooFewSamples(problem.n));
    }
    let blocks = runner.run(problem.blocks(), &|b| run_block(problem, b));
    Ok(merge_blocks(blocks, problem.functional.dim()).estimates(problem.seed))
}

/// Serial estimate of the functional's mean over `problem.n` paths.
pub fn estimate<P: PathFunctional>(problem: &McProblem<'_, P>) -> Result<Vec<McEstimate>> {
    estimate_with(problem, &Serial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::two_state;

    struct Lifetime;

    impl PathFunctional for Lifetime {
        fn dim(&self) -> usize {
            1
        }

        fn evaluate(&self, traj: &Trajectory, out: &mut [f64]) {
            out[0] = traj.lifetime();
        }
    }

    #[test]
    fn merged_blocks_match_one_pass() {
        let data: Vec<f64> = (0..37).map(|i| libm::sin(i as f64) * 3.0 + 1.0).collect();
        let mut all = BlockStats::new(1);
        data.iter().for_each(|&x| all.push(&[x]));
        let blocks: Vec<BlockStats> = data
            .chunks(5)
            .map(|c| {
                let mut s = BlockStats::new(1);
                c.iter().for_each(|&x| s.push(&[x]));
                s
            })
            .collect();
        let merged = merge_blocks(blocks, 1);
        assert_eq!(merged.n, 37);
        assert!((merged.mean[0] - all.mean[0]).abs() < 1e-14);
        assert!((merged.m2[0] - all.m2[0]).abs() < 1e-11);
    }

    #[test]
    fn constant_samples_have_zero_error() {
        let mut s = BlockStats::new(1);
        (0..500).for_each(|_| s.push(&[1.0]));
        let e = merge_blocks(alloc::vec![s.clone(), s], 1).estimates(0)[0];
        assert_eq!((e.mean, e.stderr, e.n), (1.0, 0.0, 1000));
        assert!(e.within(1.0, 3.0));
    }

    #[test]
    fn mean_lifetime_two_state() {
        // Expected lifetime from either state is ((-Q)^{-1} 1)_x = 1.
        let c = two_state();
        let sampler = JumpSampler::new(&c);
        let p = McProblem {
            sampler: &sampler,
            start: 0,
            horizon: 1e3,
            functional: &Lifetime,
            seed: 11,
            n: 100_000,
        };
        let e = estimate(&p).unwrap()[0];
        assert!(e.within(1.0, 3.0), "{e:?}");
        assert_eq!(estimate(&p).unwrap()[0], e);
        let few = McProblem { n: 99, ..p };
        assert_eq!(estimate(&few), Err(Error::TooFewSamples(99)));
    }
}
