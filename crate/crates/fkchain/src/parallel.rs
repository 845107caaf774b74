//! Rayon drivers. Work is split into units whose results are collected in index order and
//! reduced in a fixed order, so output never depends on the thread count.

use fkchain_core::pathsim::{BlockRunner, BlockStats};
use fkchain_core::spectral::{
    check_sizes, finish_sweep, split_verdict, sweep_row, Exponent, FSpec, MeasureSpec, SweepFamily,
    SweepReport,
};
use fkchain_core::{model::Boundary, Error, Result};
use rayon::prelude::*;

/// Runs Monte Carlo blocks on the rayon pool.
#[derive(Clone, Copy, Debug, Default)]
pub struct Parallel;

impl BlockRunner for Parallel {
    fn run(&self, blocks: usize, job: &(dyn Fn(usize) -> BlockStats + Sync)) -> Vec<BlockStats> {
        (0..blocks).into_par_iter().map(job).collect()
    }
}

/// [`fkchain_core::spectral::truncation_sweep`] with one size per task.
pub fn truncation_sweep(
    family: &SweepFamily,
    sizes: &[usize],
    mu: &MeasureSpec,
    f: &FSpec,
    alpha: f64,
    ps: &[Exponent],
    split: bool,
) -> Result<SweepReport> {
    check_sizes(family, sizes)?;
    let rows = sizes
        .par_iter()
        .map(|&s| sweep_row(family, s, mu, f, alpha, ps))
        .collect::<Result<Vec<_>>>()?;
    let mut report = finish_sweep(family, sizes, alpha, rows);
    if split {
        let refl = family.with_boundary(Boundary::Reflecting).ok_or_else(|| {
            Error::InvalidParameter("family has no reflecting counterpart".into())
        })?;
        let rows = sizes
            .par_iter()
            .map(|&s| sweep_row(&refl, s, mu, f, alpha, &[]))
            .collect::<Result<Vec<_>>>()?;
        report.split = split_verdict(&report, &finish_sweep(&refl, sizes, alpha, rows));
    }
    Ok(report)
}

/// Sets the global pool size once; later calls are ignored.
pub fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}
