//! Truncation sweeps: the same family at increasing sizes, with extrapolation of the
//! per-size values toward the infinite model.

use alloc::vec::Vec;

use super::{
    lambda_inf_perron, lambda_p, Exponent, PowerEstimate, Regime, Verdict, ORDERING_TOL, SPLIT_BAND,
};
use crate::chain::SymmetricChain;
use crate::error::{Error, Result};
use crate::feynman_kac::{schrodinger_generator, JumpPerturbation, SmoothMeasure};
use crate::linalg::lowest_eigen;
use crate::model::{Boundary, ModelSpec};
use crate::revuz::potential;

/// A model family indexed by an integer size.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum SweepFamily {
    /// Path on `size` states. With Dirichlet ends the killing keeps `lambda_inf` and `lambda_2` together
    /// (the independent regime).
    Path { rate: f64, boundary: Boundary },
    /// Cycle on `size` states. Cycles are not nested in each other, so sweeps reject this family.
    Torus {
        rate: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        killing: f64,
    },
    /// Tree ball of radius `size`. The reflecting ball is conservative, so `lambda_inf = 0`, while the
    /// Dirichlet `lambda_2` tends to the positive bottom of the infinite tree's spectrum: the split regime.
    Tree {
        degree: usize,
        boundary: Boundary,
        #[cfg_attr(feature = "serde", serde(default))]
        rate: Option<f64>,
    },
    /// Box of side `size`.
    StableGrid {
        dim: usize,
        alpha: f64,
        c: f64,
        radius: f64,
        boundary: Boundary,
    },
}

impl SweepFamily {
    pub fn model(&self, size: usize) -> ModelSpec {
        match self.clone() {
            SweepFamily::Path { rate, boundary } => ModelSpec::Path {
                n: size,
                rate,
                boundary,
                normalize_mass: false,
            },
            SweepFamily::Torus { rate, killing } => ModelSpec::Torus {
                n: size,
                rate,
                killing,
                normalize_mass: false,
            },
            SweepFamily::Tree {
                degree,
                boundary,
                rate,
            } => ModelSpec::Tree {
                degree,
                depth: size,
                boundary,
                rate,
            },
            SweepFamily::StableGrid {
                dim,
                alpha,
                c,
                radius,
                boundary,
            } => ModelSpec::StableGrid {
                side: size,
                dim,
                alpha,
                c,
                radius,
                boundary,
            },
        }
    }

    pub fn boundary(&self) -> Option<Boundary> {
        match self {
            SweepFamily::Path { boundary, .. }
            | SweepFamily::Tree { boundary, .. }
            | SweepFamily::StableGrid { boundary, .. } => Some(*boundary),
            SweepFamily::Torus { .. } => None,
        }
    }

    pub fn with_boundary(&self, b: Boundary) -> Option<Self> {
        let mut out = self.clone();
        match &mut out {
            SweepFamily::Path { boundary, .. }
            | SweepFamily::Tree { boundary, .. }
            | SweepFamily::StableGrid { boundary, .. } => *boundary = b,
            SweepFamily::Torus { .. } => return None,
        }
        Some(out)
    }

    fn nested(&self) -> bool {
        !matches!(self, SweepFamily::Torus { .. })
    }

    /// A state at the same position at every size: the root, or the centre of the box.
    pub fn interior_state(&self, size: usize) -> usize {
        match self {
            SweepFamily::Path { .. } | SweepFamily::Torus { .. } => size / 2,
            SweepFamily::Tree { .. } => 0,
            SweepFamily::StableGrid { dim, .. } => {
                let c = size / 2;
                if *dim == 1 {
                    c
                } else {
                    c + size * c
                }
            }
        }
    }
}

/// A measure defined consistently at every size.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum MeasureSpec {
    Zero,
    /// A point mass at the family's interior state.
    Interior {
        mass: f64,
    },
    /// Constant density `c` against `m`.
    UniformDensity {
        c: f64,
    },
}

impl MeasureSpec {
    pub fn build(
        &self,
        family: &SweepFamily,
        size: usize,
        chain: &SymmetricChain,
    ) -> SmoothMeasure {
        let n = chain.n();
        match self {
            MeasureSpec::Zero => SmoothMeasure::zero(n),
            MeasureSpec::Interior { mass } => {
                SmoothMeasure::point(n, family.interior_state(size).min(n - 1), *mass)
            }
            MeasureSpec::UniformDensity { c } => SmoothMeasure::uniform_density(chain.mass(), *c),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MeasureSpec::Zero => true,
            MeasureSpec::Interior { mass } => *mass == 0.0,
            MeasureSpec::UniformDensity { c } => *c == 0.0,
        }
    }
}

/// A jump weight defined consistently at every size.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum FSpec {
    Zero,
    /// The same value on every edge.
    Constant {
        value: f64,
    },
}

impl FSpec {
    pub fn build(&self, chain: &SymmetricChain) -> Result<JumpPerturbation> {
        match self {
            FSpec::Zero => Ok(JumpPerturbation::zero(chain.n())),
            FSpec::Constant { value } => {
                JumpPerturbation::from_csr(chain.rates().map_entries(|_, _, _| *value))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub size: usize,
    pub n: usize,
    pub lambda2: f64,
    pub lambda_inf: f64,
    pub lambda_inf_bounds: [f64; 2],
    pub lambda_p: Vec<PowerEstimate>,
    /// `inf_x G_alpha |mu| (x)`.
    pub inf_green: f64,
    pub ordering_ok: bool,
    pub lower_bound_ok: bool,
}

/// Richardson (quadratic in `1/size` through the last three sizes) and Aitken extrapolations.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Extrapolation {
    pub values: Vec<f64>,
    pub richardson: Option<f64>,
    pub aitken: Option<f64>,
    pub nonincreasing: bool,
    pub nondecreasing: bool,
}

impl Extrapolation {
    pub fn of(sizes: &[usize], values: Vec<f64>) -> Self {
        let k = values.len();
        let (richardson, aitken) = if k >= 3 {
            let h: Vec<f64> = sizes[k - 3..].iter().map(|&s| 1.0 / s as f64).collect();
            (
                Some(richardson(&h, &values[k - 3..])),
                aitken(&values[k - 3..]),
            )
        } else {
            (None, None)
        };
        Extrapolation {
            nonincreasing: values.windows(2).all(|w| w[1] <= w[0]),
            nondecreasing: values.windows(2).all(|w| w[1] >= w[0]),
            values,
            richardson,
            aitken,
        }
    }

    /// Best available limit estimate: Richardson, else the last value.
    pub fn limit(&self) -> Option<f64> {
        self.richardson.or(self.values.last().copied())
    }
}

/// Value at `h = 0` of the polynomial through `(h_i, y_i)`.
pub fn richardson(h: &[f64], y: &[f64]) -> f64 {
    let mut out = 0.0;
    for i in 0..h.len() {
        let mut w = 1.0;
        for j in 0..h.len() {
            if i != j {
                w *= -h[j] / (h[i] - h[j]);
            }
        }
        out += w * y[i];
    }
    out
}

/// Aitken's delta-squared limit of the last three terms; `None` when the second difference vanishes.
pub fn aitken(y: &[f64]) -> Option<f64> {
    let [a, b, c] = [y[y.len() - 3], y[y.len() - 2], y[y.len() - 1]];
    let d2 = (c - b) - (b - a);
    (d2 != 0.0).then(|| c - (c - b) * (c - b) / d2)
}

/// Limit of the killed truncations against the conservative ones.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitVerdict {
    pub dirichlet_lambda2_limit: f64,
    pub reflecting_lambda_inf: Vec<f64>,
    /// `lambda_inf = 0` exactly at every reflecting size.
    pub reflecting_conservative: bool,
    pub gap: f64,
    pub verdict: Verdict,
}

pub fn split_verdict(dirichlet: &SweepReport, reflecting: &SweepReport) -> Option<SplitVerdict> {
    let limit = dirichlet.lambda2.limit()?;
    let linf: Vec<f64> = reflecting.rows.iter().map(|r| r.lambda_inf).collect();
    let last = *linf.last()?;
    let gap = limit - last;
    let verdict = if gap > SPLIT_BAND {
        Verdict::Split
    } else if gap.abs() <= super::INDEPENDENT_BAND {
        Verdict::Independent
    } else {
        Verdict::Marginal
    };
    Some(SplitVerdict {
        dirichlet_lambda2_limit: limit,
        reflecting_conservative: linf.iter().all(|&v| v == 0.0),
        reflecting_lambda_inf: linf,
        gap,
        verdict,
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepReport {
    pub family: SweepFamily,
    pub sizes: Vec<usize>,
    pub alpha: f64,
    pub rows: Vec<SweepRow>,
    pub lambda2: Extrapolation,
    pub lambda_inf: Extrapolation,
    pub inf_green: Extrapolation,
    pub regime: Regime,
    pub split: Option<SplitVerdict>,
}

impl SweepReport {
    pub fn invariants_ok(&self) -> bool {
        self.rows.iter().all(|r| r.ordering_ok && r.lower_bound_ok)
    }
}

pub fn check_sizes(family: &SweepFamily, sizes: &[usize]) -> Result<()> {
    if !family.nested() {
        return Err(Error::InvalidParameter(
            "this family has no consistently nested truncations".into(),
        ));
    }
    if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "sizes must be nonempty and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// One size of a sweep. Independent across sizes, so callers may evaluate rows in parallel.
pub fn sweep_row(
    family: &SweepFamily,
    size: usize,
    mu: &MeasureSpec,
    f: &FSpec,
    alpha: f64,
    ps: &[Exponent],
) -> Result<SweepRow> {
    let chain = family.model(size).build()?;
    let m = mu.build(family, size, &chain);
    let jump = f.build(&chain)?;
    let op = schrodinger_generator(&chain, &m, &jump)?;
    let a = op.operator();
    let lambda2 = lowest_eigen(a, false).0;
    let perron = lambda_inf_perron(a);
    let lambda_p: Vec<PowerEstimate> = ps.iter().map(|&p| lambda_p(a, p)).collect();
    let inf_green = if mu.is_zero() {
        0.0
    } else {
        potential(&chain, &m.abs(), alpha)?
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    };
    let linf = perron.value;
    Ok(SweepRow {
        size,
        n: chain.n(),
        lambda2,
        lambda_inf: linf,
        lambda_inf_bounds: [perron.lower, perron.upper],
        ordering_ok: linf <= lambda2 + ORDERING_TOL
            && lambda_p
                .iter()
                .all(|e| linf <= e.value + ORDERING_TOL && e.value <= lambda2 + ORDERING_TOL),
        lower_bound_ok: linf >= lambda2.min(0.0) - ORDERING_TOL,
        lambda_p,
        inf_green,
    })
}

/// Assembles the rows of a sweep (in size order) into a report with extrapolations.
pub fn finish_sweep(
    family: &SweepFamily,
    sizes: &[usize],
    alpha: f64,
    rows: Vec<SweepRow>,
) -> SweepReport {
    let l2 = Extrapolation::of(sizes, rows.iter().map(|r| r.lambda2).collect());
    let li = Extrapolation::of(sizes, rows.iter().map(|r| r.lambda_inf).collect());
    let g = Extrapolation::of(sizes, rows.iter().map(|r| r.inf_green).collect());
    SweepReport {
        family: family.clone(),
        sizes: sizes.to_vec(),
        alpha,
        rows,
        lambda2: l2,
        lambda_inf: li,
        inf_green: g,
        regime: Regime::Extrapolated,
        split: None,
    }
}

/// Runs every size in order. With `split`, also sweeps the reflecting counterpart (for a
/// Dirichlet family) and compares the limits.
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
        .iter()
        .map(|&s| sweep_row(family, s, mu, f, alpha, ps))
        .collect::<Result<Vec<_>>>()?;
    let mut report = finish_sweep(family, sizes, alpha, rows);
    if split {
        let refl = family.with_boundary(Boundary::Reflecting).ok_or_else(|| {
            Error::InvalidParameter("family has no reflecting counterpart".into())
        })?;
        let rows = sizes
            .iter()
            .map(|&s| sweep_row(&refl, s, mu, f, alpha, &[]))
            .collect::<Result<Vec<_>>>()?;
        let other = finish_sweep(&refl, sizes, alpha, rows);
        report.split = split_verdict(&report, &other);
    }
    Ok(report)
}
