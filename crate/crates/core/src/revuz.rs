//! Potentials of measures and the Kato-class diagnostics.
//!
//! On a finite transient chain every measure is smooth and every potential is bounded, so the
//! classes below are always satisfied. What the diagnostics compute is how they are satisfied:
//! the rate at which `sup_x E_x A_t` decays, the compact set and threshold certifying the
//! strong class for a given tolerance, and the corresponding `beta_1`.

use alloc::vec;
use alloc::vec::Vec;

use crate::chain::{operator_semigroup_integral, GreenOperator, SymmetricChain};
use crate::error::{Error, Result};
use crate::feynman_kac::{JumpPerturbation, SmoothMeasure};
use crate::linalg::solve_shifted;

/// Largest `K` for which subset searches are exhaustive.
pub const EXHAUSTIVE_LIMIT: usize = 20;

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// `G_alpha nu`, the `alpha`-potential of a nonnegative measure.
pub fn potential(chain: &SymmetricChain, nu: &SmoothMeasure, alpha: f64) -> Result<Vec<f64>> {
    chain.check_len(nu.len())?;
    nu.require_nonnegative()?;
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::NegativeAlpha(alpha));
    }
    if alpha == 0.0 && chain.is_conservative() {
        return Err(Error::NotTransient);
    }
    let density = nu.density(chain.mass());
    solve_shifted(chain.generator().operator(), alpha, &density)
}

/// `x -> E_x \int_0^t (nu/m)(X_s) ds` for a nonnegative measure.
pub fn expected_functional(chain: &SymmetricChain, nu: &SmoothMeasure, t: f64) -> Result<Vec<f64>> {
    chain.check_len(nu.len())?;
    nu.require_nonnegative()?;
    operator_semigroup_integral(chain.generator().operator(), t, &nu.density(chain.mass()))
}

/// One row of the small-time profile `t -> sup_x E_x A_t^{|nu|}`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KatoPoint {
    pub t: f64,
    pub sup: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KatoKCheck {
    pub points: Vec<KatoPoint>,
    /// `sup_x |nu|[x] / m[x]`, the slope bound `sup E_x A_t <= t * density`.
    pub density_bound: f64,
    /// The profile is nondecreasing in `t` and stays under `t * density_bound`.
    pub vanishes: bool,
}

/// Evaluates `sup_x E_x A_t^{|nu|}` on a grid of times and checks it decays to zero at rate `O(t)`.
pub fn kato_k_check(
    chain: &SymmetricChain,
    nu: &SmoothMeasure,
    t_grid: &[f64],
) -> Result<KatoKCheck> {
    chain.check_len(nu.len())?;
    let abs = nu.abs();
    let density_bound = sup(&abs.density(chain.mass())).max(0.0);
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut points = Vec::with_capacity(grid.len());
    for &t in &grid {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        let v = expected_functional(chain, &abs, t)?;
        points.push(KatoPoint {
            t,
            sup: sup(&v).max(0.0),
        });
    }
    let slack = 1e-12 * density_bound.max(1.0);
    let bounded = points
        .iter()
        .all(|p| p.sup <= p.t * density_bound * (1.0 + 1e-12) + slack);
    let monotone = points.windows(2).all(|w| w[1].sup + slack >= w[0].sup);
    Ok(KatoKCheck {
        points,
        density_bound,
        vanishes: bounded && monotone,
    })
}

/// `beta_1 = sup { ||G(1_{K^c u B} nu)||_inf : B subset K, nu(B) < delta }`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct K1Beta {
    pub beta1: f64,
    /// The maximizing `B` (states of `K`).
    pub maximizer: Vec<usize>,
    /// `false` when `|K| > EXHAUSTIVE_LIMIT` and a greedy search was used; `beta1` is then a lower estimate.
    pub exhaustive: bool,
}

/// Potential of the part of `nu` outside `K`, plus the columns `G(1_{y} nu)` for `y` in `K`.
struct SplitPotential {
    base: Vec<f64>,
    columns: Vec<Vec<f64>>,
    atoms: Vec<f64>,
}

impl SplitPotential {
    fn from_solves(chain: &SymmetricChain, nu: &SmoothMeasure, k: &[usize]) -> Result<Self> {
        let n = chain.n();
        let mut outside = nu.atoms().to_vec();
        for &y in k {
            outside[y] = 0.0;
        }
        let base = potential(chain, &SmoothMeasure::new(outside)?, 0.0)?;
        let mut columns = Vec::with_capacity(k.len());
        for &y in k {
            columns.push(potential(
                chain,
                &SmoothMeasure::point(n, y, nu.atoms()[y]),
                0.0,
            )?);
        }
        Ok(Self {
            base,
            columns,
            atoms: k.iter().map(|&y| nu.atoms()[y]).collect(),
        })
    }

    fn from_green(
        green: &GreenOperator,
        mass: &[f64],
        nu: &[f64],
        total: &[f64],
        k: &[usize],
    ) -> Self {
        let n = total.len();
        let columns: Vec<Vec<f64>> = k
            .iter()
            .map(|&y| {
                (0..n)
                    .map(|x| green.matrix()[(x, y)] / mass[y] * nu[y])
                    .collect()
            })
            .collect();
        let mut base = total.to_vec();
        for c in &columns {
            for (b, v) in base.iter_mut().zip(c) {
                *b -= v;
            }
        }
        Self {
            base,
            columns,
            atoms: k.iter().map(|&y| nu[y]).collect(),
        }
    }

    /// Searches subsets `B` of `K` with `nu(B) < delta`, returning the largest sup-norm found.
    fn search(&self, delta: f64) -> (f64, Vec<usize>, bool) {
        let k = self.columns.len();
        if k <= EXHAUSTIVE_LIMIT {
            let mut best = (sup(&self.base), Vec::new());
            let mut acc = self.base.clone();
            let mut chosen = Vec::new();
            self.dfs(0, 0.0, delta, &mut acc, &mut chosen, &mut best);
            (best.0, best.1, true)
        } else {
            let (v, b) = self.greedy(|mass| mass < delta);
            (v, b, false)
        }
    }

    fn dfs(
        &self,
        from: usize,
        mass: f64,
        delta: f64,
        acc: &mut Vec<f64>,
        chosen: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        for j in from..self.columns.len() {
            let m = mass + self.atoms[j];
            if !(m < delta) {
                continue;
            }
            for (a, c) in acc.iter_mut().zip(&self.columns[j]) {
                *a += c;
            }
            chosen.push(j);
            let s = sup(acc);
            if s > best.0 {
                *best = (s, chosen.clone());
            }
            self.dfs(j + 1, m, delta, acc, chosen, best);
            chosen.pop();
            for (a, c) in acc.iter_mut().zip(&self.columns[j]) {
                *a -= c;
            }
        }
    }

    /// From every seed, adds further atoms in decreasing order of their own peak while
    /// `admissible(mass)` holds; keeps the best sup-norm seen.
    fn greedy(&self, admissible: impl Fn(f64) -> bool) -> (f64, Vec<usize>) {
        let mut order: Vec<usize> = (0..self.columns.len()).collect();
        let peaks: Vec<f64> = self.columns.iter().map(|c| sup(c)).collect();
        order.sort_by(|&a, &b| peaks[b].total_cmp(&peaks[a]).then(a.cmp(&b)));
        let mut best = (sup(&self.base), Vec::new());
        for &seed in &order {
            if !admissible(self.atoms[seed]) {
                continue;
            }
            let mut acc = self.base.clone();
            let mut chosen = Vec::new();
            let mut mass = 0.0;
            for j in core::iter::once(seed).chain(order.iter().copied().filter(|&j| j != seed)) {
                if !admissible(mass + self.atoms[j]) {
                    continue;
                }
                mass += self.atoms[j];
                for (a, c) in acc.iter_mut().zip(&self.columns[j]) {
                    *a += c;
                }
                chosen.push(j);
                let s = sup(&acc);
                if s > best.0 {
                    best = (s, chosen.clone());
                }
            }
        }
        best
    }

    /// Smallest `nu(B)` over `B subset K` whose potential reaches `eps`, i.e. the largest `delta`
    /// keeping every admissible `B` below `eps`. Infinite when no subset reaches `eps`.
    fn critical_mass(&self, eps: f64) -> (f64, bool) {
        let k = self.columns.len();
        if k <= EXHAUSTIVE_LIMIT {
            let mut best = f64::INFINITY;
            let mut acc = self.base.clone();
            self.dfs_critical(0, 0.0, eps, &mut acc, &mut best);
            (best, true)
        } else {
            let mut order: Vec<usize> = (0..k).collect();
            let peaks: Vec<f64> = self.columns.iter().map(|c| sup(c)).collect();
            order.sort_by(|&a, &b| peaks[b].total_cmp(&peaks[a]).then(a.cmp(&b)));
            let mut acc = self.base.clone();
            let mut mass = 0.0;
            for j in order {
                mass += self.atoms[j];
                for (a, c) in acc.iter_mut().zip(&self.columns[j]) {
                    *a += c;
                }
                if sup(&acc) >= eps {
                    return (mass, false);
                }
            }
            (f64::INFINITY, false)
        }
    }

    fn dfs_critical(&self, from: usize, mass: f64, eps: f64, acc: &mut Vec<f64>, best: &mut f64) {
        for j in from..self.columns.len() {
            let m = mass + self.atoms[j];
            if m >= *best {
                continue;
            }
            for (a, c) in acc.iter_mut().zip(&self.columns[j]) {
                *a += c;
            }
            if sup(acc) >= eps {
                *best = m;
            } else {
                self.dfs_critical(j + 1, m, eps, acc, best);
            }
            for (a, c) in acc.iter_mut().zip(&self.columns[j]) {
                *a -= c;
            }
        }
    }
}

fn check_set(chain: &SymmetricChain, k: &[usize]) -> Result<Vec<usize>> {
    let mut set = k.to_vec();
    for &x in &set {
        chain.check_state(x)?;
    }
    set.sort_unstable();
    set.dedup();
    Ok(set)
}

/// `beta_1` for a given compact set `K` and threshold `delta` on a transient chain.
pub fn kato_k1_beta(
    chain: &SymmetricChain,
    nu: &SmoothMeasure,
    k: &[usize],
    delta: f64,
) -> Result<K1Beta> {
    chain.check_len(nu.len())?;
    nu.require_nonnegative()?;
    let set = check_set(chain, k)?;
    let split = SplitPotential::from_solves(chain, nu, &set)?;
    let (beta1, local, exhaustive) = split.search(delta);
    Ok(K1Beta {
        beta1,
        maximizer: local.into_iter().map(|j| set[j]).collect(),
        exhaustive,
    })
}

/// A pair `(K, delta)` certifying the strong Kato condition at tolerance `eps`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KinfCertificate {
    pub eps: f64,
    pub k: Vec<usize>,
    /// Largest `delta` found: every `B subset K` with `nu(B) < delta` keeps `||G(1_{K^c u B} nu)|| < eps`.
    /// When no subset of `K` reaches `eps` this is `nu(K) + 1`, admitting `B = K`.
    pub delta: f64,
    /// The sup-norm re-evaluated on the returned pair.
    pub achieved: f64,
    /// `false` when the subset search was greedy.
    pub exhaustive: bool,
}

/// Searches for the smallest `K` (grown along the ranking of `||G(1_{x} nu)||_inf = G(x,x) nu[x]`)
/// and the largest `delta` for which the pair certifies tolerance `eps`.
pub fn kato_kinf_certificate(
    chain: &SymmetricChain,
    nu: &SmoothMeasure,
    eps: f64,
) -> Result<KinfCertificate> {
    chain.check_len(nu.len())?;
    nu.require_nonnegative()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "tolerance must be positive, got {eps}"
        )));
    }
    let green = chain.green(0.0)?;
    let mass = chain.mass();
    let atoms = nu.atoms();
    let total = green.potential(atoms, mass);
    let n = chain.n();
    // Column peaks G(., x) nu[x] are attained on the diagonal by the maximum principle.
    let score: Vec<f64> = (0..n)
        .map(|x| green.matrix()[(x, x)] / mass[x] * atoms[x])
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let mut base = total.clone();
    for size in 0..=n {
        if size > 0 {
            let y = order[size - 1];
            for (x, b) in base.iter_mut().enumerate() {
                *b -= green.matrix()[(x, y)] / mass[y] * atoms[y];
            }
        }
        if sup(&base) >= eps {
            continue;
        }
        let mut k: Vec<usize> = order[..size].to_vec();
        k.sort_unstable();
        let split = SplitPotential::from_green(&green, mass, atoms, &total, &k);
        let (critical, exhaustive) = split.critical_mass(eps);
        let delta = if critical.is_finite() {
            critical
        } else {
            k.iter().map(|&y| atoms[y]).sum::<f64>() + 1.0
        };
        let achieved = split.search(delta).0;
        return Ok(KinfCertificate {
            eps,
            k,
            delta,
            achieved,
            exhaustive,
        });
    }
    Err(Error::NotConverged(alloc::format!(
        "no compact set certifies tolerance {eps}"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum JumpWeight {
    /// `|F|`, the measure `mu_{|F|}`.
    Abs,
    /// `e^F - 1`, the compensator density `nu_F` of the exponential martingale.
    ExpMinusOne,
    /// `(e^F - 1)^2`, the quadratic variation density of `Exp(F) - 1` type martingales.
    ExpMinusOneSquared,
    /// `F^2`.
    Square,
}

impl JumpWeight {
    pub fn eval(self, f: f64) -> f64 {
        match self {
            JumpWeight::Abs => f.abs(),
            JumpWeight::ExpMinusOne => libm::expm1(f),
            JumpWeight::ExpMinusOneSquared => {
                let e = libm::expm1(f);
                e * e
            }
            JumpWeight::Square => f * f,
        }
    }
}

/// `mu_{w(F)}[x] = m[x] sum_y w(F[x][y]) q[x][y]`.
pub fn jump_measure_of_f(
    chain: &SymmetricChain,
    f: &JumpPerturbation,
    weight: JumpWeight,
) -> Result<SmoothMeasure> {
    chain.check_len(f.n())?;
    let q = chain.rates();
    let mut atoms = vec![0.0; chain.n()];
    for (x, a) in atoms.iter_mut().enumerate() {
        let mut s = 0.0;
        for (y, rate) in q.row(x) {
            s += weight.eval(f.get(x, y)) * rate;
        }
        *a = chain.mass()[x] * s;
    }
    SmoothMeasure::new(atoms)
}

/// `sup { nu(u^2) : E(u, u) <= 1 }` against `||G nu||_inf`, which bounds it.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyRatio {
    pub ratio: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn energy_inequality_ratio(chain: &SymmetricChain, nu: &SmoothMeasure) -> Result<EnergyRatio> {
    chain.check_len(nu.len())?;
    nu.require_nonnegative()?;
    if chain.is_conservative() {
        return Err(Error::NotTransient);
    }
    let n = chain.n();
    // Energy form against counting measure: D (-Q).
    let mut form = chain.generator().operator().neg_symmetrized_dense();
    let sqrt_m: Vec<f64> = chain.mass().iter().map(|&m| libm::sqrt(m)).collect();
    for i in 0..n {
        for j in 0..n {
            form[(i, j)] *= sqrt_m[i] * sqrt_m[j];
        }
    }
    let chol = nalgebra::Cholesky::new(form).ok_or(Error::NotTransient)?;
    let inv = chol.inverse();
    let w: Vec<f64> = nu.atoms().iter().map(|&a| libm::sqrt(a)).collect();
    let mut s = inv;
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] *= w[i] * w[j];
        }
    }
    let st = s.transpose();
    let s = (s + st) * 0.5;
    let ratio = s
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    let bound = sup(&potential(chain, nu, 0.0)?).max(0.0);
    Ok(EnergyRatio {
        ratio,
        bound,
        holds: ratio <= bound * (1.0 + 1e-10) + 1e-14,
    })
}

/// `(1/t) E_m[\int_0^t f(X_s) dA_s^nu]`, which increases to `<nu, f>` as `t -> 0`.
pub fn revuz_pairing(chain: &SymmetricChain, nu: &SmoothMeasure, f: &[f64], t: f64) -> Result<f64> {
    chain.check_len(nu.len())?;
    chain.check_len(f.len())?;
    if !(t > 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let h: Vec<f64> = nu
        .density(chain.mass())
        .iter()
        .zip(f)
        .map(|(d, v)| d * v)
        .collect();
    let int = operator_semigroup_integral(chain.generator().operator(), t, &h)?;
    Ok(int
        .iter()
        .zip(chain.mass())
        .map(|(v, m)| v * m)
        .sum::<f64>()
        / t)
}

/// Summary of the Kato-class diagnostics for one measure.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KatoReport {
    pub potential_sup: f64,
    pub k: KatoKCheck,
    pub k1: K1Beta,
    pub k1_set: Vec<usize>,
    pub k1_delta: f64,
    pub kinf: Vec<KinfCertificate>,
    pub energy: EnergyRatio,
    pub in_k: bool,
    pub in_k1: bool,
    pub in_kinf: bool,
}

impl KatoReport {
    /// Class inclusions that must hold: strong class implies `K1` with `beta_1 < 1`, which implies `K`.
    pub fn consistent(&self) -> bool {
        (!self.in_kinf || (self.in_k1 && self.k1.beta1 < 1.0))
            && (!self.in_k1 || self.in_k)
            && self.energy.holds
    }
}

/// Runs every diagnostic on `|nu|`. `K1` is evaluated on the certificate at tolerance `1/2`;
/// the strong class is certified at `eps = f * ||G|nu| ||_inf` for each `f` in `fractions`.
pub fn kato_diagnose(
    chain: &SymmetricChain,
    nu: &SmoothMeasure,
    t_grid: &[f64],
    fractions: &[f64],
) -> Result<KatoReport> {
    let abs = nu.abs();
    let potential_sup = sup(&potential(chain, &abs, 0.0)?).max(0.0);
    let k = kato_k_check(chain, &abs, t_grid)?;
    let half = kato_kinf_certificate(chain, &abs, 0.5)?;
    let k1 = kato_k1_beta(chain, &abs, &half.k, half.delta)?;
    let mut kinf = Vec::new();
    for &frac in fractions {
        let eps = frac * potential_sup;
        if eps > 0.0 {
            kinf.push(kato_kinf_certificate(chain, &abs, eps)?);
        }
    }
    let in_kinf = kinf.iter().all(|c| c.achieved < c.eps);
    let energy = energy_inequality_ratio(chain, &abs)?;
    Ok(KatoReport {
        potential_sup,
        in_k: k.vanishes,
        in_k1: k1.beta1 < 1.0,
        k,
        k1,
        k1_set: half.k,
        k1_delta: half.delta,
        kinf,
        energy,
        in_kinf,
    })
}
