//! The `L^p(m)` spectral bounds `lambda_p = -lim (1/t) log ||e^{tA}||_{p,p}` of Feynman-Kac
//! semigroups, the checks tying them together, and truncation sweeps.
//!
//! On a finite irreducible chain every `lambda_p` equals the Perron value of `A`; the reports say
//! so explicitly. Gaps between `lambda_2` and `lambda_inf` only show up in sweeps, through
//! extrapolation in the truncation size.

mod sweep;

pub use sweep::{
    aitken, check_sizes, finish_sweep, richardson, split_verdict, sweep_row, truncation_sweep,
    Extrapolation, FSpec, MeasureSpec, SplitVerdict, SweepFamily, SweepReport, SweepRow,
};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::chain::SymmetricChain;
use crate::error::{Error, Result};
use crate::feynman_kac::{
    schrodinger_generator, GaugeStatus, JumpPerturbation, SchrodingerOperator, SmoothMeasure,
    GAUGE_TOL,
};
use crate::girsanov::transform_chain;
use crate::linalg::{
    exp_action, exp_action_scaled, lowest_eigen, Spectrum, SymOperator, DENSE_SOLVE_LIMIT,
};
use crate::revuz::{jump_measure_of_f, potential, JumpWeight};

/// Tolerance of the ordering `lambda_inf <= lambda_p <= lambda_2` and of `lambda_inf >= min(lambda_2, 0)`.
pub const ORDERING_TOL: f64 = 1e-8;
/// Tolerance of `lambda_1 = lambda_inf`.
pub const DUALITY_TOL: f64 = 1e-9;
/// Eigen and variational routes to `lambda_2` must agree to this.
pub const VARIATIONAL_TOL: f64 = 1e-10;
/// Spread of all reported values below which the verdict is "independent".
pub const INDEPENDENT_BAND: f64 = 1e-6;
/// `lambda_2 - lambda_inf` above which the verdict is "split".
pub const SPLIT_BAND: f64 = 1e-4;
/// Agreement required between the `(X, mu + F)` and `(Y, mu + nu_F)` routes.
pub const GIRSANOV_TOL: f64 = 1e-9;
/// Minimum coefficient of determination for the slope estimator.
pub const SLOPE_R2: f64 = 0.999;

const POWER_STOP: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 90;
const SPARSE_MATVEC_BUDGET: f64 = 4e6;
/// Target width of a Perron enclosure, relative to `max(1, ||A||_max)`.
const PERRON_WIDTH: f64 = 1e-13;
/// Flop budget and step cap of the enclosure refinement.
const PERRON_BUDGET: f64 = 2e8;
const PERRON_MAX_STEPS: usize = 50_000;

/// An exponent `p` in `[1, inf]`. Serialized as a number, or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Exponent(pub f64);

impl Exponent {
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p >= 1.0 {
            Ok(Exponent(p))
        } else {
            Err(Error::InvalidParameter(alloc::format!(
                "exponent must lie in [1, inf], got {p}"
            )))
        }
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `||f||_{L^p(m)}`.
    pub fn norm(self, f: &[f64], mass: &[f64]) -> f64 {
        let p = self.0;
        if p.is_infinite() {
            f.iter().fold(0.0f64, |a, v| a.max(v.abs()))
        } else if p == 1.0 {
            f.iter().zip(mass).map(|(v, m)| v.abs() * m).sum()
        } else if p == 2.0 {
            libm::sqrt(f.iter().zip(mass).map(|(v, m)| v * v * m).sum())
        } else {
            // Factor out the peak so |f|^p cannot under- or overflow.
            let peak = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if peak == 0.0 {
                return 0.0;
            }
            let s: f64 = f
                .iter()
                .zip(mass)
                .map(|(v, m)| libm::pow(v.abs() / peak, p) * m)
                .sum();
            peak * libm::pow(s, 1.0 / p)
        }
    }
}

impl core::fmt::Display for Exponent {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Exponent;
            fn expecting(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
                f.write_str("a number >= 1 or \"inf\"")
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> core::result::Result<Exponent, E> {
                Exponent::new(v).map_err(|_| E::custom("exponent must be >= 1"))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> core::result::Result<Exponent, E> {
                self.visit_f64(v as f64)
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> core::result::Result<Exponent, E> {
                self.visit_f64(v as f64)
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> core::result::Result<Exponent, E> {
                match v {
                    "inf" | "infinity" => Ok(Exponent::INFINITY),
                    _ => Err(E::custom("expected \"inf\"")),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Method {
    Eigen,
    Lanczos,
    Variational,
    Perron,
    SlopeFit,
    PowerIteration,
}

/// Perron value with its Collatz-Wielandt enclosure.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerronBound {
    pub value: f64,
    /// `lambda_inf` lies in `[lower, upper]`.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SlopeFit {
    pub value: f64,
    pub r2: f64,
    pub horizon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PowerEstimate {
    pub p: Exponent,
    pub value: f64,
    pub converged: bool,
    /// Evolution time reached by the iteration.
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaInfMode {
    Perron,
    /// Least-squares slope of `-log ||e^{tA}1||_inf` over `[horizon/2, horizon]`.
    Slope {
        horizon: f64,
    },
}

/// Bottom of the spectrum of `-A` through its eigenvalues (dense) or Lanczos.
pub fn lambda_2(op: &SchrodingerOperator) -> f64 {
    lowest_eigen(op.operator(), false).0
}

fn lambda_2_method(n: usize) -> Method {
    if n <= DENSE_SOLVE_LIMIT {
        Method::Eigen
    } else {
        Method::Lanczos
    }
}

/// Infimum of the Rayleigh quotient
/// `[E(u,u) - sum u^2 mu - sum_{x,y} m q (e^F - 1) u_x u_y] / sum m u^2`,
/// with the form assembled edge by edge. Dense sizes only.
pub fn lambda_2_variational(
    chain: &SymmetricChain,
    mu: &SmoothMeasure,
    f: &JumpPerturbation,
) -> Result<Option<f64>> {
    chain.check_len(mu.len())?;
    chain.check_len(f.n())?;
    let n = chain.n();
    if n > DENSE_SOLVE_LIMIT {
        return Ok(None);
    }
    let m = chain.mass();
    let mut form = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (x, y, rate) in chain.rates().triplets() {
        let w = 0.5 * m[x] * rate;
        form[(x, x)] += w;
        form[(y, y)] += w;
        form[(x, y)] -= w;
        form[(y, x)] -= w;
        let jump = m[x] * rate * libm::expm1(f.get(x, y));
        form[(x, y)] -= jump;
    }
    for x in 0..n {
        form[(x, x)] += chain.killing()[x] * m[x] - mu.atoms()[x];
    }
    let inv_sqrt: Vec<f64> = m.iter().map(|&v| 1.0 / libm::sqrt(v)).collect();
    for i in 0..n {
        for j in 0..n {
            form[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let ft = form.transpose();
    let form = (form + ft) * 0.5;
    Ok(Some(
        form.symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b)),
    ))
}

/// Collatz-Wielandt enclosure of the Perron root `rho` of `A` from a positive test vector:
/// `min (Av)_i / v_i <= rho <= max (Av)_i / v_i`. Returned as an enclosure of `-rho`.
fn collatz_wielandt(op: &SymOperator, v: &[f64]) -> Option<(f64, f64)> {
    if v.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let av = op.apply(v);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, x) in av.iter().zip(v) {
        let r = a / x;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Some((-hi, -lo))
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (lo, hi) = (a.0.max(b.0), a.1.min(b.1));
    if lo <= hi {
        (lo, hi)
    } else if b.1 - b.0 < a.1 - a.0 {
        b
    } else {
        a
    }
}

/// Power iteration with `B = A + cI >= 0` from a positive `v`. A nonnegative matrix times a
/// positive vector involves no cancellation, so small components keep their relative accuracy
/// (an eigensolver only gets them to absolute accuracy), and the Collatz-Wielandt enclosure
/// narrows monotonically.
fn refine_enclosure(op: &SymOperator, mut v: Vec<f64>, mut best: (f64, f64)) -> (f64, f64) {
    let n = op.n();
    let c = op.diag().iter().fold(0.0f64, |a, &d| a.max(-d));
    let b_diag: Vec<f64> = op.diag().iter().map(|d| d + c).collect();
    let target = PERRON_WIDTH * op.max_abs().max(1.0);
    let work = (op.off().nnz() + n) as f64;
    let steps = ((PERRON_BUDGET / work) as usize).clamp(1, PERRON_MAX_STEPS);
    let mut w = vec![0.0; n];
    for _ in 0..steps {
        if best.1 - best.0 <= target {
            break;
        }
        op.off().mul_vec_into(&v, &mut w);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            w[i] += b_diag[i] * v[i];
            let r = w[i] / v[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if !(lo > 0.0) || !hi.is_finite() {
            break;
        }
        best = intersect(best, (c - hi, c - lo));
        let peak = w.iter().fold(0.0f64, |a, &x| a.max(x));
        for (x, y) in v.iter_mut().zip(&w) {
            *x = y / peak;
        }
    }
    best
}

/// `lambda_inf = -rho(A)` by Perron-Frobenius, enclosed with the constant vector and the
/// ground state as test vectors, then tightened by [`refine_enclosure`].
pub fn lambda_inf_perron(op: &SymOperator) -> PerronBound {
    let ones = vec![1.0; op.n()];
    let mut best = collatz_wielandt(op, &ones).unwrap();
    let (_, phi) = lowest_eigen(op, true);
    let start = match phi {
        Some(p) => match collatz_wielandt(op, &p) {
            Some(b) => {
                best = intersect(best, b);
                p
            }
            None => ones,
        },
        None => ones,
    };
    let best = refine_enclosure(op, start, best);
    PerronBound {
        value: 0.5 * (best.0 + best.1),
        lower: best.0,
        upper: best.1,
    }
}

/// `(scale, v)` with `e^{tA} f = e^{scale} v` and `||v||_inf = 1`.
fn evolve_scaled(op: &SymOperator, spec: Option<&Spectrum>, t: f64, f: &[f64]) -> (f64, Vec<f64>) {
    let (mut scale, mut v) = match spec {
        Some(s) => s.exp_apply_scaled(t, f),
        None => exp_action_scaled(op, t, f),
    };
    let peak = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if peak > 0.0 {
        scale += libm::log(peak);
        v.iter_mut().for_each(|x| *x /= peak);
    }
    (scale, v)
}

fn dense_spectrum(op: &SymOperator) -> Option<Spectrum> {
    (op.n() <= DENSE_SOLVE_LIMIT).then(|| op.spectrum())
}

/// `lambda_inf` as the least-squares slope of `-log ||e^{tA}1||_inf` over 21 times in
/// `[horizon/2, horizon]`.
pub fn lambda_inf_slope(op: &SymOperator, horizon: f64) -> Result<SlopeFit> {
    if !(horizon > 0.0) {
        return Err(Error::NegativeTime(horizon));
    }
    let spec = dense_spectrum(op);
    let ones = vec![1.0; op.n()];
    let count = 21;
    let mut ts = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    let start = 0.5 * horizon;
    let step = (horizon - start) / (count - 1) as f64;
    let (mut scale, mut v) = evolve_scaled(op, spec.as_ref(), start, &ones);
    for i in 0..count {
        let t = start + step * i as f64;
        if i > 0 {
            let (s, w) = evolve_scaled(op, spec.as_ref(), step, &v);
            scale += s;
            v = w;
        }
        ts.push(t);
        ys.push(-scale);
    }
    let (slope, r2) = least_squares(&ts, &ys);
    if r2 < SLOPE_R2 {
        return Err(Error::NotConverged(alloc::format!(
            "slope fit R^2 = {r2} below {SLOPE_R2}"
        )));
    }
    Ok(SlopeFit {
        value: slope,
        r2,
        horizon,
    })
}

/// Slope and coefficient of determination; a flat response counts as a perfect fit.
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - my - slope * (a - mx);
            r * r
        })
        .sum();
    let scale = y.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let r2 = if syy <= 1e-26 * scale * scale * n {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    (slope, r2)
}

pub fn lambda_inf(op: &SymOperator, mode: LambdaInfMode) -> Result<(f64, Method)> {
    match mode {
        LambdaInfMode::Perron => Ok((lambda_inf_perron(op).value, Method::Perron)),
        LambdaInfMode::Slope { horizon } => {
            Ok((lambda_inf_slope(op, horizon)?.value, Method::SlopeFit))
        }
    }
}

/// Decay rate of `||e^{tA}||_{p,p}` in `L^p(m)` by power iteration: `f` runs along `e^{tA} 1`
/// with `t` doubling, and the rate is read off one step `e^{dt A}` with `dt = 0.1 / ||A||_max`.
/// Stops when two successive estimates agree to `1e-12 * max(1, ||A||_max)`.
pub fn lambda_p(op: &SymOperator, p: Exponent) -> PowerEstimate {
    let spec = dense_spectrum(op);
    lambda_p_with(op, spec.as_ref(), p)
}

fn lambda_p_with(op: &SymOperator, spec: Option<&Spectrum>, p: Exponent) -> PowerEstimate {
    let n = op.n();
    let mass = op.mass();
    let scale = op.max_abs().max(1e-300);
    let dt = 0.1 / scale;
    let tol = POWER_STOP * scale.max(1.0);
    let one_step = |v: &[f64]| -> f64 {
        let w = match spec {
            Some(s) => s.exp_apply(dt, v),
            None => exp_action(op, dt, v),
        };
        -(libm::log(p.norm(&w, mass)) - libm::log(p.norm(v, mass))) / dt
    };
    let ones = vec![1.0; n];
    let mut prev = one_step(&ones);
    let mut t = dt;
    let mut v = ones.clone();
    // Uniformization rate is at most twice the largest entry.
    let r = 2.0 * scale;
    for _ in 0..MAX_DOUBLINGS {
        // Move v from e^{(t/2)A} 1 to e^{tA} 1 (dense: directly from 1).
        v = match spec {
            Some(s) => evolve_scaled(op, Some(s), t, &ones).1,
            None => {
                if 2.0 * r * t > SPARSE_MATVEC_BUDGET {
                    break;
                }
                evolve_scaled(op, None, 0.5 * t, &v).1
            }
        };
        let rate = one_step(&v);
        if (rate - prev).abs() <= tol {
            return PowerEstimate {
                p,
                value: rate,
                converged: true,
                time: t,
            };
        }
        prev = rate;
        t *= 2.0;
    }
    PowerEstimate {
        p,
        value: prev,
        converged: false,
        time: t,
    }
}

/// `lambda_1`, computed as the `lambda_inf` of the `m`-adjoint (duality `||T||_{1,1} = ||T^*||_{inf,inf}`).
pub fn lambda_1(op: &SymOperator) -> PerronBound {
    lambda_inf_perron(&op.m_adjoint())
}

/// `(1/t) log (e^{tA}1)[x]` per state, with the increment `(1/t) log[(e^{2tA}1)[x] / (e^{tA}1)[x]]`
/// that removes the `O(1/t)` constant.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseLyapunov {
    pub t: f64,
    pub raw: Vec<f64>,
    pub increment: Vec<f64>,
}

pub fn pointwise_lyapunov(op: &SymOperator, t: f64) -> Result<PointwiseLyapunov> {
    if !(t > 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let spec = dense_spectrum(op);
    let ones = vec![1.0; op.n()];
    let (s1, v1) = evolve_scaled(op, spec.as_ref(), t, &ones);
    let (s2, v2) = evolve_scaled(op, spec.as_ref(), t, &v1);
    let raw = v1.iter().map(|v| (s1 + libm::log(*v)) / t).collect();
    let increment = v1
        .iter()
        .zip(&v2)
        .map(|(a, b)| (s2 + libm::log(*b) - libm::log(*a)) / t)
        .collect();
    Ok(PointwiseLyapunov { t, raw, increment })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    Independent,
    Split,
    Marginal,
}

impl Verdict {
    pub fn classify(spread: f64, gap: f64) -> Self {
        if spread <= INDEPENDENT_BAND {
            Verdict::Independent
        } else if gap > SPLIT_BAND {
            Verdict::Split
        } else {
            Verdict::Marginal
        }
    }
}

/// Which object a report describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Regime {
    /// A finite irreducible chain: all `lambda_p` coincide by Perron-Frobenius.
    FiniteChain,
    /// Extrapolation of a truncation sweep toward the infinite model.
    Extrapolated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Methods {
    pub lambda1: Method,
    pub lambda2: Method,
    pub lambda_inf: Method,
    pub lambda_p: Method,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GirsanovMatch {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_inf: f64,
    pub lambda_p: Vec<PowerEstimate>,
    pub max_deviation: f64,
    pub matched: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralReport {
    pub n: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda2_variational: Option<f64>,
    pub lambda_inf: f64,
    pub lambda_inf_bounds: [f64; 2],
    pub lambda_p: Vec<PowerEstimate>,
    pub methods: Methods,
    pub spread: f64,
    pub ordering_ok: bool,
    pub duality_ok: bool,
    pub lower_bound_ok: bool,
    pub variational_ok: bool,
    pub gauge_linkage_ok: bool,
    pub independence_verdict: Verdict,
    pub gaugeable: bool,
    pub gauge_status: GaugeStatus,
    pub regime: Regime,
    pub girsanov: Option<GirsanovMatch>,
}

impl SpectralReport {
    /// Every relation the theory guarantees held numerically.
    pub fn invariants_ok(&self) -> bool {
        self.ordering_ok
            && self.duality_ok
            && self.lower_bound_ok
            && self.variational_ok
            && self.gauge_linkage_ok
            && self.girsanov.as_ref().map_or(true, |g| g.matched)
    }

    /// Names of the violated invariants.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |ok: bool, name: &str| {
            if !ok {
                out.push(String::from(name));
            }
        };
        push(
            self.ordering_ok,
            "ordering lambda_inf <= lambda_p <= lambda_2",
        );
        push(self.duality_ok, "duality lambda_1 = lambda_inf");
        push(self.lower_bound_ok, "lambda_inf >= min(lambda_2, 0)");
        push(self.variational_ok, "eigen and variational lambda_2 agree");
        push(self.gauge_linkage_ok, "gaugeable iff lambda_2 > 0");
        push(
            self.girsanov.as_ref().map_or(true, |g| g.matched),
            "lambda_p(X, mu+F) = lambda_p(Y, mu+nu_F)",
        );
        out
    }
}

struct CoreValues {
    lambda1: PerronBound,
    lambda2: f64,
    lambda_inf: PerronBound,
    lambda_p: Vec<PowerEstimate>,
}

fn core_values(op: &SymOperator, ps: &[Exponent]) -> CoreValues {
    let spec = dense_spectrum(op);
    let lambda2 = match &spec {
        Some(s) => s.lowest(),
        None => lowest_eigen(op, false).0,
    };
    CoreValues {
        lambda1: lambda_1(op),
        lambda2,
        lambda_inf: lambda_inf_perron(op),
        lambda_p: ps
            .iter()
            .map(|&p| lambda_p_with(op, spec.as_ref(), p))
            .collect(),
    }
}

/// Full report for `(X, mu + F)`. With `via_girsanov`, every value is recomputed on
/// `(Y, mu + nu_F)` and matched.
pub fn independence_report(
    chain: &SymmetricChain,
    mu: &SmoothMeasure,
    f: &JumpPerturbation,
    ps: &[Exponent],
    via_girsanov: bool,
) -> Result<SpectralReport> {
    let op = schrodinger_generator(chain, mu, f)?;
    let n = chain.n();
    let v = core_values(op.operator(), ps);
    let variational = lambda_2_variational(chain, mu, f)?;
    let girsanov = if via_girsanov {
        let y = transform_chain(chain, f)?;
        let shift = mu.add(&jump_measure_of_f(chain, f, JumpWeight::ExpMinusOne)?);
        let op_y = schrodinger_generator(&y.chain, &shift, &JumpPerturbation::zero(n))?;
        let w = core_values(op_y.operator(), ps);
        let mut dev = (w.lambda1.value - v.lambda1.value)
            .abs()
            .max((w.lambda2 - v.lambda2).abs())
            .max((w.lambda_inf.value - v.lambda_inf.value).abs());
        for (a, b) in w.lambda_p.iter().zip(&v.lambda_p) {
            dev = dev.max((a.value - b.value).abs());
        }
        Some(GirsanovMatch {
            lambda1: w.lambda1.value,
            lambda2: w.lambda2,
            lambda_inf: w.lambda_inf.value,
            lambda_p: w.lambda_p,
            max_deviation: dev,
            matched: dev <= GIRSANOV_TOL,
        })
    } else {
        None
    };
    Ok(assemble(n, v, variational, girsanov, Regime::FiniteChain))
}

fn assemble(
    n: usize,
    v: CoreValues,
    variational: Option<f64>,
    girsanov: Option<GirsanovMatch>,
    regime: Regime,
) -> SpectralReport {
    let l2 = v.lambda2;
    let linf = v.lambda_inf.value;
    let l1 = v.lambda1.value;
    let mut all = vec![l1, l2, linf];
    all.extend(v.lambda_p.iter().map(|e| e.value));
    let hi = all.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lo = all.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let spread = hi - lo;
    let ordering_ok = v
        .lambda_p
        .iter()
        .all(|e| linf <= e.value + ORDERING_TOL && e.value <= l2 + ORDERING_TOL)
        && linf <= l2 + ORDERING_TOL;
    let status = GaugeStatus::from_lambda2(l2);
    let gaugeable = l2 > GAUGE_TOL;
    SpectralReport {
        n,
        lambda1: l1,
        lambda2: l2,
        lambda2_variational: variational,
        lambda_inf: linf,
        lambda_inf_bounds: [v.lambda_inf.lower, v.lambda_inf.upper],
        lambda_p: v.lambda_p,
        methods: Methods {
            lambda1: Method::Perron,
            lambda2: lambda_2_method(n),
            lambda_inf: Method::Perron,
            lambda_p: Method::PowerIteration,
        },
        spread,
        ordering_ok,
        duality_ok: (l1 - linf).abs() <= DUALITY_TOL,
        lower_bound_ok: linf >= l2.min(0.0) - ORDERING_TOL,
        variational_ok: variational.map_or(true, |w| {
            (w - l2).abs() <= VARIATIONAL_TOL * l2.abs().max(1.0)
        }),
        gauge_linkage_ok: status == GaugeStatus::Marginal || gaugeable == (l2 > 0.0),
        independence_verdict: Verdict::classify(spread, l2 - linf),
        gaugeable,
        gauge_status: status,
        regime,
        girsanov,
    }
}

/// Inputs of the Hardy-type implication `lambda_2(X, mu1 - mu2) > 0 => inf{E(u,u) + <u^2, mu2> : <u^2, mu1> = 1} > 1`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HardyCheck {
    pub lambda2: f64,
    pub lhs_positive: bool,
    /// `None` stands for `+inf` (`mu1 = 0`).
    pub rhs: Option<f64>,
    /// The `alpha` at which `||G_alpha mu1||_inf < 1` was verified.
    pub alpha: f64,
    pub implication_holds: bool,
}

pub fn hardy_implication_check(
    chain: &SymmetricChain,
    mu1: &SmoothMeasure,
    mu2: &SmoothMeasure,
) -> Result<HardyCheck> {
    chain.check_len(mu1.len())?;
    chain.check_len(mu2.len())?;
    mu1.require_nonnegative()?;
    mu2.require_nonnegative()?;
    let mut alpha = None;
    for j in 0..=20 {
        let a = libm::ldexp(1.0, j);
        let g = potential(chain, mu1, a)?;
        if g.iter().all(|&v| v < 1.0) {
            alpha = Some(a);
            break;
        }
    }
    let alpha = alpha.ok_or_else(|| {
        Error::InvalidParameter("no alpha in {2^j : j = 0..20} gives ||G_alpha mu1|| < 1".into())
    })?;
    let op = schrodinger_generator(
        chain,
        &mu1.add(&mu2.scaled(-1.0)),
        &JumpPerturbation::zero(chain.n()),
    )?;
    let lambda2 = lambda_2(&op);
    let lhs_positive = lambda2 > 0.0;
    let rhs = if mu1.atoms().iter().all(|&a| a == 0.0) {
        None
    } else {
        // Form against counting measure: D(-Q) + diag(mu2).
        let n = chain.n();
        let mut form = chain.generator().operator().neg_symmetrized_dense();
        let sqrt_m: Vec<f64> = chain.mass().iter().map(|&v| libm::sqrt(v)).collect();
        for i in 0..n {
            for j in 0..n {
                form[(i, j)] *= sqrt_m[i] * sqrt_m[j];
            }
            form[(i, i)] += mu2.atoms()[i];
        }
        Some(match nalgebra::Cholesky::new(form) {
            None => 0.0,
            Some(chol) => {
                let inv = chol.inverse();
                let w: Vec<f64> = mu1.atoms().iter().map(|&a| libm::sqrt(a)).collect();
                let mut s = inv;
                for i in 0..n {
                    for j in 0..n {
                        s[(i, j)] *= w[i] * w[j];
                    }
                }
                let st = s.transpose();
                let top = ((s + st) * 0.5)
                    .symmetric_eigenvalues()
                    .iter()
                    .fold(0.0f64, |a, &b| a.max(b));
                1.0 / top
            }
        })
    };
    let implication_holds = !lhs_positive || rhs.map_or(true, |r| r > 1.0);
    Ok(HardyCheck {
        lambda2,
        lhs_positive,
        rhs,
        alpha,
        implication_holds,
    })
}

/// `max_p |lambda_p(X^(alpha), mu + F) - lambda_p(X, mu + F) - alpha|` over the given `p`,
/// plus `lambda_2` and `lambda_inf`.
pub fn subprocess_shift_check(
    chain: &SymmetricChain,
    mu: &SmoothMeasure,
    f: &JumpPerturbation,
    alpha: f64,
    ps: &[Exponent],
) -> Result<f64> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::NegativeAlpha(alpha));
    }
    let base = schrodinger_generator(chain, mu, f)?;
    let sub = schrodinger_generator(&chain.alpha_subprocess(alpha)?, mu, f)?;
    let a = core_values(base.operator(), ps);
    let b = core_values(sub.operator(), ps);
    let mut dev = (b.lambda2 - a.lambda2 - alpha)
        .abs()
        .max((b.lambda_inf.value - a.lambda_inf.value - alpha).abs());
    for (x, y) in a.lambda_p.iter().zip(&b.lambda_p) {
        dev = dev.max((y.value - x.value - alpha).abs());
    }
    Ok(dev)
}

/// `||e^{tQ}||_{2 -> inf} = max_x (sum_y p_t(x,y)^2 m[y])^{1/2} = max_x (e^{2tQ}(x,x) / m[x])^{1/2}`.
pub fn ultracontractivity_norm(chain: &SymmetricChain, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let op = chain.generator().into_operator();
    let n = op.n();
    let m = chain.mass();
    let mut best = 0.0f64;
    if n <= crate::linalg::DENSE_EIGEN_LIMIT {
        let spec = op.spectrum();
        let v = spec.vectors();
        let w: Vec<f64> = spec
            .values()
            .iter()
            .map(|&l| libm::exp(-2.0 * t * l))
            .collect();
        for x in 0..n {
            let d: f64 = (0..n).map(|k| v[(x, k)] * v[(x, k)] * w[k]).sum();
            best = best.max(d / m[x]);
        }
    } else {
        for x in 0..n {
            let mut e = vec![0.0; n];
            e[x] = 1.0;
            let col = exp_action(&op, 2.0 * t, &e);
            best = best.max(col[x] / m[x]);
        }
    }
    Ok(libm::sqrt(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Boundary, ModelSpec};
    use crate::test_support::two_state;

    fn ps() -> Vec<Exponent> {
        [1.0, 4.0 / 3.0, 2.0, 3.0, 4.0]
            .into_iter()
            .map(Exponent)
            .chain([Exponent::INFINITY])
            .collect()
    }

    #[test]
    fn two_state_values() {
        let c = two_state();
        let z = JumpPerturbation::zero(2);
        let r = independence_report(&c, &SmoothMeasure::zero(2), &z, &ps(), true).unwrap();
        assert!((r.lambda2 - 1.0).abs() < 1e-14);
        assert!((r.lambda_inf - 1.0).abs() < 1e-14);
        assert!((r.lambda1 - 1.0).abs() < 1e-14);
        for e in &r.lambda_p {
            assert!(e.converged && (e.value - 1.0).abs() < 1e-9, "{e:?}");
        }
        assert!(r.invariants_ok(), "{:?}", r.violations());
        assert_eq!(r.independence_verdict, Verdict::Independent);
        let l = core::f64::consts::LN_2;
        let f = JumpPerturbation::from_triplets(2, [(0, 1, l), (1, 0, l)]).unwrap();
        let op = schrodinger_generator(&c, &SmoothMeasure::zero(2), &f).unwrap();
        assert!(lambda_2(&op).abs() < 1e-14);
        let shifted =
            schrodinger_generator(&c, &SmoothMeasure::uniform_density(c.mass(), 0.25), &z).unwrap();
        assert!((lambda_2(&shifted) - 0.75).abs() < 1e-14);
    }

    #[test]
    fn conservative_torus_is_exact() {
        let c = ModelSpec::Torus {
            n: 12,
            rate: 1.0,
            killing: 0.0,
            normalize_mass: false,
        }
        .build()
        .unwrap();
        let n = c.n();
        let r = independence_report(
            &c,
            &SmoothMeasure::zero(n),
            &JumpPerturbation::zero(n),
            &ps(),
            false,
        )
        .unwrap();
        assert_eq!(r.lambda_inf, 0.0);
        assert_eq!(r.lambda_inf_bounds, [0.0, 0.0]);
        assert!(r.lambda2.abs() < 1e-13);
        assert!(r.invariants_ok());
        assert_eq!(r.independence_verdict, Verdict::Independent);
        assert!(!r.gaugeable);
    }

    #[test]
    fn slope_agrees_with_perron() {
        let c = ModelSpec::Path {
            n: 15,
            rate: 1.0,
            boundary: Boundary::Dirichlet,
            normalize_mass: false,
        }
        .build()
        .unwrap();
        let op = c.generator().into_operator();
        let spec = op.spectrum();
        let gap = spec.values()[1] - spec.values()[0];
        let s = lambda_inf_slope(&op, 100.0 / gap).unwrap();
        let p = lambda_inf_perron(&op);
        assert!((s.value - p.value).abs() < 1e-6, "{s:?} {p:?}");
        assert!(p.upper - p.lower < 1e-12);
    }

    #[test]
    fn variational_route_agrees() {
        let c = ModelSpec::Path {
            n: 10,
            rate: 0.7,
            boundary: Boundary::Dirichlet,
            normalize_mass: true,
        }
        .build()
        .unwrap();
        let mu = SmoothMeasure::new((0..10).map(|i| 0.05 * (i as f64 - 4.0)).collect()).unwrap();
        let f = JumpPerturbation::from_triplets(
            10,
            (0..9).flat_map(|i| [(i, i + 1, 0.3), (i + 1, i, 0.3)]),
        )
        .unwrap();
        let op = schrodinger_generator(&c, &mu, &f).unwrap();
        let a = lambda_2(&op);
        let b = lambda_2_variational(&c, &mu, &f).unwrap().unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn pointwise_lyapunov_limit() {
        let c = ModelSpec::Path {
            n: 6,
            rate: 1.0,
            boundary: Boundary::Dirichlet,
            normalize_mass: false,
        }
        .build()
        .unwrap();
        let op = c.generator().into_operator();
        let spec = op.spectrum();
        let gap = spec.values()[1] - spec.values()[0];
        let l = pointwise_lyapunov(&op, 200.0 / gap).unwrap();
        let phi = spec.vectors().column(0);
        let total: f64 = phi.iter().sum();
        for x in 0..6 {
            assert!((l.increment[x] + spec.lowest()).abs() < 1e-6);
            // The raw average carries the constant log(phi_x <phi, 1>) / t.
            let c = libm::log(phi[x] * total) / l.t;
            assert!((l.raw[x] + spec.lowest() - c).abs() < 1e-9);
        }
    }

    #[test]
    fn hardy_two_state() {
        let c = two_state();
        let h = hardy_implication_check(
            &c,
            &SmoothMeasure::point(2, 0, 0.5),
            &SmoothMeasure::zero(2),
        )
        .unwrap();
        // lambda_2 of [[1.5, -1], [-1, 2]]; rhs = 1 / (0.5 G(0,0)) = 1 / (0.5 * 2/3) = 3.
        assert!(h.lhs_positive);
        assert!((h.rhs.unwrap() - 3.0).abs() < 1e-12);
        assert!(h.implication_holds);
        let v = hardy_implication_check(
            &c,
            &SmoothMeasure::zero(2),
            &SmoothMeasure::point(2, 1, 1.0),
        )
        .unwrap();
        assert_eq!(v.rhs, None);
    }

    #[test]
    fn subprocess_shift_and_ultracontractivity() {
        let c = two_state();
        let mu = SmoothMeasure::new(vec![0.2, -0.4]).unwrap();
        let f = JumpPerturbation::from_triplets(2, [(0, 1, 0.3), (1, 0, 0.3)]).unwrap();
        for a in [0.0, 0.5, 1.0, 3.7] {
            assert!(subprocess_shift_check(&c, &mu, &f, a, &ps()).unwrap() <= 1e-10);
        }
        // e^{2Q} on the 2-state example: diagonal (e^{-2} + e^{-6}) / 2.
        let u = ultracontractivity_norm(&c, 1.0).unwrap();
        let exact = libm::sqrt(0.5 * (libm::exp(-2.0) + libm::exp(-6.0)));
        assert!((u - exact).abs() < 1e-15);
    }

    #[test]
    fn exponent_norms() {
        let m = [1.0, 2.0];
        let f = [3.0, -4.0];
        assert_eq!(Exponent(1.0).norm(&f, &m), 11.0);
        assert_eq!(Exponent::INFINITY.norm(&f, &m), 4.0);
        assert!((Exponent(2.0).norm(&f, &m) - libm::sqrt(41.0)).abs() < 1e-14);
        assert!((Exponent(3.0).norm(&f, &m) - libm::cbrt(27.0 + 128.0)).abs() < 1e-12);
        assert!(Exponent::new(0.5).is_err());
    }
}
