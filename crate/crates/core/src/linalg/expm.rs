//! Matrix-free semigroup action for large operators with nonnegative off-diagonal part.
//!
//! Uses uniformization: with `c >= max(-A[x][x])` and `r = ||A + cI||_inf`, `B = (A + cI)/r`
//! is entrywise nonnegative with `||B||_inf <= 1`, and `e^{tA} f = e^{(r-c)t} e^{-rt}
//! sum_k (rt)^k / k! B^k f`. Every term is nonnegative for `f >= 0`, so there is no
//! cancellation. Long horizons are split into steps with `r * dt <= STEP_RATE`.

use alloc::vec;
use alloc::vec::Vec;

use super::SymOperator;

const STEP_RATE: f64 = 16.0;
const TAIL_TOL: f64 = 1e-17;

/// Shift `c` making `A + cI` nonnegative, and `r = ||A + cI||_inf`.
fn uniformization_rates(op: &SymOperator) -> (f64, f64) {
    let c = op.diag().iter().fold(0.0f64, |a, &d| a.max(-d));
    let r = op
        .off()
        .row_sums()
        .into_iter()
        .zip(op.diag())
        .fold(0.0f64, |a, (o, d)| a.max(o + d + c));
    (c, r.max(1e-300))
}

/// `e^{-r dt} sum_k (r dt)^k / k! B^k f` with `B = (A + cI)/r`, i.e. `e^{(c - r) dt} e^{dt A} f`.
fn step(op: &SymOperator, c: f64, r: f64, dt: f64, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let rt = r * dt;
    let mut term = f.to_vec();
    let mut weight = libm::exp(-rt);
    let mut out: Vec<f64> = term.iter().map(|v| v * weight).collect();
    let mut buf = vec![0.0; n];
    let mut acc_weight = weight;
    let mut k = 0usize;
    // ||B||_inf <= 1, so the Poisson tail mass bounds the truncation error.
    while 1.0 - acc_weight > TAIL_TOL && k < 10_000 {
        k += 1;
        op.apply_into(&term, &mut buf);
        for i in 0..n {
            term[i] = (buf[i] + c * term[i]) / r;
        }
        weight *= rt / k as f64;
        acc_weight += weight;
        for i in 0..n {
            out[i] += weight * term[i];
        }
        if k as f64 > rt && weight < TAIL_TOL * 1e-3 {
            break;
        }
    }
    out
}

fn schedule(op: &SymOperator, t: f64) -> (f64, f64, usize, f64) {
    let (c, r) = uniformization_rates(op);
    let steps = libm::ceil(r * t / STEP_RATE).max(1.0) as usize;
    (c, r, steps, t / steps as f64)
}

/// `e^{tA} f`.
pub fn exp_action(op: &SymOperator, t: f64, f: &[f64]) -> Vec<f64> {
    let (c, r, steps, dt) = schedule(op, t);
    let mut v = f.to_vec();
    for _ in 0..steps {
        v = step(op, c, r, dt, &v);
    }
    let growth = libm::exp((r - c) * t);
    v.iter_mut().for_each(|x| *x *= growth);
    v
}

/// `e^{tA} f = e^{scale} v`, renormalizing after every step so long horizons stay finite.
pub fn exp_action_scaled(op: &SymOperator, t: f64, f: &[f64]) -> (f64, Vec<f64>) {
    let (c, r, steps, dt) = schedule(op, t);
    let mut v = f.to_vec();
    let mut scale = (r - c) * t;
    for _ in 0..steps {
        v = step(op, c, r, dt, &v);
        let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if m > 0.0 {
            scale += libm::log(m);
            v.iter_mut().for_each(|x| *x /= m);
        }
    }
    (scale, v)
}

/// Eight-point Gauss-Legendre nodes and weights on `[-1, 1]`.
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `\int_0^t e^{sA} f ds` by composite Gauss-Legendre on panels of width `<= 1/r`,
/// marching the semigroup from node to node.
pub fn exp_integral_action(op: &SymOperator, t: f64, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let (_, r) = uniformization_rates(op);
    let panels = libm::ceil(r * t).max(1.0) as usize;
    let h = t / panels as f64;
    let mut out = vec![0.0; n];
    let mut at = 0.0;
    let mut v = f.to_vec();
    for p in 0..panels {
        let left = p as f64 * h;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let s = left + 0.5 * h * (x + 1.0);
            v = exp_action(op, s - at, &v);
            at = s;
            for i in 0..n {
                out[i] += 0.5 * h * w * v[i];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;

    fn ring(n: usize) -> SymOperator {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, (i + 1) % n, 1.0));
            t.push(((i + 1) % n, i, 1.0));
        }
        let mut diag = vec![-2.0; n];
        diag[0] -= 0.5;
        SymOperator::new(vec![1.0; n], CsrMatrix::from_triplets(n, t), diag)
    }

    #[test]
    fn uniformization_matches_eigendecomposition() {
        let op = ring(7);
        let spec = op.spectrum();
        let f: Vec<f64> = (0..7).map(|i| libm::sin(i as f64)).collect();
        for t in [0.0, 0.3, 5.0, 40.0] {
            let a = exp_action(&op, t, &f);
            let b = spec.exp_apply(t, &f);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12, "t={t}: {x} vs {y}");
            }
        }
        let (s, v) = exp_action_scaled(&op, 400.0, &[1.0; 7]);
        let (s2, v2) = spec.exp_apply_scaled(400.0, &[1.0; 7]);
        for (x, y) in v.iter().zip(&v2) {
            assert!(((libm::log(*x) + s) - (libm::log(*y) + s2)).abs() < 1e-9);
        }
        let i1 = exp_integral_action(&op, 2.5, &f);
        let i2 = spec.exp_integral_apply(2.5, &f);
        for (x, y) in i1.iter().zip(&i2) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }
}
