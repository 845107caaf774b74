use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Conjugate gradients for a symmetric positive-definite operator.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let b_norm = norm(rhs);
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solve("operator is not positive definite"));
        }
        let a = rr / pap;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        let rr_new = dot(&r, &r);
        if libm::sqrt(rr_new) <= rel_tol * b_norm {
            return Ok(x);
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::Solve("conjugate gradients did not converge"))
}

/// Number of eigenvalues of the symmetric tridiagonal `(a, b)` strictly below `x`.
fn sturm_count(a: &[f64], b: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..a.len() {
        let off = if i == 0 { 0.0 } else { b[i - 1] * b[i - 1] };
        d = a[i] - x - if i == 0 { 0.0 } else { off / d };
        if d == 0.0 {
            d = f64::MIN_POSITIVE;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix by bisection on the Sturm count.
pub fn tridiagonal_lowest(a: &[f64], b: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..a.len() {
        let r = (if i > 0 { b[i - 1].abs() } else { 0.0 })
            + (if i < b.len() { b[i].abs() } else { 0.0 });
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(a, b, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvector of the tridiagonal for an eigenvalue `theta` at the bottom of its spectrum,
/// by inverse iteration with a shift just below `theta` (keeps the factorization definite).
fn tridiagonal_ground_vector(a: &[f64], b: &[f64], theta: f64) -> Vec<f64> {
    let k = a.len();
    let scale = a.iter().chain(b).fold(1e-300f64, |m, v| m.max(v.abs()));
    let shift = theta - 1e-10 * scale;
    let mut y = vec![1.0; k];
    for _ in 0..4 {
        // Thomas algorithm on (T - shift I) z = y.
        let mut c = vec![0.0; k];
        let mut d = vec![0.0; k];
        let mut denom = a[0] - shift;
        c[0] = if k > 1 { b[0] / denom } else { 0.0 };
        d[0] = y[0] / denom;
        for i in 1..k {
            denom = a[i] - shift - b[i - 1] * c[i - 1];
            c[i] = if i + 1 < k { b[i] / denom } else { 0.0 };
            d[i] = (y[i] - b[i - 1] * d[i - 1]) / denom;
        }
        let mut z = vec![0.0; k];
        z[k - 1] = d[k - 1];
        for i in (0..k - 1).rev() {
            z[i] = d[i] - c[i] * z[i + 1];
        }
        let nz = norm(&z);
        y = z.into_iter().map(|v| v / nz).collect();
    }
    y
}

#[derive(Clone, Debug)]
pub struct LanczosResult {
    pub value: f64,
    pub vector: Option<Vec<f64>>,
    pub iterations: usize,
}

/// Lowest eigenvalue of a symmetric operator by plain Lanczos (no reorthogonalization;
/// the extreme Ritz value is unaffected by the loss of orthogonality). With `want_vector`,
/// a second pass regenerates the basis to assemble the Ritz vector without storing it.
pub fn lanczos_lowest(
    apply: impl Fn(&[f64], &mut [f64]),
    start: &[f64],
    tol: f64,
    max_iter: usize,
    want_vector: bool,
) -> LanczosResult {
    let n = start.len();
    let s_norm = norm(start);
    let mut q: Vec<f64> = start.iter().map(|v| v / s_norm).collect();
    let mut q_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut beta_prev = 0.0;
    let steps = max_iter.min(n).max(1);
    for it in 0..steps {
        apply(&q, &mut w);
        let alpha = dot(&w, &q);
        for i in 0..n {
            w[i] -= alpha * q[i] + beta_prev * q_prev[i];
        }
        alphas.push(alpha);
        let beta = norm(&w);
        let theta = tridiagonal_lowest(&alphas, &betas);
        history.push(theta);
        let scale = theta.abs().max(1.0);
        let stalled = it >= 10 && (history[it - 10] - theta).abs() <= tol * scale;
        if beta <= 1e-13 * scale || stalled || it + 1 == steps {
            break;
        }
        betas.push(beta);
        core::mem::swap(&mut q_prev, &mut q);
        for i in 0..n {
            q[i] = w[i] / beta;
        }
        beta_prev = beta;
    }
    let k = alphas.len();
    let value = *history.last().unwrap();
    let vector = want_vector.then(|| {
        let y = tridiagonal_ground_vector(&alphas, &betas[..k - 1], value);
        let mut x = vec![0.0; n];
        let mut q: Vec<f64> = start.iter().map(|v| v / s_norm).collect();
        let mut q_prev = vec![0.0; n];
        let mut w = vec![0.0; n];
        for j in 0..k {
            for i in 0..n {
                x[i] += y[j] * q[i];
            }
            if j + 1 == k {
                break;
            }
            apply(&q, &mut w);
            let beta_prev = if j == 0 { 0.0 } else { betas[j - 1] };
            for i in 0..n {
                w[i] -= alphas[j] * q[i] + beta_prev * q_prev[i];
            }
            core::mem::swap(&mut q_prev, &mut q);
            for i in 0..n {
                q[i] = w[i] / betas[j];
            }
        }
        let nx = norm(&x);
        x.into_iter().map(|v| v / nx).collect()
    });
    LanczosResult {
        value,
        vector,
        iterations: k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 1-D Dirichlet Laplacian: tridiag(-1, 2, -1), eigenvalues 2 - 2cos(j pi / (n+1)).
    fn laplacian(v: &[f64], out: &mut [f64]) {
        let n = v.len();
        for i in 0..n {
            let l = if i > 0 { v[i - 1] } else { 0.0 };
            let r = if i + 1 < n { v[i + 1] } else { 0.0 };
            out[i] = 2.0 * v[i] - l - r;
        }
    }

    #[test]
    fn lanczos_finds_dirichlet_ground_state() {
        let n = 400;
        let exact = 2.0 - 2.0 * libm::cos(core::f64::consts::PI / (n as f64 + 1.0));
        let r = lanczos_lowest(laplacian, &vec![1.0; n], 1e-14, 2000, true);
        assert!((r.value - exact).abs() < 1e-11, "{} vs {}", r.value, exact);
        let v = r.vector.unwrap();
        let mut av = vec![0.0; n];
        laplacian(&v, &mut av);
        let resid: f64 = av
            .iter()
            .zip(&v)
            .map(|(a, x)| (a - exact * x).abs())
            .fold(0.0, f64::max);
        assert!(resid < 1e-6, "{resid}");
    }

    #[test]
    fn cg_solves_laplacian() {
        let n = 50;
        let rhs = vec![1.0; n];
        let x = conjugate_gradient(laplacian, &rhs, 1e-13, 1000).unwrap();
        // exact: x_i = (i+1)(n-i)/2
        for (i, xi) in x.iter().enumerate() {
            let e = ((i + 1) * (n - i)) as f64 / 2.0;
            assert!((xi - e).abs() < 1e-9 * e);
        }
    }

    #[test]
    fn tridiagonal_bisection_matches_closed_form() {
        let a = vec![2.0; 6];
        let b = vec![-1.0; 5];
        let exact = 2.0 - 2.0 * libm::cos(core::f64::consts::PI / 7.0);
        assert!((tridiagonal_lowest(&a, &b) - exact).abs() < 1e-14);
    }
}
