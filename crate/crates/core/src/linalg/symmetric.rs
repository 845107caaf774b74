use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::CsrMatrix;

/// A matrix `A` that is self-adjoint in `L^2(m)`: `m[x] A[x][y] = m[y] A[y][x]`, with a
/// nonnegative off-diagonal part. Generators, Feynman-Kac generators and their
/// subprocess shifts all live in this shape.
#[derive(Clone, Debug, PartialEq)]
pub struct SymOperator {
    mass: Vec<f64>,
    off: CsrMatrix,
    diag: Vec<f64>,
}

impl SymOperator {
    pub fn new(mass: Vec<f64>, off: CsrMatrix, diag: Vec<f64>) -> Self {
        debug_assert_eq!(mass.len(), off.n());
        debug_assert_eq!(diag.len(), off.n());
        Self { mass, off, diag }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    #[inline]
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    #[inline]
    pub fn off(&self) -> &CsrMatrix {
        &self.off
    }

    #[inline]
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `A + s I`.
    pub fn shifted(&self, s: f64) -> Self {
        Self {
            mass: self.mass.clone(),
            off: self.off.clone(),
            diag: self.diag.iter().map(|d| d + s).collect(),
        }
    }

    /// `out = A v`; the off-diagonal row is accumulated first, then the diagonal term.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        self.off.mul_vec_into(v, out);
        for ((o, d), x) in out.iter_mut().zip(&self.diag).zip(v) {
            *o += d * x;
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.apply_into(v, &mut out);
        out
    }

    /// `out = S v` with `S = D^{1/2} (-A) D^{-1/2}`, the symmetric form of `-A`.
    pub fn neg_symmetrized_apply(&self, sqrt_m: &[f64], v: &[f64], out: &mut [f64]) {
        for i in 0..self.n() {
            let mut acc = 0.0;
            for p in self.off.row_range(i) {
                let j = self.off.cols()[p];
                acc += self.off.vals()[p] * v[j] / sqrt_m[j];
            }
            out[i] = -(acc * sqrt_m[i]) - self.diag[i] * v[i];
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = self.diag[i];
            for (j, v) in self.off.row(i) {
                a[(i, j)] = v;
            }
        }
        a
    }

    /// The `m`-adjoint `D^{-1} A^T D`, assembled from the transpose. Equal to `A` in exact
    /// arithmetic; used as the independent route for `L^1(m)` norms.
    pub fn m_adjoint(&self) -> Self {
        let t = self.off.transpose();
        let off = t.map_entries(|i, j, v| v * self.mass[j] / self.mass[i]);
        Self {
            mass: self.mass.clone(),
            off,
            diag: self.diag.clone(),
        }
    }

    /// Dense `S = D^{1/2} (-A) D^{-1/2}`, symmetrized by averaging with its transpose.
    pub fn neg_symmetrized_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let sqrt_m: Vec<f64> = self.mass.iter().map(|&m| libm::sqrt(m)).collect();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = -self.diag[i];
            for (j, v) in self.off.row(i) {
                s[(i, j)] = -v * sqrt_m[i] / sqrt_m[j];
            }
        }
        let st = s.transpose();
        (s + st) * 0.5
    }

    pub fn max_abs(&self) -> f64 {
        self.diag
            .iter()
            .fold(self.off.max_abs(), |a, d| a.max(d.abs()))
    }

    /// Full eigendecomposition of the symmetrized `-A`.
    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of_symmetric(self.neg_symmetrized_dense(), &self.mass)
    }
}

/// Eigendecomposition `-A = D^{-1/2} V diag(values) V^T D^{1/2}` with `values` ascending.
#[derive(Clone, Debug)]
pub struct Spectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    sqrt_m: Vec<f64>,
}

impl Spectrum {
    /// `sym` must already be the symmetric matrix `D^{1/2}(-A)D^{-1/2}`.
    pub fn of_symmetric(sym: DMatrix<f64>, mass: &[f64]) -> Self {
        let n = sym.nrows();
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (c, &i) in order.iter().enumerate() {
            let col = eig.eigenvectors.column(i);
            let sign = if col.sum() < 0.0 { -1.0 } else { 1.0 };
            vectors.set_column(c, &(col * sign));
        }
        Self {
            values,
            vectors,
            sqrt_m: mass.iter().map(|&m| libm::sqrt(m)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Eigenvalues of `-A`, ascending.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Smallest eigenvalue of `-A`.
    pub fn lowest(&self) -> f64 {
        self.values[0]
    }

    /// Orthonormal eigenvectors of the symmetrized matrix, as columns.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Right Perron vector of `A`: `D^{-1/2}` times the ground state, taken entrywise positive.
    pub fn perron_vector(&self) -> Vec<f64> {
        self.vectors
            .column(0)
            .iter()
            .zip(&self.sqrt_m)
            .map(|(v, s)| v.abs() / s)
            .collect()
    }

    /// Applies `D^{-1/2} V diag(w(values)) V^T D^{1/2}` to `f`.
    pub fn apply_fn(&self, f: &[f64], w: impl Fn(f64) -> f64) -> Vec<f64> {
        let u = DVector::from_iterator(self.n(), f.iter().zip(&self.sqrt_m).map(|(a, s)| a * s));
        let mut c = self.vectors.tr_mul(&u);
        for (ci, &l) in c.iter_mut().zip(&self.values) {
            *ci *= w(l);
        }
        let r = &self.vectors * c;
        r.iter().zip(&self.sqrt_m).map(|(a, s)| a / s).collect()
    }

    /// `e^{tA} f`.
    pub fn exp_apply(&self, t: f64, f: &[f64]) -> Vec<f64> {
        self.apply_fn(f, |l| libm::exp(-t * l))
    }

    /// `e^{tA} f = e^{scale} v`, with the dominant decay factored out so large `t` cannot underflow.
    pub fn exp_apply_scaled(&self, t: f64, f: &[f64]) -> (f64, Vec<f64>) {
        let l0 = self.lowest();
        (-t * l0, self.apply_fn(f, |l| libm::exp(-t * (l - l0))))
    }

    /// `\int_0^t e^{sA} f ds`, integrated exactly on the spectrum.
    pub fn exp_integral_apply(&self, t: f64, f: &[f64]) -> Vec<f64> {
        self.apply_fn(f, |l| {
            if l == 0.0 {
                t
            } else {
                -libm::expm1(-t * l) / l
            }
        })
    }

    /// `(alpha I - A)^{-1} f`.
    pub fn resolvent_apply(&self, alpha: f64, f: &[f64]) -> Vec<f64> {
        self.apply_fn(f, |l| 1.0 / (alpha + l))
    }

    /// Dense `w(A)`-type matrix `D^{-1/2} V diag(w) V^T D^{1/2}`.
    pub fn matrix_fn(&self, w: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.n();
        let mut scaled = self.vectors.clone();
        for (c, &l) in self.values.iter().enumerate() {
            let wl = w(l);
            scaled.column_mut(c).scale_mut(wl);
        }
        let mut out = scaled * self.vectors.transpose();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] *= self.sqrt_m[j] / self.sqrt_m[i];
            }
        }
        out
    }

    /// Dense `e^{tA}`.
    pub fn exp_matrix(&self, t: f64) -> DMatrix<f64> {
        self.matrix_fn(|l| libm::exp(-t * l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> SymOperator {
        // Q = [[-2, 1], [1, -2]]
        SymOperator::new(
            vec![1.0, 1.0],
            CsrMatrix::from_triplets(2, [(0, 1, 1.0), (1, 0, 1.0)]),
            vec![-2.0, -2.0],
        )
    }

    #[test]
    fn two_state_spectrum_and_functions() {
        let s = two_state().spectrum();
        assert!((s.values()[0] - 1.0).abs() < 1e-14);
        assert!((s.values()[1] - 3.0).abs() < 1e-14);
        let v = s.exp_apply(1.0, &[1.0, 1.0]);
        let e = libm::exp(-1.0);
        assert!((v[0] - e).abs() < 1e-14 && (v[1] - e).abs() < 1e-14);
        let g = s.resolvent_apply(0.0, &[1.0, 0.0]);
        assert!((g[0] - 2.0 / 3.0).abs() < 1e-14 && (g[1] - 1.0 / 3.0).abs() < 1e-14);
        let p = s.perron_vector();
        assert!((p[0] - p[1]).abs() < 1e-14);
    }

    #[test]
    fn nonuniform_mass_symmetrization() {
        // m = (1, 2): m0 q01 = m1 q10 with q01 = 2, q10 = 1.
        let op = SymOperator::new(
            vec![1.0, 2.0],
            CsrMatrix::from_triplets(2, [(0, 1, 2.0), (1, 0, 1.0)]),
            vec![-2.0, -1.5],
        );
        let s = op.neg_symmetrized_dense();
        assert!((s[(0, 1)] - s[(1, 0)]).abs() < 1e-15);
        let spec = op.spectrum();
        let e = spec.exp_matrix(0.7);
        // Independent route: Taylor series of e^{0.7 A / 2^10}, squared ten times.
        let a = op.to_dense() * (0.7 / 1024.0);
        let mut direct = DMatrix::identity(2, 2);
        let mut term = DMatrix::identity(2, 2);
        for k in 1..20 {
            term = &term * &a / k as f64;
            direct += &term;
        }
        for _ in 0..10 {
            direct = &direct * &direct;
        }
        assert!((e - direct).amax() < 1e-12);
        let adj = op.m_adjoint();
        assert!((adj.to_dense() - op.to_dense()).amax() < 1e-15);
    }
}
