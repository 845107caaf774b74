use alloc::vec;
use alloc::vec::Vec;

/// Square compressed-sparse-row matrix. Column indices are sorted within each row and unique.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed; exact zeros are kept out.
    /// Indices must be `< n`.
    pub fn from_triplets<I>(n: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut rows: Vec<usize> = Vec::with_capacity(t.len());
        for (i, j, v) in t {
            debug_assert!(i < n && j < n);
            if let (Some(&li), Some(&lj)) = (rows.last(), cols.last()) {
                if li == i && lj == j {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(i);
            cols.push(j);
            vals.push(v);
        }
        let mut keep_rows = Vec::with_capacity(rows.len());
        let mut keep_cols = Vec::with_capacity(rows.len());
        let mut keep_vals = Vec::with_capacity(rows.len());
        for ((i, j), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != 0.0 {
                keep_rows.push(i);
                keep_cols.push(j);
                keep_vals.push(v);
            }
        }
        for &i in &keep_rows {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols: keep_cols,
            vals: keep_vals,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> core::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    #[inline]
    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    #[inline]
    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_range(i);
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    /// Entry lookup by binary search; missing entries are zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.vals[p])
    }

    /// Storage index of entry `(i, j)`, if present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.cols[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|p| r.start + p)
    }

    /// Row index of every stored entry, in storage order.
    pub fn row_indices(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            rows.extend(core::iter::repeat(i).take(self.row_range(i).len()));
        }
        rows
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            out.extend(self.row(i).map(|(j, v)| (i, j, v)));
        }
        out
    }

    /// Same sparsity pattern with values replaced by `f(row, col, value)`.
    pub fn map_entries(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut vals = self.vals.clone();
        for i in 0..self.n {
            for p in self.row_range(i) {
                vals[p] = f(i, self.cols[p], self.vals[p]);
            }
        }
        Self {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.n,
            self.triplets().into_iter().map(|(i, j, v)| (j, i, v)),
        )
    }

    /// Sums of each row, accumulated in storage order.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.vals[self.row_range(i)].iter().fold(0.0, |a, &v| a + v))
            .collect()
    }

    /// `out = self * v`.
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for p in self.row_range(i) {
                acc += self.vals[p] * v[self.cols[p]];
            }
            *o = acc;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_are_summed_sorted_and_pruned() {
        let a = CsrMatrix::from_triplets(
            3,
            [
                (2, 0, 1.0),
                (0, 2, 2.0),
                (0, 1, 1.0),
                (0, 2, 1.0),
                (1, 1, 0.0),
            ],
        );
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 2), 3.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.triplets(), vec![(0, 1, 1.0), (0, 2, 3.0), (2, 0, 1.0)]);
        assert_eq!(a.transpose().get(2, 0), 3.0);
        let mut out = [0.0; 3];
        a.mul_vec_into(&[1.0, 1.0, 1.0], &mut out);
        assert_eq!(out, [4.0, 0.0, 1.0]);
        assert_eq!(a.row_indices(), vec![0, 0, 2]);
    }
}
