//! Compressed sparse row storage for the assembled symmetric forms.

use faer::sparse::{SparseColMat, Triplet};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the sparsity pattern given by sorted, deduplicated
    /// column lists per row.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows {
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n: rows.len(),
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, i: usize, j: usize) -> usize {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        lo + self.col_idx[lo..hi]
            .binary_search(&j)
            .expect("entry outside sparsity pattern")
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self.position(i, j);
        self.values[p] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// `y = A x`
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    /// `xᵀ A y`
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, xi) in x.iter().enumerate() {
            let mut r = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                r += self.values[k] * y[self.col_idx[k]];
            }
            s += xi * r;
        }
        s
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `a A + b B` for two matrices on the same pattern.
    pub fn combine(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!(self.col_idx, other.col_idx, "patterns differ");
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v = a * *v + b * w;
        }
        out
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &triplets).expect("valid triplets")
    }

    pub fn to_dense(&self) -> faer::Mat<f64> {
        faer::Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        let mut a = CsrMatrix::from_pattern(&[vec![0, 1], vec![0, 1, 2], vec![1, 2]]);
        a.add(0, 0, 2.0);
        a.add(0, 1, -1.0);
        a.add(1, 0, -1.0);
        a.add(1, 1, 2.0);
        a.add(1, 2, -1.0);
        a.add(2, 1, -1.0);
        a.add(2, 2, 2.0);
        a
    }

    #[test]
    fn products() {
        let a = sample();
        assert_eq!(a.mul(&[1.0, 1.0, 1.0]), vec![1.0, 0.0, 1.0]);
        assert_eq!(a.form(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), -1.0);
        assert_eq!(a.trace(), 6.0);
        assert_eq!(a.total(), 2.0);
        assert_eq!(a.norm_inf(), 4.0);
        assert_eq!(a.get(0, 2), 0.0);
        let d = a.to_dense();
        assert_eq!(d[(1, 2)], -1.0);
        assert_eq!(a.combine(2.0, &a, -1.0), a);
    }
}
