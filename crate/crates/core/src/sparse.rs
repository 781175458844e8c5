//! Compressed sparse row storage and the handful of kernels the solvers need.

use std::collections::VecDeque;

use faer::sparse::{SparseColMat, Triplet};

/// Square CSR matrix. Column indices are strictly increasing within a row and
/// no explicit zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// Row-wise accumulator. Duplicate entries are summed in insertion order.
#[derive(Debug, Clone)]
pub struct SparseBuilder {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            rows: vec![Vec::new(); dim],
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(col < self.rows.len());
        self.rows[row].push((col, value));
    }

    pub fn build(self) -> SparseMatrix {
        let dim = self.rows.len();
        let mut row_offsets = Vec::with_capacity(dim + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for mut row in self.rows {
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == col {
                    sum += row[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    col_indices.push(col);
                    values.push(sum);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix {
            dim,
            row_offsets,
            col_indices,
            values,
        }
    }
}

impl SparseMatrix {
    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut b = SparseBuilder::new(diag.len());
        for (k, &d) in diag.iter().enumerate() {
            b.add(k, k, d);
        }
        b.build()
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let mut b = SparseBuilder::new(rows.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), rows.len(), "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                b.add(i, j, v);
            }
        }
        b.build()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |p| vals[p])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.mul_vec(x, &mut y);
        y
    }

    /// `x . (A x)`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let ax = self.apply(x);
        x.iter().zip(&ax).map(|(a, b)| a * b).sum()
    }

    /// Returns `A + shift * diag(weights)`.
    pub fn shifted(&self, shift: f64, weights: &[f64]) -> SparseMatrix {
        assert_eq!(weights.len(), self.dim);
        let mut b = SparseBuilder::new(self.dim);
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                b.add(i, j, v);
            }
            b.add(i, i, shift * weights[i]);
        }
        b.build()
    }

    pub fn scaled(&self, factor: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out.drop_zeros();
        out
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut b = SparseBuilder::new(self.dim);
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                b.add(i, j, v);
            }
        }
        *self = b.build();
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = SparseBuilder::new(self.dim);
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                b.add(j, i, v);
            }
        }
        b.build()
    }

    /// `max |A - A^T|` over all entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| self.row(i).0.iter().all(|&j| j == i))
    }

    /// True when every off-diagonal entry is non-positive.
    pub fn is_z_matrix(&self) -> bool {
        (0..self.dim).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| j == i || v <= 0.0)
        })
    }

    /// Gershgorin lower bound of `diag(weights)^-1 A`:
    /// `min_k (A_kk - sum_{j != k} |A_kj|) / w_k`.
    pub fn gershgorin_floor(&self, weights: Option<&[f64]>) -> f64 {
        (0..self.dim)
            .map(|i| {
                let (cols, vals) = self.row(i);
                let mut diag = 0.0;
                let mut off = 0.0;
                for (&j, &v) in cols.iter().zip(vals) {
                    if j == i {
                        diag = v;
                    } else {
                        off += v.abs();
                    }
                }
                let w = weights.map_or(1.0, |w| w[i]);
                (diag - off) / w
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Strong connectivity of the directed adjacency graph.
    pub fn is_irreducible(&self) -> bool {
        if self.dim <= 1 {
            return true;
        }
        reaches_all(self) && reaches_all(&self.transpose())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.dim]; self.dim];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        out
    }

    pub fn to_faer_dense(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::<f64>::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                triplets.push(Triplet::new(i, j, v));
            }
        }
        SparseColMat::try_new_from_triplets(self.dim, self.dim, &triplets)
            .expect("CSR entries are unique and in range")
    }
}

fn reaches_all(m: &SparseMatrix) -> bool {
    let mut seen = vec![false; m.dim];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in m.row(i).0 {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == m.dim
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_merges_sorts_and_drops_zeros() {
        let mut b = SparseBuilder::new(3);
        b.add(0, 2, 1.0);
        b.add(0, 0, 2.0);
        b.add(0, 2, -1.0);
        b.add(1, 1, 3.0);
        b.add(2, 0, 0.0);
        b.add(2, 1, -4.0);
        let m = b.build();
        assert_eq!(m.row(0), (&[0usize][..], &[2.0][..]));
        assert_eq!(m.row(2), (&[1usize][..], &[-4.0][..]));
        assert_eq!(m.nnz(), 3);
        for i in 0..3 {
            let cols = m.row(i).0;
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn irreducibility() {
        let path = SparseMatrix::from_dense(&[
            vec![2.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ]);
        assert!(path.is_irreducible());
        assert!(path.is_z_matrix());
        assert_eq!(path.gershgorin_floor(None), 0.0);
        let diag = SparseMatrix::from_diagonal(&[2.0, 3.0, 5.0]);
        assert!(!diag.is_irreducible());
        // one-way coupling is not strongly connected
        let oneway = SparseMatrix::from_dense(&[vec![1.0, -1.0], vec![0.0, 1.0]]);
        assert!(!oneway.is_irreducible());
    }

    #[test]
    fn shift_and_product() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let s = m.shifted(2.0, &[1.0, 0.5]);
        assert_eq!(s.to_dense(), vec![vec![3.0, 2.0], vec![3.0, 5.0]]);
        assert_eq!(m.apply(&[1.0, 1.0]), vec![3.0, 7.0]);
        assert_eq!(m.max_asymmetry(), 1.0);
        assert_eq!(m.transpose().get(0, 1), 3.0);
    }
}
