//! BiCGSTAB with an ILU(0) preconditioner, for systems too large to factor.

use crate::sparse::{dot, SparseMatrix};

/// Incomplete LU factorization on the sparsity pattern of the matrix.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: SparseMatrix,
    diag_pos: Vec<usize>,
    values: Vec<f64>,
}

impl Ilu0 {
    pub fn new(a: &SparseMatrix) -> Option<Self> {
        let n = a.dim();
        let offsets = a.row_offsets();
        let cols = a.col_indices();
        let mut values = a.values().to_vec();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for p in offsets[i]..offsets[i + 1] {
                if cols[p] == i {
                    diag_pos[i] = p;
                }
            }
            if diag_pos[i] == usize::MAX {
                return None;
            }
        }
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            for p in offsets[i]..offsets[i + 1] {
                marker[cols[p]] = p;
            }
            for p in offsets[i]..offsets[i + 1] {
                let k = cols[p];
                if k >= i {
                    break;
                }
                let pivot = values[diag_pos[k]];
                if pivot == 0.0 {
                    return None;
                }
                let factor = values[p] / pivot;
                values[p] = factor;
                for q in diag_pos[k] + 1..offsets[k + 1] {
                    let m = marker[cols[q]];
                    if m != usize::MAX {
                        values[m] -= factor * values[q];
                    }
                }
            }
            for p in offsets[i]..offsets[i + 1] {
                marker[cols[p]] = usize::MAX;
            }
            if values[diag_pos[i]] == 0.0 {
                return None;
            }
        }
        Some(Self {
            lu: a.clone(),
            diag_pos,
            values,
        })
    }

    pub fn apply(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let offsets = self.lu.row_offsets();
        let cols = self.lu.col_indices();
        let v = &self.values;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for p in offsets[i]..self.diag_pos[i] {
                s -= v[p] * y[cols[p]];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in self.diag_pos[i] + 1..offsets[i + 1] {
                s -= v[p] * y[cols[p]];
            }
            y[i] = s / v[self.diag_pos[i]];
        }
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Right-preconditioned BiCGSTAB. Returns `None` on breakdown or when the
/// relative residual does not reach `tol` within `max_iter` steps.
pub fn bicgstab(
    a: &SparseMatrix,
    pre: &Ilu0,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Option<(Vec<f64>, KrylovStats)> {
    let n = rhs.len();
    let bnorm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Some((
            x,
            KrylovStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut r = rhs.to_vec();
    let r0 = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut s = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return None;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        let phat = pre.apply(&p);
        a.mul_vec(&phat, &mut v);
        let denom = dot(&r0, &v);
        if denom == 0.0 {
            return None;
        }
        alpha = rho / denom;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        let snorm = dot(&s, &s).sqrt();
        if snorm <= tol * bnorm {
            for k in 0..n {
                x[k] += alpha * phat[k];
            }
            return Some((
                x,
                KrylovStats {
                    iterations: it,
                    relative_residual: snorm / bnorm,
                },
            ));
        }
        let shat = pre.apply(&s);
        let t = a.apply(&shat);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return None;
        }
        omega = dot(&t, &s) / tt;
        for k in 0..n {
            x[k] += alpha * phat[k] + omega * shat[k];
            r[k] = s[k] - omega * t[k];
        }
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= tol * bnorm {
            return Some((
                x,
                KrylovStats {
                    iterations: it,
                    relative_residual: rnorm / bnorm,
                },
            ));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseBuilder;

    fn laplacian_2d(m: usize) -> SparseMatrix {
        let n = m * m;
        let mut b = SparseBuilder::new(n);
        for i in 0..m {
            for j in 0..m {
                let k = i * m + j;
                b.add(k, k, 4.2);
                if i > 0 {
                    b.add(k, k - m, -1.0);
                }
                if i + 1 < m {
                    b.add(k, k + m, -1.0);
                }
                if j > 0 {
                    b.add(k, k - 1, -1.3);
                }
                if j + 1 < m {
                    b.add(k, k + 1, -0.7);
                }
            }
        }
        b.build()
    }

    #[test]
    fn ilu0_is_exact_on_tridiagonal() {
        let a = SparseMatrix::from_dense(&[
            vec![2.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ]);
        let ilu = Ilu0::new(&a).unwrap();
        let x = ilu.apply(&[1.0, 0.0, 1.0]);
        for (v, e) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((v - e).abs() < 1e-14);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let a = laplacian_2d(20);
        let rhs: Vec<f64> = (0..a.dim()).map(|k| 1.0 + (k % 7) as f64).collect();
        let ilu = Ilu0::new(&a).unwrap();
        let (x, stats) = bicgstab(&a, &ilu, &rhs, 1e-12, 500).unwrap();
        assert!(stats.relative_residual <= 1e-12);
        let ax = a.apply(&x);
        let err = ax.iter().zip(&rhs).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(err < 1e-9, "{err}");
    }
}
