//! Compressed sparse row matrices and the handful of kernels the multigrid
//! setup needs: matvec, transpose, sparse product, Galerkin triple product,
//! plus a dense Cholesky factorization for the coarsest level.

use std::io::Write;

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> CsrMatrix {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: vec![],
            values: vec![],
        }
    }

    /// Build from (row, col, value) triplets; duplicates are summed, explicit
    /// zeros are kept. Column indices within each row come out sorted.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<CsrMatrix> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![vec![]; nrows];
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Dimension {
                    what: "triplet index",
                    expected: nrows.max(ncols),
                    got: r.max(c),
                });
            }
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = vec![];
        let mut values = vec![];
        indptr.push(0);
        for row in &mut rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut v = 0.0;
                while i < row.len() && row[i].0 == c {
                    v += row[i].1;
                    i += 1;
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Identity, handy for degenerate one-level hierarchies.
    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
        y
    }

    /// y += alpha * A x
    pub fn matvec_add(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] += alpha * acc;
        }
    }

    /// y = A^T x without materializing the transpose.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * x[r];
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols];
        for &c in &self.indices {
            counts[c] += 1;
        }
        let mut indptr = vec![0usize; self.ncols + 1];
        for c in 0..self.ncols {
            indptr[c + 1] = indptr[c] + counts[c];
        }
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = indptr.clone();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let slot = next[*c];
                indices[slot] = r;
                values[slot] = *v;
                next[*c] += 1;
            }
        }
        // Rows of the transpose are filled in increasing original-row order,
        // so columns are already sorted.
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }

    /// Sparse matrix product self * other.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.ncols != other.nrows {
            return Err(Error::Dimension {
                what: "matmul inner dimension",
                expected: self.ncols,
                got: other.nrows,
            });
        }
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = vec![];
        let mut values = vec![];
        indptr.push(0);
        // Dense accumulator with a touched-column list per row.
        let mut acc = vec![0.0; other.ncols];
        let mut touched: Vec<usize> = vec![];
        for r in 0..self.nrows {
            for (c, v) in {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals)
            } {
                let (ocols, ovals) = other.row(*c);
                for (oc, ov) in ocols.iter().zip(ovals) {
                    if acc[*oc] == 0.0 && !touched.contains(oc) {
                        touched.push(*oc);
                    }
                    acc[*oc] += v * ov;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                indices.push(c);
                values.push(acc[c]);
                acc[c] = 0.0;
            }
            touched.clear();
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Galerkin triple product P^T A P.
    pub fn galerkin(a: &CsrMatrix, p: &CsrMatrix) -> Result<CsrMatrix> {
        p.transpose().matmul(&a.matmul(p)?)
    }

    /// Largest |A - A^T| entry.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - t.get(r, *c)).abs());
            }
        }
        worst
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// Frobenius norm, used by tests to compare assembly routes.
    pub fn frobenius_diff(&self, other: &CsrMatrix) -> f64 {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        let mut acc = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let d = v - other.get(r, *c);
                acc += d * d;
            }
            let (ocols, ovals) = other.row(r);
            for (c, v) in ocols.iter().zip(ovals) {
                if self.get(r, *c) == 0.0 && !cols.contains(c) {
                    acc += v * v;
                }
            }
        }
        acc.sqrt()
    }

    /// Write in Matrix Market coordinate format (general, 1-based).
    pub fn write_matrix_market(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.16e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense Cholesky factorization of an SPD matrix, used for the exact solve on
/// the coarsest multigrid level.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    /// Lower triangle of the factor, row-major.
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn new(a: &CsrMatrix) -> Result<DenseCholesky> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension {
                what: "cholesky matrix",
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        let n = a.nrows();
        let mut m = vec![0.0; n * n];
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (c, v) in cols.iter().zip(vals) {
                m[r * n + c] = *v;
            }
        }
        for j in 0..n {
            let mut d = m[j * n + j];
            for k in 0..j {
                d -= m[j * n + k] * m[j * n + k];
            }
            if d <= 0.0 {
                return Err(Error::Setup(format!(
                    "matrix not positive definite at pivot {j} (d = {d:.3e})"
                )));
            }
            let d = d.sqrt();
            m[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = m[i * n + j];
                for k in 0..j {
                    s -= m[i * n + k] * m[j * n + k];
                }
                m[i * n + j] = s / d;
            }
        }
        Ok(DenseCholesky { n, l: m })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_csr(rng: &mut ChaCha8Rng, nrows: usize, ncols: usize, fill: f64) -> CsrMatrix {
        let mut trips = vec![];
        for r in 0..nrows {
            for c in 0..ncols {
                if rng.gen::<f64>() < fill {
                    trips.push((r, c, rng.gen::<f64>() - 0.5));
                }
            }
        }
        CsrMatrix::from_triplets(nrows, ncols, &trips).unwrap()
    }

    fn dense(m: &CsrMatrix) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|c| m.get(r, c)).collect())
            .collect()
    }

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, -1.0)])
            .unwrap();
        assert_eq!(m.row(0).0, &[0, 2]);
        assert_relative_eq!(m.get(0, 2), 1.5);
        assert_relative_eq!(m.get(1, 1), -1.0);
        assert_eq!(m.nnz(), 3);
    }

    #[test]
    fn matvec_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_csr(&mut rng, 17, 13, 0.3);
        let x: Vec<f64> = (0..13).map(|_| rng.gen::<f64>()).collect();
        let y = m.matvec(&x);
        let d = dense(&m);
        for r in 0..17 {
            let exact: f64 = (0..13).map(|c| d[r][c] * x[c]).sum();
            assert_relative_eq!(y[r], exact, epsilon = 1e-13);
        }
        let xt: Vec<f64> = (0..17).map(|_| rng.gen::<f64>()).collect();
        let yt = m.matvec_transpose(&xt);
        for c in 0..13 {
            let exact: f64 = (0..17).map(|r| d[r][c] * xt[r]).sum();
            assert_relative_eq!(yt[c], exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn transpose_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_csr(&mut rng, 11, 19, 0.25);
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn matmul_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_csr(&mut rng, 9, 12, 0.4);
        let b = random_csr(&mut rng, 12, 7, 0.4);
        let c = a.matmul(&b).unwrap();
        let (da, db) = (dense(&a), dense(&b));
        for r in 0..9 {
            for cc in 0..7 {
                let exact: f64 = (0..12).map(|k| da[r][k] * db[k][cc]).sum();
                assert_relative_eq!(c.get(r, cc), exact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn galerkin_triple_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_csr(&mut rng, 10, 10, 0.5);
        let p = random_csr(&mut rng, 10, 4, 0.5);
        let g = CsrMatrix::galerkin(&a, &p).unwrap();
        let (da, dp) = (dense(&a), dense(&p));
        for r in 0..4 {
            for c in 0..4 {
                let mut exact = 0.0;
                for i in 0..10 {
                    for j in 0..10 {
                        exact += dp[i][r] * da[i][j] * dp[j][c];
                    }
                }
                assert_relative_eq!(g.get(r, c), exact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_csr(&mut rng, 8, 8, 0.6);
        // A = B B^T + 8 I is SPD.
        let mut trips = vec![];
        let bd = dense(&b);
        for i in 0..8 {
            for j in 0..8 {
                let mut v: f64 = (0..8).map(|k| bd[i][k] * bd[j][k]).sum();
                if i == j {
                    v += 8.0;
                }
                trips.push((i, j, v));
            }
        }
        let a = CsrMatrix::from_triplets(8, 8, &trips).unwrap();
        let chol = DenseCholesky::new(&a).unwrap();
        let x_true: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
        let rhs = a.matvec(&x_true);
        let x = chol.solve(&rhs);
        for i in 0..8 {
            assert_relative_eq!(x[i], x_true[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        assert!(DenseCholesky::new(&a).is_err());
    }

    #[test]
    fn matrix_market_output() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, -2.5)]).unwrap();
        let mut buf = vec![];
        m.write_matrix_market(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("%%MatrixMarket matrix coordinate real general\n"));
        assert!(s.contains("2 2 2"));
        assert!(s.contains("2 1 -2.5"));
    }
}
