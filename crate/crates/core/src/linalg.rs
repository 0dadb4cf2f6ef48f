//! Small dense linear algebra kernels: row-major matrices, LU with partial
//! pivoting, and a block-tridiagonal LU used for inverse iteration on the
//! interface system.

use crate::error::{check_len, Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Normalizes in place and returns the original norm.
pub fn normalize(x: &mut [f64]) -> f64 {
    let nrm = norm2(x);
    if nrm > 0.0 {
        scale(1.0 / nrm, x);
    }
    nrm
}

/// Flips the sign of `x` so that its largest-magnitude entry is positive.
pub fn fix_sign(x: &mut [f64]) {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for &v in x.iter() {
        if v.abs() > best {
            best = v.abs();
            sign = v.signum();
        }
    }
    if sign < 0.0 {
        scale(-1.0, x);
    }
}

/// Angle in radians between the lines spanned by `a` and `b`.
pub fn line_angle(a: &[f64], b: &[f64]) -> f64 {
    let c = dot(a, b).abs() / (norm2(a) * norm2(b));
    // acos is badly conditioned near 1; use the sine instead.
    let s = (1.0 - c.min(1.0) * c.min(1.0)).max(0.0).sqrt();
    let mut diff = vec![0.0; a.len()];
    let (na, nb) = (norm2(a), norm2(b));
    let sgn = if dot(a, b) < 0.0 { -1.0 } else { 1.0 };
    for i in 0..a.len() {
        diff[i] = a[i] / na - sgn * b[i] / nb;
    }
    // chord length d = 2 sin(theta/2)
    let chord = norm2(&diff);
    let theta = 2.0 * (0.5 * chord).min(1.0).asin();
    if theta < 1e-4 {
        theta
    } else {
        s.asin()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[f64]) {
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    /// `y = self * x`
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y += self * x`
    pub fn matvec_add(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += dot(self.row(i), x);
        }
    }

    /// `y = selfᵀ * x`
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut y);
            }
        }
        y
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), orow);
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_diagonal(&mut self, alpha: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += alpha;
        }
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting, `P A = L U`, stored in place.
#[derive(Clone, Debug)]
pub struct LuFactor {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactor {
    pub fn new(mut a: DenseMatrix) -> Result<Self> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= scale * f64::EPSILON * 1e-3 || !best.is_finite() {
                return Err(Error::Singular {
                    context: format!("LU of {n}x{n} matrix"),
                    row: k,
                });
            }
            if p != k {
                perm.swap(p, k);
                let (lo, hi) = a.data.split_at_mut(p * n);
                lo[k * n..(k + 1) * n].swap_with_slice(&mut hi[..n]);
            }
            let pivot = a[(k, k)];
            let (top, bottom) = a.data.split_at_mut((k + 1) * n);
            let prow = &top[k * n + k + 1..(k + 1) * n];
            for row in bottom.chunks_exact_mut(n) {
                let l = row[k] / pivot;
                row[k] = l;
                if l != 0.0 {
                    for (x, &u) in row[k + 1..].iter_mut().zip(prow) {
                        *x -= l * u;
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &y[..i]);
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &y[i + 1..]);
            y[i] = (y[i] - s) / row[i];
        }
        b.copy_from_slice(&y);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = b, Lᵀ z = w, x = Pᵀ z.
        let mut w = b.to_vec();
        for i in 0..n {
            w[i] /= self.lu[(i, i)];
            let wi = w[i];
            if wi != 0.0 {
                let row = self.lu.row(i);
                for (wj, &u) in w[i + 1..].iter_mut().zip(&row[i + 1..]) {
                    *wj -= u * wi;
                }
            }
        }
        for i in (0..n).rev() {
            let wi = w[i];
            if wi != 0.0 {
                let row = self.lu.row(i);
                for (wj, &l) in w[..i].iter_mut().zip(&row[..i]) {
                    *wj -= l * wi;
                }
            }
        }
        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = w[i];
        }
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_transpose_in_place(&mut x);
        x
    }

    /// Solves `A X = B` for a dense right-hand-side matrix.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> DenseMatrix {
        let n = self.dim();
        assert_eq!(b.rows, n);
        let m = b.cols;
        // Row-oriented substitution keeps the inner loops contiguous.
        let mut x = DenseMatrix::zeros(n, m);
        for i in 0..n {
            x.row_mut(i).copy_from_slice(b.row(self.perm[i]));
        }
        for i in 0..n {
            let (done, rest) = x.data.split_at_mut(i * m);
            let xi = &mut rest[..m];
            for (j, &l) in self.lu.row(i)[..i].iter().enumerate() {
                if l != 0.0 {
                    axpy(-l, &done[j * m..(j + 1) * m], xi);
                }
            }
        }
        for i in (0..n).rev() {
            let (head, tail) = x.data.split_at_mut((i + 1) * m);
            let xi = &mut head[i * m..];
            let row = self.lu.row(i);
            for (jj, &u) in row[i + 1..].iter().enumerate() {
                if u != 0.0 {
                    axpy(-u, &tail[jj * m..(jj + 1) * m], xi);
                }
            }
            scale(1.0 / row[i], xi);
        }
        x
    }
}

/// Square block-tridiagonal matrix with uniform block size (the last diagonal
/// block may be smaller).
#[derive(Clone, Debug)]
pub struct BlockTridiagonal {
    pub diag: Vec<DenseMatrix>,
    /// `lower[p]` couples block row `p + 1` to block column `p`.
    pub lower: Vec<DenseMatrix>,
    /// `upper[p]` couples block row `p` to block column `p + 1`.
    pub upper: Vec<DenseMatrix>,
}

/// Block LU of a [`BlockTridiagonal`] matrix without inter-block pivoting.
#[derive(Clone, Debug)]
pub struct BlockTridiagonalLu {
    pivots: Vec<LuFactor>,
    /// `mult[p] = lower[p] * pivot[p]^{-1}`
    mult: Vec<DenseMatrix>,
    upper: Vec<DenseMatrix>,
    offsets: Vec<usize>,
}

impl BlockTridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.iter().map(|d| d.rows).sum()
    }

    pub fn factor(&self) -> Result<BlockTridiagonalLu> {
        let nb = self.diag.len();
        let mut pivots: Vec<LuFactor> = Vec::with_capacity(nb);
        let mut mult = Vec::with_capacity(nb.saturating_sub(1));
        let mut offsets = Vec::with_capacity(nb + 1);
        offsets.push(0);
        for p in 0..nb {
            let mut d = self.diag[p].clone();
            if p > 0 {
                // m = L_{p-1} D'_{p-1}^{-1}  =>  mᵀ = D'^{-T} L^ᵀ
                let prev = &pivots[p - 1];
                let lt = self.lower[p - 1].transpose();
                let mut mt = DenseMatrix::zeros(lt.rows, lt.cols);
                for j in 0..lt.cols {
                    let col = prev.solve_transpose(&lt.column(j));
                    mt.set_column(j, &col);
                }
                let m = mt.transpose();
                let corr = m.matmul(&self.upper[p - 1]);
                for (a, c) in d.data.iter_mut().zip(&corr.data) {
                    *a -= c;
                }
                mult.push(m);
            }
            let lu = LuFactor::new(d).map_err(|e| match e {
                Error::Singular { row, .. } => Error::Singular {
                    context: format!("block-tridiagonal pivot block {p}"),
                    row,
                },
                other => other,
            })?;
            offsets.push(offsets[p] + lu.dim());
            pivots.push(lu);
        }
        Ok(BlockTridiagonalLu {
            pivots,
            mult,
            upper: self.upper.clone(),
            offsets,
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut off = vec![0];
        for d in &self.diag {
            off.push(off.last().unwrap() + d.rows);
        }
        let mut y = vec![0.0; self.dim()];
        for p in 0..self.diag.len() {
            let (lo, hi) = (off[p], off[p + 1]);
            self.diag[p].matvec_add(&x[lo..hi], &mut y[lo..hi]);
            if p > 0 {
                self.lower[p - 1].matvec_add(&x[off[p - 1]..lo], &mut y[lo..hi]);
            }
            if p + 1 < self.diag.len() {
                self.upper[p].matvec_add(&x[hi..off[p + 2]], &mut y[lo..hi]);
            }
        }
        y
    }
}

impl BlockTridiagonalLu {
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("block-tridiagonal solve", self.dim(), b.len())?;
        let nb = self.pivots.len();
        let off = &self.offsets;
        let mut y = b.to_vec();
        for p in 1..nb {
            let (head, tail) = y.split_at_mut(off[p]);
            let prev = &head[off[p - 1]..];
            self.mult[p - 1].matvec_add(
                &prev.iter().map(|v| -v).collect::<Vec<_>>(),
                &mut tail[..off[p + 1] - off[p]],
            );
        }
        for p in (0..nb).rev() {
            let (head, tail) = y.split_at_mut(off[p + 1]);
            let cur = &mut head[off[p]..];
            if p + 1 < nb {
                let next = &tail[..off[p + 2] - off[p + 1]];
                let corr = self.upper[p].matvec(next);
                for (c, v) in cur.iter_mut().zip(corr) {
                    *c -= v;
                }
            }
            self.pivots[p].solve_in_place(cur);
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn lu_solves_and_transposed_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(40, 40, &mut rng);
        let lu = LuFactor::new(a.clone()).unwrap();
        let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.matvec(&x);
        let got = lu.solve(&b);
        let bt = a.matvec_transpose(&x);
        let got_t = lu.solve_transpose(&bt);
        for i in 0..40 {
            assert!((got[i] - x[i]).abs() < 1e-10);
            assert!((got_t[i] - x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn lu_matrix_solve_matches_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(25, 25, &mut rng);
        let b = random_matrix(25, 6, &mut rng);
        let lu = LuFactor::new(a).unwrap();
        let x = lu.solve_matrix(&b);
        for j in 0..6 {
            let col = lu.solve(&b.column(j));
            for i in 0..25 {
                assert!((x[(i, j)] - col[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(LuFactor::new(a), Err(Error::Singular { .. })));
    }

    #[test]
    fn block_tridiagonal_solve_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sizes = [4, 4, 4, 3];
        let diag: Vec<_> = sizes
            .iter()
            .map(|&s| {
                let mut d = random_matrix(s, s, &mut rng);
                d.add_diagonal(4.0);
                d
            })
            .collect();
        let lower: Vec<_> = (0..3)
            .map(|p| random_matrix(sizes[p + 1], sizes[p], &mut rng))
            .collect();
        let upper: Vec<_> = (0..3)
            .map(|p| random_matrix(sizes[p], sizes[p + 1], &mut rng))
            .collect();
        let bt = BlockTridiagonal { diag, lower, upper };
        let x: Vec<f64> = (0..bt.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = bt.matvec(&x);
        let got = bt.factor().unwrap().solve(&b).unwrap();
        for i in 0..x.len() {
            assert!((got[i] - x[i]).abs() < 1e-10, "{i}: {} vs {}", got[i], x[i]);
        }
    }

    #[test]
    fn line_angle_is_sign_blind() {
        let a = [1.0, 2.0, 3.0];
        let b = [-2.0, -4.0, -6.0];
        assert!(line_angle(&a, &b) < 1e-15);
        let c = [1.0, 0.0, 0.0];
        let d = [0.0, 1.0, 0.0];
        assert!((line_angle(&c, &d) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
