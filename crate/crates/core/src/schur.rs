//! The interface system `S = I + B A⁻¹ E`, its right-hand side, the
//! block-Jacobi preconditioner and the back-substitution for the full field.
//!
//! Strip `s` only sees interface values it owns (`O_s`: the west edge if
//! `s > 0`, the east edge if `s < m_x - 1`) and only feeds the flux rows
//! that read it (`R_s`: the left side of `Γ_{s-1}` and the right side of
//! `Γ_s`). The whole nonidentity part is therefore described by the small
//! responses `W_s = B_{R_s} A_s⁻¹ E_{O_s}`, which are shared between strips
//! with identical blocks.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::krylov::LinearOperator;
use crate::linalg::{BlockTridiagonal, DenseMatrix, LuFactor};
use crate::operator::{LocalSolve, SmpmOperator};

#[derive(Clone, Debug)]
pub struct SchurSystem {
    pub n: usize,
    pub mx: usize,
    pub mz: usize,
    /// Nodes per interface side.
    pub side_len: usize,
    k: usize,
    /// Responses, `2h × 2h`; rows `[Γ_{s-1}.left, Γ_s.right]`, columns
    /// `[Γ_{s-1}.right, Γ_s.left]`. Missing sides are zero.
    responses: Vec<Arc<DenseMatrix>>,
    response_of: Vec<usize>,
}

impl SchurSystem {
    /// Assembles the responses by solving with unit vectors on owned
    /// interface nodes, once per distinct strip.
    pub fn assemble(op: &SmpmOperator, solver: &dyn LocalSolve) -> Result<Self> {
        let mesh = &op.mesh;
        let (mx, h, w) = (mesh.mx, op.dec.side_len, op.strip_size());
        if mx < 2 {
            return Err(Error::InvalidMesh(
                "the interface system needs at least two strips".into(),
            ));
        }
        check_len("Schur assembly strip size", w, solver.strip_size())?;
        let key = |s: usize| (solver.class_of(s), s > 0, s + 1 < mx);
        let mut reps: Vec<usize> = Vec::new();
        let mut response_of = Vec::with_capacity(mx);
        for s in 0..mx {
            match reps.iter().position(|&r| key(r) == key(s)) {
                Some(c) => response_of.push(c),
                None => {
                    response_of.push(reps.len());
                    reps.push(s);
                }
            }
        }
        let responses = reps
            .par_iter()
            .map(|&s| Arc::new(strip_response(op, solver, s)))
            .collect();
        Ok(Self {
            n: mesh.n,
            mx,
            mz: mesh.mz,
            side_len: h,
            k: op.k(),
            responses,
            response_of,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of interfaces `d = m_x - 1`.
    pub fn num_interfaces(&self) -> usize {
        self.mx - 1
    }

    pub fn num_distinct_responses(&self) -> usize {
        self.responses.len()
    }

    fn response(&self, s: usize) -> &DenseMatrix {
        &self.responses[self.response_of[s]]
    }

    fn left(&self, j: usize) -> std::ops::Range<usize> {
        let s = 2 * j * self.side_len;
        s..s + self.side_len
    }

    fn right(&self, j: usize) -> std::ops::Range<usize> {
        let s = (2 * j + 1) * self.side_len;
        s..s + self.side_len
    }

    /// `y = S v`.
    pub fn apply_into(&self, v: &[f64], y: &mut [f64]) {
        let h = self.side_len;
        y.copy_from_slice(v);
        let mut local_in = vec![0.0; 2 * h];
        let mut local_out = vec![0.0; 2 * h];
        for s in 0..self.mx {
            local_in.fill(0.0);
            if s > 0 {
                local_in[..h].copy_from_slice(&v[self.right(s - 1)]);
            }
            if s + 1 < self.mx {
                local_in[h..].copy_from_slice(&v[self.left(s)]);
            }
            self.response(s).matvec_into(&local_in, &mut local_out);
            if s > 0 {
                for (a, b) in y[self.left(s - 1)].iter_mut().zip(&local_out[..h]) {
                    *a += b;
                }
            }
            if s + 1 < self.mx {
                for (a, b) in y[self.right(s)].iter_mut().zip(&local_out[h..]) {
                    *a += b;
                }
            }
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_S", self.k, v.len())?;
        let mut y = vec![0.0; self.k];
        self.apply_into(v, &mut y);
        Ok(y)
    }

    /// `Sᵀ v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_St", self.k, v.len())?;
        let h = self.side_len;
        let mut y = v.to_vec();
        let mut local_in = vec![0.0; 2 * h];
        for s in 0..self.mx {
            local_in.fill(0.0);
            if s > 0 {
                local_in[..h].copy_from_slice(&v[self.left(s - 1)]);
            }
            if s + 1 < self.mx {
                local_in[h..].copy_from_slice(&v[self.right(s)]);
            }
            let out = self.response(s).matvec_transpose(&local_in);
            if s > 0 {
                for (a, b) in y[self.right(s - 1)].iter_mut().zip(&out[..h]) {
                    *a += b;
                }
            }
            if s + 1 < self.mx {
                for (a, b) in y[self.left(s)].iter_mut().zip(&out[h..]) {
                    *a += b;
                }
            }
        }
        Ok(y)
    }

    fn quadrant(&self, s: usize, row_hi: bool, col_hi: bool) -> DenseMatrix {
        let h = self.side_len;
        let r0 = if row_hi { h } else { 0 };
        let c0 = if col_hi { h } else { 0 };
        let w = self.response(s);
        DenseMatrix::from_fn(h, h, |i, j| w[(r0 + i, c0 + j)])
    }

    /// Interface-granularity block `S(p, q)` of size `2h × 2h`, identity included.
    pub fn entry_block(&self, p: usize, q: usize) -> DenseMatrix {
        let h = self.side_len;
        let mut out = DenseMatrix::zeros(2 * h, 2 * h);
        let mut put = |r0: usize, c0: usize, m: &DenseMatrix| {
            for i in 0..h {
                out.row_mut(r0 + i)[c0..c0 + h].copy_from_slice(m.row(i));
            }
        };
        if p == q {
            put(0, h, &self.quadrant(p + 1, false, false));
            put(h, 0, &self.quadrant(p, true, true));
            out.add_diagonal(1.0);
        } else if q == p + 1 {
            put(0, 0, &self.quadrant(q, false, true));
        } else if p == q + 1 {
            put(h, h, &self.quadrant(p, true, false));
        }
        out
    }

    /// Nonidentity part for the columns of interface `j`, `4h × 2h`, with row
    /// groups `[Γ_{j-1}.left, Γ_j.left, Γ_j.right, Γ_{j+1}.right]`.
    pub fn interface_block(&self, j: usize) -> DenseMatrix {
        let h = self.side_len;
        let mut out = DenseMatrix::zeros(4 * h, 2 * h);
        let mut put = |g: usize, c: usize, m: &DenseMatrix| {
            for i in 0..h {
                out.row_mut(g * h + i)[c * h..(c + 1) * h].copy_from_slice(m.row(i));
            }
        };
        put(0, 0, &self.quadrant(j, false, true));
        put(2, 0, &self.quadrant(j, true, true));
        put(1, 1, &self.quadrant(j + 1, false, false));
        put(3, 1, &self.quadrant(j + 1, true, false));
        out
    }

    pub fn block_tridiagonal(&self) -> BlockTridiagonal {
        let d = self.num_interfaces();
        BlockTridiagonal {
            diag: (0..d).map(|p| self.entry_block(p, p)).collect(),
            lower: (0..d.saturating_sub(1)).map(|p| self.entry_block(p + 1, p)).collect(),
            upper: (0..d.saturating_sub(1)).map(|p| self.entry_block(p, p + 1)).collect(),
        }
    }

    /// Block-tridiagonal form of `Sᵀ - σ I`.
    pub fn shifted_transpose(&self, sigma: f64) -> BlockTridiagonal {
        let t = self.block_tridiagonal();
        BlockTridiagonal {
            diag: t
                .diag
                .iter()
                .map(|b| {
                    let mut m = b.transpose();
                    m.add_diagonal(-sigma);
                    m
                })
                .collect(),
            lower: t.upper.iter().map(DenseMatrix::transpose).collect(),
            upper: t.lower.iter().map(DenseMatrix::transpose).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut total = self.k as f64;
        for s in 0..self.mx {
            let f = self.response(s).frobenius_norm();
            total += f * f;
        }
        // The identity overlaps only the zero diagonal of the responses.
        total.sqrt()
    }

    pub fn dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.k, self.k);
        let w = 2 * self.side_len;
        let d = self.num_interfaces();
        for p in 0..d {
            for q in p.saturating_sub(1)..(p + 2).min(d) {
                let b = self.entry_block(p, q);
                for i in 0..w {
                    out.row_mut(p * w + i)[q * w..(q + 1) * w].copy_from_slice(b.row(i));
                }
            }
        }
        out
    }

    /// Writes a little-endian dump: header `n, m_x, m_z, k` as `u64`, then
    /// every `4h × 2h` interface block row-major as `f64`.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for v in [self.n, self.mx, self.mz, self.k] {
            f.write_all(&(v as u64).to_le_bytes())?;
        }
        for j in 0..self.num_interfaces() {
            for x in self.interface_block(j).as_slice() {
                f.write_all(&x.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

impl LinearOperator for SchurSystem {
    fn dim(&self) -> usize {
        self.k
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y);
    }
}

fn strip_response(op: &SmpmOperator, solver: &dyn LocalSolve, s: usize) -> DenseMatrix {
    let (mx, h, w) = (op.num_strips(), op.dec.side_len, op.strip_size());
    let base = s * w;
    let nodes = op.dec.nodes();
    let mut rhs = DenseMatrix::zeros(w, 2 * h);
    if s > 0 {
        for (c, t) in op.dec.right_range(s - 1).enumerate() {
            rhs[(nodes[t] - base, c)] = 1.0;
        }
    }
    if s + 1 < mx {
        for (c, t) in op.dec.left_range(s).enumerate() {
            rhs[(nodes[t] - base, h + c)] = 1.0;
        }
    }
    let x = solver.solve_class_matrix(solver.class_of(s), &rhs);
    let mut out = DenseMatrix::zeros(2 * h, 2 * h);
    let mut fill = |r0: usize, rows: std::ops::Range<usize>| {
        for (i, t) in rows.enumerate() {
            let fr = &op.flux_rows[t];
            let row = out.row_mut(r0 + i);
            for (c, wgt) in fr.coeffs.iter().enumerate() {
                let src = x.row(fr.first + c * fr.stride - base);
                for (o, v) in row.iter_mut().zip(src) {
                    *o += wgt * v;
                }
            }
        }
    };
    if s > 0 {
        fill(0, op.dec.left_range(s - 1));
    }
    if s + 1 < mx {
        fill(h, op.dec.right_range(s));
    }
    out
}

/// `b_S = B A⁻¹ f`.
pub fn schur_rhs(op: &SmpmOperator, solver: &dyn LocalSolve, f: &[f64]) -> Result<Vec<f64>> {
    check_len("schur_rhs", op.num_nodes(), f.len())?;
    op.apply_b(&solver.solve_full(f))
}

/// `u = A⁻¹ (f - E x_S)`.
pub fn recover_solution(op: &SmpmOperator, solver: &dyn LocalSolve, f: &[f64], x_s: &[f64]) -> Result<Vec<f64>> {
    check_len("recover_solution", op.num_nodes(), f.len())?;
    check_len("recover_solution", op.k(), x_s.len())?;
    let mut g = f.to_vec();
    for (&node, x) in op.dec.nodes().iter().zip(x_s) {
        g[node] -= x;
    }
    Ok(solver.solve_full(&g))
}

/// `v + B A⁻¹ E v` through the local solver; the reference form of `S`.
pub struct MatrixFreeSchur<'a> {
    pub op: &'a SmpmOperator,
    pub solver: &'a dyn LocalSolve,
}

impl LinearOperator for MatrixFreeSchur<'_> {
    fn dim(&self) -> usize {
        self.op.k()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let ev = self.op.dec.apply_e(x).expect("length checked by caller");
        let bv = self
            .op
            .apply_b(&self.solver.solve_full(&ev))
            .expect("length fixed by operator");
        for ((yi, xi), bi) in y.iter_mut().zip(x).zip(bv) {
            *yi = xi + bi;
        }
    }
}

/// Non-overlapping block-Jacobi preconditioner pairing consecutive
/// interfaces `(Γ_1, Γ_2), (Γ_3, Γ_4), …`.
#[derive(Clone, Debug)]
pub struct BlockJacobi {
    blocks: Vec<LuFactor>,
    offsets: Vec<usize>,
}

impl BlockJacobi {
    pub fn new(sys: &SchurSystem) -> Result<Self> {
        let d = sys.num_interfaces();
        let starts: Vec<usize> = (0..d).step_by(2).collect();
        let blocks = starts
            .par_iter()
            .map(|&p| {
                let dense = if p + 1 < d {
                    let w = 2 * sys.side_len;
                    let mut m = DenseMatrix::zeros(2 * w, 2 * w);
                    for (bi, bj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let e = sys.entry_block(p + bi, p + bj);
                        for i in 0..w {
                            m.row_mut(bi * w + i)[bj * w..(bj + 1) * w].copy_from_slice(e.row(i));
                        }
                    }
                    m
                } else {
                    sys.entry_block(p, p)
                };
                LuFactor::new(dense).map_err(|_| Error::Preconditioner { block: p / 2 })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut offsets = vec![0];
        for b in &blocks {
            offsets.push(offsets.last().unwrap() + b.dim());
        }
        Ok(Self { blocks, offsets })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(LuFactor::dim).collect()
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// `M⁻¹ v` in place.
    pub fn solve_in_place(&self, v: &mut [f64]) {
        for (b, lu) in self.blocks.iter().enumerate() {
            lu.solve_in_place(&mut v[self.offsets[b]..self.offsets[b + 1]]);
        }
    }

    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.solve_in_place(&mut out);
        out
    }
}
