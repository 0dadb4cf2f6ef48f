//! The penalty collocation operator split as `L = A + E B`.
//!
//! Every node carries the collocated Laplacian. Nodes on an element face that
//! touches another element additionally carry the Robin mismatch
//! `tau * ((I + n·∇) u_own - (I + n·∇) u_nbr)`, and nodes on the physical
//! boundary carry the Neumann term `tau * n·∇ u`. Corner nodes accumulate the
//! contributions of both faces. Terms coupling two different subdomain strips
//! form `B`; everything else is the block-diagonal `A`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::linalg::{DenseMatrix, LuFactor};
use crate::mesh::{Decomposition, Face, Mesh};

/// Penalty weight `c_tau * n² / min(h_x, h_z)`.
pub fn penalty_tau(n: usize, hx: f64, hz: f64, c_tau: f64) -> f64 {
    c_tau * (n * n) as f64 / hx.min(hz)
}

/// One row of `B`: a weighted sum over an x-line of `n` nodes in the
/// neighboring strip, `sum_c coeffs[c] * u[first + c * stride]`.
#[derive(Clone, Debug)]
pub struct FluxRow {
    pub first: usize,
    pub stride: usize,
    pub coeffs: Vec<f64>,
}

impl FluxRow {
    fn eval(&self, u: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(c, w)| w * u[self.first + c * self.stride])
            .sum()
    }
}

/// Distinct dense strip blocks of `A`. Strips whose blocks are bitwise equal
/// share a class, so uniform meshes store at most three blocks.
#[derive(Clone, Debug)]
pub struct BlockClasses {
    pub matrices: Vec<Arc<DenseMatrix>>,
    pub class_of: Vec<usize>,
    /// First strip of each class.
    pub representative: Vec<usize>,
}

impl BlockClasses {
    pub fn num_classes(&self) -> usize {
        self.matrices.len()
    }

    pub fn block(&self, strip: usize) -> &DenseMatrix {
        &self.matrices[self.class_of[strip]]
    }
}

#[derive(Clone, Debug)]
pub struct SmpmOperator {
    pub mesh: Mesh,
    pub dec: Decomposition,
    pub tau: f64,
    pub c_tau: f64,
    pub blocks: BlockClasses,
    pub flux_rows: Vec<FluxRow>,
}

/// Directional derivative weights at local node `li` of an element:
/// `(nx * d/dx + nz * d/dz)` expressed as `(local index, weight)` pairs.
fn normal_derivative(mesh: &Mesh, li: usize, normal: (f64, f64)) -> Vec<(usize, f64)> {
    let n = mesh.n;
    let d = mesh.basis.diff();
    let (a, b) = (li / n, li % n);
    let mut out = Vec::with_capacity(2 * n);
    if normal.0 != 0.0 {
        let s = normal.0 * 2.0 / mesh.hx;
        for c in 0..n {
            out.push((c * n + b, s * d[(a, c)]));
        }
    }
    if normal.1 != 0.0 {
        let s = normal.1 * 2.0 / mesh.hz;
        for c in 0..n {
            out.push((a * n + c, s * d[(b, c)]));
        }
    }
    out
}

/// Element Laplacian `(2/h_x)² D² ⊗ I + (2/h_z)² I ⊗ D²` on the local node ordering.
pub fn element_laplacian(mesh: &Mesh) -> DenseMatrix {
    let n = mesh.n;
    let d = mesh.basis.diff();
    let d2 = d.matmul(d);
    let sx = (2.0 / mesh.hx).powi(2);
    let sz = (2.0 / mesh.hz).powi(2);
    let nn = n * n;
    let mut lap = DenseMatrix::zeros(nn, nn);
    for a in 0..n {
        for b in 0..n {
            let row = a * n + b;
            for c in 0..n {
                lap[(row, c * n + b)] += sx * d2[(a, c)];
                lap[(row, a * n + c)] += sz * d2[(b, c)];
            }
        }
    }
    lap
}

impl SmpmOperator {
    pub fn new(mesh: Mesh, c_tau: f64) -> Result<Self> {
        if !(c_tau.is_finite() && c_tau > 0.0) {
            return Err(Error::Config(format!("c_tau must be positive, got {c_tau}")));
        }
        let tau = penalty_tau(mesh.n, mesh.hx, mesh.hz, c_tau);
        let dec = Decomposition::new(&mesh);
        let blocks = assemble_a(&mesh, tau);
        let flux_rows = assemble_b(&mesh, &dec, tau);
        Ok(Self {
            mesh,
            dec,
            tau,
            c_tau,
            blocks,
            flux_rows,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn num_strips(&self) -> usize {
        self.mesh.mx
    }

    pub fn strip_size(&self) -> usize {
        self.mesh.strip_size()
    }

    pub fn strip_range(&self, s: usize) -> std::ops::Range<usize> {
        let w = self.strip_size();
        s * w..(s + 1) * w
    }

    pub fn k(&self) -> usize {
        self.dec.k()
    }

    pub fn apply_a(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_A", self.num_nodes(), u.len())?;
        let mut out = vec![0.0; u.len()];
        out.par_chunks_mut(self.strip_size())
            .enumerate()
            .for_each(|(s, chunk)| {
                self.blocks.block(s).matvec_into(&u[self.strip_range(s)], chunk);
            });
        Ok(out)
    }

    pub fn apply_b(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_B", self.num_nodes(), u.len())?;
        Ok(self.flux_rows.iter().map(|r| r.eval(u)).collect())
    }

    /// `Bᵀ v`, scattered onto the full grid.
    pub fn apply_bt(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_Bt", self.k(), v.len())?;
        let mut out = vec![0.0; self.num_nodes()];
        for (row, &vi) in self.flux_rows.iter().zip(v) {
            for (c, w) in row.coeffs.iter().enumerate() {
                out[row.first + c * row.stride] += w * vi;
            }
        }
        Ok(out)
    }

    /// `L u = A u + E B u`.
    pub fn apply_l(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.apply_a(u)?;
        let bu = self.apply_b(u)?;
        for (&node, v) in self.dec.nodes().iter().zip(bu) {
            out[node] += v;
        }
        Ok(out)
    }

    /// Largest absolute row sum of `L`, used to scale null-space checks.
    pub fn row_scale(&self) -> f64 {
        let mut best = 0.0_f64;
        for m in &self.blocks.matrices {
            for i in 0..m.rows() {
                best = best.max(m.row(i).iter().map(|v| v.abs()).sum());
            }
        }
        for r in &self.flux_rows {
            best = best.max(r.coeffs.iter().map(|v| v.abs()).sum::<f64>() + self.tau * 8.0);
        }
        best
    }

    /// Right-hand side `f + tau * g` for Neumann data given by the exact
    /// gradient of a manufactured solution. Corner nodes receive both faces.
    pub fn neumann_rhs(&self, f: &[f64], grad: impl Fn(f64, f64) -> (f64, f64)) -> Vec<f64> {
        let mesh = &self.mesh;
        let n = mesh.n;
        let mut out = f.to_vec();
        for e in 0..mesh.num_elements() {
            for face in Face::ALL {
                if mesh.neighbor(e, face).is_some() {
                    continue;
                }
                let (nx, nz) = face.normal();
                for t in 0..n {
                    let node = mesh.node_index(e, face.local_node(n, t));
                    let [x, z] = mesh.coords()[node];
                    let (gx, gz) = grad(x, z);
                    out[node] += self.tau * (nx * gx + nz * gz);
                }
            }
        }
        out
    }

    pub fn factor_blocks(&self) -> Result<LuBlocks> {
        let factors: Vec<Result<LuFactor>> = self
            .blocks
            .matrices
            .par_iter()
            .map(|m| LuFactor::new((**m).clone()))
            .collect();
        let mut out = Vec::with_capacity(factors.len());
        for (c, f) in factors.into_iter().enumerate() {
            out.push(f.map_err(|e| Error::Assembly {
                subdomain: self.blocks.representative[c],
                reason: e.to_string(),
            })?);
        }
        Ok(LuBlocks {
            factors: out,
            class_of: self.blocks.class_of.clone(),
            strip_size: self.strip_size(),
        })
    }

    /// Dense `L` for small grids; used by oracles.
    pub fn dense_l(&self) -> DenseMatrix {
        let r = self.num_nodes();
        let mut l = DenseMatrix::zeros(r, r);
        let w = self.strip_size();
        for s in 0..self.num_strips() {
            let blk = self.blocks.block(s);
            for i in 0..w {
                l.row_mut(s * w + i)[s * w..(s + 1) * w].copy_from_slice(blk.row(i));
            }
        }
        for (row, &node) in self.flux_rows.iter().zip(self.dec.nodes()) {
            for (c, wgt) in row.coeffs.iter().enumerate() {
                l[(node, row.first + c * row.stride)] += wgt;
            }
        }
        l
    }
}

fn assemble_strip(mesh: &Mesh, tau: f64, strip: usize, lap: &DenseMatrix) -> DenseMatrix {
    let n = mesh.n;
    let nn = n * n;
    let w = mesh.strip_size();
    let mut a = DenseMatrix::zeros(w, w);
    for iz in 0..mesh.mz {
        let e = mesh.element_index(strip, iz);
        let off = iz * nn;
        for i in 0..nn {
            a.row_mut(off + i)[off..off + nn].copy_from_slice(lap.row(i));
        }
        for face in Face::ALL {
            let normal = face.normal();
            let nbr = mesh.neighbor(e, face);
            for t in 0..n {
                let li = face.local_node(n, t);
                let row = off + li;
                for (lj, wgt) in normal_derivative(mesh, li, normal) {
                    a[(row, off + lj)] += tau * wgt;
                }
                let Some(ne) = nbr else { continue };
                a[(row, row)] += tau;
                if mesh.subdomain_of_element(ne) == strip {
                    let noff = (ne % mesh.mz) * nn;
                    let lm = face.opposite().local_node(n, t);
                    a[(row, noff + lm)] -= tau;
                    for (lj, wgt) in normal_derivative(mesh, lm, normal) {
                        a[(row, noff + lj)] -= tau * wgt;
                    }
                }
            }
        }
    }
    a
}

fn assemble_a(mesh: &Mesh, tau: f64) -> BlockClasses {
    let lap = element_laplacian(mesh);
    let mut matrices: Vec<Arc<DenseMatrix>> = Vec::new();
    let mut representative = Vec::new();
    let mut class_of = Vec::with_capacity(mesh.mx);
    for s in 0..mesh.mx {
        let blk = assemble_strip(mesh, tau, s, &lap);
        match matrices.iter().position(|m| **m == blk) {
            Some(c) => class_of.push(c),
            None => {
                class_of.push(matrices.len());
                representative.push(s);
                matrices.push(Arc::new(blk));
            }
        }
    }
    BlockClasses {
        matrices,
        class_of,
        representative,
    }
}

fn assemble_b(mesh: &Mesh, dec: &Decomposition, tau: f64) -> Vec<FluxRow> {
    let n = mesh.n;
    let d = mesh.basis.diff();
    let mut rows = Vec::with_capacity(dec.k());
    let line = |nbr_edge_a: usize, nx: f64| -> Vec<f64> {
        (0..n)
            .map(|c| {
                let id = if c == nbr_edge_a { 1.0 } else { 0.0 };
                -tau * (id + nx * 2.0 / mesh.hx * d[(nbr_edge_a, c)])
            })
            .collect()
    };
    let from_east = line(0, 1.0);
    let from_west = line(n - 1, -1.0);
    for iface in &dec.interfaces {
        // Left-side rows read the west edge of the right strip (outward normal +x).
        for &node in &iface.left {
            let e = mesh.element_of_node(node);
            let nbr = mesh.neighbor(e, Face::East).expect("interface node without neighbor");
            let b = (node - e * n * n) % n;
            rows.push(FluxRow {
                first: mesh.node_index(nbr, b),
                stride: n,
                coeffs: from_east.clone(),
            });
        }
        // Right-side rows read the east edge of the left strip (outward normal -x).
        for &node in &iface.right {
            let e = mesh.element_of_node(node);
            let nbr = mesh.neighbor(e, Face::West).expect("interface node without neighbor");
            let b = (node - e * n * n) % n;
            rows.push(FluxRow {
                first: mesh.node_index(nbr, b),
                stride: n,
                coeffs: from_west.clone(),
            });
        }
    }
    rows
}

/// Solves with strip blocks of `A` (or a shifted variant of it).
pub trait LocalSolve: Send + Sync {
    fn strip_size(&self) -> usize;
    fn class_of(&self, strip: usize) -> usize;
    fn num_classes(&self) -> usize;
    /// Solves in place with the block of a class.
    fn solve_class(&self, class: usize, b: &mut [f64]);
    /// Solves for a block of right-hand sides.
    fn solve_class_matrix(&self, class: usize, b: &DenseMatrix) -> DenseMatrix;

    /// Block-diagonal solve over the whole grid.
    fn solve_full(&self, f: &[f64]) -> Vec<f64> {
        let mut out = f.to_vec();
        let w = self.strip_size();
        out.par_chunks_mut(w).enumerate().for_each(|(s, chunk)| {
            self.solve_class(self.class_of(s), chunk);
        });
        out
    }
}

/// LU factors of the distinct strip blocks of `A`.
#[derive(Clone, Debug)]
pub struct LuBlocks {
    pub factors: Vec<LuFactor>,
    pub class_of: Vec<usize>,
    pub strip_size: usize,
}

impl LuBlocks {
    /// `A⁻ᵀ b` over the whole grid.
    pub fn solve_full_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut out = b.to_vec();
        out.par_chunks_mut(self.strip_size).enumerate().for_each(|(s, chunk)| {
            self.factors[self.class_of[s]].solve_transpose_in_place(chunk);
        });
        out
    }
}

impl LocalSolve for LuBlocks {
    fn strip_size(&self) -> usize {
        self.strip_size
    }
    fn class_of(&self, strip: usize) -> usize {
        self.class_of[strip]
    }
    fn num_classes(&self) -> usize {
        self.factors.len()
    }
    fn solve_class(&self, class: usize, b: &mut [f64]) {
        self.factors[class].solve_in_place(b);
    }
    fn solve_class_matrix(&self, class: usize, b: &DenseMatrix) -> DenseMatrix {
        self.factors[class].solve_matrix(b)
    }
}
