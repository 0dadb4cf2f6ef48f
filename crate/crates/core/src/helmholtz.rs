//! Fourier extension in a periodic `y` direction. Every retained mode `j`
//! gives a Helmholtz problem `(L - k_j²) û_j = f̂_j` on the same 2D grid; the
//! interface systems of all modes are solved together in one GMRES run.
//!
//! Shifted local solves reuse an orthogonal Hessenberg reduction
//! `A_s = Q H Qᵀ` of each strip block: `(A_s - σ) x = b` is solved by a
//! Givens QR of `H - σ I`, which costs `O(dim²)` per shift and right-hand side.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::deflation::{CoarseSpace, Projections};
use crate::error::{check_len, Error, Result};
use crate::krylov::{gmres_right_preconditioned, FnOperator, GmresOptions, KrylovReport};
use crate::linalg::{norm2, DenseMatrix};
use crate::nullspace::{project_rhs_full, project_rhs_schur};
use crate::operator::{LocalSolve, SmpmOperator};
use crate::schur::{recover_solution, schur_rhs, BlockJacobi, SchurSystem};
use crate::solver::{Method, PoissonSolver};

/// Retained Fourier coefficients of an `r × m_y` field stored node-major
/// (`y` fastest). `modes[j]` holds `û_j` for `j = 0..m_y/2`; the Nyquist
/// coefficient is kept separately so that the transform is invertible.
#[derive(Clone, Debug)]
pub struct FourierField {
    pub my: usize,
    pub modes: Vec<Vec<Complex64>>,
    pub nyquist: Vec<f64>,
}

fn check_power_of_two(my: usize) -> Result<()> {
    if my >= 2 && my.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "m_y must be a power of two (at least 2), got {my}"
        )))
    }
}

/// `û_j = (1/m_y) Σ_m u(y_m) e^{-2πi j m / m_y}`.
pub fn fourier_transform_y(field: &[f64], r: usize, my: usize) -> Result<FourierField> {
    check_power_of_two(my)?;
    check_len("fourier_transform_y", r * my, field.len())?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(my);
    let half = my / 2;
    let mut modes = vec![vec![Complex64::new(0.0, 0.0); r]; half];
    let mut nyquist = vec![0.0; r];
    let scale = 1.0 / my as f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); my];
    for node in 0..r {
        for (b, &v) in buf.iter_mut().zip(&field[node * my..(node + 1) * my]) {
            *b = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for j in 0..half {
            modes[j][node] = buf[j] * scale;
        }
        nyquist[node] = buf[half].re * scale;
    }
    Ok(FourierField { my, modes, nyquist })
}

/// Inverse of [`fourier_transform_y`]. Also returns the largest imaginary
/// residue of the synthesized field.
pub fn inverse_fourier_transform_y(coeffs: &FourierField) -> Result<(Vec<f64>, f64)> {
    let my = coeffs.my;
    check_power_of_two(my)?;
    let half = my / 2;
    if coeffs.modes.len() != half {
        return Err(Error::LengthMismatch {
            context: "inverse_fourier_transform_y modes",
            expected: half,
            actual: coeffs.modes.len(),
        });
    }
    let r = coeffs.nyquist.len();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(my);
    let mut out = vec![0.0; r * my];
    let mut residue = 0.0_f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); my];
    for node in 0..r {
        buf[0] = coeffs.modes[0][node];
        for j in 1..half {
            buf[j] = coeffs.modes[j][node];
            buf[my - j] = coeffs.modes[j][node].conj();
        }
        buf[half] = Complex64::new(coeffs.nyquist[node], 0.0);
        ifft.process(&mut buf);
        for (o, b) in out[node * my..(node + 1) * my].iter_mut().zip(&buf) {
            *o = b.re;
            residue = residue.max(b.im.abs());
        }
    }
    Ok((out, residue))
}

/// Orthogonal Hessenberg reduction `A = Q H Qᵀ`.
#[derive(Clone, Debug)]
pub struct HessenbergFactor {
    pub q: DenseMatrix,
    pub h: DenseMatrix,
}

impl HessenbergFactor {
    pub fn new(a: &DenseMatrix) -> Self {
        let n = a.rows();
        let mut h = a.clone();
        let mut q = DenseMatrix::identity(n);
        for k in 0..n.saturating_sub(2) {
            let x: Vec<f64> = (k + 1..n).map(|i| h[(i, k)]).collect();
            let sigma = norm2(&x);
            if sigma == 0.0 {
                continue;
            }
            let alpha = if x[0] >= 0.0 { -sigma } else { sigma };
            let mut v = x;
            v[0] -= alpha;
            let nv = norm2(&v);
            for vi in v.iter_mut() {
                *vi /= nv;
            }
            // left: rows k+1.. of columns k..
            let mut w = vec![0.0; n];
            for (i, vi) in v.iter().enumerate() {
                let row = h.row(k + 1 + i);
                for j in k..n {
                    w[j] += vi * row[j];
                }
            }
            for (i, vi) in v.iter().enumerate() {
                let row = h.row_mut(k + 1 + i);
                for j in k..n {
                    row[j] -= 2.0 * vi * w[j];
                }
            }
            // right on H and on Q: columns k+1..
            for m in [&mut h, &mut q] {
                for i in 0..n {
                    let row = &mut m.row_mut(i)[k + 1..];
                    let d: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
                    for (a, b) in row.iter_mut().zip(&v) {
                        *a -= 2.0 * d * b;
                    }
                }
            }
            h[(k + 1, k)] = alpha;
            for i in k + 2..n {
                h[(i, k)] = 0.0;
            }
        }
        Self { q, h }
    }

    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    /// `‖Q H Qᵀ - A‖_F / ‖A‖_F` and `‖QᵀQ - I‖_max`.
    pub fn check(&self, a: &DenseMatrix) -> (f64, f64) {
        let rec = self.q.matmul(&self.h).matmul(&self.q.transpose());
        let mut diff = 0.0;
        for (x, y) in rec.as_slice().iter().zip(a.as_slice()) {
            diff += (x - y) * (x - y);
        }
        let qtq = self.q.transpose().matmul(&self.q);
        let mut orth = 0.0_f64;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let e = qtq[(i, j)] - if i == j { 1.0 } else { 0.0 };
                orth = orth.max(e.abs());
            }
        }
        (diff.sqrt() / a.frobenius_norm(), orth)
    }

    /// Givens QR of `H - σ I`.
    pub fn shift(&self, sigma: f64, flops: &AtomicU64) -> std::result::Result<ShiftedHessenberg, usize> {
        let n = self.dim();
        let mut r = self.h.clone();
        r.add_diagonal(-sigma);
        let mut rot = Vec::with_capacity(n.saturating_sub(1));
        let mut count = n as u64;
        for i in 0..n.saturating_sub(1) {
            let (a, b) = (r[(i, i)], r[(i + 1, i)]);
            let rr = a.hypot(b);
            let (c, s) = if rr == 0.0 { (1.0, 0.0) } else { (a / rr, b / rr) };
            for j in i..n {
                let (x, y) = (r[(i, j)], r[(i + 1, j)]);
                r[(i, j)] = c * x + s * y;
                r[(i + 1, j)] = -s * x + c * y;
            }
            r[(i + 1, i)] = 0.0;
            rot.push((c, s));
            count += 6 * (n - i) as u64 + 6;
        }
        flops.fetch_add(count, Ordering::Relaxed);
        let scale = self.h.frobenius_norm().max(sigma.abs());
        if let Some(i) = (0..n).find(|&i| r[(i, i)].abs() <= n as f64 * f64::EPSILON * scale) {
            return Err(i);
        }
        Ok(ShiftedHessenberg { rot, r })
    }
}

#[derive(Clone, Debug)]
pub struct ShiftedHessenberg {
    rot: Vec<(f64, f64)>,
    r: DenseMatrix,
}

impl ShiftedHessenberg {
    /// `x = Q (H - σ)⁻¹ Qᵀ b` in place.
    fn solve(&self, q: &DenseMatrix, b: &mut [f64], flops: &AtomicU64) {
        let n = b.len();
        let mut y = q.matvec_transpose(b);
        for (i, &(c, s)) in self.rot.iter().enumerate() {
            let (u, v) = (y[i], y[i + 1]);
            y[i] = c * u + s * v;
            y[i + 1] = -s * u + c * v;
        }
        for i in (0..n).rev() {
            let row = self.r.row(i);
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= row[j] * y[j];
            }
            y[i] = acc / row[i];
        }
        q.matvec_into(&y, b);
        let nn = n as u64;
        flops.fetch_add(2 * nn * nn + 6 * (nn - 1) + nn * nn + 2 * nn * nn, Ordering::Relaxed);
    }
}

/// Hessenberg factors of the distinct strip blocks of `A`.
#[derive(Clone, Debug)]
pub struct HessenbergBlocks {
    pub factors: Arc<Vec<HessenbergFactor>>,
    pub class_of: Vec<usize>,
    pub representative: Vec<usize>,
    pub strip_size: usize,
}

/// Factors every distinct strip block of `A` once.
pub fn factor_unshifted_blocks(op: &SmpmOperator) -> HessenbergBlocks {
    let factors = op
        .blocks
        .matrices
        .par_iter()
        .map(|m| HessenbergFactor::new(m))
        .collect();
    HessenbergBlocks {
        factors: Arc::new(factors),
        class_of: op.blocks.class_of.clone(),
        representative: op.blocks.representative.clone(),
        strip_size: op.strip_size(),
    }
}

impl HessenbergBlocks {
    /// Local solver for `A - k² I`.
    pub fn shifted(&self, k: f64) -> Result<ShiftedBlocks> {
        let sigma = k * k;
        let flops = AtomicU64::new(0);
        let shifted = self
            .factors
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.shift(sigma, &flops).map_err(|_| Error::SingularShift {
                    block: self.representative[c],
                    shift: sigma,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ShiftedBlocks {
            factors: Arc::clone(&self.factors),
            shifted,
            class_of: self.class_of.clone(),
            strip_size: self.strip_size,
            flops,
        })
    }
}

/// Solves with `A - k² I` through shared Hessenberg factors.
#[derive(Debug)]
pub struct ShiftedBlocks {
    factors: Arc<Vec<HessenbergFactor>>,
    shifted: Vec<ShiftedHessenberg>,
    class_of: Vec<usize>,
    strip_size: usize,
    flops: AtomicU64,
}

impl ShiftedBlocks {
    /// Operations spent so far, including the per-shift Givens sweep.
    pub fn flops(&self) -> u64 {
        self.flops.load(Ordering::Relaxed)
    }
}

impl LocalSolve for ShiftedBlocks {
    fn strip_size(&self) -> usize {
        self.strip_size
    }
    fn class_of(&self, strip: usize) -> usize {
        self.class_of[strip]
    }
    fn num_classes(&self) -> usize {
        self.shifted.len()
    }
    fn solve_class(&self, class: usize, b: &mut [f64]) {
        self.shifted[class].solve(&self.factors[class].q, b, &self.flops);
    }
    fn solve_class_matrix(&self, class: usize, b: &DenseMatrix) -> DenseMatrix {
        let cols: Vec<Vec<f64>> = (0..b.cols())
            .into_par_iter()
            .map(|j| {
                let mut c = b.column(j);
                self.solve_class(class, &mut c);
                c
            })
            .collect();
        DenseMatrix::from_fn(b.rows(), b.cols(), |i, j| cols[j][i])
    }
}

/// Interface system of one nonzero wavenumber; `C(k)` is invertible.
pub struct WaveSystem {
    pub j: usize,
    pub k: f64,
    pub local: ShiftedBlocks,
    pub sys: SchurSystem,
    pub bj: BlockJacobi,
    pub coarse: CoarseSpace,
}

pub struct FourierContext {
    pub base: PoissonSolver,
    pub my: usize,
    pub ly: f64,
    pub hessenberg: HessenbergBlocks,
    /// Modes `j = 1..m_y/2`.
    pub waves: Vec<WaveSystem>,
    pub setup_time: f64,
}

pub fn wavenumber(j: usize, ly: f64) -> f64 {
    2.0 * std::f64::consts::PI * j as f64 / ly
}

impl FourierContext {
    pub fn new(base: PoissonSolver, my: usize, ly: f64) -> Result<Self> {
        check_power_of_two(my)?;
        if !(ly > 0.0 && ly.is_finite()) {
            return Err(Error::Config(format!("l_y must be positive, got {ly}")));
        }
        let start = Instant::now();
        let hessenberg = factor_unshifted_blocks(&base.op);
        let waves = build_wavenumber_systems(&base.op, &hessenberg, my, ly)?;
        Ok(Self {
            setup_time: base.setup_time + start.elapsed().as_secs_f64(),
            base,
            my,
            ly,
            hessenberg,
            waves,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.base.op.num_nodes()
    }

    /// Real components of the stacked unknown: `(mode, imaginary part)`.
    /// Mode zero contributes its real part only.
    pub fn components(&self) -> Vec<(usize, bool)> {
        let mut out = vec![(0, false)];
        for j in 1..self.my / 2 {
            out.push((j, false));
            out.push((j, true));
        }
        out
    }

    fn system(&self, j: usize) -> (&SchurSystem, &BlockJacobi, &CoarseSpace) {
        if j == 0 {
            (&self.base.sys, &self.base.bj, &self.base.coarse)
        } else {
            let w = &self.waves[j - 1];
            (&w.sys, &w.bj, &w.coarse)
        }
    }

    fn local(&self, j: usize) -> &dyn LocalSolve {
        if j == 0 {
            &self.base.lu
        } else {
            &self.waves[j - 1].local
        }
    }
}

/// Assembles `S(k_j)`, its block-Jacobi factors and the invertible coarse
/// matrix for `j = 1..m_y/2`.
pub fn build_wavenumber_systems(
    op: &SmpmOperator,
    hess: &HessenbergBlocks,
    my: usize,
    ly: f64,
) -> Result<Vec<WaveSystem>> {
    (1..my / 2)
        .into_par_iter()
        .map(|j| {
            let k = wavenumber(j, ly);
            let local = hess.shifted(k)?;
            let sys = SchurSystem::assemble(op, &local)?;
            let bj = BlockJacobi::new(&sys)?;
            let coarse = CoarseSpace::build(&sys, op.dec.interface_len(), None)?;
            Ok(WaveSystem {
                j,
                k,
                local,
                sys,
                bj,
                coarse,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Solve3dReport {
    pub report: KrylovReport,
    /// Largest per-component `‖S x - b‖ / ‖b‖`.
    pub max_schur_residual: f64,
    pub imaginary_residue: f64,
}

/// Per-component operator pieces for a method.
struct Stage<'a> {
    sys: &'a SchurSystem,
    bj: &'a BlockJacobi,
    coarse: &'a CoarseSpace,
}

impl Stage<'_> {
    fn op(&self, method: Method, x: &[f64], y: &mut [f64]) {
        self.sys.apply_into(x, y);
        if method == Method::Deflated {
            let p = Projections {
                s: self.sys,
                cs: self.coarse,
            }
            .apply_p(y);
            y.copy_from_slice(&p);
        }
    }

    fn precond(&self, method: Method, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        if method == Method::Schur {
            return;
        }
        self.bj.solve_in_place(y);
        if method == Method::TwoLevel {
            for (a, c) in y.iter_mut().zip(self.coarse.correction(x)) {
                *a += c;
            }
        }
    }

    fn rhs(&self, method: Method, b: &[f64]) -> Vec<f64> {
        if method == Method::Deflated {
            Projections {
                s: self.sys,
                cs: self.coarse,
            }
            .apply_p(b)
        } else {
            b.to_vec()
        }
    }

    fn finish(&self, method: Method, b: &[f64], y: &[f64]) -> Vec<f64> {
        if method != Method::Deflated {
            return y.to_vec();
        }
        let pr = Projections {
            s: self.sys,
            cs: self.coarse,
        };
        let q = pr.apply_q(y);
        self.coarse.correction(b).iter().zip(&q).map(|(a, c)| a + c).collect()
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let sx = self.sys.apply(x).expect("fixed length");
        let r: Vec<f64> = sx.iter().zip(b).map(|(a, c)| a - c).collect();
        let nb = norm2(b);
        if nb == 0.0 {
            norm2(&r)
        } else {
            norm2(&r) / nb
        }
    }
}

/// Interface right-hand sides per component; mode zero is projected.
fn prepare(ctx: &FourierContext, f: &[f64]) -> Result<(FourierField, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let r = ctx.num_nodes();
    let mut coeffs = fourier_transform_y(f, r, ctx.my)?;
    coeffs.modes[0] = project_rhs_full(
        &coeffs.modes[0].iter().map(|c| c.re).collect::<Vec<_>>(),
        &ctx.base.null.u_l,
    )?
    .into_iter()
    .map(|v| Complex64::new(v, 0.0))
    .collect();
    let comps = ctx.components();
    let parts: Vec<Vec<f64>> = comps
        .iter()
        .map(|&(j, im)| coeffs.modes[j].iter().map(|c| if im { c.im } else { c.re }).collect())
        .collect();
    let rhs = comps
        .par_iter()
        .zip(&parts)
        .map(|(&(j, _), fj)| {
            let b = schur_rhs(&ctx.base.op, ctx.local(j), fj)?;
            if j == 0 {
                project_rhs_schur(&b, &ctx.base.null.u_s)
            } else {
                Ok(b)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((coeffs, parts, rhs))
}

fn finalize(
    ctx: &FourierContext,
    coeffs: FourierField,
    parts: &[Vec<f64>],
    xs: &[Vec<f64>],
) -> Result<(Vec<f64>, f64)> {
    let comps = ctx.components();
    let fields = comps
        .par_iter()
        .zip(parts.par_iter().zip(xs))
        .map(|(&(j, _), (fj, xj))| recover_solution(&ctx.base.op, ctx.local(j), fj, xj))
        .collect::<Result<Vec<_>>>()?;
    let r = ctx.num_nodes();
    let mut out = FourierField {
        my: ctx.my,
        modes: vec![vec![Complex64::new(0.0, 0.0); r]; ctx.my / 2],
        nyquist: vec![0.0; r],
    };
    for (&(j, im), u) in comps.iter().zip(&fields) {
        for (c, v) in out.modes[j].iter_mut().zip(u) {
            if im {
                c.im = *v;
            } else {
                c.re = *v;
            }
        }
    }
    drop(coeffs);
    inverse_fourier_transform_y(&out)
}

/// Solves all modes in one GMRES run over the stacked real components.
pub fn solve_3d(
    ctx: &FourierContext,
    f: &[f64],
    method: Method,
    opts: &GmresOptions,
) -> Result<(Vec<f64>, Solve3dReport)> {
    let (coeffs, parts, rhs) = prepare(ctx, f)?;
    let comps = ctx.components();
    let k = ctx.base.sys.k();
    let stages: Vec<Stage> = comps
        .iter()
        .map(|&(j, _)| {
            let (sys, bj, coarse) = ctx.system(j);
            Stage { sys, bj, coarse }
        })
        .collect();
    let dim = k * comps.len();
    let stacked_rhs: Vec<f64> = stages.iter().zip(&rhs).flat_map(|(s, b)| s.rhs(method, b)).collect();
    let op = FnOperator {
        dim,
        f: |x: &[f64], y: &mut [f64]| {
            y.par_chunks_mut(k)
                .zip(x.par_chunks(k))
                .zip(&stages)
                .for_each(|((yc, xc), st)| st.op(method, xc, yc));
        },
    };
    let prec = FnOperator {
        dim,
        f: |x: &[f64], y: &mut [f64]| {
            y.par_chunks_mut(k)
                .zip(x.par_chunks(k))
                .zip(&stages)
                .for_each(|((yc, xc), st)| st.precond(method, xc, yc));
        },
    };
    let (y, report) = gmres_right_preconditioned(&op, &prec, &stacked_rhs, opts)?;
    let xs: Vec<Vec<f64>> = stages
        .iter()
        .zip(&rhs)
        .zip(y.chunks(k))
        .map(|((st, b), yc)| st.finish(method, b, yc))
        .collect();
    let max_schur_residual = stages
        .iter()
        .zip(&xs)
        .zip(&rhs)
        .map(|((st, x), b)| st.residual(x, b))
        .fold(0.0, f64::max);
    let (u, imaginary_residue) = finalize(ctx, coeffs, &parts, &xs)?;
    Ok((
        u,
        Solve3dReport {
            report,
            max_schur_residual,
            imaginary_residue,
        },
    ))
}

/// Reference path: a separate GMRES run for every real component.
pub fn solve_3d_independent(
    ctx: &FourierContext,
    f: &[f64],
    method: Method,
    opts: &GmresOptions,
) -> Result<(Vec<f64>, Vec<KrylovReport>)> {
    let (coeffs, parts, rhs) = prepare(ctx, f)?;
    let comps = ctx.components();
    let mut xs = Vec::with_capacity(comps.len());
    let mut reports = Vec::with_capacity(comps.len());
    for (&(j, _), b) in comps.iter().zip(&rhs) {
        let (sys, bj, coarse) = ctx.system(j);
        let st = Stage { sys, bj, coarse };
        let op = FnOperator {
            dim: sys.k(),
            f: |x: &[f64], y: &mut [f64]| st.op(method, x, y),
        };
        let prec = FnOperator {
            dim: sys.k(),
            f: |x: &[f64], y: &mut [f64]| st.precond(method, x, y),
        };
        let (y, rep) = gmres_right_preconditioned(&op, &prec, &st.rhs(method, b), opts)?;
        xs.push(st.finish(method, b, &y));
        reports.push(rep);
    }
    let (u, _) = finalize(ctx, coeffs, &parts, &xs)?;
    Ok((u, reports))
}

/// Predicted operations per rank with unit constants:
/// `2 n² m_z (m_x/n_p) m_y log₂ m_y + 6 m_y (m_x/n_p) (n² m_z)²
///  + (m_x/n_p) K³ 16 m_y n² m_z²`.
pub fn flop_model(n: usize, mx: usize, mz: usize, my: usize, np: usize, k_iter: usize) -> f64 {
    let (n, mx, mz, my, np, kk) = (n as f64, mx as f64, mz as f64, my as f64, np as f64, k_iter as f64);
    let per = mx / np;
    2.0 * n * n * mz * per * my * my.log2()
        + 6.0 * my * per * (n * n * mz).powi(2)
        + per * kk.powi(3) * 16.0 * my * n * n * mz * mz
}
