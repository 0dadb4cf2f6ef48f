//! Coarse space of per-interface indicator vectors, the coarse matrix
//! `C = Zᵀ S Z`, the projections `P` and `Q`, the deflated solve and the
//! two-level additive Schwarz alternative.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{check_len, Error, Result};
use crate::krylov::{gmres_right_preconditioned, FnOperator, GmresOptions, KrylovReport, LinearOperator};
use crate::linalg::{dot, norm2, DenseMatrix, LuFactor};

/// `Z y`: broadcasts each coarse value over its interface.
pub fn apply_z(interface_len: usize, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; interface_len * y.len()];
    for (chunk, &v) in out.chunks_mut(interface_len).zip(y) {
        chunk.fill(v);
    }
    out
}

/// `Zᵀ v`: sums over each interface.
pub fn apply_zt(interface_len: usize, v: &[f64]) -> Result<Vec<f64>> {
    if interface_len == 0 || v.len() % interface_len != 0 {
        return Err(Error::LengthMismatch {
            context: "apply_Zt",
            expected: interface_len * (v.len() / interface_len.max(1)),
            actual: v.len(),
        });
    }
    Ok(v.chunks(interface_len).map(|c| c.iter().sum()).collect())
}

/// Counts operator applications.
pub struct Counted<'a> {
    pub inner: &'a dyn LinearOperator,
    count: AtomicUsize,
}

impl<'a> Counted<'a> {
    pub fn new(inner: &'a dyn LinearOperator) -> Self {
        Self {
            inner,
            count: AtomicUsize::new(0),
        }
    }
    pub fn count(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }
}

impl LinearOperator for Counted<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.apply(x, y);
    }
}

#[derive(Clone, Debug)]
enum CoarseFactor {
    Thomas {
        lower: Vec<f64>,
        diag: Vec<f64>,
        upper: Vec<f64>,
    },
    Lu(LuFactor),
}

#[derive(Clone, Debug)]
pub struct CoarseSpace {
    pub d: usize,
    pub interface_len: usize,
    pub c: DenseMatrix,
    /// Present in the singular case.
    pub u_c: Option<Vec<f64>>,
    pub tridiagonal: bool,
    factor: CoarseFactor,
}

impl CoarseSpace {
    /// Builds `C` column by column. With `u_c` the factorization is of
    /// `C + u_C u_Cᵀ`; otherwise `C` itself, by the Thomas algorithm when
    /// `C` is numerically tridiagonal.
    pub fn build(s: &dyn LinearOperator, interface_len: usize, u_c: Option<Vec<f64>>) -> Result<Self> {
        let k = s.dim();
        if interface_len == 0 || k % interface_len != 0 {
            return Err(Error::Coarse(format!(
                "{k} unknowns do not split into interfaces of {interface_len}"
            )));
        }
        let d = k / interface_len;
        if let Some(u) = &u_c {
            check_len("coarse null vector", d, u.len())?;
        }
        let mut c = DenseMatrix::zeros(d, d);
        let mut sz = vec![0.0; k];
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            s.apply(&apply_z(interface_len, &e), &mut sz);
            c.set_column(j, &apply_zt(interface_len, &sz)?);
        }
        let tridiagonal = is_tridiagonal(&c);
        let factor = match &u_c {
            Some(u) => {
                let mut shifted = c.clone();
                for i in 0..d {
                    for j in 0..d {
                        shifted[(i, j)] += u[i] * u[j];
                    }
                }
                CoarseFactor::Lu(LuFactor::new(shifted).map_err(|e| Error::Coarse(e.to_string()))?)
            }
            None => {
                let thomas = tridiagonal.then(|| thomas_factor(&c)).flatten();
                match thomas {
                    Some(t) => t,
                    None => CoarseFactor::Lu(LuFactor::new(c.clone()).map_err(|e| Error::Coarse(e.to_string()))?),
                }
            }
        };
        Ok(Self {
            d,
            interface_len,
            c,
            u_c,
            tridiagonal,
            factor,
        })
    }

    pub fn uses_thomas(&self) -> bool {
        matches!(self.factor, CoarseFactor::Thomas { .. })
    }

    /// Singular case: `y` with `C y = (I - u_C u_Cᵀ) b` and `u_Cᵀ y = 0`.
    /// Invertible case: `C⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = b.to_vec();
        if let Some(u) = &self.u_c {
            let a = dot(u, b);
            for (r, ui) in rhs.iter_mut().zip(u) {
                *r -= a * ui;
            }
        }
        match &self.factor {
            CoarseFactor::Lu(lu) => lu.solve(&rhs),
            CoarseFactor::Thomas { lower, diag, upper } => {
                let n = diag.len();
                for i in 1..n {
                    rhs[i] -= lower[i - 1] * rhs[i - 1];
                }
                rhs[n - 1] /= diag[n - 1];
                for i in (0..n - 1).rev() {
                    rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
                }
                rhs
            }
        }
    }

    /// `Z C⁻¹ Zᵀ v` with the regularized division.
    pub fn correction(&self, v: &[f64]) -> Vec<f64> {
        let zt = apply_zt(self.interface_len, v).expect("length fixed at setup");
        apply_z(self.interface_len, &self.solve(&zt))
    }
}

fn is_tridiagonal(c: &DenseMatrix) -> bool {
    let scale = c.frobenius_norm();
    let d = c.rows();
    (0..d).all(|i| (0..d).all(|j| i.abs_diff(j) <= 1 || c[(i, j)].abs() <= 1e-12 * scale))
}

/// Stores `L` multipliers and `U` pivots; `None` on a zero pivot.
fn thomas_factor(c: &DenseMatrix) -> Option<CoarseFactor> {
    let n = c.rows();
    let mut diag = vec![0.0; n];
    let mut lower = vec![0.0; n.saturating_sub(1)];
    let upper: Vec<f64> = (0..n.saturating_sub(1)).map(|i| c[(i, i + 1)]).collect();
    diag[0] = c[(0, 0)];
    for i in 1..n {
        if diag[i - 1] == 0.0 || !diag[i - 1].is_finite() {
            return None;
        }
        lower[i - 1] = c[(i, i - 1)] / diag[i - 1];
        diag[i] = c[(i, i)] - lower[i - 1] * upper[i - 1];
    }
    if diag[n - 1] == 0.0 {
        return None;
    }
    Some(CoarseFactor::Thomas { lower, diag, upper })
}

/// `P v = v - S Z C⁻¹ Zᵀ v` and `Q v = v - Z C⁻¹ Zᵀ S v`.
pub struct Projections<'a> {
    pub s: &'a dyn LinearOperator,
    pub cs: &'a CoarseSpace,
}

impl Projections<'_> {
    pub fn apply_p(&self, v: &[f64]) -> Vec<f64> {
        let zc = self.cs.correction(v);
        let mut szc = vec![0.0; v.len()];
        self.s.apply(&zc, &mut szc);
        v.iter().zip(&szc).map(|(a, b)| a - b).collect()
    }

    pub fn apply_q(&self, v: &[f64]) -> Vec<f64> {
        let mut sv = vec![0.0; v.len()];
        self.s.apply(v, &mut sv);
        let zc = self.cs.correction(&sv);
        v.iter().zip(&zc).map(|(a, b)| a - b).collect()
    }
}

/// Outcome of a preconditioned interface solve.
#[derive(Clone, Debug)]
pub struct InterfaceSolve {
    pub x: Vec<f64>,
    pub report: KrylovReport,
    /// `‖S x - b‖ / ‖b‖`.
    pub schur_residual: f64,
    /// Applications of `S` inside the Krylov loop, per iteration.
    pub s_applies_per_iteration: f64,
}

fn relative_residual(s: &dyn LinearOperator, x: &[f64], b: &[f64]) -> f64 {
    let mut sx = vec![0.0; b.len()];
    s.apply(x, &mut sx);
    let r: Vec<f64> = b.iter().zip(&sx).map(|(a, c)| a - c).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

/// `extra` applications recompute the final residual.
fn per_iteration(count: usize, extra: usize, report: &KrylovReport) -> f64 {
    count.saturating_sub(extra) as f64 / report.iterations.max(1) as f64
}

/// GMRES on `P S M⁻¹ x' = P b`, then `x = Z C⁻¹ Zᵀ b + Q M⁻¹ x'`.
pub fn deflated_solve(
    s: &dyn LinearOperator,
    minv: &dyn LinearOperator,
    cs: &CoarseSpace,
    b: &[f64],
    opts: &GmresOptions,
) -> Result<InterfaceSolve> {
    check_len("deflated_solve", s.dim(), b.len())?;
    let counted = Counted::new(s);
    let proj = Projections { s: &counted, cs };
    let pb = proj.apply_p(b);
    let before = counted.count();
    let ps = FnOperator {
        dim: s.dim(),
        f: |x: &[f64], y: &mut [f64]| {
            let mut sx = vec![0.0; x.len()];
            proj.s.apply(x, &mut sx);
            y.copy_from_slice(&proj.apply_p(&sx));
        },
    };
    let (xp, report) = gmres_right_preconditioned(&ps, minv, &pb, opts)?;
    let used = counted.count() - before;
    let qx = proj.apply_q(&xp);
    let direct = cs.correction(b);
    let x: Vec<f64> = direct.iter().zip(&qx).map(|(a, c)| a + c).collect();
    let schur_residual = relative_residual(s, &x, b);
    Ok(InterfaceSolve {
        s_applies_per_iteration: per_iteration(used, 2, &report),
        x,
        report,
        schur_residual,
    })
}

/// GMRES on `S (M⁻¹ + Z C⁻¹ Zᵀ) x' = b`.
pub fn two_level_schwarz_solve(
    s: &dyn LinearOperator,
    minv: &dyn LinearOperator,
    cs: &CoarseSpace,
    b: &[f64],
    opts: &GmresOptions,
) -> Result<InterfaceSolve> {
    check_len("two_level_schwarz_solve", s.dim(), b.len())?;
    let counted = Counted::new(s);
    let precond = FnOperator {
        dim: s.dim(),
        f: |x: &[f64], y: &mut [f64]| {
            minv.apply(x, y);
            for (yi, ci) in y.iter_mut().zip(cs.correction(x)) {
                *yi += ci;
            }
        },
    };
    let (x, report) = gmres_right_preconditioned(&counted, &precond, b, opts)?;
    let schur_residual = relative_residual(s, &x, b);
    Ok(InterfaceSolve {
        s_applies_per_iteration: per_iteration(counted.count(), 1, &report),
        x,
        report,
        schur_residual,
    })
}

/// Right-preconditioned GMRES with `M⁻¹` only (or no preconditioner).
pub fn plain_solve(
    s: &dyn LinearOperator,
    minv: Option<&dyn LinearOperator>,
    b: &[f64],
    opts: &GmresOptions,
) -> Result<InterfaceSolve> {
    let counted = Counted::new(s);
    let (x, report) = match minv {
        Some(m) => gmres_right_preconditioned(&counted, m, b, opts)?,
        None => crate::krylov::gmres(&counted, b, opts)?,
    };
    let schur_residual = relative_residual(s, &x, b);
    Ok(InterfaceSolve {
        s_applies_per_iteration: per_iteration(counted.count(), 1, &report),
        x,
        report,
        schur_residual,
    })
}
