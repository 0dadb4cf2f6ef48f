//! Full GMRES with Householder-reflection Arnoldi and right preconditioning.

use std::time::Instant;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, norm2};

/// A square real linear map.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

#[derive(Clone, Debug)]
pub struct GmresOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Also report `‖VᵀV - I‖_max` for the Krylov basis.
    pub track_orthogonality: bool,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2000,
            track_orthogonality: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KrylovReport {
    pub iterations: usize,
    /// `‖r_j‖ / ‖b‖` for `j = 0..=iterations`.
    pub rel_residual_history: Vec<f64>,
    pub converged: bool,
    pub wall_time: f64,
    /// Recomputed from the returned solution.
    pub true_rel_residual: f64,
    /// Set when the recomputed residual exceeds ten times the tolerance.
    pub residual_drift: bool,
    pub orthogonality_error: Option<f64>,
}

impl KrylovReport {
    pub fn final_rel_residual(&self) -> f64 {
        *self.rel_residual_history.last().unwrap_or(&0.0)
    }
}

/// Householder reflector `I - 2 w wᵀ` mapping `x` to `alpha e_0`.
fn reflector(x: &[f64]) -> (Vec<f64>, f64) {
    let sigma = norm2(x);
    if sigma == 0.0 {
        return (vec![0.0; x.len()], 0.0);
    }
    let alpha = if x[0] >= 0.0 { -sigma } else { sigma };
    let mut w = x.to_vec();
    w[0] -= alpha;
    let nw = norm2(&w);
    for v in w.iter_mut() {
        *v /= nw;
    }
    (w, alpha)
}

/// Applies the reflector stored for offset `j` to `v[j..]`.
fn reflect(w: &[f64], j: usize, v: &mut [f64]) {
    let tail = &mut v[j..];
    let s = 2.0 * dot(w, tail);
    if s != 0.0 {
        for (t, wi) in tail.iter_mut().zip(w) {
            *t -= s * wi;
        }
    }
}

pub fn gmres(op: &dyn LinearOperator, b: &[f64], opts: &GmresOptions) -> Result<(Vec<f64>, KrylovReport)> {
    gmres_impl(op, None, b, opts)
}

/// Solves `op(M⁻¹ x') = b` and returns `x = M⁻¹ x'`. The reported residuals
/// are those of the original system.
pub fn gmres_right_preconditioned(
    op: &dyn LinearOperator,
    minv: &dyn LinearOperator,
    b: &[f64],
    opts: &GmresOptions,
) -> Result<(Vec<f64>, KrylovReport)> {
    check_len("preconditioner", op.dim(), minv.dim())?;
    gmres_impl(op, Some(minv), b, opts)
}

fn gmres_impl(
    op: &dyn LinearOperator,
    minv: Option<&dyn LinearOperator>,
    b: &[f64],
    opts: &GmresOptions,
) -> Result<(Vec<f64>, KrylovReport)> {
    let start = Instant::now();
    let n = op.dim();
    check_len("gmres rhs", n, b.len())?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(0));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            KrylovReport {
                iterations: 0,
                rel_residual_history: vec![0.0],
                converged: true,
                wall_time: start.elapsed().as_secs_f64(),
                true_rel_residual: 0.0,
                residual_drift: false,
                orthogonality_error: opts.track_orthogonality.then_some(0.0),
            },
        ));
    }

    let precond = |v: &[f64]| -> Vec<f64> {
        match minv {
            Some(m) => {
                let mut out = vec![0.0; n];
                m.apply(v, &mut out);
                out
            }
            None => v.to_vec(),
        }
    };

    let mut refl: Vec<Vec<f64>> = Vec::new();
    let (w0, alpha0) = reflector(b);
    refl.push(w0);
    let mut g = vec![alpha0];
    let mut history = vec![1.0];
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut rcols: Vec<Vec<f64>> = Vec::new();
    let mut hnorm = 0.0_f64;
    let max_iter = opts.max_iter.min(n);
    let mut z = vec![0.0; n];
    let mut av = vec![0.0; n];

    for j in 0..max_iter {
        // v_j = P_0 ... P_j e_j
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        for i in (0..=j).rev() {
            reflect(&refl[i], i, &mut v);
        }
        let pv = precond(&v);
        op.apply(&pv, &mut av);
        if av.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(j + 1));
        }
        z.copy_from_slice(&av);
        for (i, w) in refl.iter().enumerate() {
            reflect(w, i, &mut z);
        }
        let mut h: Vec<f64> = z[..=j].to_vec();
        let alpha = if j + 1 < n {
            let (w, a) = reflector(&z[j + 1..]);
            refl.push(w);
            a
        } else {
            0.0
        };
        h.push(alpha);
        hnorm = hnorm.max(norm2(&h));
        for i in 0..j {
            let t = cs[i] * h[i] + sn[i] * h[i + 1];
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
            h[i] = t;
        }
        let r = h[j].hypot(h[j + 1]);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (h[j] / r, h[j + 1] / r) };
        cs.push(c);
        sn.push(s);
        h[j] = r;
        h.truncate(j + 1);
        rcols.push(h);
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        let res = g[j + 1].abs() / bnorm;
        history.push(res);
        let breakdown = alpha.abs() <= 1e-14 * hnorm;
        if res <= opts.tol || breakdown {
            break;
        }
    }

    let m = rcols.len();
    // back substitution R y = g
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = g[i];
        for (jj, yj) in y.iter().enumerate().skip(i + 1) {
            acc -= rcols[jj][i] * yj;
        }
        y[i] = if rcols[i][i] != 0.0 { acc / rcols[i][i] } else { 0.0 };
    }
    let mut u = vec![0.0; n];
    for i in (0..m).rev() {
        u[i] += y[i];
        reflect(&refl[i], i, &mut u);
    }
    let x = precond(&u);

    op.apply(&x, &mut av);
    let rtrue: Vec<f64> = b.iter().zip(&av).map(|(bi, ai)| bi - ai).collect();
    let true_rel = norm2(&rtrue) / bnorm;
    let final_res = *history.last().unwrap();

    let orthogonality_error = opts.track_orthogonality.then(|| {
        let basis: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let mut v = vec![0.0; n];
                v[j] = 1.0;
                for i in (0..=j).rev() {
                    reflect(&refl[i], i, &mut v);
                }
                v
            })
            .collect();
        let mut worst = 0.0_f64;
        for a in 0..m {
            for c in a..m {
                let e = dot(&basis[a], &basis[c]) - if a == c { 1.0 } else { 0.0 };
                worst = worst.max(e.abs());
            }
        }
        worst
    });

    Ok((
        x,
        KrylovReport {
            iterations: m,
            rel_residual_history: history,
            converged: final_res <= opts.tol,
            wall_time: start.elapsed().as_secs_f64(),
            true_rel_residual: true_rel,
            residual_drift: true_rel > 10.0 * opts.tol,
            orthogonality_error,
        },
    ))
}
