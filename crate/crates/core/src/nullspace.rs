//! Left null vectors of `S` and `L` and the consistency projections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::deflation::apply_zt;
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, fix_sign, line_angle, norm2, normalize, DenseMatrix, LuFactor};
use crate::operator::{LuBlocks, SmpmOperator};
use crate::schur::SchurSystem;

const START_SEED: u64 = 0x5eed_0001;

#[derive(Clone, Debug)]
pub struct InverseIterationOptions {
    /// Shift; `None` picks `1e-8 ‖S‖_F / √k`.
    pub sigma: Option<f64>,
    /// Stop once `‖u_Sᵀ S‖ ≤ tol ‖S‖_F`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InverseIterationOptions {
    fn default() -> Self {
        Self {
            sigma: None,
            tol: 1e-9,
            max_iter: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LeftNullVector {
    pub u: Vec<f64>,
    pub sigma: f64,
    pub iterations: usize,
    /// `‖uᵀ S‖ / ‖S‖_F` after each step.
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct NullSpaceData {
    pub u_s: Vec<f64>,
    pub u_l: Vec<f64>,
    pub u_c: Vec<f64>,
    pub sigma: f64,
    pub iterations: usize,
}

impl NullSpaceData {
    pub fn compute(
        op: &SmpmOperator,
        lu: &LuBlocks,
        sys: &SchurSystem,
        opts: &InverseIterationOptions,
    ) -> Result<Self> {
        let s = left_null_vector_s(sys, opts)?;
        let u_l = left_null_vector_l(op, lu, &s.u)?;
        let mut u_c = apply_zt(op.dec.interface_len(), &s.u)?;
        normalize(&mut u_c);
        fix_sign(&mut u_c);
        Ok(Self {
            u_s: s.u,
            u_l,
            u_c,
            sigma: s.sigma,
            iterations: s.iterations,
        })
    }
}

/// Shifted inverse iteration on `Sᵀ - σ I`.
pub fn left_null_vector_s(sys: &SchurSystem, opts: &InverseIterationOptions) -> Result<LeftNullVector> {
    let k = sys.k();
    let fro = sys.frobenius_norm();
    let sigma = opts.sigma.unwrap_or(1e-8 * fro / (k as f64).sqrt());
    let solve: Box<dyn Fn(&[f64]) -> Result<Vec<f64>>> = match sys.shifted_transpose(sigma).factor() {
        Ok(lu) => Box::new(move |b| lu.solve(b)),
        Err(_) => {
            // Pivoting confined to blocks can fail; fall back to a full LU.
            let mut dense = sys.dense().transpose();
            dense.add_diagonal(-sigma);
            let lu = LuFactor::new(dense)?;
            Box::new(move |b| Ok(lu.solve(b)))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut x: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut x);
    let mut residuals = Vec::new();
    for it in 1..=opts.max_iter {
        x = solve(&x)?;
        if normalize(&mut x) == 0.0 || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InverseIteration {
                iterations: it,
                residual: f64::NAN,
            });
        }
        fix_sign(&mut x);
        let res = norm2(&sys.apply_transpose(&x)?) / fro;
        residuals.push(res);
        if res <= opts.tol {
            return Ok(LeftNullVector {
                u: x,
                sigma,
                iterations: it,
                residuals,
            });
        }
    }
    Err(Error::InverseIteration {
        iterations: opts.max_iter,
        residual: *residuals.last().unwrap_or(&f64::NAN),
    })
}

/// `A⁻ᵀ Bᵀ u_S` without normalization.
pub fn raw_left_null_l(op: &SmpmOperator, lu: &LuBlocks, u_s: &[f64]) -> Result<Vec<f64>> {
    Ok(lu.solve_full_transpose(&op.apply_bt(u_s)?))
}

/// `u_L = normalize(A⁻ᵀ Bᵀ u_S)`.
pub fn left_null_vector_l(op: &SmpmOperator, lu: &LuBlocks, u_s: &[f64]) -> Result<Vec<f64>> {
    let mut u = raw_left_null_l(op, lu, u_s)?;
    normalize(&mut u);
    fix_sign(&mut u);
    Ok(u)
}

/// `Lᵀ v = Aᵀ v + Bᵀ Eᵀ v`.
pub fn apply_lt(op: &SmpmOperator, v: &[f64]) -> Result<Vec<f64>> {
    check_len("apply_Lt", op.num_nodes(), v.len())?;
    let mut out = op.apply_bt(&op.dec.apply_et(v)?)?;
    for s in 0..op.num_strips() {
        let r = op.strip_range(s);
        let part = op.blocks.block(s).matvec_transpose(&v[r.clone()]);
        for (o, p) in out[r].iter_mut().zip(part) {
            *o += p;
        }
    }
    Ok(out)
}

/// `f - u (uᵀ f)` for unit `u`.
pub fn project(f: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_len("projection", u.len(), f.len())?;
    let c = dot(u, f);
    Ok(f.iter().zip(u).map(|(fi, ui)| fi - c * ui).collect())
}

pub fn project_rhs_full(f: &[f64], u_l: &[f64]) -> Result<Vec<f64>> {
    project(f, u_l)
}

pub fn project_rhs_schur(b_s: &[f64], u_s: &[f64]) -> Result<Vec<f64>> {
    project(b_s, u_s)
}

/// Angles of the two parallelism relations between the null vectors:
/// `u_S ∥ Eᵀ u_L` and `u_L ∥ A⁻ᵀ Bᵀ u_S`.
pub fn null_vector_angles(op: &SmpmOperator, lu: &LuBlocks, u_s: &[f64], u_l: &[f64]) -> Result<(f64, f64)> {
    let etu = op.dec.apply_et(u_l)?;
    let back = raw_left_null_l(op, lu, u_s)?;
    Ok((line_angle(u_s, &etu), line_angle(u_l, &back)))
}

/// Dense right singular vector of the smallest singular value of `Mᵀ` via
/// inverse iteration on `M Mᵀ`; oracle for small systems only.
pub fn dense_left_null_vector(m: &DenseMatrix) -> Result<Vec<f64>> {
    let n = m.rows();
    if n > 6000 {
        return Err(Error::OracleGuard(format!("dense null vector of dimension {n}")));
    }
    let mut gram = m.matmul(&m.transpose());
    let shift = 1e-12 * gram.frobenius_norm();
    gram.add_diagonal(shift);
    let lu = LuFactor::new(gram)?;
    let mut x = vec![1.0; n];
    for (i, v) in x.iter_mut().enumerate() {
        *v += (i as f64 * 0.37).sin();
    }
    normalize(&mut x);
    for _ in 0..6 {
        x = lu.solve(&x);
        normalize(&mut x);
    }
    fix_sign(&mut x);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    fn setup(n: usize, mx: usize, mz: usize) -> (SmpmOperator, LuBlocks, SchurSystem) {
        let op = SmpmOperator::new(Mesh::new(n, mx, mz, mx as f64, mz as f64).unwrap(), 1.0).unwrap();
        let lu = op.factor_blocks().unwrap();
        let sys = SchurSystem::assemble(&op, &lu).unwrap();
        (op, lu, sys)
    }

    #[test]
    fn schur_left_null_vector() {
        let (_, _, sys) = setup(5, 2, 2);
        let r = left_null_vector_s(&sys, &InverseIterationOptions::default()).unwrap();
        assert!(r.iterations <= 3, "{:?}", r.residuals);
        assert!((norm2(&r.u) - 1.0).abs() < 1e-14);
        let dense = dense_left_null_vector(&sys.dense()).unwrap();
        assert!(line_angle(&dense, &r.u) < 1e-7);
        let res = norm2(&sys.apply_transpose(&r.u).unwrap()) / sys.frobenius_norm();
        assert!(res < 1e-10, "{res}");
    }

    #[test]
    fn null_vectors_are_related() {
        let (op, lu, sys) = setup(5, 4, 3);
        let ns = NullSpaceData::compute(&op, &lu, &sys, &InverseIterationOptions::default()).unwrap();
        let (a1, a2) = null_vector_angles(&op, &lu, &ns.u_s, &ns.u_l).unwrap();
        assert!(a1 < 1e-7 && a2 < 1e-7, "{a1} {a2}");
        let ltu = apply_lt(&op, &ns.u_l).unwrap();
        assert!(norm2(&ltu) <= 1e-8 * op.row_scale());
        assert!((norm2(&ns.u_c) - 1.0).abs() < 1e-14);
        // scaling u_S leaves u_L unchanged
        let scaled: Vec<f64> = ns.u_s.iter().map(|v| 7.0 * v).collect();
        let u2 = left_null_vector_l(&op, &lu, &scaled).unwrap();
        for i in 0..u2.len() {
            assert!((u2[i] - ns.u_l[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn null_and_range_of_s_are_orthogonal() {
        let (op, lu, sys) = setup(4, 3, 2);
        let ns = NullSpaceData::compute(&op, &lu, &sys, &InverseIterationOptions::default()).unwrap();
        let v: Vec<f64> = (0..sys.k()).map(|i| (i as f64 * 1.3).cos()).collect();
        let sv = sys.apply(&v).unwrap();
        assert!(dot(&ns.u_s, &sv).abs() < 1e-9 * sys.frobenius_norm() * norm2(&v));
    }

    #[test]
    fn projections() {
        let u = {
            let mut u = vec![1.0, 2.0, -1.0, 0.5];
            normalize(&mut u);
            u
        };
        let p = project(&u, &u).unwrap();
        assert!(norm2(&p) < 1e-15);
        let f = vec![2.0, -1.0, 0.0, 0.0];
        assert_eq!(project(&f, &u).unwrap(), f);
        let g = vec![0.3, 0.1, 4.0, -2.0];
        let once = project(&g, &u).unwrap();
        let twice = project(&once, &u).unwrap();
        for i in 0..4 {
            assert!((once[i] - twice[i]).abs() < 1e-15);
        }
        assert!(dot(&once, &u).abs() <= 1e-13 * norm2(&g));
        assert!(project(&g[..3], &u).is_err());
    }
}
