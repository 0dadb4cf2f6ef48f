//! The full two-dimensional pipeline: project the right-hand side, form the
//! interface right-hand side, solve the interface system with one of four
//! strategies, and back-substitute.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::deflation::{deflated_solve, plain_solve, two_level_schwarz_solve, CoarseSpace, InterfaceSolve};
use crate::error::{Error, Result};
use crate::krylov::{FnOperator, GmresOptions};
use crate::linalg::{norm2, DenseMatrix, LuFactor};
use crate::mesh::Mesh;
use crate::nullspace::{project_rhs_full, project_rhs_schur, raw_left_null_l, InverseIterationOptions, NullSpaceData};
use crate::operator::{LuBlocks, SmpmOperator};
use crate::schur::{recover_solution, schur_rhs, BlockJacobi, SchurSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Unpreconditioned.
    Schur,
    /// Block-Jacobi.
    BlockJacobi,
    /// Deflation with block-Jacobi.
    Deflated,
    /// Two-level additive Schwarz.
    TwoLevel,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Schur, Method::BlockJacobi, Method::Deflated, Method::TwoLevel];

    pub fn name(self) -> &'static str {
        match self {
            Method::Schur => "schur",
            Method::BlockJacobi => "bj",
            Method::Deflated => "dbj",
            Method::TwoLevel => "2las",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (expected schur, bj, dbj or 2las)")))
    }
}

pub struct PoissonSolver {
    pub op: SmpmOperator,
    pub lu: LuBlocks,
    pub sys: SchurSystem,
    pub bj: BlockJacobi,
    pub null: NullSpaceData,
    pub coarse: CoarseSpace,
    pub setup_time: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: Vec<f64>,
    pub x_s: Vec<f64>,
    pub f_tilde: Vec<f64>,
    /// Unprojected `B A⁻¹ f̃`.
    pub b_s: Vec<f64>,
    /// `(I - u_S u_Sᵀ) b_S`.
    pub b_s_projected: Vec<f64>,
    pub interface: InterfaceSolve,
}

impl PoissonSolver {
    pub fn new(mesh: Mesh, c_tau: f64) -> Result<Self> {
        let start = Instant::now();
        let op = SmpmOperator::new(mesh, c_tau)?;
        let lu = op.factor_blocks()?;
        let sys = SchurSystem::assemble(&op, &lu)?;
        let bj = BlockJacobi::new(&sys)?;
        let null = NullSpaceData::compute(&op, &lu, &sys, &InverseIterationOptions::default())?;
        let coarse = CoarseSpace::build(&sys, op.dec.interface_len(), Some(null.u_c.clone()))?;
        Ok(Self {
            op,
            lu,
            sys,
            bj,
            null,
            coarse,
            setup_time: start.elapsed().as_secs_f64(),
        })
    }

    pub fn solve(&self, f: &[f64], method: Method, opts: &GmresOptions) -> Result<Solution> {
        let f_tilde = project_rhs_full(f, &self.null.u_l)?;
        let b_s = schur_rhs(&self.op, &self.lu, &f_tilde)?;
        let b_s_projected = project_rhs_schur(&b_s, &self.null.u_s)?;
        let interface = self.solve_interface(&b_s_projected, method, opts)?;
        let u = recover_solution(&self.op, &self.lu, &f_tilde, &interface.x)?;
        Ok(Solution {
            u,
            x_s: interface.x.clone(),
            f_tilde,
            b_s,
            b_s_projected,
            interface,
        })
    }

    pub fn solve_interface(&self, b: &[f64], method: Method, opts: &GmresOptions) -> Result<InterfaceSolve> {
        let minv = FnOperator {
            dim: self.sys.k(),
            f: |x: &[f64], y: &mut [f64]| {
                y.copy_from_slice(x);
                self.bj.solve_in_place(y);
            },
        };
        match method {
            Method::Schur => plain_solve(&self.sys, None, b, opts),
            Method::BlockJacobi => plain_solve(&self.sys, Some(&minv), b, opts),
            Method::Deflated => deflated_solve(&self.sys, &minv, &self.coarse, b, opts),
            Method::TwoLevel => two_level_schwarz_solve(&self.sys, &minv, &self.coarse, b, opts),
        }
    }

    /// Both sides of the bound `‖L u - f̃‖ ≤ ‖S x_S - (I - u_S u_Sᵀ) b_S‖ + slack`,
    /// with the rounding slack `10 eps (‖b_S‖ + ‖S‖_F ‖x_S‖ + ‖A⁻ᵀBᵀu_S‖ ‖f̃‖)`.
    pub fn residual_bound(&self, sol: &Solution) -> Result<(f64, f64)> {
        let lu_res: Vec<f64> = self
            .op
            .apply_l(&sol.u)?
            .iter()
            .zip(&sol.f_tilde)
            .map(|(a, b)| a - b)
            .collect();
        let sx = self.sys.apply(&sol.x_s)?;
        let s_res: Vec<f64> = sx.iter().zip(&sol.b_s_projected).map(|(a, b)| a - b).collect();
        let lift = norm2(&raw_left_null_l(&self.op, &self.lu, &self.null.u_s)?);
        let scale = norm2(&sol.b_s) + self.sys.frobenius_norm() * norm2(&sol.x_s) + lift * norm2(&sol.f_tilde);
        Ok((norm2(&lu_res), norm2(&s_res) + 10.0 * f64::EPSILON * scale))
    }
}

pub fn remove_mean(u: &[f64]) -> Vec<f64> {
    let m = u.iter().sum::<f64>() / u.len().max(1) as f64;
    u.iter().map(|v| v - m).collect()
}

/// Dense reference: solves the bordered system `[L u_L; 1ᵀ 0]` for the
/// zero-mean solution of `L u = f̃`.
pub fn dense_reference_solution(op: &SmpmOperator, u_l: &[f64], f_tilde: &[f64]) -> Result<Vec<f64>> {
    let r = op.num_nodes();
    if r > 5000 {
        return Err(Error::OracleGuard(format!(
            "dense solve with {r} unknowns exceeds 5000"
        )));
    }
    let l = op.dense_l();
    let mut m = DenseMatrix::zeros(r + 1, r + 1);
    for i in 0..r {
        m.row_mut(i)[..r].copy_from_slice(l.row(i));
        m[(i, r)] = u_l[i];
        m[(r, i)] = 1.0;
    }
    let mut rhs = f_tilde.to_vec();
    rhs.push(0.0);
    let x = LuFactor::new(m)?.solve(&rhs);
    Ok(x[..r].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_inf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("cg".parse::<Method>().is_err());
    }

    #[test]
    fn all_methods_match_dense_reference() {
        let solver = PoissonSolver::new(Mesh::new(5, 4, 3, 4.0, 3.0).unwrap(), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f: Vec<f64> = (0..solver.op.num_nodes()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let opts = GmresOptions::default();
        let f_tilde = project_rhs_full(&f, &solver.null.u_l).unwrap();
        let reference = dense_reference_solution(&solver.op, &solver.null.u_l, &f_tilde).unwrap();
        for m in Method::ALL {
            let sol = solver.solve(&f, m, &opts).unwrap();
            let u = remove_mean(&sol.u);
            let err: Vec<f64> = u.iter().zip(&reference).map(|(a, b)| a - b).collect();
            assert!(norm_inf(&err) <= 1e-8 * norm_inf(&reference), "{m}: {}", norm_inf(&err));
            let (lhs, rhs) = solver.residual_bound(&sol).unwrap();
            assert!(lhs <= rhs, "{m}: {lhs} > {rhs}");
        }
    }
}
