//! Schur complement solvers for a discontinuous spectral multidomain penalty
//! discretization of the Poisson-Neumann problem, with block-Jacobi,
//! deflation and two-level Schwarz preconditioning and a Fourier-extended
//! Helmholtz path.

pub mod bench;
pub mod deflation;
pub mod error;
pub mod gll;
pub mod helmholtz;
pub mod krylov;
pub mod linalg;
pub mod mesh;
pub mod nullspace;
pub mod operator;
pub mod schur;
pub mod solver;

pub use error::{Error, Result};
pub use gll::GllBasis;
pub use mesh::{Decomposition, Mesh};
pub use operator::SmpmOperator;
