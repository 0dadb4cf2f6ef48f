//! Gauss-Lobatto-Legendre collocation points, quadrature weights and the
//! nodal differentiation matrix.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

/// GLL grid of `n` points on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GllBasis {
    n: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    diff: DenseMatrix,
}

impl GllBasis {
    pub fn new(n: usize) -> Result<Self> {
        let (nodes, weights) = gll_nodes_weights(n)?;
        let diff = diff_matrix(&nodes);
        Ok(Self {
            n,
            nodes,
            weights,
            diff,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `D[i][j] = l_j'(x_i)`.
    pub fn diff(&self) -> &DenseMatrix {
        &self.diff
    }
}

/// Legendre polynomials `P_{N-1}(x)` and `P_N(x)` by the three-term recurrence.
fn legendre_pair(degree: usize, x: f64) -> (f64, f64) {
    let (mut p_prev, mut p) = (1.0, x);
    if degree == 0 {
        return (0.0, 1.0);
    }
    for k in 2..=degree {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    (p_prev, p)
}

/// Nodes are the roots of `(1 - x²) P'_{n-1}(x)`. The interior roots are found
/// by Newton iteration on `P'_{n-1}` starting from Chebyshev-Gauss-Lobatto
/// points.
pub fn gll_nodes_weights(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::InvalidOrder(n));
    }
    let deg = n - 1;
    let df = deg as f64;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[deg] = 1.0;
    for (i, node) in nodes.iter_mut().enumerate().take(deg).skip(1) {
        let mut x = -(std::f64::consts::PI * i as f64 / df).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (pm1, p) = legendre_pair(deg, x);
            // P'_N = N (x P_N - P_{N-1}) / (x² - 1), and P''_N from Legendre's equation.
            let dp = df * (x * p - pm1) / (x * x - 1.0);
            let ddp = (2.0 * x * dp - df * (df + 1.0) * p) / (1.0 - x * x);
            let step = dp / ddp;
            x -= step;
            if step.abs() <= NEWTON_TOL {
                break;
            }
        }
        *node = x;
    }
    // Enforce exact symmetry about the origin.
    for i in 0..n / 2 {
        let v = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -v;
        nodes[n - 1 - i] = v;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (_, p) = legendre_pair(deg, x);
            2.0 / (df * (df + 1.0) * p * p)
        })
        .collect();
    Ok((nodes, weights))
}

/// Spectral differentiation matrix on GLL nodes. Off-diagonal entries use the
/// closed form `P_N(x_i) / (P_N(x_j) (x_i - x_j))`; the diagonal is set by the
/// negative-sum trick so that constants are differentiated to zero exactly.
pub fn diff_matrix(nodes: &[f64]) -> DenseMatrix {
    let n = nodes.len();
    let deg = n - 1;
    let p: Vec<f64> = nodes.iter().map(|&x| legendre_pair(deg, x).1).collect();
    let mut d = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            if i != j {
                let v = p[i] / (p[j] * (nodes[i] - nodes[j]));
                d[(i, j)] = v;
                sum += v;
            }
        }
        d[(i, i)] = -sum;
    }
    d
}
