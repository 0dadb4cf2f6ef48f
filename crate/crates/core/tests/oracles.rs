use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smpm_schur::linalg::{norm2, norm_inf, DenseMatrix};
use smpm_schur::nullspace::project_rhs_full;
use smpm_schur::solver::{dense_reference_solution, remove_mean, Method, PoissonSolver};
use smpm_schur::{Mesh, SmpmOperator};

/// Barycentric differentiation matrix on the given nodes.
fn lagrange_diff(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let w: Vec<f64> = (0..n)
        .map(|j| 1.0 / (0..n).filter(|&k| k != j).map(|k| x[j] - x[k]).product::<f64>())
        .collect();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i][j] = (w[j] / w[i]) / (x[i] - x[j]);
            }
        }
        d[i][i] = -(0..n).filter(|&j| j != i).map(|j| d[i][j]).sum::<f64>();
    }
    d
}

/// Builds `L` node by node from coordinates alone: Laplacian everywhere,
/// `tau n·∇` on every element face, and the Robin mismatch against the
/// coincident node of the neighboring element.
fn independent_l(mesh: &Mesh, c_tau: f64) -> DenseMatrix {
    let n = mesh.n;
    let nn = n * n;
    let d = lagrange_diff(mesh.basis.nodes());
    let (hx, hz) = (mesh.hx, mesh.hz);
    let tau = c_tau * (n * n) as f64 / hx.min(hz);
    let r = mesh.num_nodes();
    let coords = mesh.coords();
    let mut l = DenseMatrix::zeros(r, r);
    let elem = |ix: isize, iz: isize| -> Option<usize> {
        (ix >= 0 && iz >= 0 && (ix as usize) < mesh.mx && (iz as usize) < mesh.mz)
            .then(|| ix as usize * mesh.mz + iz as usize)
    };
    // gradient row of node (a, b) in element e, dotted with normal
    let grad = |e: usize, a: usize, b: usize, nx: f64, nz: f64| -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for c in 0..n {
            out.push((e * nn + c * n + b, nx * 2.0 / hx * d[a][c]));
            out.push((e * nn + a * n + c, nz * 2.0 / hz * d[b][c]));
        }
        out
    };
    for e in 0..mesh.num_elements() {
        let (ix, iz) = ((e / mesh.mz) as isize, (e % mesh.mz) as isize);
        for a in 0..n {
            for b in 0..n {
                let row = e * nn + a * n + b;
                for c in 0..n {
                    let dxx: f64 = (0..n).map(|k| d[a][k] * d[k][c]).sum();
                    let dzz: f64 = (0..n).map(|k| d[b][k] * d[k][c]).sum();
                    l[(row, e * nn + c * n + b)] += (2.0 / hx).powi(2) * dxx;
                    l[(row, e * nn + a * n + c)] += (2.0 / hz).powi(2) * dzz;
                }
                let mut faces = Vec::new();
                if a == 0 {
                    faces.push((-1.0, 0.0, elem(ix - 1, iz)));
                }
                if a == n - 1 {
                    faces.push((1.0, 0.0, elem(ix + 1, iz)));
                }
                if b == 0 {
                    faces.push((0.0, -1.0, elem(ix, iz - 1)));
                }
                if b == n - 1 {
                    faces.push((0.0, 1.0, elem(ix, iz + 1)));
                }
                for (nx, nz, nbr) in faces {
                    for (col, w) in grad(e, a, b, nx, nz) {
                        l[(row, col)] += tau * w;
                    }
                    let Some(ne) = nbr else { continue };
                    let p = coords[row];
                    let m = (ne * nn..(ne + 1) * nn)
                        .min_by(|&i, &j| {
                            let di = (coords[i][0] - p[0]).hypot(coords[i][1] - p[1]);
                            let dj = (coords[j][0] - p[0]).hypot(coords[j][1] - p[1]);
                            di.total_cmp(&dj)
                        })
                        .unwrap();
                    let (ma, mb) = ((m - ne * nn) / n, (m - ne * nn) % n);
                    l[(row, row)] += tau;
                    l[(row, m)] -= tau;
                    for (col, w) in grad(ne, ma, mb, nx, nz) {
                        l[(row, col)] -= tau * w;
                    }
                }
            }
        }
    }
    l
}

#[test]
fn split_operator_matches_independent_assembly() {
    for &(n, mx, mz, lx, lz, c) in &[
        (4, 2, 1, 1.0, 1.0, 1.0),
        (5, 3, 2, 6.0, 1.0, 1.0),
        (6, 4, 3, 2.0, 5.0, 2.5),
        (3, 5, 4, 5.0, 4.0, 0.5),
    ] {
        let mesh = Mesh::new(n, mx, mz, lx, lz).unwrap();
        let want = independent_l(&mesh, c);
        let op = SmpmOperator::new(mesh, c).unwrap();
        let got = op.dense_l();
        let mut diff = 0.0_f64;
        for (x, y) in got.as_slice().iter().zip(want.as_slice()) {
            diff = diff.max((x - y).abs());
        }
        assert!(diff <= 1e-10 * want.max_abs(), "n={n} mx={mx} mz={mz}: {diff}");

        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let u: Vec<f64> = (0..op.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lu = op.apply_l(&u).unwrap();
        let du = want.matvec(&u);
        let err: Vec<f64> = lu.iter().zip(&du).map(|(a, b)| a - b).collect();
        assert!(norm2(&err) <= 1e-11 * norm2(&du));
    }
}

fn check_pipeline(n: usize, mx: usize, mz: usize, lx: f64, lz: f64, seed: u64) {
    let solver = PoissonSolver::new(Mesh::new(n, mx, mz, lx, lz).unwrap(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Vec<f64> = (0..solver.op.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f_tilde = project_rhs_full(&f, &solver.null.u_l).unwrap();
    let reference = dense_reference_solution(&solver.op, &solver.null.u_l, &f_tilde).unwrap();
    let opts = Default::default();
    for m in Method::ALL {
        let sol = solver.solve(&f, m, &opts).unwrap();
        assert!(sol.interface.report.converged, "{m} did not converge");
        let u = remove_mean(&sol.u);
        let err: Vec<f64> = u.iter().zip(&reference).map(|(a, b)| a - b).collect();
        let rel = norm_inf(&err) / norm_inf(&reference);
        assert!(rel <= 1e-8, "{m} on {n}/{mx}/{mz}: {rel}");
    }
}

#[test]
fn pipeline_matches_dense_direct_solve() {
    check_pipeline(6, 6, 4, 6.0, 4.0, 3);
    check_pipeline(4, 2, 2, 1.0, 1.0, 4);
    check_pipeline(5, 7, 3, 21.0, 1.0, 5);
}

#[test]
fn consistent_rhs_is_left_unchanged_by_projection() {
    let solver = PoissonSolver::new(Mesh::new(5, 4, 3, 4.0, 3.0).unwrap(), 1.0).unwrap();
    let u: Vec<f64> = solver.op.mesh.sample(|x, z| (x * 0.7).sin() + z * z);
    let f = solver.op.apply_l(&u).unwrap();
    let f_tilde = project_rhs_full(&f, &solver.null.u_l).unwrap();
    let err: Vec<f64> = f.iter().zip(&f_tilde).map(|(a, b)| a - b).collect();
    assert!(norm2(&err) <= 1e-10 * norm2(&f));
    let sol = solver.solve(&f, Method::Deflated, &Default::default()).unwrap();
    let got = remove_mean(&sol.u);
    let want = remove_mean(&u);
    let e: Vec<f64> = got.iter().zip(&want).map(|(a, b)| a - b).collect();
    assert!(norm_inf(&e) <= 1e-7 * norm_inf(&want), "{}", norm_inf(&e));
}

#[test]
fn residual_bound_holds_on_random_rhs() {
    let solver = PoissonSolver::new(Mesh::new(6, 5, 3, 5.0, 3.0).unwrap(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for m in Method::ALL {
        let f: Vec<f64> = (0..solver.op.num_nodes()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sol = solver.solve(&f, m, &Default::default()).unwrap();
        let (lhs, rhs) = solver.residual_bound(&sol).unwrap();
        assert!(lhs <= rhs, "{m}: {lhs} > {rhs}");
    }
}
