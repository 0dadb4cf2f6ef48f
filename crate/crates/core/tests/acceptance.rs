//! Acceptance run: one line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smpm_schur::bench::{mean_iterations, run_convergence_study, sweep_aspect, sweep_mx, trial_rhs, ExperimentConfig};
use smpm_schur::deflation::Projections;
use smpm_schur::helmholtz::{
    factor_unshifted_blocks, solve_3d, solve_3d_independent, wavenumber, FourierContext, HessenbergFactor,
};
use smpm_schur::krylov::{gmres, FnOperator, GmresOptions, KrylovReport};
use smpm_schur::linalg::{norm2, norm_inf, DenseMatrix, LuFactor};
use smpm_schur::nullspace::{null_vector_angles, project_rhs_full};
use smpm_schur::operator::LocalSolve;
use smpm_schur::solver::{dense_reference_solution, remove_mean, Method, PoissonSolver};
use smpm_schur::{Mesh, Result, SmpmOperator};

type Outcome = Result<(bool, String)>;

fn nonincreasing(r: &KrylovReport) -> bool {
    r.rel_residual_history.windows(2).all(|w| w[1] <= w[0])
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let e: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm_inf(&e) / norm_inf(b)
}

fn is_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    let min = v.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" ")
}

fn oracle_equivalence() -> Outcome {
    let solver = PoissonSolver::new(Mesh::new(6, 6, 4, 6.0, 4.0)?, 1.0)?;
    let opts = GmresOptions::default();
    let mut worst = 0.0_f64;
    let mut monotone = true;
    for seed in 0..3 {
        let f = trial_rhs(11, seed, solver.op.num_nodes());
        let f_tilde = project_rhs_full(&f, &solver.null.u_l)?;
        let reference = dense_reference_solution(&solver.op, &solver.null.u_l, &f_tilde)?;
        for m in Method::ALL {
            let sol = solver.solve(&f, m, &opts)?;
            monotone &= nonincreasing(&sol.interface.report);
            worst = worst.max(rel_inf(&remove_mean(&sol.u), &reference));
        }
    }
    Ok((
        worst <= 1e-8 && monotone,
        format!("max rel inf error {worst:.2e} (<= 1e-8), r = 864"),
    ))
}

fn null_space_directions() -> Outcome {
    let solver = PoissonSolver::new(Mesh::new(6, 6, 4, 6.0, 4.0)?, 1.0)?;
    let (a1, a2) = null_vector_angles(&solver.op, &solver.lu, &solver.null.u_s, &solver.null.u_l)?;
    let opts = GmresOptions::default();
    let mut worst = f64::NEG_INFINITY;
    for t in 0..50 {
        let f = trial_rhs(2024, t, solver.op.num_nodes());
        let sol = solver.solve(&f, Method::ALL[t % 4], &opts)?;
        let (lhs, rhs) = solver.residual_bound(&sol)?;
        worst = worst.max(lhs - rhs);
    }
    let ok = a1 < 1e-7 && a2 < 1e-7 && worst <= 0.0;
    Ok((
        ok,
        format!("angles {a1:.1e}, {a2:.1e} (< 1e-7); bound slack max {worst:.2e} over 50 rhs (<= 0)"),
    ))
}

fn aspect_ratio() -> Outcome {
    let cfg = ExperimentConfig {
        trials: 3,
        ..Default::default()
    };
    let etas = [1.0, 5.0, 10.0, 25.0, 50.0];
    let rows = sweep_aspect(&cfg, &etas, &[Method::Schur, Method::BlockJacobi])?;
    let its = |m: Method| -> Vec<f64> {
        etas.iter()
            .map(|&e| mean_iterations(&rows, m, cfg.mx, e).unwrap_or(f64::NAN))
            .collect()
    };
    let (schur, bj) = (its(Method::Schur), its(Method::BlockJacobi));
    let growth = schur[4] / schur[0];
    let ok = spread(&bj) <= 1.3 && is_increasing(&schur) && growth >= 3.0;
    Ok((
        ok,
        format!(
            "bj [{}] spread {:.2} (<= 1.3); schur [{}] monotone {} growth {growth:.2} (>= 3)",
            fmt_list(&bj),
            spread(&bj),
            fmt_list(&schur),
            is_increasing(&schur)
        ),
    ))
}

fn mx_sweep_rows() -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let cfg = ExperimentConfig {
        trials: 3,
        ..Default::default()
    };
    let mxs = vec![8, 16, 32, 64];
    let rows = sweep_mx(&cfg, &mxs, &Method::ALL)?;
    let its = Method::ALL
        .iter()
        .map(|&m| {
            mxs.iter()
                .map(|&mx| mean_iterations(&rows, m, mx, 1.0).unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    Ok((mxs, its))
}

fn mx_independence(its: &[Vec<f64>]) -> Outcome {
    let (schur, dbj, las) = (&its[0], &its[2], &its[3]);
    let dmax = dbj.iter().cloned().fold(0.0, f64::max);
    let lmax = las.iter().cloned().fold(0.0, f64::max);
    let ok = spread(dbj) <= 1.5 && dmax <= 45.0 && spread(las) <= 1.5 && lmax <= 45.0 && is_increasing(schur);
    Ok((
        ok,
        format!(
            "dbj [{}] spread {:.2} (<= 1.5) max {dmax:.1} (<= 45); 2las [{}] spread {:.2} max {lmax:.1}; schur [{}] monotone {}",
            fmt_list(dbj),
            spread(dbj),
            fmt_list(las),
            spread(las),
            fmt_list(schur),
            is_increasing(schur)
        ),
    ))
}

fn deflation_vs_schwarz(its: &[Vec<f64>]) -> Outcome {
    let ratios: Vec<f64> = its[2].iter().zip(&its[3]).map(|(d, l)| d / l).collect();
    let ok = ratios.iter().all(|&r| r <= 0.75);
    Ok((
        ok,
        format!(
            "dbj/2las ratios [{}] (<= 0.75)",
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(" ")
        ),
    ))
}

fn gmres_core() -> Outcome {
    let n = 400;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut orth = || HessenbergFactor::new(&DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))).q;
    let (u, v) = (orth(), orth());
    let sigma: Vec<f64> = (0..n).map(|i| 10f64.powf(-8.0 * i as f64 / (n - 1) as f64)).collect();
    let us = DenseMatrix::from_fn(n, n, |i, j| u[(i, j)] * sigma[j]);
    let a = us.matmul(&v.transpose());
    let cond = sigma[0] / sigma[n - 1];
    let op = FnOperator {
        dim: n,
        f: |x: &[f64], y: &mut [f64]| a.matvec_into(x, y),
    };
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let opts = GmresOptions {
        tol: 0.0,
        max_iter: 200,
        track_orthogonality: true,
    };
    let (_, rep) = gmres(&op, &b, &opts)?;
    let err = rep.orthogonality_error.unwrap_or(f64::INFINITY);
    let ok = rep.iterations == 200 && err <= 100.0 * f64::EPSILON && nonincreasing(&rep) && cond >= 1e8;
    Ok((
        ok,
        format!(
            "K = {}, cond {cond:.0e}, ||V^T V - I||_max = {err:.2e} (<= {:.2e}), history non-increasing {}",
            rep.iterations,
            100.0 * f64::EPSILON,
            nonincreasing(&rep)
        ),
    ))
}

fn deflation_algebra() -> Outcome {
    let base = PoissonSolver::new(Mesh::new(6, 6, 4, 6.0, 4.0)?, 1.0)?;
    let ctx = FourierContext::new(base, 8, 6.0)?;
    let wave = &ctx.waves[0];
    let (s, cs) = (&wave.sys, &wave.coarse);
    let proj = Projections { s, cs };
    let snorm = s.frobenius_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut e1, mut e2, mut e3) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let v: Vec<f64> = (0..s.k()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..cs.d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pv = proj.apply_p(&v);
        let ztpv = smpm_schur::deflation::apply_zt(cs.interface_len, &pv)?;
        e1 = e1.max(norm2(&ztpv) / norm2(&v));
        let szy = s.apply(&smpm_schur::deflation::apply_z(cs.interface_len, &y))?;
        e2 = e2.max(norm2(&proj.apply_p(&szy)) / (snorm * norm2(&y)));
        let ppv = proj.apply_p(&pv);
        let d: Vec<f64> = ppv.iter().zip(&pv).map(|(a, b)| a - b).collect();
        e3 = e3.max(norm2(&d) / norm2(&v));
    }
    let ok = e1 <= 1e-10 && e2 <= 1e-10 && e3 <= 1e-10 && cs.u_c.is_none();
    Ok((
        ok,
        format!(
            "k_1 = {:.3}: |Z^T P v| {e1:.1e}, |P S Z y| {e2:.1e}, |P^2 v - P v| {e3:.1e} (all <= 1e-10, 20 probes)",
            wave.k
        ),
    ))
}

fn three_d() -> Outcome {
    let opts = GmresOptions::default();
    let tight = GmresOptions {
        tol: 1e-12,
        ..Default::default()
    };
    let (n, mz, my) = (8, 6, 16);
    let mut ok = true;
    let mut parts = Vec::new();
    for mx in [8, 16, 32] {
        let base = PoissonSolver::new(Mesh::new(n, mx, mz, mx as f64, mz as f64)?, 1.0)?;
        let r = base.op.num_nodes();
        let mut it2 = 0.0;
        for t in 0..2 {
            let f = trial_rhs(8, t, r);
            it2 += base.solve(&f, Method::Deflated, &opts)?.interface.report.iterations as f64 / 2.0;
        }
        let ctx = FourierContext::new(base, my, mx as f64)?;
        let (mut dbj, mut las) = (0.0, 0.0);
        for t in 0..2 {
            let f = trial_rhs(8, t, r * my);
            let (_, a) = solve_3d(&ctx, &f, Method::Deflated, &opts)?;
            let (_, b) = solve_3d(&ctx, &f, Method::TwoLevel, &opts)?;
            ok &= nonincreasing(&a.report) && nonincreasing(&b.report);
            dbj += a.report.iterations as f64 / 2.0;
            las += b.report.iterations as f64 / 2.0;
        }
        let f = trial_rhs(80, 0, r * my);
        let (stacked, _) = solve_3d(&ctx, &f, Method::Deflated, &tight)?;
        let (indep, _) = solve_3d_independent(&ctx, &f, Method::Deflated, &tight)?;
        let agree = rel_inf(&stacked, &indep);
        ok &= agree <= 1e-8 && dbj <= 1.2 * it2 && dbj <= 0.8 * las;
        parts.push(format!(
            "m_x={mx}: agree {agree:.1e}, dbj3d {dbj:.1} vs 2d {it2:.1} ({:+.0}%), dbj/2las {:.2}",
            100.0 * (dbj / it2 - 1.0),
            dbj / las
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn shifted_contract() -> Outcome {
    let op = SmpmOperator::new(Mesh::new(6, 4, 3, 4.0, 3.0)?, 1.0)?;
    let hess = factor_unshifted_blocks(&op);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    for j in 1..=3 {
        let k = wavenumber(j, 4.0);
        let local = hess.shifted(k)?;
        for c in 0..local.num_classes() {
            let s = op.blocks.representative[c];
            let mut a = op.blocks.block(s).clone();
            a.add_diagonal(-k * k);
            let b: Vec<f64> = (0..a.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let want = LuFactor::new(a)?.solve(&b);
            let mut got = b.clone();
            local.solve_class(c, &mut got);
            let d: Vec<f64> = got.iter().zip(&want).map(|(x, y)| x - y).collect();
            worst = worst.max(norm2(&d) / norm2(&want));
        }
    }
    let count = |mz: usize| -> Result<(usize, u64)> {
        let op = SmpmOperator::new(Mesh::new(6, 4, mz, 4.0, mz as f64)?, 1.0)?;
        let hess = factor_unshifted_blocks(&op);
        let local = hess.shifted(wavenumber(1, 4.0))?;
        let mut b = vec![1.0; op.strip_size()];
        for c in 0..local.num_classes() {
            local.solve_class(c, &mut b);
        }
        Ok((op.strip_size(), local.flops()))
    };
    let (d1, f1) = count(3)?;
    let (d2, f2) = count(6)?;
    let ratio = f2 as f64 / f1 as f64;
    let ok = worst <= 1e-10 && (ratio / 4.0 - 1.0).abs() <= 0.1;
    Ok((
        ok,
        format!("max rel diff vs LU {worst:.1e} (<= 1e-10); ops {f1} at dim {d1}, {f2} at dim {d2}, ratio {ratio:.3} (4 +- 10%)"),
    ))
}

fn spectral_accuracy() -> Outcome {
    let cfg = ExperimentConfig {
        mx: 4,
        mz: 4,
        lx: 1.0,
        lz: 1.0,
        tol: 1e-12,
        ..Default::default()
    };
    let rows = run_convergence_study(&cfg, &[6, 8, 10, 12])?;
    let errs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let ok = decreasing && errs[3] < 1e-7;
    Ok((
        ok,
        format!(
            "errors {} for n = 6 8 10 12; strictly decreasing {decreasing}; n=12 < 1e-7",
            errs.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>().join(" ")
        ),
    ))
}

fn report(id: usize, name: &str, out: Outcome, start: Instant) -> bool {
    let secs = start.elapsed().as_secs_f64();
    match out {
        Ok((pass, detail)) => {
            println!(
                "criterion {id:>2} {}: {name}: {detail} [{secs:.1}s]",
                if pass { "PASS" } else { "FAIL" }
            );
            pass
        }
        Err(e) => {
            println!("criterion {id:>2} FAIL: {name}: error {e} [{secs:.1}s]");
            false
        }
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut all = true;
    let t = Instant::now();
    all &= report(1, "oracle equivalence", oracle_equivalence(), t);
    let t = Instant::now();
    all &= report(
        2,
        "null-space directions and residual bound",
        null_space_directions(),
        t,
    );
    let t = Instant::now();
    all &= report(3, "aspect-ratio independence", aspect_ratio(), t);
    let t = Instant::now();
    match mx_sweep_rows() {
        Ok((_, its)) => {
            all &= report(4, "m_x independence", mx_independence(&its), t);
            all &= report(5, "deflation vs Schwarz", deflation_vs_schwarz(&its), t);
        }
        Err(e) => {
            println!("criterion  4 FAIL: m_x independence: error {e}");
            println!("criterion  5 FAIL: deflation vs Schwarz: error {e}");
            all = false;
        }
    }
    let t = Instant::now();
    all &= report(6, "GMRES orthogonality and monotone residuals", gmres_core(), t);
    let t = Instant::now();
    all &= report(7, "deflation algebra", deflation_algebra(), t);
    let t = Instant::now();
    all &= report(8, "stacked Fourier solves", three_d(), t);
    let t = Instant::now();
    all &= report(9, "shifted factorization", shifted_contract(), t);
    let t = Instant::now();
    all &= report(10, "spectral accuracy", spectral_accuracy(), t);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
