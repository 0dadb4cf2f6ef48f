//! Experiment drivers: aspect-ratio and `m_x` sweeps, the Fourier sweep,
//! oracle validation and the manufactured-solution convergence study.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::helmholtz::{solve_3d, FourierContext};
use crate::krylov::GmresOptions;
use crate::linalg::{line_angle, norm2, norm_inf};
use crate::mesh::Mesh;
use crate::nullspace::{apply_lt, dense_left_null_vector, null_vector_angles, project_rhs_full};
use crate::solver::{dense_reference_solution, remove_mean, Method, PoissonSolver};

pub const CSV_HEADER: &str = "method,n,m_x,m_z,m_y,eta,trial,iterations,rel_residual,setup_time_s,solve_time_s,status";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub n: usize,
    pub mx: usize,
    pub mz: usize,
    /// Transverse points; `None` for the 2D problem.
    pub my: Option<usize>,
    pub lx: f64,
    pub lz: f64,
    /// Transverse extent; defaults to `l_x`.
    pub ly: Option<f64>,
    pub tol: f64,
    pub trials: usize,
    pub seed: u64,
    pub c_tau: f64,
    pub out: Option<PathBuf>,
    pub parallel_trials: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Deflated,
            n: 10,
            mx: 10,
            mz: 10,
            my: None,
            lx: 10.0,
            lz: 10.0,
            ly: None,
            tol: 1e-10,
            trials: 10,
            seed: 1,
            c_tau: 1.0,
            out: None,
            parallel_trials: false,
        }
    }
}

impl ExperimentConfig {
    pub fn eta(&self) -> f64 {
        (self.lx / self.mx as f64) / (self.lz / self.mz as f64)
    }

    pub fn ly(&self) -> f64 {
        self.ly.unwrap_or(self.lx)
    }

    /// Same element aspect ratio with a different number of strips.
    pub fn with_mx(&self, mx: usize) -> Self {
        let eta = self.eta();
        Self {
            mx,
            lx: eta * mx as f64 * self.lz / self.mz as f64,
            ..self.clone()
        }
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        Self {
            lx: eta * self.mx as f64 * self.lz / self.mz as f64,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.mx < 2 {
            return Err(Error::Config("m_x must be at least 2 for an interface system".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("tolerance {} outside (0, 1)", self.tol)));
        }
        if let Some(my) = self.my {
            if !(my >= 2 && my.is_power_of_two()) {
                return Err(Error::Config(format!("m_y must be a power of two, got {my}")));
            }
        }
        Mesh::new(self.n, self.mx, self.mz, self.lx, self.lz)?;
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh> {
        Mesh::new(self.n, self.mx, self.mz, self.lx, self.lz)
    }

    pub fn gmres(&self) -> GmresOptions {
        GmresOptions {
            tol: self.tol,
            ..Default::default()
        }
    }

    /// Applies `key = value` pairs; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value '{v}' for {key}")))
        }
        match key {
            "method" => self.method = value.parse()?,
            "n" => self.n = num(key, value)?,
            "mx" => self.mx = num(key, value)?,
            "mz" => self.mz = num(key, value)?,
            "my" => self.my = Some(num(key, value)?),
            "lx" => self.lx = num(key, value)?,
            "lz" => self.lz = num(key, value)?,
            "ly" => self.ly = Some(num(key, value)?),
            "tol" => self.tol = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "ctau" => self.c_tau = num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "parallel_trials" => self.parallel_trials = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Reads a flat `key = value` file; `#` starts a comment.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub method: String,
    pub n: usize,
    pub mx: usize,
    pub mz: usize,
    pub my: usize,
    pub eta: f64,
    pub trial: String,
    pub iterations: f64,
    pub rel_residual: f64,
    pub setup_time_s: f64,
    pub solve_time_s: f64,
    pub status: String,
}

impl CsvRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:e},{:.6},{:.6},{}",
            self.method,
            self.n,
            self.mx,
            self.mz,
            self.my,
            self.eta,
            self.trial,
            self.iterations,
            self.rel_residual,
            self.setup_time_s,
            self.solve_time_s,
            self.status
        )
    }

    pub fn is_mean(&self) -> bool {
        self.trial == "mean"
    }
}

pub fn write_csv(rows: &[CsvRow], out: Option<&Path>) -> Result<String> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in rows {
        let _ = writeln!(text, "{}", r.to_csv());
    }
    if let Some(p) = out {
        std::fs::write(p, &text)?;
    }
    Ok(text)
}

/// Uniform `[0, 1)` right-hand side of one trial; trials draw from separate
/// streams of the same seed.
pub fn trial_rhs(seed: u64, trial: usize, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    (0..len).map(|_| rng.gen_range(0.0..1.0)).collect()
}

struct TrialOutcome {
    iterations: f64,
    residual: f64,
    time: f64,
    ok: bool,
}

fn summarize(cfg: &ExperimentConfig, method: Method, setup: f64, outcomes: Vec<TrialOutcome>) -> Vec<CsvRow> {
    let base = CsvRow {
        method: method.name().into(),
        n: cfg.n,
        mx: cfg.mx,
        mz: cfg.mz,
        my: cfg.my.unwrap_or(1),
        eta: cfg.eta(),
        trial: String::new(),
        iterations: 0.0,
        rel_residual: 0.0,
        setup_time_s: setup,
        solve_time_s: 0.0,
        status: String::new(),
    };
    let mut rows: Vec<CsvRow> = outcomes
        .iter()
        .enumerate()
        .map(|(t, o)| CsvRow {
            trial: t.to_string(),
            iterations: o.iterations,
            rel_residual: o.residual,
            solve_time_s: o.time,
            status: if o.ok { "ok" } else { "failed" }.into(),
            ..base.clone()
        })
        .collect();
    let m = outcomes.len() as f64;
    rows.push(CsvRow {
        trial: "mean".into(),
        iterations: outcomes.iter().map(|o| o.iterations).sum::<f64>() / m,
        rel_residual: outcomes.iter().map(|o| o.residual).fold(0.0, f64::max),
        solve_time_s: outcomes.iter().map(|o| o.time).sum::<f64>() / m,
        status: if outcomes.iter().all(|o| o.ok) { "ok" } else { "failed" }.into(),
        ..base
    });
    rows
}

fn run_trials<F>(cfg: &ExperimentConfig, f: F) -> Vec<TrialOutcome>
where
    F: Fn(usize) -> TrialOutcome + Sync,
{
    if cfg.parallel_trials {
        (0..cfg.trials).into_par_iter().map(&f).collect()
    } else {
        (0..cfg.trials).map(&f).collect()
    }
}

fn trials_2d(cfg: &ExperimentConfig, solver: &PoissonSolver, method: Method) -> Vec<CsvRow> {
    let opts = cfg.gmres();
    let outcomes = run_trials(cfg, |t| {
        let f = trial_rhs(cfg.seed, t, solver.op.num_nodes());
        let start = Instant::now();
        match solver.solve(&f, method, &opts) {
            Ok(sol) => TrialOutcome {
                iterations: sol.interface.report.iterations as f64,
                residual: sol.interface.schur_residual,
                time: start.elapsed().as_secs_f64(),
                ok: sol.interface.report.converged && sol.interface.schur_residual <= 10.0 * cfg.tol,
            },
            Err(_) => TrialOutcome {
                iterations: f64::NAN,
                residual: f64::NAN,
                time: start.elapsed().as_secs_f64(),
                ok: false,
            },
        }
    });
    summarize(cfg, method, solver.setup_time, outcomes)
}

fn trials_3d(cfg: &ExperimentConfig, ctx: &FourierContext, method: Method) -> Vec<CsvRow> {
    let opts = cfg.gmres();
    let my = ctx.my;
    let outcomes = run_trials(cfg, |t| {
        let f = trial_rhs(cfg.seed, t, ctx.num_nodes() * my);
        let start = Instant::now();
        match solve_3d(ctx, &f, method, &opts) {
            Ok((_, rep)) => TrialOutcome {
                iterations: rep.report.iterations as f64,
                residual: rep.report.true_rel_residual,
                time: start.elapsed().as_secs_f64(),
                ok: rep.report.converged && rep.report.true_rel_residual <= 10.0 * cfg.tol,
            },
            Err(_) => TrialOutcome {
                iterations: f64::NAN,
                residual: f64::NAN,
                time: start.elapsed().as_secs_f64(),
                ok: false,
            },
        }
    });
    summarize(cfg, method, ctx.setup_time, outcomes)
}

/// One row per trial plus a mean row, for each requested method.
pub fn run_methods(cfg: &ExperimentConfig, methods: &[Method]) -> Result<Vec<CsvRow>> {
    cfg.validate()?;
    let solver = PoissonSolver::new(cfg.mesh()?, cfg.c_tau)?;
    let mut rows = Vec::new();
    match cfg.my {
        None => {
            for &m in methods {
                rows.extend(trials_2d(cfg, &solver, m));
            }
        }
        Some(my) => {
            let ctx = FourierContext::new(solver, my, cfg.ly())?;
            for &m in methods {
                rows.extend(trials_3d(cfg, &ctx, m));
            }
        }
    }
    Ok(rows)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<CsvRow>> {
    run_methods(cfg, &[cfg.method])
}

pub fn mean_iterations(rows: &[CsvRow], method: Method, mx: usize, eta: f64) -> Option<f64> {
    rows.iter()
        .find(|r| r.is_mean() && r.method == method.name() && r.mx == mx && (r.eta - eta).abs() <= 1e-9 * eta)
        .map(|r| r.iterations)
}

pub fn sweep_aspect(cfg: &ExperimentConfig, etas: &[f64], methods: &[Method]) -> Result<Vec<CsvRow>> {
    let mut rows = Vec::new();
    for &eta in etas {
        rows.extend(run_methods(&cfg.with_eta(eta), methods)?);
    }
    Ok(rows)
}

/// Adds a `dbj/2las` ratio row per grid when both methods ran.
pub fn sweep_mx(cfg: &ExperimentConfig, mxs: &[usize], methods: &[Method]) -> Result<Vec<CsvRow>> {
    let mut rows = Vec::new();
    for &mx in mxs {
        let c = cfg.with_mx(mx);
        let block = run_methods(&c, methods)?;
        let find = |m: Method| block.iter().find(|r| r.is_mean() && r.method == m.name()).cloned();
        let ratio = match (find(Method::Deflated), find(Method::TwoLevel)) {
            (Some(d), Some(t)) => Some(CsvRow {
                method: "dbj/2las".into(),
                trial: "ratio".into(),
                iterations: d.iterations / t.iterations,
                rel_residual: f64::NAN,
                setup_time_s: 0.0,
                solve_time_s: d.solve_time_s / t.solve_time_s,
                status: "ok".into(),
                ..d
            }),
            _ => None,
        };
        rows.extend(block);
        rows.extend(ratio);
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.value <= self.bound
    }
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub checks: Vec<OracleCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(OracleCheck::passed)
    }

    pub fn failures(&self) -> Vec<&OracleCheck> {
        self.checks.iter().filter(|c| !c.passed()).collect()
    }

    fn push(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.checks.push(OracleCheck {
            name: name.into(),
            value,
            bound,
        });
    }
}

/// Dense-oracle validation on a small grid (`r ≤ 5000`).
pub fn run_oracle_validation(cfg: &ExperimentConfig, bound_rhs: usize) -> Result<ValidationReport> {
    cfg.validate()?;
    let mesh = cfg.mesh()?;
    if mesh.num_nodes() > 5000 {
        return Err(Error::OracleGuard(format!(
            "{} grid nodes exceed the dense limit of 5000",
            mesh.num_nodes()
        )));
    }
    let solver = PoissonSolver::new(mesh, cfg.c_tau)?;
    let (op, lu, sys, ns) = (&solver.op, &solver.lu, &solver.sys, &solver.null);
    let mut rep = ValidationReport::default();

    let probe = trial_rhs(cfg.seed ^ 0xA5A5, 0, op.num_nodes());
    let dense_l = op.dense_l().matvec(&probe);
    let split = op.apply_l(&probe)?;
    let diff: Vec<f64> = split.iter().zip(&dense_l).map(|(a, b)| a - b).collect();
    rep.push("split L = A + EB vs dense L", norm2(&diff) / norm2(&dense_l), 1e-12);

    let ones = vec![1.0; op.num_nodes()];
    rep.push(
        "constants in right null space of L",
        norm_inf(&op.apply_l(&ones)?) / op.row_scale(),
        1e-10,
    );

    let dense_s = sys.dense();
    let u_dense = dense_left_null_vector(&dense_s)?;
    rep.push(
        "u_S vs dense left null vector (angle)",
        line_angle(&u_dense, &ns.u_s),
        1e-7,
    );
    rep.push(
        "u_S^T S / ||S||_F",
        norm2(&sys.apply_transpose(&ns.u_s)?) / sys.frobenius_norm(),
        1e-9,
    );
    rep.push(
        "u_L^T L / row scale",
        norm2(&apply_lt(op, &ns.u_l)?) / op.row_scale(),
        1e-8,
    );
    let (a1, a2) = null_vector_angles(op, lu, &ns.u_s, &ns.u_l)?;
    rep.push("null vectors: u_S parallel to E^T u_L (angle)", a1, 1e-7);
    rep.push("null vectors: u_L parallel to A^-T B^T u_S (angle)", a2, 1e-7);

    let opts = cfg.gmres();
    let f = trial_rhs(cfg.seed, 0, op.num_nodes());
    let f_tilde = project_rhs_full(&f, &ns.u_l)?;
    let reference = dense_reference_solution(op, &ns.u_l, &f_tilde)?;
    let scale = norm_inf(&reference);
    let mut sols = Vec::new();
    for m in Method::ALL {
        let sol = solver.solve(&f, m, &opts)?;
        let u = remove_mean(&sol.u);
        let err: Vec<f64> = u.iter().zip(&reference).map(|(a, b)| a - b).collect();
        rep.push(format!("{m} vs dense direct solve"), norm_inf(&err) / scale, 1e-8);
        sols.push(u);
    }
    for i in 1..sols.len() {
        let err: Vec<f64> = sols[i].iter().zip(&sols[0]).map(|(a, b)| a - b).collect();
        rep.push(
            format!("{} vs {} agreement", Method::ALL[i], Method::ALL[0]),
            norm_inf(&err) / scale,
            1e-8,
        );
    }

    let mut worst = f64::NEG_INFINITY;
    for t in 0..bound_rhs {
        let f = trial_rhs(cfg.seed.wrapping_add(1000), t, op.num_nodes());
        let sol = solver.solve(&f, Method::Deflated, &opts)?;
        let (lhs, rhs) = solver.residual_bound(&sol)?;
        worst = worst.max(lhs - rhs);
    }
    // The bound holds when lhs - rhs <= 0 on every right-hand side.
    if bound_rhs > 0 {
        rep.push(format!("residual bound over {bound_rhs} rhs (lhs - rhs)"), worst, 0.0);
    }
    Ok(rep)
}

/// `u* = cos(π x / l_x) cos(π z / l_z)` has zero normal derivative on the boundary.
pub fn manufactured_error(cfg: &ExperimentConfig, n: usize) -> Result<f64> {
    let mesh = Mesh::new(n, cfg.mx, cfg.mz, cfg.lx, cfg.lz)?;
    let (lx, lz) = (cfg.lx, cfg.lz);
    let pi = std::f64::consts::PI;
    let exact = mesh.sample(|x, z| (pi * x / lx).cos() * (pi * z / lz).cos());
    let lam = -pi * pi * (1.0 / (lx * lx) + 1.0 / (lz * lz));
    let f: Vec<f64> = exact.iter().map(|u| lam * u).collect();
    let solver = PoissonSolver::new(mesh, cfg.c_tau)?;
    let sol = solver.solve(&f, cfg.method, &cfg.gmres())?;
    let u = remove_mean(&sol.u);
    let want = remove_mean(&exact);
    Ok(u.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

pub fn run_convergence_study(cfg: &ExperimentConfig, ns: &[usize]) -> Result<Vec<(usize, f64)>> {
    ns.iter().map(|&n| Ok((n, manufactured_error(cfg, n)?))).collect()
}

pub fn convergence_csv(rows: &[(usize, f64)]) -> String {
    let mut s = String::from("n,linf_error\n");
    for (n, e) in rows {
        let _ = writeln!(s, "{n},{e:e}");
    }
    s
}
