use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smpm_schur::bench::{
    convergence_csv, run_convergence_study, run_oracle_validation, sweep_aspect, sweep_mx, write_csv, ExperimentConfig,
};
use smpm_schur::solver::Method;

#[derive(Parser)]
#[command(name = "smpm-bench", about = "Interface-system solver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterations against element aspect ratio for all four methods.
    SweepAspect(SweepArgs),
    /// Iterations against the number of strips at fixed aspect ratio.
    SweepMx(SweepArgs),
    /// Stacked Fourier-mode solves against the number of strips.
    #[command(name = "sweep-3d")]
    Sweep3d(SweepArgs),
    /// Dense-oracle checks on a small grid.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Right-hand sides for the residual bound.
        #[arg(long, default_value_t = 50)]
        rhs: usize,
    },
    /// Manufactured-solution error against polynomial order.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "6,8,10,12")]
        values: Vec<usize>,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated sweep values (aspect ratios or strip counts).
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<String>>,
    /// Restrict to these methods.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

#[derive(Args)]
struct Common {
    /// `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    mx: Option<usize>,
    #[arg(long)]
    mz: Option<usize>,
    #[arg(long)]
    my: Option<usize>,
    #[arg(long)]
    lx: Option<f64>,
    #[arg(long)]
    lz: Option<f64>,
    #[arg(long)]
    ly: Option<f64>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ctau: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel_trials: bool,
}

impl Common {
    fn config(&self) -> smpm_schur::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(p) = &self.config {
            cfg.load_file(p)?;
        }
        macro_rules! over {
            ($($f:ident => $t:ident),*) => {$(
                if let Some(v) = self.$f.clone() { cfg.$t = v; }
            )*};
        }
        over!(n => n, mx => mx, mz => mz, lx => lx, lz => lz, method => method,
              tol => tol, trials => trials, seed => seed, ctau => c_tau);
        if self.my.is_some() {
            cfg.my = self.my;
        }
        if self.ly.is_some() {
            cfg.ly = self.ly;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.parallel_trials |= self.parallel_trials;
        Ok(cfg)
    }
}

fn parse_list<T: std::str::FromStr + Clone>(values: &Option<Vec<String>>, default: &[T]) -> smpm_schur::Result<Vec<T>> {
    match values {
        None => Ok(default.to_vec()),
        Some(v) => v
            .iter()
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| smpm_schur::Error::Config(format!("bad sweep value '{s}'")))
            })
            .collect(),
    }
}

fn methods(args: &SweepArgs) -> smpm_schur::Result<Vec<Method>> {
    match &args.methods {
        None => Ok(Method::ALL.to_vec()),
        Some(v) => v.iter().map(|s| s.trim().parse()).collect(),
    }
}

fn emit(text: &str, cfg: &ExperimentConfig) {
    if cfg.out.is_none() {
        print!("{text}");
    }
}

fn run(cli: Cli) -> smpm_schur::Result<bool> {
    match cli.command {
        Command::SweepAspect(a) => {
            let cfg = a.common.config()?;
            let etas = parse_list(&a.values, &[1.0, 5.0, 10.0, 25.0, 50.0])?;
            let rows = sweep_aspect(&cfg, &etas, &methods(&a)?)?;
            emit(&write_csv(&rows, cfg.out.as_deref())?, &cfg);
            Ok(rows.iter().all(|r| r.status == "ok"))
        }
        Command::SweepMx(a) => {
            let cfg = a.common.config()?;
            let mxs = parse_list(&a.values, &[8, 16, 32, 64, 128])?;
            let rows = sweep_mx(&cfg, &mxs, &methods(&a)?)?;
            emit(&write_csv(&rows, cfg.out.as_deref())?, &cfg);
            Ok(rows.iter().all(|r| r.status == "ok"))
        }
        Command::Sweep3d(a) => {
            let mut cfg = a.common.config()?;
            if cfg.my.is_none() {
                cfg.my = Some(16);
            }
            let mxs = parse_list(&a.values, &[8, 16, 32])?;
            let rows = sweep_mx(&cfg, &mxs, &methods(&a)?)?;
            emit(&write_csv(&rows, cfg.out.as_deref())?, &cfg);
            Ok(rows.iter().all(|r| r.status == "ok"))
        }
        Command::Validate { common, rhs } => {
            let cfg = common.config()?;
            let rep = run_oracle_validation(&cfg, rhs)?;
            let mut text = String::from("check,value,bound,status\n");
            for c in &rep.checks {
                let status = if c.passed() { "pass" } else { "fail" };
                text.push_str(&format!("{},{:e},{:e},{status}\n", c.name, c.value, c.bound));
            }
            match &cfg.out {
                Some(p) => std::fs::write(p, &text)?,
                None => print!("{text}"),
            }
            Ok(rep.passed())
        }
        Command::Convergence { common, values } => {
            let cfg = common.config()?;
            let rows = run_convergence_study(&cfg, &values)?;
            let text = convergence_csv(&rows);
            match &cfg.out {
                Some(p) => std::fs::write(p, &text)?,
                None => print!("{text}"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
