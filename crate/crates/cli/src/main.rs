//! `schrodinger-oc solve | verify | check`.

mod checks;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use schrodinger_oc::analysis::full_report;
use schrodinger_oc::optimizer::{multistart, SolveStatus};
use schrodinger_oc::{Control, Error, RunConfig};

const EXIT_OK: u8 = 0;
const EXIT_FAILED: u8 = 1;
const EXIT_MAX_ITERS: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_SOFTWARE: u8 = 70;

#[derive(Parser)]
#[command(name = "schrodinger-oc", version, about = "Optimal control of the bilinear Schrodinger equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Output directory; defaults to `output.dir` of the config, then `out`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the solver and analysis seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplies the number of time steps.
    #[arg(long, default_value_t = 1)]
    refine: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and write the control, switching
    /// function, final state, cost history, arcs and a result summary.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the optimality conditions for a given control.
    Verify {
        config: PathBuf,
        control: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run verification suites at the configured grid and one refinement.
    Check {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        which: Suite,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Grad,
    Goh,
    Ibp,
    Unitary,
    All,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config { .. } | Error::InvalidProblem(_) => EXIT_USAGE,
            Error::Dimension(_) | Error::Precondition(_) => EXIT_DATA,
            _ => EXIT_SOFTWARE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_SOFTWARE, format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve { config, common } => cmd_solve(&config, &common),
        Command::Verify {
            config,
            control,
            common,
        } => cmd_verify(&config, &control, &common),
        Command::Check {
            config,
            which,
            common,
        } => cmd_check(&config, which, &common),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path, common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::from_path(path).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    if common.refine != 1 {
        cfg = cfg.refined_in_time(common.refine)?;
    }
    if let Some(seed) = common.seed {
        cfg.solver.seed = seed;
        cfg.analysis.seed = seed;
    }
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, common: &Common) -> Result<PathBuf, Failure> {
    let dir = common
        .out_dir
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_solve(path: &Path, common: &Common) -> Result<u8, Failure> {
    let cfg = load(path, common)?;
    let spec = cfg.problem.build().map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let dir = out_dir(&cfg, common)?;
    let ms = multistart(&spec, &cfg.solver, cfg.output.n_starts)?;
    let result = &ms.best;
    let report = full_report(&spec, &result.u_opt, &cfg.analysis)?;

    output::write_series(&dir.join("u_opt.csv"), "u", &spec.time.midpoints(), result.u_opt.values())?;
    output::write_series(&dir.join("lambda.csv"), "lambda", &spec.time.midpoints(), &report.lambda)?;
    output::write_final_state(&dir.join("psi_final.csv"), &spec, &result.u_opt)?;
    output::write_cost_history(&dir.join("cost_history.csv"), result)?;
    output::write_json(&dir.join("arcs.json"), &report.arc_structure)?;
    output::write_json(&dir.join("report.json"), &report)?;
    output::write_json(&dir.join("result.json"), &output::result_summary(&ms, &report))?;

    println!(
        "{:?} after {} iterations: cost {:.10e}, projected gradient {:.3e}",
        result.status,
        result.iterations,
        result.final_cost,
        result.projected_grad_norms.last().copied().unwrap_or(f64::NAN)
    );
    for arc in &report.arc_structure.arcs {
        println!("  {:?} [{:.4}, {:.4}]", arc.kind, arc.t_start, arc.t_end);
    }
    println!("artifacts in {}", dir.display());
    Ok(match result.status {
        SolveStatus::Converged => EXIT_OK,
        SolveStatus::MaxIterations | SolveStatus::LineSearchFailed => EXIT_MAX_ITERS,
    })
}

fn cmd_verify(path: &Path, control: &Path, common: &Common) -> Result<u8, Failure> {
    let cfg = load(path, common)?;
    let spec = cfg.problem.build().map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let values = output::read_control(control).map_err(|m| Failure::new(EXIT_DATA, m))?;
    if values.len() != spec.n_t() {
        return Err(Failure::new(
            EXIT_DATA,
            format!("control has {} values, the time grid has {} steps", values.len(), spec.n_t()),
        ));
    }
    let u = Control::new(values);
    let dir = out_dir(&cfg, common)?;
    let report = full_report(&spec, &u, &cfg.analysis)?;
    output::write_json(&dir.join("report.json"), &report)?;
    for v in &report.verdicts {
        let state = match v.passed {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "n/a",
        };
        println!("{state:>4}  {:<26} {:>12.4e} (threshold {:.3e})  {}", v.name, v.value, v.threshold, v.note);
    }
    Ok(if report.all_passed() { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_check(path: &Path, which: Suite, common: &Common) -> Result<u8, Failure> {
    let cfg = load(path, &Common {
        refine: 1,
        out_dir: None,
        seed: common.seed,
    })?;
    let factor = common.refine.max(2);
    let rows = checks::run(&cfg, which, factor)?;
    checks::print_table(&rows);
    Ok(if rows.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_FAILED })
}
