//! The `biconvex` command: read a problem document, verify it, solve it with
//! alternating convex search and write a JSON report.
//!
//! Exit codes: 0 converged (or compliant with `--check-only`), 1 usage, parse
//! or I/O error, 2 not DBCP-compliant, 3 solver failure or iteration cap.

mod ast;
mod build;
mod error;
mod lexer;
mod parser;
mod printer;
mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser as _;

pub use ast::*;
pub use build::{build, Built};
pub use error::{DocError, ErrorKind, Span};
pub use parser::parse_problem;
pub use printer::{print_document, print_expr};
pub use report::{solve_report, verdict_report, Json};

use crate::acs::solve_acs;
use crate::problem::{SolveOptions, SolveStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_DBCP: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, clap::Parser)]
#[command(
    name = "biconvex",
    version,
    allow_negative_numbers = true,
    about = "Verify and solve biconvex problems by alternating convex search"
)]
struct Args {
    /// Problem document.
    file: PathBuf,
    /// Proximal weight.
    #[arg(long, default_value_t = 0.0)]
    lbd: f64,
    /// Slack penalty for infeasible-start solves.
    #[arg(long, default_value_t = 100.0)]
    nu: f64,
    /// Stop once one iteration improves the objective by less than this.
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Seed for random starting values.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "builtin")]
    solver: String,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only verify the problem and print the verdict.
    #[arg(long)]
    check_only: bool,
}

/// Run with the process's standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

/// Run with explicit output streams. `args` includes the program name.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&args, out, err) {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "{msg}");
            EXIT_USAGE
        }
    }
}

fn execute(args: &Args, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    let file = args.file.display();
    let text = std::fs::read_to_string(&args.file).map_err(|e| format!("{file}: cannot read: {e}"))?;
    let base = args.file.parent().unwrap_or(Path::new(""));
    let built = parse_problem(&text)
        .and_then(|doc| build(&doc, base))
        .map_err(|e| format!("{file}:{e}"))?;

    let verdict = built.problem.verdict();
    if args.check_only {
        emit(args, out, &verdict_report(&built, verdict).render())?;
        return Ok(if verdict.compliant { EXIT_OK } else { EXIT_NOT_DBCP });
    }
    if !verdict.compliant {
        for d in &verdict.diagnostics {
            let span = built.locate(&d.location);
            let _ = writeln!(err, "{file}:{span}: error: [{}] {}", d.rule, d.message);
        }
        return Ok(EXIT_NOT_DBCP);
    }

    let opts = SolveOptions {
        lbd: args.lbd,
        nu: args.nu,
        gap_tolerance: args.gap_tol,
        max_iters: args.max_iters,
        seed: args.seed,
        solver: args.solver.clone(),
        ..SolveOptions::default()
    };
    opts.validate().map_err(|e| e.to_string())?;
    if opts.registry.get(&opts.solver).is_err() {
        let known: Vec<&str> = opts.registry.names().collect();
        return Err(format!(
            "unknown solver `{}` (available: {})",
            opts.solver,
            known.join(", ")
        ));
    }

    let started = Instant::now();
    let report = solve_acs(&built.problem, &opts);
    emit(args, out, &solve_report(&built, &report).render())?;
    let _ = writeln!(
        err,
        "{file}: {} after {} iterations in {:.3} s",
        report.status,
        report.iterations,
        started.elapsed().as_secs_f64()
    );
    if let Some(msg) = &report.message {
        let _ = writeln!(err, "{file}: {msg}");
    }
    Ok(if report.status == SolveStatus::Converged {
        EXIT_OK
    } else {
        EXIT_SOLVER
    })
}

fn emit(args: &Args, out: &mut dyn Write, text: &str) -> Result<(), String> {
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: cannot write: {e}", path.display())),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| format!("cannot write report: {e}")),
    }
}
