//! The `hycat` command line: validate systems, simulate them, check and
//! compose morphisms, and push executions along morphisms.

pub mod spec;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hycat_core::defaults::{GRID_CAP, GRID_PER_AXIS, RESIDUAL_TOL};
use hycat_core::{
    simulate, Execution, ExecutionError, Expr, GridSpec, HDSMorphism, HybridSystem, MorphismError,
    MorphismReport, Point, Policy, ScriptChoice, SimulateOptions, Simulation, SimulationStatus,
};
use thiserror::Error;

use crate::spec::{load_morphism, load_system, MorphismSpec, SpecError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Execution(#[from] ExecutionError),
    #[error(transparent)]
    Morphism(#[from] MorphismError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    /// 2 for bad input, 1 for failures found while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Spec(_) | CliError::Io(_) => 2,
            CliError::Execution(e) => match e {
                ExecutionError::Map(_) | ExecutionError::Curve(_) | ExecutionError::Graph(_) => 1,
                _ => 2,
            },
            CliError::Morphism(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hycat",
    version,
    about = "Hybrid systems: validation, simulation, morphisms and executions"
)]
pub struct Cli {
    /// Tolerance for containment, relation membership and residuals.
    #[arg(long, global = true, default_value_t = RESIDUAL_TOL)]
    pub tol: f64,
    /// Seed for subsampling large sample grids.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print nothing but requested outputs.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a system spec: relation signatures, containment, finite fields.
    Validate { system: PathBuf },
    /// Simulate a system and write one trajectory CSV per branch.
    Simulate {
        system: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Output CSV; with several branches `name.csv` becomes `name.<i>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a morphism spec: edge inclusions and field intertwining.
    CheckMorphism {
        morphism: PathBuf,
        /// Grid points per axis on each node region.
        #[arg(long, default_value_t = GRID_PER_AXIS)]
        samples: usize,
    },
    /// Compose two morphism specs, `first` then `second`, and verify the result.
    Compose {
        first: PathBuf,
        second: PathBuf,
        #[arg(long, default_value_t = GRID_PER_AXIS)]
        samples: usize,
        /// Where to write the composite morphism spec.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Push an execution along a morphism and validate it on the target system.
    Push {
        morphism: PathBuf,
        /// Execution CSV over the source system; otherwise the source is
        /// simulated with the run flags and the first branch is pushed.
        #[arg(long)]
        execution: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate an execution CSV against a system.
    CheckExecution { system: PathBuf, execution: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    FirstGuard,
    Exhaustive,
    Script,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Initial node.
    #[arg(long)]
    pub node: Option<String>,
    /// Initial point, comma separated; entries may be constant expressions.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub t0: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::FirstGuard)]
    pub policy: PolicyArg,
    /// Choices for `--policy script`: `;`-separated `continue`, `EDGE` or `EDGE@y1,y2`.
    #[arg(long)]
    pub script: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub max_jumps: usize,
    #[arg(long, default_value_t = 64)]
    pub max_branches: usize,
}

fn parse_point(text: &str) -> Result<Point, CliError> {
    text.split(',')
        .map(|s| {
            Expr::parse(s.trim(), 0)
                .map_err(|e| e.to_string())
                .and_then(|e| e.eval(&[]).map_err(|e| e.to_string()))
                .map_err(|e| CliError::Usage(format!("bad coordinate `{s}`: {e}")))
        })
        .collect()
}

/// Parse `continue;gamma;gamma@0.5` into script choices.
pub fn parse_script(text: &str) -> Result<Vec<ScriptChoice>, CliError> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            if item == "continue" {
                return Ok(ScriptChoice::Continue);
            }
            match item.split_once('@') {
                Some((edge, p)) => Ok(ScriptChoice::Jump {
                    edge: edge.trim().into(),
                    target: Some(parse_point(p)?),
                }),
                None => Ok(ScriptChoice::Jump {
                    edge: item.into(),
                    target: None,
                }),
            }
        })
        .collect()
}

impl RunArgs {
    fn options(&self) -> Result<SimulateOptions, CliError> {
        let missing = |f: &str| CliError::Usage(format!("--{f} is required"));
        let node = self.node.clone().ok_or_else(|| missing("node"))?;
        let x0 = parse_point(self.x0.as_deref().ok_or_else(|| missing("x0"))?)?;
        let horizon = self.horizon.ok_or_else(|| missing("horizon"))?;
        let policy = match (self.policy, &self.script) {
            (PolicyArg::FirstGuard, None) => Policy::FirstGuard,
            (PolicyArg::Exhaustive, None) => Policy::Exhaustive,
            (PolicyArg::Script, Some(s)) => Policy::Script(parse_script(s)?),
            (PolicyArg::Script, None) => {
                return Err(CliError::Usage("--policy script needs --script".into()))
            }
            (_, Some(_)) => return Err(CliError::Usage("--script needs --policy script".into())),
        };
        let mut opts =
            SimulateOptions::new(node, x0, self.t0, horizon, self.step).with_policy(policy);
        opts.max_jumps = self.max_jumps;
        opts.max_branches = self.max_branches;
        Ok(opts)
    }
}

/// Where reports go. Reports move to stderr when stdout carries CSV.
struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    quiet: bool,
}

impl Io<'_> {
    fn report(&mut self, to_err: bool, text: &str) -> io::Result<()> {
        if self.quiet {
            return Ok(());
        }
        let w: &mut dyn Write = if to_err {
            &mut *self.err
        } else {
            &mut *self.out
        };
        writeln!(w, "{text}")
    }
}

/// Run a parsed command line. Returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let mut io = Io {
        out,
        err,
        quiet: cli.quiet,
    };
    match dispatch(cli, &mut io) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, io: &mut Io) -> Result<u8, CliError> {
    let grid = |samples: usize| GridSpec {
        per_axis: samples,
        cap: GRID_CAP,
        seed: cli.seed,
    };
    match &cli.command {
        Command::Validate { system } => cmd_validate(system, cli.tol, io),
        Command::Simulate { system, run, out } => {
            cmd_simulate(system, run, out.as_deref(), cli.tol, io)
        }
        Command::CheckMorphism { morphism, samples } => {
            cmd_check_morphism(morphism, grid(*samples), cli.tol, io)
        }
        Command::Compose {
            first,
            second,
            samples,
            out,
        } => cmd_compose(first, second, grid(*samples), out.as_deref(), cli.tol, io),
        Command::Push {
            morphism,
            execution,
            run,
            out,
        } => cmd_push(
            morphism,
            execution.as_deref(),
            run,
            out.as_deref(),
            cli.tol,
            io,
        ),
        Command::CheckExecution { system, execution } => {
            cmd_check_execution(system, execution, cli.tol, io)
        }
    }
}

fn cmd_validate(path: &Path, tol: f64, io: &mut Io) -> Result<u8, CliError> {
    let system = load_system(path)?;
    let violations = system.validate(tol);
    for v in &violations {
        io.report(false, &format!("violation: {v}"))?;
    }
    if violations.is_empty() {
        io.report(
            false,
            &format!(
                "valid: {} node(s), {} edge(s)",
                system.graph().node_count(),
                system.graph().edge_count()
            ),
        )?;
        Ok(0)
    } else {
        io.report(
            false,
            &format!("invalid: {} violation(s)", violations.len()),
        )?;
        Ok(1)
    }
}

fn branch_path(out: &Path, index: usize) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.{index}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{index}"),
    };
    out.with_file_name(name)
}

fn summary(index: usize, sim: &Simulation) -> String {
    let e = &sim.execution;
    let times: Vec<String> = e.jump_times().iter().map(|t| format!("{t:.9}")).collect();
    format!(
        "branch {index}: {}, {} jump(s) at [{}], states {}, ends at t = {:.9}",
        sim.status,
        times.len(),
        times.join(", "),
        e.nodes().join(" -> "),
        e.time_system().times().last().unwrap()
    )
}

fn write_branches(sims: &[Simulation], out: Option<&Path>, io: &mut Io) -> Result<(), CliError> {
    match out {
        Some(path) if sims.len() == 1 => fs::write(path, sims[0].execution.to_csv())?,
        Some(path) => {
            for (i, s) in sims.iter().enumerate() {
                fs::write(branch_path(path, i), s.execution.to_csv())?;
            }
        }
        None => {
            for (i, s) in sims.iter().enumerate() {
                if sims.len() > 1 {
                    writeln!(io.out, "# branch {i}")?;
                }
                io.out.write_all(s.execution.to_csv().as_bytes())?;
            }
        }
    }
    Ok(())
}

fn cmd_simulate(
    path: &Path,
    run: &RunArgs,
    out: Option<&Path>,
    tol: f64,
    io: &mut Io,
) -> Result<u8, CliError> {
    let system = load_system(path)?;
    let opts = run.options()?;
    let sims = simulate(&system, &opts)?;
    write_branches(&sims, out, io)?;
    let to_err = out.is_none();
    for (i, s) in sims.iter().enumerate() {
        io.report(to_err, &summary(i, s))?;
        let report = s.execution.validate(&system, tol)?;
        for v in &report.violations {
            io.report(to_err, &format!("  violation: {v}"))?;
        }
    }
    if sims.iter().all(|s| s.status == SimulationStatus::Blocked) {
        io.report(to_err, "every branch is blocked")?;
        return Ok(1);
    }
    Ok(0)
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn print_morphism_report(report: &MorphismReport, tol: f64, io: &mut Io) -> Result<(), CliError> {
    io.report(false, &format!("tier: {}", report.tier))?;
    for e in &report.edges {
        let verdict = if e.counterexamples.is_empty() {
            "ok".to_string()
        } else {
            format!("{} counterexample(s)", e.counterexamples.len())
        };
        io.report(
            false,
            &format!(
                "edge {} -> {}: {} pair(s) checked, {verdict}",
                e.edge, e.image, e.pairs_checked
            ),
        )?;
        for ((y, x), (fy, fx)) in e.counterexamples.iter().take(10) {
            io.report(
                false,
                &format!(
                    "  pair ({}, {}) maps to ({}, {})",
                    fmt_point(y),
                    fmt_point(x),
                    fmt_point(fy),
                    fmt_point(fx)
                ),
            )?;
        }
    }
    for n in &report.nodes {
        let residual = n
            .max_residual
            .map(|r| format!(", max residual {r:.3e}"))
            .unwrap_or_default();
        let ok = n.outside.is_empty() && n.residual_violations.is_empty();
        io.report(
            false,
            &format!(
                "node {} -> {}: {} sample(s){residual}, {}",
                n.node,
                n.image,
                n.samples,
                if ok { "ok" } else { "FAILED" }
            ),
        )?;
        for x in n.outside.iter().take(10) {
            io.report(
                false,
                &format!("  {} is mapped outside the target region", fmt_point(x)),
            )?;
        }
        if !n.residual_violations.is_empty() {
            io.report(false, &format!("  residuals above {tol:e}:"))?;
            io.report(false, "  point                          residual")?;
            for (x, r) in n.residual_violations.iter().take(10) {
                io.report(false, &format!("  {:<30} {r:.6e}", fmt_point(x)))?;
            }
            if n.residual_violations.len() > 10 {
                io.report(
                    false,
                    &format!("  ... {} more", n.residual_violations.len() - 10),
                )?;
            }
        }
    }
    io.report(
        false,
        if report.is_verified() {
            "verified"
        } else {
            "not verified"
        },
    )?;
    Ok(())
}

fn cmd_check_morphism(path: &Path, grid: GridSpec, tol: f64, io: &mut Io) -> Result<u8, CliError> {
    let loaded = load_morphism(path)?;
    let report = loaded.morphism.verify_with(grid, tol)?;
    print_morphism_report(&report, tol, io)?;
    Ok(if report.is_verified() { 0 } else { 1 })
}

fn cmd_compose(
    first: &Path,
    second: &Path,
    grid: GridSpec,
    out: Option<&Path>,
    tol: f64,
    io: &mut Io,
) -> Result<u8, CliError> {
    let m = load_morphism(first)?;
    let n = load_morphism(second)?;
    let composite = HDSMorphism::compose(&n.morphism, &m.morphism)
        .map_err(|e| CliError::Usage(format!("cannot compose: {e}")))?;
    let absolute = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let spec = MorphismSpec::from_morphism(
        composite.base(),
        absolute(&m.source_path),
        absolute(&n.target_path),
    );
    match out {
        Some(p) => fs::write(p, spec.to_json() + "\n")?,
        None => writeln!(io.out, "{}", spec.to_json())?,
    }
    let report = composite.verify_with(grid, tol)?;
    let saved = io.quiet;
    io.quiet |= out.is_none();
    print_morphism_report(&report, tol, io)?;
    io.quiet = saved;
    Ok(if report.is_verified() { 0 } else { 1 })
}

fn source_execution(
    morphism: &HDSMorphism,
    execution: Option<&Path>,
    run: &RunArgs,
    tol: f64,
) -> Result<Execution, CliError> {
    let source: &Arc<HybridSystem> = morphism.source();
    match execution {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            Execution::from_csv(&text, source, tol)
                .map_err(|e| match e {
                    ExecutionError::UnknownNode(n) => ExecutionError::SourceMismatch(format!(
                        "node `{n}` is not in the source system"
                    )),
                    e => e,
                })
                .map_err(CliError::from)
        }
        None => {
            let sims = simulate(source, &run.options()?)?;
            Ok(sims
                .into_iter()
                .next()
                .expect("at least one branch")
                .execution)
        }
    }
}

fn cmd_push(
    path: &Path,
    execution: Option<&Path>,
    run: &RunArgs,
    out: Option<&Path>,
    tol: f64,
    io: &mut Io,
) -> Result<u8, CliError> {
    let loaded = load_morphism(path)?;
    let e = source_execution(&loaded.morphism, execution, run, tol)?;
    let pushed = e.pushforward(&loaded.morphism)?;
    match out {
        Some(p) => fs::write(p, pushed.to_csv())?,
        None => io.out.write_all(pushed.to_csv().as_bytes())?,
    }
    let to_err = out.is_none();
    let report = pushed.validate(loaded.morphism.target(), tol)?;
    for v in &report.violations {
        io.report(to_err, &format!("violation: {v}"))?;
    }
    if report.is_valid() {
        io.report(
            to_err,
            &format!(
                "valid execution of {} ({} segment(s))",
                loaded.target_path.display(),
                pushed.segment_count()
            ),
        )?;
        Ok(0)
    } else {
        io.report(
            to_err,
            &format!("not an execution of {}", loaded.target_path.display()),
        )?;
        Ok(1)
    }
}

fn cmd_check_execution(
    system: &Path,
    execution: &Path,
    tol: f64,
    io: &mut Io,
) -> Result<u8, CliError> {
    let system = load_system(system)?;
    let e = Execution::from_csv(&fs::read_to_string(execution)?, &system, tol)?;
    let report = e.validate(&system, tol)?;
    for v in &report.violations {
        io.report(false, &format!("violation: {v}"))?;
    }
    io.report(
        false,
        &format!("max flow residual {:.3e}", report.max_flow_residual),
    )?;
    if report.is_valid() {
        io.report(
            false,
            &format!(
                "valid: {} segment(s), {} jump(s)",
                e.segment_count(),
                e.jump_times().len()
            ),
        )?;
        Ok(0)
    } else {
        io.report(
            false,
            &format!("invalid: {} violation(s)", report.violations.len()),
        )?;
        Ok(1)
    }
}
