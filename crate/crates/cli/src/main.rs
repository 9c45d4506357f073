//! `blocksplit`: batch front-end for the block splitting schemes.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blocksplit::experiment::{
    analyze_config, convergence_study, default_beta_sweep, log_range, run_record, sweep,
    ConvergenceRow, ExperimentConfig, RunRecord,
};
use blocksplit::schemes::RunOptions;
use blocksplit::sparse::SolverOptions;
use blocksplit::{BlockSystem, Dim, Error, Model, Ordering, SchemeSpec, SchurForm, Status};
use clap::{Args, Parser, Subcommand, ValueEnum};

const CSV_HEADER: &str =
    "scheme,beta,n_cells,iterations,status,final_res_u,final_res_v,final_err_u,final_err_v";

#[derive(Parser, Debug)]
#[command(
    name = "blocksplit",
    version,
    about = "Block splitting schemes for coupled 2x2 block systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run each scheme once on a manufactured problem.
    Run(ProblemArgs),
    /// Run every scheme over a range of coupling strengths.
    Sweep(ProblemArgs),
    /// Estimate the convergence-condition quantities and write a JSON report.
    Analyze(ProblemArgs),
    /// Grid-refinement study of the monolithic discretisation error.
    Converge(ConvergeArgs),
    /// Run schemes on a block system stored as Matrix Market files.
    SolveMm(SolveMmArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 when any run diverges or hits an inner-solver failure.
    #[arg(long)]
    strict: bool,
    /// Also write a gnuplot script plotting the CSV written to --out.
    #[arg(long, value_name = "PATH")]
    gnuplot: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SchemeArgs {
    /// Comma-separated scheme names, e.g. BJ,BGS,BSOR:1.2,LSCHEME:0.5,SPJ_a,S2PJ_v.
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Ordering for all schemes: u_first or v_first.
    #[arg(long)]
    ordering: Option<String>,
    /// Partial-Jacobi update form: relaxed or factorized.
    #[arg(long, default_value = "relaxed")]
    schur_form: String,
    /// Seed for randomized estimator start vectors.
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ProblemArgs {
    #[arg(long, default_value = "dual-porosity")]
    model: String,
    #[arg(long, default_value = "1")]
    dim: String,
    /// Comma-separated coupling values.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        conflicts_with = "beta_range"
    )]
    beta: Option<Vec<f64>>,
    /// Log-spaced coupling values, lo:hi:count.
    #[arg(long)]
    beta_range: Option<String>,
    /// Cells per direction.
    #[arg(long)]
    cells: Option<usize>,
    /// Exponent of the 2D dual-porosity mobility contrast.
    #[arg(long)]
    contrast: Option<f64>,
    /// 2D dual-porosity mobility ratio between the two continua.
    #[arg(long)]
    mobility_ratio: Option<f64>,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated dyadic cell counts.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
    levels: Vec<usize>,
}

#[derive(Args, Debug)]
struct SolveMmArgs {
    /// Prefix of the `_A.mtx`, `_B.mtx`, `_C.mtx`, `_D.mtx`, `_f1.vec`, `_f2.vec` files.
    prefix: PathBuf,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type CmdResult = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let strict = match &cli.command {
        Command::Run(a) | Command::Sweep(a) | Command::Analyze(a) => a.output.strict,
        Command::Converge(a) => a.problem.output.strict,
        Command::SolveMm(a) => a.output.strict,
    };
    let result = match cli.command {
        Command::Run(a) => cmd_runs(a, false),
        Command::Sweep(a) => cmd_runs(a, true),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Converge(a) => cmd_converge(a),
        Command::SolveMm(a) => cmd_solve_mm(a),
    };
    match result {
        Ok(failed) if failed && strict => {
            eprintln!("blocksplit: at least one run diverged or failed");
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("blocksplit: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("blocksplit: {msg}");
            ExitCode::from(if strict { 2 } else { 1 })
        }
    }
}

fn parse_schemes(list: &str) -> Result<Vec<SchemeSpec>, Failure> {
    let specs = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<SchemeSpec>())
        .collect::<Result<Vec<_>, _>>()?;
    if specs.is_empty() {
        return Err(Failure::Invalid("scheme list is empty".into()));
    }
    Ok(specs)
}

fn parse_beta_range(s: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Failure::Invalid(format!("--beta-range expects lo:hi:count, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    Ok(log_range(lo, hi, count)?)
}

fn apply_scheme_args(cfg: &mut ExperimentConfig, s: &SchemeArgs) -> Result<(), Failure> {
    if let Some(list) = &s.schemes {
        cfg.schemes = parse_schemes(list)?;
    }
    if let Some(t) = s.tol {
        cfg.tol = t;
    }
    if let Some(m) = s.max_iters {
        cfg.max_iters = m;
    }
    if let Some(o) = &s.ordering {
        cfg.ordering = Some(o.parse::<Ordering>()?);
    }
    cfg.form = s.schur_form.parse::<SchurForm>()?;
    cfg.seed = s.seed;
    Ok(())
}

fn build_config(a: &ProblemArgs, sweep_defaults: bool) -> Result<ExperimentConfig, Failure> {
    let model: Model = a.model.parse()?;
    let dim: Dim = a.dim.parse()?;
    let mut cfg = ExperimentConfig::new(model, dim);
    if let Some(b) = &a.beta {
        cfg.betas = b.clone();
    } else if let Some(r) = &a.beta_range {
        cfg.betas = parse_beta_range(r)?;
    } else if sweep_defaults {
        cfg.betas = default_beta_sweep();
    }
    if let Some(n) = a.cells {
        cfg.n_cells = n;
    }
    if let Some(c) = a.contrast {
        cfg.contrast = c;
    }
    if let Some(k) = a.mobility_ratio {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Failure::Invalid(format!(
                "mobility ratio must be positive, got {k}"
            )));
        }
        cfg.mobility_ratio = k;
    }
    apply_scheme_args(&mut cfg, &a.scheme)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Fixed-width scientific notation with 17 significant digits.
fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn records_csv(rows: &[RunRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.scheme,
            num(r.beta),
            r.n_cells,
            r.iterations,
            r.status,
            num(r.final_res_u),
            num(r.final_res_v),
            num(r.final_err_u),
            num(r.final_err_v)
        );
    }
    s
}

fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("n_cells,err_u,err_v,order_u,order_v\n");
    let opt = |o: Option<f64>| o.map(num).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.n_cells,
            num(r.err_u),
            num(r.err_v),
            opt(r.order_u),
            opt(r.order_v)
        );
    }
    s
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::Runtime(Error::io(path, e).to_string()))
        }
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Runtime(e.to_string())),
    }
}

fn gnuplot_sweep(csv: &Path) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set logscale x\n\
         set xlabel 'beta'\n\
         set ylabel 'iterations'\n\
         data = '{path}'\n\
         schemes = system(\"tail -n +2 '{path}' | cut -d, -f1 | uniq | tr '\\\\n' ' '\")\n\
         plot for [s in schemes] data using (strcol(1) eq s ? $2 : 1/0):4 with linespoints title s\n",
        path = csv.display()
    )
}

fn gnuplot_convergence(csv: &Path) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set logscale xy\n\
         set xlabel 'cells per direction'\n\
         set ylabel 'L2 error'\n\
         plot '{path}' using 1:2 with linespoints title 'u', '{path}' using 1:3 with linespoints title 'v'\n",
        path = csv.display()
    )
}

fn write_gnuplot(o: &OutputArgs, script: impl Fn(&Path) -> String) -> Result<(), Failure> {
    let Some(gp) = &o.gnuplot else { return Ok(()) };
    let Some(csv) = &o.out else {
        return Err(Failure::Invalid(
            "--gnuplot needs --out to name the CSV file".into(),
        ));
    };
    fs::write(gp, script(csv)).map_err(|e| Failure::Runtime(Error::io(gp, e).to_string()))
}

fn emit_records(o: &OutputArgs, rows: &[RunRecord]) -> CmdResult {
    match o.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            emit(&o.out, &records_csv(rows))?;
            write_gnuplot(o, gnuplot_sweep)?;
        }
        Format::Json => {
            if o.gnuplot.is_some() {
                return Err(Failure::Invalid("--gnuplot requires CSV output".into()));
            }
            emit(&o.out, &to_json(&rows)?)?;
        }
    }
    Ok(rows
        .iter()
        .any(|r| matches!(r.status, Status::Diverged | Status::InnerFailure)))
}

fn cmd_runs(a: ProblemArgs, is_sweep: bool) -> CmdResult {
    let cfg = build_config(&a, is_sweep)?;
    let rows = sweep(&cfg)?;
    emit_records(&a.output, &rows)
}

fn cmd_analyze(a: ProblemArgs) -> CmdResult {
    if a.output.format == Some(Format::Csv) || a.output.gnuplot.is_some() {
        return Err(Failure::Invalid("analyze writes JSON only".into()));
    }
    let cfg = build_config(&a, false)?;
    let summaries = analyze_config(&cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
    emit(&a.output.out, &to_json(&summaries)?)?;
    Ok(false)
}

fn cmd_converge(a: ConvergeArgs) -> CmdResult {
    let cfg = build_config(&a.problem, false)?;
    let rows = match convergence_study(&cfg, &a.levels) {
        Ok(rows) => rows,
        Err(e @ Error::InvalidParameter(_)) => return Err(e.into()),
        Err(e) => return Err(Failure::Runtime(e.to_string())),
    };
    let o = &a.problem.output;
    match o.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            emit(&o.out, &convergence_csv(&rows))?;
            write_gnuplot(o, gnuplot_convergence)?;
        }
        Format::Json => emit(&o.out, &to_json(&rows)?)?,
    }
    Ok(false)
}

fn cmd_solve_mm(a: SolveMmArgs) -> CmdResult {
    let sys = BlockSystem::read_files(&a.prefix)?;
    let mut cfg = ExperimentConfig::new(Model::DualPorosity, Dim::D1);
    cfg.schemes = parse_schemes("BJ,BGS")?;
    apply_scheme_args(&mut cfg, &a.scheme)?;
    cfg.betas = vec![f64::NAN];
    if !(cfg.tol > 0.0 && cfg.tol.is_finite()) || cfg.max_iters == 0 {
        return Err(Failure::Invalid(
            "tolerance must be positive and max iterations at least 1".into(),
        ));
    }
    for s in &cfg.schemes {
        s.validate()?;
    }
    let reference = sys
        .monolithic_solve(1e-13)
        .map_err(|e| Failure::Runtime(format!("monolithic reference solve failed: {e}")))?;
    let opts = RunOptions {
        tol: cfg.tol,
        max_iters: cfg.max_iters,
        inner: SolverOptions::default(),
    };
    let mut rows: Vec<RunRecord> = cfg
        .schemes
        .iter()
        .map(|s| {
            run_record(&sys, &cfg.effective(s), opts, f64::NAN, sys.n_u(), |w| {
                let d = w.sub(&reference)?;
                Ok((d.u.norm2(), d.v.norm2()))
            })
        })
        .collect();
    rows.sort_by(|x, y| x.scheme.cmp(&y.scheme));
    emit_records(&a.output, &rows)
}
