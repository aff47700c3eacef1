//! Command-line front end for the `subordinate` library.
//!
//! [`run`] parses arguments, dispatches to the library and returns the exit
//! code: 0 on success, 1 when a `verify` suite has failing checks, 2 on usage
//! or domain errors.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use subordinate::estimator::{
    estimate_dispersion, estimate_interevent, estimate_jump_sizes, estimate_transition_rates,
    EstimateEntry, EstimateReport,
};
use subordinate::kernel::{birth_kernel, death_kernel, kernel_for, poisson_kernel, uniformization_kernel};
use subordinate::moments::{closed_or_numeric_moments, moments_from_rates, MomentSummary};
use subordinate::rates::rates_from_kernel;
use subordinate::sir::{simulate_sir, sir_csv, SirConfig};
use subordinate::trajectory::simulate_time_changed;
use subordinate::{compose, fmt_real, simulate_simple, Error, ProcessSpec, RateFunctionSpec, RngStream, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SUBORDINATE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "subordinate", version, about = "Poisson-subordinated Markov counting processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Transition rates q_{s,k} of the time-changed process.
    Rates(RatesArgs),
    /// Infinitesimal mean, variance and dispersion index.
    Moments(MomentsArgs),
    /// Simulate a base or time-changed trajectory.
    Simulate(SimulateArgs),
    /// Compose a base trajectory with a clock trajectory.
    Compose(ComposeArgs),
    /// Run a Monte Carlo or numerical check suite.
    Verify(VerifyArgs),
    /// Simulate the over-dispersed SIR system.
    Sir(SirArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Poisson,
    #[value(alias = "linear_birth")]
    LinearBirth,
    #[value(alias = "linear_death")]
    LinearDeath,
    #[value(alias = "nonlinear_death")]
    NonlinearDeath,
    General,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Theorem1,
    Interevent,
    Jumps,
    Dispersion,
    Kernels,
    All,
}

#[derive(Args, Debug, Clone)]
struct ProcessArgs {
    /// Process spec as inline JSON or a path to a JSON file.
    #[arg(long, conflicts_with = "family")]
    process: Option<String>,
    #[arg(long, value_enum)]
    family: Option<Family>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long)]
    d0: Option<u64>,
    /// Comma-separated rate table for the general family.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    table: Option<Vec<f64>>,
    /// Initial state when the family is given by flags.
    #[arg(long, default_value_t = 0)]
    initial_state: u64,
}

#[derive(Args, Debug, Clone)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RatesArgs {
    #[command(flatten)]
    process: ProcessArgs,
    /// Conditioning state s; defaults to the initial state.
    #[arg(long)]
    state: Option<u64>,
    #[arg(long, default_value_t = 10)]
    kmax: u64,
    #[arg(long, default_value_t = 1e-12)]
    eps: f64,
    /// Use the uniformization oracle instead of the closed form.
    #[arg(long)]
    numeric: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct MomentsArgs {
    #[command(flatten)]
    process: ProcessArgs,
    /// States to report, comma-separated; defaults to the initial state.
    #[arg(long, value_delimiter = ',')]
    states: Option<Vec<u64>>,
    /// Always sum the transition rates instead of using closed forms.
    #[arg(long)]
    from_rates: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    process: ProcessArgs,
    #[arg(long)]
    t_end: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Simulate S(t) = X(N(t)) instead of X(t).
    #[arg(long)]
    time_changed: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ComposeArgs {
    /// Base trajectory JSON file.
    #[arg(long)]
    base: PathBuf,
    /// Clock trajectory JSON file.
    #[arg(long)]
    clock: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    reps: u64,
    #[arg(long, default_value_t = 0.01)]
    h: f64,
    /// Override the suite's default process.
    #[command(flatten)]
    process: ProcessArgs,
    /// Conditioning state; defaults to the initial state.
    #[arg(long)]
    state: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SirArgs {
    /// SIR configuration JSON file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    t_end: f64,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(Error),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Domain(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs the CLI writing to the process's standard streams.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

/// Runs the CLI with explicit output streams. `argv[0]` is the program name.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    configure_threads();
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // Fails only if the pool already exists, e.g. on repeated calls.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> CliResult<i32> {
    match command {
        Command::Rates(a) => rates(a, out),
        Command::Moments(a) => moments(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Compose(a) => compose_cmd(a, out),
        Command::Verify(a) => verify(a, out),
        Command::Sir(a) => sir(a, out),
    }
}

fn emit(text: &str, path: Option<&PathBuf>, out: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn read_text(path: &PathBuf) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable value")
}

fn require(name: &str, v: Option<f64>) -> CliResult<f64> {
    v.ok_or_else(|| CliError::Usage(format!("--{name} is required for this family")))
}

fn process_spec(args: &ProcessArgs) -> CliResult<Option<ProcessSpec>> {
    if let Some(p) = &args.process {
        let text = if p.trim_start().starts_with('{') { p.clone() } else { read_text(&PathBuf::from(p))? };
        let spec: ProcessSpec =
            serde_json::from_str(&text).map_err(|e| CliError::Domain(Error::InvalidParameter(e.to_string())))?;
        return Ok(Some(spec));
    }
    let Some(family) = args.family else { return Ok(None) };
    let d0 = || args.d0.ok_or_else(|| CliError::Usage("--d0 is required for this family".into()));
    let rate = match family {
        Family::Poisson => RateFunctionSpec::poisson(require("alpha", args.alpha)?)?,
        Family::LinearBirth => RateFunctionSpec::linear_birth(require("beta", args.beta)?)?,
        Family::LinearDeath => RateFunctionSpec::linear_death(require("delta", args.delta)?, d0()?)?,
        Family::NonlinearDeath => RateFunctionSpec::nonlinear_death(d0()?)?,
        Family::General => RateFunctionSpec::general(
            args.table.clone().ok_or_else(|| CliError::Usage("--table is required for this family".into()))?,
        )?,
    };
    Ok(Some(ProcessSpec::new(rate, args.initial_state)?))
}

fn required_spec(args: &ProcessArgs) -> CliResult<ProcessSpec> {
    process_spec(args)?.ok_or_else(|| CliError::Usage("a process is required: use --family or --process".into()))
}

fn rates(a: RatesArgs, out: &mut dyn Write) -> CliResult<i32> {
    let spec = required_spec(&a.process)?;
    let s = a.state.unwrap_or(spec.initial_state);
    let kernel = if a.numeric {
        uniformization_kernel(&spec, s, 1.0, a.eps, None)?
    } else {
        kernel_for(&spec, s, a.eps)?
    };
    let row = rates_from_kernel(&kernel);
    let text = match a.output.format {
        Format::Csv => row.to_csv(a.kmax),
        Format::Json => to_json(&row) + "\n",
    };
    emit(&text, a.output.output.as_ref(), out)?;
    Ok(EXIT_OK)
}

fn moment_summary(spec: &ProcessSpec, s: u64, from_rates: bool) -> CliResult<MomentSummary> {
    if from_rates {
        Ok(moments_from_rates(&rates_from_kernel(&kernel_for(spec, s, 1e-13)?)))
    } else {
        Ok(closed_or_numeric_moments(spec, s)?)
    }
}

fn moments(a: MomentsArgs, out: &mut dyn Write) -> CliResult<i32> {
    let spec = required_spec(&a.process)?;
    let states = a.states.clone().unwrap_or_else(|| vec![spec.initial_state]);
    let rows = states
        .iter()
        .map(|&s| {
            let mut m = moment_summary(&spec, s, a.from_rates)?;
            m.state = s;
            Ok(m)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut text = String::new();
    match a.output.format {
        Format::Csv => {
            text.push_str("s,mu,sigma2,D,err\n");
            for m in &rows {
                let d = m.dispersion.map(fmt_real).unwrap_or_else(|| "NaN".into());
                let _ = writeln!(text, "{},{},{},{},{}", m.state, fmt_real(m.inf_mean), fmt_real(m.inf_var), d, fmt_real(m.error_bound));
            }
        }
        Format::Json => {
            for m in &rows {
                text.push_str(&to_json(m));
                text.push('\n');
            }
        }
    }
    emit(&text, a.output.output.as_ref(), out)?;
    Ok(EXIT_OK)
}

fn trajectory_text(traj: &Trajectory, format: Format) -> String {
    match format {
        Format::Csv => traj.to_csv(),
        Format::Json => to_json(traj) + "\n",
    }
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> CliResult<i32> {
    let spec = required_spec(&a.process)?;
    let stream = RngStream::new(a.seed, a.stream);
    let text = if a.time_changed {
        let path = simulate_time_changed(&spec, a.t_end, stream)?;
        match a.output.format {
            Format::Csv => path.composed.to_csv(),
            Format::Json => to_json(&path) + "\n",
        }
    } else {
        trajectory_text(&simulate_simple(&spec, a.t_end, stream)?, a.output.format)
    };
    emit(&text, a.output.output.as_ref(), out)?;
    Ok(EXIT_OK)
}

fn read_trajectory(path: &PathBuf) -> CliResult<Trajectory> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Domain(Error::InvalidParameter(format!("{}: {e}", path.display()))))
}

fn compose_cmd(a: ComposeArgs, out: &mut dyn Write) -> CliResult<i32> {
    let base = read_trajectory(&a.base)?;
    let clock = read_trajectory(&a.clock)?;
    let composed = compose(&base, &clock)?;
    emit(&trajectory_text(&composed, a.output.format), a.output.output.as_ref(), out)?;
    Ok(EXIT_OK)
}

/// Deterministic check of the numerical kernel oracle against closed forms.
fn kernels_report() -> CliResult<EstimateReport> {
    let mut entries = Vec::new();
    let mut push = |name: String, spec: ProcessSpec, s: u64, exact: subordinate::KernelDistribution| -> CliResult<()> {
        let numeric = uniformization_kernel(&spec, s, 1.0, 1e-10, None)?;
        let len = numeric.probs.len().max(exact.probs.len()) as u64;
        let diff = (0..len).map(|k| (numeric.prob(k) - exact.prob(k)).abs()).fold(0.0, f64::max);
        entries.push(EstimateEntry::compare(name, diff, 0.0, 0.0, 1e-8));
        Ok(())
    };
    for alpha in [0.5, 1.0, 2.0] {
        push(format!("poisson[{alpha}]"), ProcessSpec::new(RateFunctionSpec::poisson(alpha)?, 0)?, 0, poisson_kernel(alpha, 0, 1e-14)?)?;
    }
    for beta in [0.3, 0.7] {
        for s in [1, 3] {
            let spec = ProcessSpec::new(RateFunctionSpec::linear_birth(beta)?, 0)?;
            push(format!("birth[{beta},{s}]"), spec, s, birth_kernel(beta, s, 1e-14, false)?)?;
        }
    }
    for d0 in [2, 10] {
        for s in 0..=d0 {
            let spec = ProcessSpec::new(RateFunctionSpec::linear_death(0.7, d0)?, 0)?;
            push(format!("death[0.7,{d0},{s}]"), spec, s, death_kernel(0.7, d0, s)?)?;
        }
    }
    Ok(EstimateReport {
        target: "kernels".into(),
        master_seed: 0,
        n_reps: 0,
        entries,
        notes: "estimate is the max entrywise difference between uniformization and the closed form".into(),
    })
}

fn verify(a: VerifyArgs, out: &mut dyn Write) -> CliResult<i32> {
    let custom = process_spec(&a.process)?;
    let pick = |default: ProcessSpec| -> ProcessSpec { custom.clone().unwrap_or(default) };
    let state = |spec: &ProcessSpec| a.state.unwrap_or(spec.initial_state);
    let suites: Vec<Suite> = match a.suite {
        Suite::All => vec![Suite::Kernels, Suite::Theorem1, Suite::Interevent, Suite::Jumps, Suite::Dispersion],
        s => vec![s],
    };
    let mut reports = Vec::new();
    for (i, suite) in suites.into_iter().enumerate() {
        // Each suite in `all` gets its own master seed derived from the given one.
        let seed = a.seed.wrapping_add(i as u64);
        let report = match suite {
            Suite::Kernels => kernels_report()?,
            Suite::Theorem1 => {
                let spec = pick(ProcessSpec::new(RateFunctionSpec::poisson(1.0)?, 0)?);
                estimate_transition_rates(&spec, state(&spec), a.h, a.reps, seed)?
            }
            Suite::Interevent => {
                let spec = pick(ProcessSpec::new(RateFunctionSpec::linear_death(0.7, 10)?, 0)?);
                estimate_interevent(&spec, state(&spec), a.reps, seed)?
            }
            Suite::Jumps => {
                let spec = pick(ProcessSpec::new(RateFunctionSpec::poisson(1.0)?, 0)?);
                estimate_jump_sizes(&spec, state(&spec), a.reps, seed)?
            }
            Suite::Dispersion => {
                let spec = pick(ProcessSpec::new(RateFunctionSpec::poisson(2.0)?, 0)?);
                estimate_dispersion(&spec, state(&spec), a.h, a.reps, seed, true)?
            }
            Suite::All => unreachable!(),
        };
        reports.push(report);
    }
    let text: String = reports.iter().map(|r| r.to_json_lines()).collect();
    emit(&text, a.output.as_ref(), out)?;
    Ok(if reports.iter().all(|r| r.passed()) { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn sir(a: SirArgs, out: &mut dyn Write) -> CliResult<i32> {
    let config: SirConfig = serde_json::from_str(&read_text(&a.config)?)
        .map_err(|e| CliError::Domain(Error::Config(e.to_string())))?;
    let records = simulate_sir(&config, a.t_end, a.seed)?;
    let text = match a.output.format {
        Format::Csv => sir_csv(&records),
        Format::Json => records.iter().map(|r| to_json(r) + "\n").collect(),
    };
    emit(&text, a.output.output.as_ref(), out)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let argv = std::iter::once("subordinate").chain(args.iter().copied());
        let code = run_with(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_goes_to_stdout() {
        let (code, out, err) = capture(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("verify"));
        assert!(err.is_empty());
    }

    #[test]
    fn process_json_and_flags_agree() {
        let (_, a, _) = capture(&["rates", "--family", "nonlinear_death", "--d0", "5", "--state", "2"]);
        let (_, b, _) = capture(&["rates", "--process", r#"{"family":"nonlinear_death","params":{"d0":5},"initial_state":2}"#]);
        assert_eq!(a, b);
    }

    #[test]
    fn missing_process_is_usage_error() {
        let (code, _, err) = capture(&["rates"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--family"));
    }

    #[test]
    fn rates_json_mirror() {
        let (code, out, _) = capture(&["rates", "--family", "poisson", "--alpha", "1", "--format", "json"]);
        assert_eq!(code, EXIT_OK);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["state"], 0);
        assert!((v["rate_function"].as_f64().unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }
}
