//! `tailrisk`: threshold selection, composite fits, reserves and simulation studies
//! from the command line.

mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tailrisk::analysis::{analyze, AnalysisOptions, ReserveSettings};
use tailrisk::composite::{CompositeModel, PMode};
use tailrisk::data::{load_claims, Column, Delimiter};
use tailrisk::distributions::Family;
use tailrisk::fitting::FitMode;
use tailrisk::reserve::{estimate_reserves, with_workers};
use tailrisk::rng::entropy_seed;
use tailrisk::study::{run_study, ExperimentConfig};
use tailrisk::tailselect::{Method, SortedSample};
use tailrisk::Error;

use report::Report;

#[derive(Debug, Parser)]
#[command(name = "tailrisk", version, about = "Composite claim-severity models, threshold selection and Monte Carlo reserves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate thresholds with one or more selectors.
    Select(SelectArgs),
    /// Fit bulk and Pareto tail models at the selected thresholds.
    Fit(FitArgs),
    /// Estimate reserves of the fitted (or a saved) composite model.
    Reserve(ReserveArgs),
    /// Run a simulation study from a config file.
    Study(StudyArgs),
    /// Threshold, parameter and reserve tables for the Danish fire claims.
    Danish(DanishArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Claim file (comma, semicolon, tab or whitespace separated).
    #[arg(long)]
    input: PathBuf,
    /// Column holding the claim sizes: 1-based position, header name, or `last`.
    #[arg(long, default_value = "last")]
    column: String,
    /// Field separator: auto, comma, semicolon, tab, whitespace.
    #[arg(long, default_value = "auto")]
    delimiter: String,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Selectors: `all` or a comma list of m1..m7.
    #[arg(long, default_value = "all")]
    method: String,
    /// Bulk families: `all` or a comma list of gamma, lognormal, weibull, loggamma.
    #[arg(long, default_value = "all")]
    bulk: String,
    /// How the below-threshold probability is estimated.
    #[arg(long = "p-mode", default_value = "empirical")]
    p_mode: String,
    /// Bulk likelihood: truncated or plain.
    #[arg(long = "fit-mode", default_value = "truncated")]
    fit_mode: String,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Expected number of claims per period.
    #[arg(long)]
    lambda: f64,
    /// Tail probabilities, comma separated.
    #[arg(long, default_value = "0.05,0.01,0.005")]
    eps: String,
    /// Monte Carlo simulations per reserve.
    #[arg(long, default_value_t = 1_000_000)]
    sims: usize,
    /// Master seed; drawn from system entropy and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Selectors: `all` or a comma list of m1..m7.
    #[arg(long, default_value = "all")]
    method: String,
    /// Write the table as CSV to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Write the table as CSV to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory to write one composite model record per fitted cell
    /// (`<method>-<bulk>.model`), reusable with `reserve --model`.
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReserveArgs {
    /// Claim file to fit; alternatively give `--model`.
    #[arg(long, required_unless_present = "model")]
    input: Option<PathBuf>,
    /// Column holding the claim sizes: 1-based position, header name, or `last`.
    #[arg(long, default_value = "last")]
    column: String,
    /// Field separator: auto, comma, semicolon, tab, whitespace.
    #[arg(long, default_value = "auto")]
    delimiter: String,
    /// Saved composite model record (as written by `fit --records`).
    #[arg(long, conflicts_with = "input")]
    model: Option<PathBuf>,
    #[command(flatten)]
    spec: ModelArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Write the table as CSV to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Write the per-cell table as CSV to this file.
    /// Write the table as CSV to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DanishArgs {
    #[command(flatten)]
    input: InputArgs,
    /// How the below-threshold probability is estimated.
    #[arg(long = "p-mode", default_value = "empirical")]
    p_mode: String,
    /// Expected number of claims per year.
    #[arg(long, default_value_t = 227.0)]
    lambda: f64,
    /// Tail probabilities, comma separated.
    #[arg(long, default_value = "0.05,0.01,0.005")]
    eps: String,
    /// Monte Carlo simulations per reserve.
    #[arg(long, default_value_t = 1_000_000)]
    sims: usize,
    /// Master seed; drawn from system entropy and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Selectors: `all` or a comma list of m1..m7.
    #[arg(long, default_value = "all")]
    method: String,
    /// Bulk families: `all` or a comma list.
    #[arg(long, default_value = "all")]
    bulk: String,
    /// Write the table as CSV to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, kind: "usage".into(), message: message.into() }
    }
}

/// Exit status for a library error: 2 usage, 3 data, 4 numerical.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) | Error::Resolution(_) => 2,
        Error::Io(_) | Error::Parse { .. } | Error::Domain(_) | Error::InsufficientData(_) => 3,
        Error::NoThresholdFound(_)
        | Error::EstimationFailed(_)
        | Error::NonConvergence(_)
        | Error::DegenerateTruncation { .. }
        | Error::ThresholdMismatch { .. } => 4,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), kind: e.kind().into(), message: e.to_string() }
    }
}

type CmdResult = Result<Vec<Failure>, Failure>;

fn parse_list<T>(s: &str, all: &[T], what: &str, parse: impl Fn(&str) -> Result<T, Error>) -> Result<Vec<T>, Failure>
where
    T: Copy + PartialEq,
{
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(all.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let v = parse(part).map_err(|e| Failure::usage(format!("--{what}: {e}")))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(Failure::usage(format!("--{what} is empty")));
    }
    Ok(out)
}

fn methods(s: &str) -> Result<Vec<Method>, Failure> {
    parse_list(s, &Method::ALL, "method", str::parse)
}

fn families(s: &str) -> Result<Vec<Family>, Failure> {
    let fams = parse_list(s, &Family::BULK, "bulk", str::parse)?;
    if let Some(f) = fams.iter().find(|f| !Family::BULK.contains(f)) {
        return Err(Failure::usage(format!("--bulk: {f} is not a bulk family")));
    }
    Ok(fams)
}

fn eps_list(s: &str) -> Result<Vec<f64>, Failure> {
    let v: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
    let v = v.map_err(|e| Failure::usage(format!("--eps: {e}")))?;
    if v.is_empty() || v.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Failure::usage("--eps values must lie in (0,1)"));
    }
    Ok(v)
}

fn p_mode(s: &str) -> Result<PMode, Failure> {
    match s.parse::<PMode>() {
        Ok(PMode::Mixing) => Err(Failure::usage("--p-mode must be empirical or theoretical")),
        Ok(p) => Ok(p),
        Err(e) => Err(Failure::usage(format!("--p-mode: {e}"))),
    }
}

fn fit_mode(s: &str) -> Result<FitMode, Failure> {
    s.parse::<FitMode>().map_err(|e| Failure::usage(format!("--fit-mode: {e}")))
}

fn read_sample(path: &PathBuf, column: &str, delimiter: &str) -> Result<(SortedSample, usize), Failure> {
    let column: Column = column.parse().map_err(|e: Error| Failure::usage(format!("--column: {e}")))?;
    let delimiter: Delimiter = delimiter.parse().map_err(|e: Error| Failure::usage(format!("--delimiter: {e}")))?;
    let data = load_claims(path, &column, delimiter)?;
    let n = data.len();
    Ok((SortedSample::new(data.values)?, n))
}

fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(entropy_seed)
}

fn emit(report: &Report, out: &Option<PathBuf>) -> Result<(), Failure> {
    print!("{}", report.text);
    if let Some(path) = out {
        std::fs::write(path, &report.csv).map_err(|e| Failure::from(Error::Io(format!("{}: {e}", path.display()))))?;
    }
    Ok(())
}

fn cmd_select(a: SelectArgs) -> CmdResult {
    let methods = methods(&a.method)?;
    let (sample, _) = read_sample(&a.input.input, &a.input.column, &a.input.delimiter)?;
    let analysis = analyze(&sample, &AnalysisOptions::thresholds_only(methods));
    let report = report::thresholds(&analysis, &a.input.input);
    emit(&report, &a.out)?;
    Ok(report::failures(&analysis))
}

fn options(m: &ModelArgs, reserve: Option<ReserveSettings>) -> Result<AnalysisOptions, Failure> {
    Ok(AnalysisOptions {
        methods: methods(&m.method)?,
        families: families(&m.bulk)?,
        p_mode: p_mode(&m.p_mode)?,
        fit_mode: fit_mode(&m.fit_mode)?,
        fit: true,
        reserve,
    })
}

fn cmd_fit(a: FitArgs) -> CmdResult {
    let opts = options(&a.model, None)?;
    let (sample, _) = read_sample(&a.input.input, &a.input.column, &a.input.delimiter)?;
    let analysis = analyze(&sample, &opts);
    let report = report::fits(&analysis, &a.input.input);
    emit(&report, &a.out)?;
    if let Some(dir) = &a.records {
        let io = |e: std::io::Error| Failure::from(Error::Io(format!("{}: {e}", dir.display())));
        std::fs::create_dir_all(dir).map_err(io)?;
        for m in &analysis.methods {
            for b in &m.bulks {
                if let Ok(model) = &b.model {
                    let path = dir.join(format!("{}-{}.model", m.method, b.family.tag()));
                    std::fs::write(&path, model.to_record()).map_err(io)?;
                }
            }
        }
    }
    Ok(report::failures(&analysis))
}

fn cmd_reserve(a: ReserveArgs) -> CmdResult {
    let settings =
        ReserveSettings { lambda: a.sim.lambda, eps: eps_list(&a.sim.eps)?, sims: a.sim.sims, seed: seed_or_entropy(a.sim.seed) };
    // check the Monte Carlo settings before any fitting
    for &e in &settings.eps {
        tailrisk::reserve::ReserveQuery::new(settings.lambda, e, settings.sims, settings.seed)?;
    }
    if let Some(path) = &a.model {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::from(Error::Io(format!("{}: {e}", path.display()))))?;
        let model = CompositeModel::from_record(&text)?;
        let est = with_workers(a.sim.workers, || {
            estimate_reserves(&model, settings.lambda, &settings.eps, settings.sims, settings.seed)
        })??;
        let report = report::model_reserves(&model, &est, &settings, path);
        emit(&report, &a.out)?;
        return Ok(Vec::new());
    }
    let input = a.input.expect("clap enforces --input or --model");
    let opts = options(&a.spec, Some(settings))?;
    let (sample, _) = read_sample(&input, &a.column, &a.delimiter)?;
    let analysis = with_workers(a.sim.workers, || analyze(&sample, &opts))?;
    let report = report::reserves(&analysis, &opts, &input, 1.0, "");
    emit(&report, &a.out)?;
    Ok(report::failures(&analysis))
}

fn cmd_study(a: StudyArgs) -> CmdResult {
    let text =
        std::fs::read_to_string(&a.config).map_err(|e| Failure::from(Error::Io(format!("{}: {e}", a.config.display()))))?;
    let config = ExperimentConfig::from_toml(&text)?;
    let result = run_study(&config, a.workers)?;
    let report = Report { text: result.to_text(), csv: result.to_csv() };
    emit(&report, &a.out)?;
    Ok(Vec::new())
}

fn cmd_danish(a: DanishArgs) -> CmdResult {
    let settings = ReserveSettings { lambda: a.lambda, eps: eps_list(&a.eps)?, sims: a.sims, seed: seed_or_entropy(a.seed) };
    for &e in &settings.eps {
        tailrisk::reserve::ReserveQuery::new(settings.lambda, e, settings.sims, settings.seed)?;
    }
    let opts = AnalysisOptions {
        methods: methods(&a.method)?,
        families: families(&a.bulk)?,
        p_mode: p_mode(&a.p_mode)?,
        fit_mode: FitMode::Truncated,
        fit: true,
        reserve: Some(settings),
    };
    let (sample, _) = read_sample(&a.input.input, &a.input.column, &a.input.delimiter)?;
    let analysis = with_workers(a.workers, || analyze(&sample, &opts))?;
    let report = report::danish(&analysis, &opts, &sample, &a.input.input);
    emit(&report, &a.out)?;
    // failed cells are part of the tables; they are listed as warnings only
    for f in report::failures(&analysis) {
        eprintln!("{}", report::record("warning", &f));
    }
    Ok(Vec::new())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return ExitCode::from(if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 });
            }
            // the message without clap's usage and help hints, on one line
            let text = e.to_string();
            let message: Vec<&str> =
                text.lines().map(str::trim).take_while(|l| !l.starts_with("Usage:")).filter(|l| !l.is_empty()).collect();
            let message = message.join(" ").trim_start_matches("error: ").to_string();
            eprintln!("{}", report::record("error", &Failure::usage(message)));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Reserve(a) => cmd_reserve(a),
        Command::Study(a) => cmd_study(a),
        Command::Danish(a) => cmd_danish(a),
    };
    match result {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in &failures {
                eprintln!("{}", report::record("error", f));
            }
            ExitCode::from(failures[0].code)
        }
        Err(f) => {
            eprintln!("{}", report::record("error", &f));
            ExitCode::from(f.code)
        }
    }
}
