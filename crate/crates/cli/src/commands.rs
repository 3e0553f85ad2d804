use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use varbound::estimate::{analyze_ate, merge_sparse_strata, LowerFamily};
use varbound::late::{analyze_late, merge_weak_strata, LateFamily, LateOptions};
use varbound::simulate::{binary_sweep, run_study_logged, StudyConfig};

use crate::error::{CliError, Result};
use crate::format::TABLE_DIGITS;
use crate::ingest::{emit_sample, ingest, parse_bin_directive, DatasetSchema};
use crate::report::{
    render, replication_table, sample_diagnostics, sweep_table, AteReport, InputSummary, LateReport,
    OutputFormat, SimulateReport,
};

/// Variance bounds and conservative confidence intervals for randomized
/// experiments.
#[derive(Debug, Parser)]
#[command(name = "varbound", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plug-in variance bounds for the difference in means.
    Bounds(AteArgs),
    /// Confidence intervals for the average treatment effect.
    Ci(AteArgs),
    /// Wald estimate, bounds and intervals for the complier effect.
    Late(LateArgs),
    /// Run a Monte Carlo study described by a TOML file.
    Simulate(SimulateArgs),
    /// Bounds of the 600-unit binary population over p = 1/200, ..., 1.
    Example1(OutputArgs),
    /// Read a data file and write it back in canonical `t,y[,d],w` form.
    Canonical(CanonicalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input file, or `-` for standard input.
    pub input: String,
    /// Treatment column (0/1). Columns may also be given by 1-based index.
    #[arg(long, default_value = "t")]
    pub treatment: String,
    #[arg(long, default_value = "y")]
    pub outcome: String,
    /// Take-up column (0/1).
    #[arg(long)]
    pub takeup: Option<String>,
    /// Covariate columns, cross-classified into strata.
    #[arg(long = "covariate", short = 'w', value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Binning of a numeric covariate: `col=e1,e2,...`, `col=q<K>` or `col=auto`.
    #[arg(long = "bins")]
    pub bins: Vec<String>,
    /// Field delimiter: a single character, or `tab`.
    #[arg(long, default_value = ",")]
    pub delimiter: String,
    /// The input has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// Population size `N` when the file is a subset of the population.
    #[arg(long)]
    pub population_size: Option<usize>,
}

impl DataArgs {
    fn schema(&self, takeup: Option<String>) -> Result<DatasetSchema> {
        let mut schema = DatasetSchema::new(&self.treatment, &self.outcome);
        schema.takeup = takeup;
        schema.covariates = self.covariates.clone();
        schema.bins = self
            .bins
            .iter()
            .map(|b| parse_bin_directive(b))
            .collect::<Result<_>>()?;
        schema.delimiter = parse_delimiter(&self.delimiter)?;
        schema.has_header = !self.no_header;
        schema.population_size = self.population_size;
        Ok(schema)
    }
}

fn parse_delimiter(s: &str) -> Result<u8> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(CliError::usage(format!("delimiter `{s}` is not a single ASCII character"))),
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    /// Significant digits in CSV and TSV output.
    #[arg(long, default_value_t = TABLE_DIGITS)]
    pub precision: usize,
    /// Indent JSON output.
    #[arg(long)]
    pub pretty: bool,
    /// Write to this file instead of standard output.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AteArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Lower-bound families; all by default.
    #[arg(long, value_delimiter = ',')]
    pub families: Vec<LowerFamily>,
    /// Merge strata lacking units in an arm into an adjacent stratum.
    #[arg(long)]
    pub merge_sparse_strata: bool,
    /// Reserved; the analysis commands are deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct LateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Lower-bound families; all by default.
    #[arg(long, value_delimiter = ',')]
    pub families: Vec<LateFamily>,
    /// Merge strata with a vanishing `λ̂_{1k}` or `λ̂_{0k}` into an adjacent stratum.
    #[arg(long)]
    pub merge_sparse_strata: bool,
    /// Smallest complier share accepted.
    #[arg(long)]
    pub eps_c: Option<f64>,
    /// Smallest per-stratum `λ̂` accepted.
    #[arg(long)]
    pub eps_lambda: Option<f64>,
    /// Reserved; the analysis commands are deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Study configuration (TOML).
    pub config: PathBuf,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, env = "VARBOUND_THREADS")]
    pub threads: Option<usize>,
    /// Also write a per-replication CSV log to this file.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CanonicalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

fn emit<W: Write>(bytes: &[u8], output: &Option<PathBuf>, out: &mut W) -> Result<()> {
    match output {
        Some(path) => fs::write(path, bytes)?,
        None => out.write_all(bytes)?,
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("alpha {alpha} outside (0, 1)")))
    }
}

fn cmd_ate<W: Write>(args: &AteArgs, command: &'static str, out: &mut W) -> Result<()> {
    check_alpha(args.alpha)?;
    let ingested = ingest(&args.data.input, &args.data.schema(None)?)?;
    let (sample, merges) = if args.merge_sparse_strata {
        merge_sparse_strata(&ingested.sample)?
    } else {
        (ingested.sample, Vec::new())
    };
    let families = if args.families.is_empty() {
        LowerFamily::ALL.to_vec()
    } else {
        args.families.clone()
    };
    let analysis = analyze_ate(&sample, args.alpha, &families)?;
    let diagnostics = sample_diagnostics(&sample, &merges);
    let input = InputSummary::new(&args.data.input, &sample, ingested.strata, merges);
    let doc = AteReport::new(command, input, analysis, diagnostics);
    let bytes = render(&doc, || doc.table(), args.out.format, args.out.precision, args.out.pretty)?;
    emit(&bytes, &args.out.output, out)
}

fn cmd_late<W: Write>(args: &LateArgs, out: &mut W) -> Result<()> {
    check_alpha(args.alpha)?;
    let takeup = args.data.takeup.clone().unwrap_or_else(|| "d".to_string());
    let ingested = ingest(&args.data.input, &args.data.schema(Some(takeup))?)?;
    let defaults = LateOptions::default();
    let opts = LateOptions {
        eps_c: args.eps_c.unwrap_or(defaults.eps_c),
        eps_lambda: args.eps_lambda.unwrap_or(defaults.eps_lambda),
    };
    let (sample, merges) = if args.merge_sparse_strata {
        merge_weak_strata(&ingested.sample, &opts)?
    } else {
        (ingested.sample, Vec::new())
    };
    let families = if args.families.is_empty() {
        LateFamily::ALL.to_vec()
    } else {
        args.families.clone()
    };
    let analysis = analyze_late(&sample, args.alpha, &families, &opts)?;
    let diagnostics = sample_diagnostics(&sample, &merges);
    let input = InputSummary::new(&args.data.input, &sample, ingested.strata, merges);
    let doc = LateReport::new(input, analysis, opts, diagnostics);
    let bytes = render(&doc, || doc.table(), args.out.format, args.out.precision, args.out.pretty)?;
    emit(&bytes, &args.out.output, out)
}

pub fn load_config(path: &PathBuf) -> Result<StudyConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read `{}`: {e}", path.display())))?;
    let config: StudyConfig = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn cmd_simulate<W: Write>(args: &SimulateArgs, out: &mut W) -> Result<()> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))?;
    let started = std::time::Instant::now();
    let (report, log) = pool.install(|| run_study_logged(&config))?;
    eprintln!(
        "varbound: {} replications in {:.2}s",
        config.reps,
        started.elapsed().as_secs_f64()
    );
    if let Some(path) = &args.log {
        let mut buf = Vec::new();
        replication_table(&log).write(&mut buf, b',', args.out.precision)?;
        fs::write(path, buf)?;
    }
    let doc = SimulateReport {
        command: "simulate",
        report,
    };
    let bytes = render(&doc, || doc.table(), args.out.format, args.out.precision, args.out.pretty)?;
    emit(&bytes, &args.out.output, out)
}

fn cmd_example1<W: Write>(args: &OutputArgs, out: &mut W) -> Result<()> {
    let rows = binary_sweep()?;
    let bytes = render(&rows, || sweep_table(&rows), args.format, args.precision, args.pretty)?;
    emit(&bytes, &args.output, out)
}

fn cmd_canonical<W: Write>(args: &CanonicalArgs, out: &mut W) -> Result<()> {
    let ingested = ingest(&args.data.input, &args.data.schema(args.data.takeup.clone())?)?;
    let mut buf = Vec::new();
    emit_sample(&ingested.sample, &mut buf)?;
    emit(&buf, &args.output, out)
}

/// Execute a parsed command line, writing the document to `out` unless an
/// output file is given.
pub fn run<W: Write>(cli: Cli, out: &mut W) -> Result<()> {
    match &cli.command {
        Command::Bounds(args) => cmd_ate(args, "bounds", out),
        Command::Ci(args) => cmd_ate(args, "ci", out),
        Command::Late(args) => cmd_late(args, out),
        Command::Simulate(args) => cmd_simulate(args, out),
        Command::Example1(args) => cmd_example1(args, out),
        Command::Canonical(args) => cmd_canonical(args, out),
    }
}
