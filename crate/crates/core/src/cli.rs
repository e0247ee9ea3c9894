//! Command-line front end.
//!
//! Exit statuses: 0 on success, 2 on usage or validation errors, 1 on I/O
//! failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::num::NonZeroU32;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, SubsecRound, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ephemeris::{generate_phase_events, parse_phase_table, EphemerisModel, PhaseEvent};
use crate::market::{compute_diffs, parse_ohlcv, DailyBar, DiffKind, Validation};
use crate::report::{render_csv, render_json, render_svg_bar, Metadata, Report};
use crate::sampling::{
    aggregate, fuse, render_annotated_csv, AnnotatedRow, Granularity, DEFAULT_EARLY_DAYS,
};

#[derive(Debug, Parser)]
#[command(name = "lunatic", version, about = "Lunar-phase and calendar bucketing of daily market bars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a phase table generated from the mean lunation model.
    Ephemeris(EphemerisArgs),
    /// Write bars fused with their diff and luna code.
    Annotate(AnnotateArgs),
    /// Aggregate diffs into buckets and render a report.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Args)]
struct EphemerisArgs {
    #[arg(long, value_name = "DATE")]
    from: NaiveDate,
    #[arg(long, value_name = "DATE")]
    to: NaiveDate,
    /// Known new moon instant (UTC), e.g. 2000-01-06T18:14:00.
    #[arg(long, value_name = "DATETIME")]
    anchor: Option<NaiveDateTime>,
    /// Synodic month in days.
    #[arg(long, value_name = "DAYS")]
    period: Option<f64>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Inputs {
    #[arg(long, value_name = "PATH")]
    ohlcv: PathBuf,
    /// Phase table; alternatively generate events with --ephemeris-from/--ephemeris-to.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["ephemeris_from", "ephemeris_to"])]
    phases: Option<PathBuf>,
    #[arg(long, value_name = "DATE", requires = "ephemeris_to")]
    ephemeris_from: Option<NaiveDate>,
    #[arg(long, value_name = "DATE", requires = "ephemeris_from")]
    ephemeris_to: Option<NaiveDate>,
    #[arg(long, value_enum, default_value_t = DiffArg::Interday)]
    diff: DiffArg,
    /// First bar date to keep (inclusive).
    #[arg(long, value_name = "DATE")]
    from: Option<NaiveDate>,
    /// Last bar date to keep (inclusive).
    #[arg(long, value_name = "DATE")]
    to: Option<NaiveDate>,
    /// Reject bars with inconsistent OHLC instead of warning.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    #[command(flatten)]
    inputs: Inputs,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum, value_name = "TOKEN")]
    by: ByArg,
    /// Early-segment length for `earlylate` (default 5).
    #[arg(long, value_name = "INT")]
    n: Option<u32>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Fixed report timestamp (RFC 3339) for reproducible output.
    #[arg(long, value_name = "RFC3339")]
    timestamp: Option<DateTime<Utc>>,
    #[arg(long)]
    title: Option<String>,
    #[arg(long, default_value_t = 800)]
    width: u32,
    #[arg(long, default_value_t = 400)]
    height: u32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DiffArg {
    Interday,
    Intraday,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "lower")]
enum ByArg {
    Semester,
    Trimester,
    Bimester,
    Month,
    Week,
    Dayofyear,
    Dayofmonth,
    Weekday,
    Phaseday,
    Phase,
    Earlylate,
}

impl From<DiffArg> for DiffKind {
    fn from(d: DiffArg) -> Self {
        match d {
            DiffArg::Interday => DiffKind::InterdayClose,
            DiffArg::Intraday => DiffKind::IntradayOpenClose,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) => m,
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                2
            } else {
                let _ = write!(stdout, "{e}");
                0
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Ephemeris(args) => cmd_ephemeris(args, stdout),
        Command::Annotate(args) => cmd_annotate(args, stdout, stderr),
        Command::Aggregate(args) => cmd_aggregate(args, stdout, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn cmd_ephemeris(args: EphemerisArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let default = EphemerisModel::default();
    let model = EphemerisModel::new(
        args.anchor.unwrap_or(default.anchor()),
        args.period.unwrap_or(default.synodic_period()),
    )
    .map_err(usage)?;
    let events = generate_phase_events(args.from, args.to, &model).map_err(usage)?;
    emit(
        args.out.as_deref(),
        &crate::ephemeris::serialize_phase_table(&events),
        stdout,
    )
}

struct Loaded {
    rows: Vec<AnnotatedRow>,
    sources: Vec<String>,
    diff_kind: DiffKind,
}

fn load(inputs: &Inputs, stderr: &mut dyn Write) -> Result<Loaded, CliError> {
    if inputs.phases.is_none() && inputs.ephemeris_from.is_none() {
        return Err(usage(
            "phase events required: pass --phases or --ephemeris-from/--ephemeris-to",
        ));
    }
    let validation = if inputs.strict {
        Validation::Strict
    } else {
        Validation::Lenient
    };
    let parsed = parse_ohlcv(&read(&inputs.ohlcv)?, validation).map_err(usage)?;
    for w in &parsed.warnings {
        let _ = writeln!(stderr, "warning: {}: {w}", inputs.ohlcv.display());
    }
    let diff_kind = DiffKind::from(inputs.diff);
    // diffs come from the full series so the first bar in range keeps its
    // change from the previous session
    let diffs = compute_diffs(&parsed.bars, diff_kind).map_err(usage)?;
    let bars: Vec<DailyBar> = parsed
        .bars
        .into_iter()
        .filter(|b| inputs.from.is_none_or(|f| b.date >= f) && inputs.to.is_none_or(|t| b.date <= t))
        .collect();
    if bars.is_empty() {
        return Err(usage("no bars in the selected date range"));
    }

    let mut sources = vec![file_name(&inputs.ohlcv)];
    let events: Vec<PhaseEvent> = match (&inputs.phases, inputs.ephemeris_from, inputs.ephemeris_to) {
        (Some(path), _, _) => {
            sources.push(file_name(path));
            parse_phase_table(&read(path)?)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(from), Some(to)) => {
            sources.push(format!("ephemeris:{from}..{to}"));
            generate_phase_events(from, to, &EphemerisModel::default()).map_err(usage)?
        }
        _ => unreachable!("clap requires both ephemeris bounds together"),
    };
    let rows = fuse(&bars, &diffs, &events).map_err(usage)?;
    Ok(Loaded {
        rows,
        sources,
        diff_kind,
    })
}

fn cmd_annotate(
    args: AnnotateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let loaded = load(&args.inputs, stderr)?;
    emit(
        args.inputs.out.as_deref(),
        &render_annotated_csv(&loaded.rows),
        stdout,
    )
}

fn granularity(by: ByArg, n: Option<u32>) -> Result<Granularity, CliError> {
    if by != ByArg::Earlylate && n.is_some() {
        return Err(usage("--n applies only to --by earlylate"));
    }
    Ok(match by {
        ByArg::Semester => Granularity::SEMESTER,
        ByArg::Trimester => Granularity::TRIMESTER,
        ByArg::Bimester => Granularity::BIMESTER,
        ByArg::Month => Granularity::MONTH,
        ByArg::Week => Granularity::WEEK,
        ByArg::Dayofyear => Granularity::DAY_OF_YEAR,
        ByArg::Dayofmonth => Granularity::DAY_OF_MONTH,
        ByArg::Weekday => Granularity::WEEKDAY,
        ByArg::Phaseday => Granularity::PHASE_DAY,
        ByArg::Phase => Granularity::PHASE,
        ByArg::Earlylate => {
            let n = match n {
                Some(n) => NonZeroU32::new(n).ok_or_else(|| usage("--n must be at least 1"))?,
                None => DEFAULT_EARLY_DAYS,
            };
            Granularity::early_late(n)
        }
    })
}

fn cmd_aggregate(
    args: AggregateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let granularity = granularity(args.by, args.n)?;
    let loaded = load(&args.inputs, stderr)?;
    let stats = aggregate(&loaded.rows, granularity).map_err(usage)?;

    let title = args
        .title
        .unwrap_or_else(|| format!("{} by {}", loaded.sources[0], granularity.token()));
    let metadata = Metadata {
        sources: loaded.sources,
        from: loaded.rows.first().map(AnnotatedRow::date),
        to: loaded.rows.last().map(AnnotatedRow::date),
        diff_kind: loaded.diff_kind,
        generated_at: args.timestamp.unwrap_or_else(|| Utc::now().trunc_subsecs(0)),
    };
    let report = Report::new(title, granularity, stats, metadata);
    let text = match args.format {
        FormatArg::Csv => render_csv(&report).map_err(usage)?,
        FormatArg::Json => render_json(&report),
        FormatArg::Svg => render_svg_bar(&report, args.width, args.height).map_err(usage)?,
    };
    emit(args.inputs.out.as_deref(), &text, stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("lunatic").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn ephemeris_to_stdout() {
        let (code, out, _) = run_args(&["ephemeris", "--from", "1992-01-01", "--to", "1992-02-29"]);
        assert_eq!(code, 0);
        assert!(out.lines().any(|l| l == "1992,1,5,0"));
    }

    #[test]
    fn inverted_range_is_usage_error() {
        let (code, _, err) = run_args(&["ephemeris", "--from", "1992-03-01", "--to", "1992-02-01"]);
        assert_eq!(code, 2);
        assert!(err.contains("1992-03-01"));
    }

    #[test]
    fn single_day_without_event_is_empty() {
        let (code, out, _) = run_args(&["ephemeris", "--from", "1992-01-08", "--to", "1992-01-08"]);
        assert_eq!(code, 0);
        assert!(out.is_empty());
    }

    #[test]
    fn bad_period_is_usage_error() {
        let (code, _, _) = run_args(&[
            "ephemeris", "--from", "1992-01-01", "--to", "1992-02-01", "--period", "31",
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn unknown_granularity_is_usage_error() {
        let (code, _, _) = run_args(&[
            "aggregate", "--ohlcv", "x.csv", "--phases", "p.txt", "--by", "fortnight",
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn n_only_with_earlylate() {
        assert!(granularity(ByArg::Phase, Some(5)).is_err());
        assert!(granularity(ByArg::Earlylate, Some(0)).is_err());
        assert_eq!(
            granularity(ByArg::Earlylate, None).unwrap(),
            Granularity::early_late(DEFAULT_EARLY_DAYS)
        );
    }

    #[test]
    fn missing_file_is_io_error() {
        let (code, _, err) = run_args(&[
            "annotate",
            "--ohlcv",
            "/nonexistent/bars.csv",
            "--ephemeris-from",
            "1992-01-01",
            "--ephemeris-to",
            "1992-02-01",
        ]);
        assert_eq!(code, 1);
        assert!(err.contains("/nonexistent/bars.csv"));
    }

    #[test]
    fn phase_source_is_required_and_exclusive() {
        let (code, _, _) = run_args(&["annotate", "--ohlcv", "x.csv"]);
        assert_eq!(code, 2);
        let (code, _, _) = run_args(&[
            "annotate", "--ohlcv", "x.csv", "--phases", "p", "--ephemeris-from", "1992-01-01",
            "--ephemeris-to", "1992-02-01",
        ]);
        assert_eq!(code, 2);
        let (code, _, _) = run_args(&["annotate", "--ohlcv", "x.csv", "--ephemeris-from", "1992-01-01"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("aggregate"));
    }
}
