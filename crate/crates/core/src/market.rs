//! Daily OHLCV bars and the per-day difference series derived from them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OHLCV_HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl DailyBar {
    /// `low <= min(open, close)` and `high >= max(open, close)`.
    pub fn is_consistent(&self) -> bool {
        self.low <= self.open.min(self.close) && self.high >= self.open.max(self.close)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Validation {
    /// OHLC inconsistencies are reported as warnings and the bar is kept.
    #[default]
    Lenient,
    /// OHLC inconsistencies are errors.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: duplicate date {date}")]
    DuplicateDate { line: u64, date: NaiveDate },
    #[error("line {line}: {date} is earlier than the previous row")]
    UnsortedDates { line: u64, date: NaiveDate },
    #[error("line {line}: inconsistent OHLC on {date} (low must not exceed open/close, high must not be below them)")]
    OhlcViolation { line: u64, date: NaiveDate },
    #[error("need at least {needed} bar(s) to compute {kind} diffs, got {got}")]
    EmptyInput {
        kind: DiffKind,
        needed: usize,
        got: usize,
    },
}

/// A bar accepted in lenient mode despite an OHLC inconsistency.
#[derive(Debug, Clone, PartialEq)]
pub struct OhlcWarning {
    pub line: u64,
    pub date: NaiveDate,
}

impl fmt::Display for OhlcWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: inconsistent OHLC on {}", self.line, self.date)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedBars {
    pub bars: Vec<DailyBar>,
    pub warnings: Vec<OhlcWarning>,
}

/// Parses an OHLCV CSV with header `date,open,high,low,close,volume`.
///
/// Rows must be in strictly ascending date order.
pub fn parse_ohlcv(text: &str, validation: Validation) -> Result<ParsedBars, MarketError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut out = ParsedBars::default();
    let mut records = reader.records();

    match records.next() {
        None => return Ok(out),
        Some(header) => {
            let header = header.map_err(|e| malformed(1, e.to_string()))?;
            if !header.iter().eq(OHLCV_HEADER) {
                return Err(malformed(
                    1,
                    format!("expected header `{}`", OHLCV_HEADER.join(",")),
                ));
            }
        }
    }

    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != OHLCV_HEADER.len() {
            return Err(malformed(
                line,
                format!("expected 6 fields, found {}", record.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|_| malformed(line, format!("invalid date `{}`", &record[0])))?;
        let mut values = [0.0f64; 5];
        for (slot, (name, raw)) in values
            .iter_mut()
            .zip(OHLCV_HEADER[1..].iter().zip(record.iter().skip(1)))
        {
            let v: f64 = raw
                .parse()
                .map_err(|_| malformed(line, format!("invalid {name} `{raw}`")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(malformed(
                    line,
                    format!("{name} must be a finite nonnegative number, got `{raw}`"),
                ));
            }
            *slot = v;
        }
        let [open, high, low, close, volume] = values;
        let bar = DailyBar {
            date,
            open,
            high,
            low,
            close,
            volume,
        };

        if let Some(prev) = out.bars.last() {
            if prev.date == date {
                return Err(MarketError::DuplicateDate { line, date });
            }
            if prev.date > date {
                return Err(MarketError::UnsortedDates { line, date });
            }
        }
        if !bar.is_consistent() {
            match validation {
                Validation::Strict => return Err(MarketError::OhlcViolation { line, date }),
                Validation::Lenient => out.warnings.push(OhlcWarning { line, date }),
            }
        }
        out.bars.push(bar);
    }
    Ok(out)
}

fn malformed(line: u64, reason: String) -> MarketError {
    MarketError::MalformedRow { line, reason }
}

/// Writes bars in the same CSV layout [`parse_ohlcv`] accepts.
pub fn serialize_ohlcv(bars: &[DailyBar]) -> String {
    use std::fmt::Write;

    let mut out = OHLCV_HEADER.join(",");
    out.push('\n');
    for b in bars {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            b.date.format("%Y-%m-%d"),
            b.open,
            b.high,
            b.low,
            b.close,
            b.volume
        );
    }
    out
}

/// Which price change counts as a day's difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DiffKind {
    /// `close[t] - close[t-1]`; the first bar has no diff.
    #[default]
    InterdayClose,
    /// `close[t] - open[t]`.
    IntradayOpenClose,
}

impl DiffKind {
    pub fn token(self) -> &'static str {
        match self {
            DiffKind::InterdayClose => "interday",
            DiffKind::IntradayOpenClose => "intraday",
        }
    }
}

impl fmt::Display for DiffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for DiffKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interday" => Ok(DiffKind::InterdayClose),
            "intraday" => Ok(DiffKind::IntradayOpenClose),
            _ => Err(format!("unknown diff kind `{s}` (expected interday|intraday)")),
        }
    }
}

/// Signed daily change in index points, keyed by date.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSeries {
    kind: DiffKind,
    diffs: BTreeMap<NaiveDate, f64>,
}

impl DiffSeries {
    pub fn kind(&self) -> DiffKind {
        self.kind
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.diffs.get(&date).copied()
    }

    pub fn len(&self) -> usize {
        self.diffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diffs.is_empty()
    }

    /// Diffs in ascending date order.
    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.diffs.iter().map(|(d, v)| (*d, *v))
    }
}

/// Derives the difference series from date-sorted bars.
pub fn compute_diffs(bars: &[DailyBar], kind: DiffKind) -> Result<DiffSeries, MarketError> {
    debug_assert!(bars.windows(2).all(|w| w[0].date < w[1].date));
    let needed = match kind {
        DiffKind::InterdayClose => 2,
        DiffKind::IntradayOpenClose => 1,
    };
    if bars.len() < needed {
        return Err(MarketError::EmptyInput {
            kind,
            needed,
            got: bars.len(),
        });
    }
    let diffs = match kind {
        DiffKind::InterdayClose => bars
            .windows(2)
            .map(|w| (w[1].date, w[1].close - w[0].close))
            .collect(),
        DiffKind::IntradayOpenClose => bars.iter().map(|b| (b.date, b.close - b.open)).collect(),
    };
    Ok(DiffSeries { kind, diffs })
}
