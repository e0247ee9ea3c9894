//! Principal moon phase events.
//!
//! Events come either from a phase table (one `year,month,day,luna` line per
//! event) or from a mean-synodic-month model that places the four quarter
//! phases at equal spacing from a known new moon.

use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum and maximum number of civil days between consecutive events.
pub const MIN_EVENT_GAP: i64 = 6;
pub const MAX_EVENT_GAP: i64 = 9;

/// One of the four principal moon phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    NewMoon,
    FirstQuarter,
    FullMoon,
    ThirdQuarter,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::NewMoon,
        Phase::FirstQuarter,
        Phase::FullMoon,
        Phase::ThirdQuarter,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    /// Luna code of the event day: 0, 10, 20 or 30.
    pub fn base_code(self) -> u8 {
        10 * self.ordinal()
    }

    pub fn from_ordinal(ordinal: u8) -> Option<Phase> {
        Phase::ALL.get(ordinal as usize).copied()
    }

    pub fn from_base_code(code: u32) -> Option<Phase> {
        match code {
            0 => Some(Phase::NewMoon),
            10 => Some(Phase::FirstQuarter),
            20 => Some(Phase::FullMoon),
            30 => Some(Phase::ThirdQuarter),
            _ => None,
        }
    }

    /// The phase that follows this one in the lunation.
    pub fn successor(self) -> Phase {
        Phase::ALL[(self.ordinal() as usize + 1) % 4]
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::NewMoon => "NewMoon",
            Phase::FirstQuarter => "FirstQuarter",
            Phase::FullMoon => "FullMoon",
            Phase::ThirdQuarter => "ThirdQuarter",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown phase `{s}`"))
    }
}

/// A dated occurrence of a principal phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseEvent {
    pub date: NaiveDate,
    pub phase: Phase,
}

impl PhaseEvent {
    pub fn new(date: NaiveDate, phase: Phase) -> Self {
        Self { date, phase }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EphemerisError {
    #[error("line {line}: malformed phase row `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: invalid phase code {code} (expected 0, 10, 20 or 30)")]
    InvalidPhaseCode { line: usize, code: i64 },
    #[error("line {line}: {year}-{month}-{day} is not a civil date")]
    InvalidDate {
        line: usize,
        year: i32,
        month: u32,
        day: u32,
    },
    #[error("line {line}: event {date} ({phase}) does not follow {prev_date} ({prev_phase})")]
    OrderViolation {
        line: usize,
        date: NaiveDate,
        phase: Phase,
        prev_date: NaiveDate,
        prev_phase: Phase,
    },
    #[error("line {line}: {gap} days between {prev_date} and {date}, expected 6 to 9")]
    GapViolation {
        line: usize,
        prev_date: NaiveDate,
        date: NaiveDate,
        gap: i64,
    },
    #[error("invalid range: {start} is after {end}")]
    InvalidRange { start: NaiveDate, end: NaiveDate },
    #[error("synodic period {0} days is outside (29, 30)")]
    InvalidPeriod(f64),
}

/// Parses a phase table.
///
/// Each non-blank line is `year,month,day,luna`, optionally followed by a
/// parenthesized label such as `(New Moon)` which is ignored. Leading and
/// trailing whitespace is tolerated, as is a `year , month , day , luna`
/// column header. The resulting sequence is checked with
/// [`validate_events`].
pub fn parse_phase_table(text: &str) -> Result<Vec<PhaseEvent>, EphemerisError> {
    let mut events = Vec::new();
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || is_header(trimmed) {
            continue;
        }
        events.push(parse_row(line, trimmed)?);
        lines.push(line);
    }
    check_sequence(&events, |i| lines[i])?;
    Ok(events)
}

fn is_header(line: &str) -> bool {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    fields == ["year", "month", "day", "luna"]
}

fn parse_row(line: usize, text: &str) -> Result<PhaseEvent, EphemerisError> {
    let malformed = || EphemerisError::Malformed {
        line,
        text: text.to_string(),
    };
    let body = match text.find('(') {
        Some(open) => {
            if !text.ends_with(')') {
                return Err(malformed());
            }
            &text[..open]
        }
        None => text,
    };
    let fields: Vec<&str> = body.split(',').map(str::trim).collect();
    let [year, month, day, luna] = fields.as_slice() else {
        return Err(malformed());
    };
    let year: i32 = year.parse().map_err(|_| malformed())?;
    let month: u32 = month.parse().map_err(|_| malformed())?;
    let day: u32 = day.parse().map_err(|_| malformed())?;
    let code: i64 = luna.parse().map_err(|_| malformed())?;

    let phase = u32::try_from(code)
        .ok()
        .and_then(Phase::from_base_code)
        .ok_or(EphemerisError::InvalidPhaseCode { line, code })?;
    let date = NaiveDate::from_ymd_opt(year, month, day).ok_or(EphemerisError::InvalidDate {
        line,
        year,
        month,
        day,
    })?;
    Ok(PhaseEvent { date, phase })
}

/// Checks ordering, phase cycle, and the 6 to 9 day gap between events.
///
/// Line numbers in the returned error are 1-based positions in `events`.
pub fn validate_events(events: &[PhaseEvent]) -> Result<(), EphemerisError> {
    check_sequence(events, |i| i + 1)
}

fn check_sequence(
    events: &[PhaseEvent],
    line_of: impl Fn(usize) -> usize,
) -> Result<(), EphemerisError> {
    for (i, pair) in events.windows(2).enumerate() {
        let (prev, cur) = (pair[0], pair[1]);
        let line = line_of(i + 1);
        if cur.date <= prev.date || cur.phase != prev.phase.successor() {
            return Err(EphemerisError::OrderViolation {
                line,
                date: cur.date,
                phase: cur.phase,
                prev_date: prev.date,
                prev_phase: prev.phase,
            });
        }
        let gap = (cur.date - prev.date).num_days();
        if !(MIN_EVENT_GAP..=MAX_EVENT_GAP).contains(&gap) {
            return Err(EphemerisError::GapViolation {
                line,
                prev_date: prev.date,
                date: cur.date,
                gap,
            });
        }
    }
    Ok(())
}

/// Writes events as `year,month,day,luna` lines without labels.
pub fn serialize_phase_table(events: &[PhaseEvent]) -> String {
    use chrono::Datelike;
    use std::fmt::Write;

    let mut out = String::with_capacity(events.len() * 14);
    for e in events {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.date.year(),
            e.date.month(),
            e.date.day(),
            e.phase.base_code()
        );
    }
    out
}

/// Mean lunation model: quarter phases fall at `anchor + k * period / 4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EphemerisModel {
    anchor: NaiveDateTime,
    synodic_period: f64,
}

impl EphemerisModel {
    /// Mean synodic month in days.
    pub const MEAN_SYNODIC_MONTH: f64 = 29.530588853;

    pub fn new(anchor: NaiveDateTime, synodic_period: f64) -> Result<Self, EphemerisError> {
        if !(synodic_period > 29.0 && synodic_period < 30.0) {
            return Err(EphemerisError::InvalidPeriod(synodic_period));
        }
        Ok(Self {
            anchor,
            synodic_period,
        })
    }

    /// New moon instant (UTC) the model counts from.
    pub fn anchor(&self) -> NaiveDateTime {
        self.anchor
    }

    pub fn synodic_period(&self) -> f64 {
        self.synodic_period
    }

    fn quarter_days(&self) -> f64 {
        self.synodic_period / 4.0
    }

    /// Instant of the `k`-th quarter event after (or before, for negative
    /// `k`) the anchor.
    pub fn instant(&self, k: i64) -> NaiveDateTime {
        let seconds = (k as f64 * self.quarter_days() * 86_400.0).round() as i64;
        self.anchor + Duration::seconds(seconds)
    }

    pub fn phase_of_index(k: i64) -> Phase {
        Phase::ALL[k.rem_euclid(4) as usize]
    }
}

impl Default for EphemerisModel {
    /// New moon of 2000-01-06 18:14 UTC with the mean synodic month.
    fn default() -> Self {
        let anchor = NaiveDate::from_ymd_opt(2000, 1, 6)
            .and_then(|d| d.and_hms_opt(18, 14, 0))
            .expect("valid anchor");
        Self {
            anchor,
            synodic_period: Self::MEAN_SYNODIC_MONTH,
        }
    }
}

/// Generates every quarter-phase event whose civil date lies in
/// `[start, end]`. Instants are truncated to their UTC date.
pub fn generate_phase_events(
    start: NaiveDate,
    end: NaiveDate,
    model: &EphemerisModel,
) -> Result<Vec<PhaseEvent>, EphemerisError> {
    if start > end {
        return Err(EphemerisError::InvalidRange { start, end });
    }
    let start_instant = start.and_time(chrono::NaiveTime::MIN);
    let offset_days = (start_instant - model.anchor).num_seconds() as f64 / 86_400.0;
    // one step of slack so an event truncated onto `start` is not skipped
    let mut k = (offset_days / model.quarter_days()).floor() as i64 - 1;

    let mut events = Vec::new();
    loop {
        let date = model.instant(k).date();
        if date > end {
            break;
        }
        if date >= start {
            events.push(PhaseEvent {
                date,
                phase: EphemerisModel::phase_of_index(k),
            });
        }
        k += 1;
    }
    Ok(events)
}
