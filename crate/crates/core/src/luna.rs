//! Per-day luna index: the base code of the latest phase event plus the
//! number of calendar days since it.

use std::fmt;

use chrono::NaiveDate;
use thiserror::Error;

use crate::ephemeris::{Phase, PhaseEvent};

/// Largest offset a phase segment may reach before the next event.
pub const MAX_OFFSET: u8 = 9;
/// Largest valid luna code (third quarter plus nine days).
pub const MAX_CODE: u32 = 39;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LunaIndex {
    phase: Phase,
    offset: u8,
}

impl LunaIndex {
    pub fn new(phase: Phase, offset: u8) -> Result<Self, LunaError> {
        if offset > MAX_OFFSET {
            return Err(LunaError::CodeOutOfRange(
                phase.base_code() as u32 + offset as u32,
            ));
        }
        Ok(Self { phase, offset })
    }

    pub fn from_code(code: u32) -> Result<Self, LunaError> {
        let phase = phase_of(code)?;
        Ok(Self {
            phase,
            offset: (code % 10) as u8,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Days since the phase event; 0 on the event day.
    pub fn offset(&self) -> u8 {
        self.offset
    }

    pub fn code(&self) -> u8 {
        self.phase.base_code() + self.offset
    }
}

impl fmt::Display for LunaIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LunaError {
    #[error("{date} precedes the first phase event")]
    DateBeforeCoverage { date: NaiveDate },
    #[error("{date} is {offset} days past the latest phase event {event_date}; the phase table has a gap")]
    OffsetOverflow {
        date: NaiveDate,
        event_date: NaiveDate,
        offset: i64,
    },
    #[error("dates are not strictly increasing at {date}")]
    UnsortedInput { date: NaiveDate },
    #[error("luna code {0} is outside 0..=39")]
    CodeOutOfRange(u32),
}

/// Phase whose decade contains `code`.
pub fn phase_of(code: u32) -> Result<Phase, LunaError> {
    if code > MAX_CODE {
        return Err(LunaError::CodeOutOfRange(code));
    }
    Ok(Phase::from_ordinal((code / 10) as u8).expect("code <= 39"))
}

/// Assigns a luna index to each date.
///
/// `dates` must be strictly increasing and `events` a valid event sequence.
/// Each date takes the phase of the latest event on or before it, with the
/// offset counted in calendar days.
pub fn annotate_luna(
    dates: &[NaiveDate],
    events: &[PhaseEvent],
) -> Result<Vec<LunaIndex>, LunaError> {
    let mut out = Vec::with_capacity(dates.len());
    let mut next = 0usize;
    let mut prev_date: Option<NaiveDate> = None;

    for &date in dates {
        if prev_date.is_some_and(|p| p >= date) {
            return Err(LunaError::UnsortedInput { date });
        }
        prev_date = Some(date);

        while next < events.len() && events[next].date <= date {
            next += 1;
        }
        let Some(event) = next.checked_sub(1).map(|i| events[i]) else {
            return Err(LunaError::DateBeforeCoverage { date });
        };
        let offset = (date - event.date).num_days();
        if offset > MAX_OFFSET as i64 {
            return Err(LunaError::OffsetOverflow {
                date,
                event_date: event.date,
                offset,
            });
        }
        out.push(LunaIndex {
            phase: event.phase,
            offset: offset as u8,
        });
    }
    Ok(out)
}

/// Every calendar day from the first event through the last, with its luna
/// index. This is the filled-in daily listing of a phase table.
pub fn fill_daily(events: &[PhaseEvent]) -> Result<Vec<(NaiveDate, LunaIndex)>, LunaError> {
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Ok(Vec::new());
    };
    let dates: Vec<NaiveDate> = first.date.iter_days().take_while(|d| *d <= last.date).collect();
    let lunas = annotate_luna(&dates, events)?;
    Ok(dates.into_iter().zip(lunas).collect())
}
