//! Sampling keys, row fusion and bucket aggregation.
//!
//! Every trading day is fused with its diff, its luna index and its
//! Gregorian calendar keys. A [`Granularity`] maps each row to exactly one
//! [`Bucket`]; [`aggregate`] sums diffs per bucket.
//!
//! Aggregation is canonicalized on ascending date order: each bucket's values
//! are accumulated with compensated summation in that order, whether the
//! engine runs sequentially or on the rayon pool, so output is bit-identical
//! across execution modes and input permutations.

use std::collections::BTreeMap;
use std::fmt;
use std::num::NonZeroU32;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use thiserror::Error;

use crate::ephemeris::{Phase, PhaseEvent};
use crate::luna::{annotate_luna, LunaError, LunaIndex};
use crate::market::{DailyBar, DiffSeries};
use crate::summation::NeumaierSum;

/// Early/late split length used when none is given.
pub const DEFAULT_EARLY_DAYS: NonZeroU32 = NonZeroU32::new(5).unwrap();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CalendarGranularity {
    Semester,
    Trimester,
    Bimester,
    Month,
    /// Fixed 7-day blocks counted from January 1 (1..=53).
    WeekOfYear,
    DayOfYear,
    DayOfMonth,
    /// Monday = 1 .. Sunday = 7.
    Weekday,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LunarGranularity {
    /// The luna code itself, 0..=39.
    PhaseDay,
    Phase,
    /// Splits each phase segment into its first `n` days and the rest.
    EarlyLate(NonZeroU32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    Calendar(CalendarGranularity),
    Lunar(LunarGranularity),
}

impl Granularity {
    pub const SEMESTER: Self = Self::Calendar(CalendarGranularity::Semester);
    pub const TRIMESTER: Self = Self::Calendar(CalendarGranularity::Trimester);
    pub const BIMESTER: Self = Self::Calendar(CalendarGranularity::Bimester);
    pub const MONTH: Self = Self::Calendar(CalendarGranularity::Month);
    pub const WEEK: Self = Self::Calendar(CalendarGranularity::WeekOfYear);
    pub const DAY_OF_YEAR: Self = Self::Calendar(CalendarGranularity::DayOfYear);
    pub const DAY_OF_MONTH: Self = Self::Calendar(CalendarGranularity::DayOfMonth);
    pub const WEEKDAY: Self = Self::Calendar(CalendarGranularity::Weekday);
    pub const PHASE_DAY: Self = Self::Lunar(LunarGranularity::PhaseDay);
    pub const PHASE: Self = Self::Lunar(LunarGranularity::Phase);

    pub fn early_late(n: NonZeroU32) -> Self {
        Self::Lunar(LunarGranularity::EarlyLate(n))
    }

    /// The eleven granularities, with the default early/late split.
    pub fn all() -> [Granularity; 11] {
        [
            Self::SEMESTER,
            Self::TRIMESTER,
            Self::BIMESTER,
            Self::MONTH,
            Self::WEEK,
            Self::DAY_OF_YEAR,
            Self::DAY_OF_MONTH,
            Self::WEEKDAY,
            Self::PHASE_DAY,
            Self::PHASE,
            Self::early_late(DEFAULT_EARLY_DAYS),
        ]
    }

    /// Lowercase token without any split parameter.
    pub fn token(&self) -> &'static str {
        use CalendarGranularity as C;
        use LunarGranularity as L;
        match self {
            Self::Calendar(C::Semester) => "semester",
            Self::Calendar(C::Trimester) => "trimester",
            Self::Calendar(C::Bimester) => "bimester",
            Self::Calendar(C::Month) => "month",
            Self::Calendar(C::WeekOfYear) => "week",
            Self::Calendar(C::DayOfYear) => "dayofyear",
            Self::Calendar(C::DayOfMonth) => "dayofmonth",
            Self::Calendar(C::Weekday) => "weekday",
            Self::Lunar(L::PhaseDay) => "phaseday",
            Self::Lunar(L::Phase) => "phase",
            Self::Lunar(L::EarlyLate(_)) => "earlylate",
        }
    }

    /// Bucket of an annotated row.
    pub fn key(&self, row: &AnnotatedRow) -> Bucket {
        match *self {
            Self::Calendar(g) => Bucket::Index(row.calendar.key(g)),
            Self::Lunar(g) => lunar_key(row.luna, g),
        }
    }

    /// Every bucket the granularity can produce, ascending.
    pub fn domain(&self) -> Vec<Bucket> {
        use CalendarGranularity as C;
        let range = |lo: u32, hi: u32| (lo..=hi).map(Bucket::Index).collect();
        match self {
            Self::Calendar(C::Semester) => range(1, 2),
            Self::Calendar(C::Trimester) => range(1, 4),
            Self::Calendar(C::Bimester) => range(1, 6),
            Self::Calendar(C::Month) => range(1, 12),
            Self::Calendar(C::WeekOfYear) => range(1, 53),
            Self::Calendar(C::DayOfYear) => range(1, 366),
            Self::Calendar(C::DayOfMonth) => range(1, 31),
            Self::Calendar(C::Weekday) => range(1, 7),
            Self::Lunar(LunarGranularity::PhaseDay) => {
                Phase::ALL
                    .into_iter()
                    .flat_map(|p| (0..=9).map(move |o| Bucket::Index(p.base_code() as u32 + o)))
                    .collect()
            }
            Self::Lunar(LunarGranularity::Phase) => Phase::ALL.map(Bucket::Phase).to_vec(),
            Self::Lunar(LunarGranularity::EarlyLate(_)) => Phase::ALL
                .into_iter()
                .flat_map(|p| [Bucket::Split(p, Part::Early), Bucket::Split(p, Part::Late)])
                .collect(),
        }
    }

    /// Human-readable bucket label; the inverse of [`Granularity::parse_bucket`].
    pub fn label(&self, bucket: &Bucket) -> String {
        match (self, bucket) {
            (Self::Calendar(CalendarGranularity::Weekday), Bucket::Index(n)) => {
                weekday_from_number(*n)
                    .map(|w| weekday_abbrev(w).to_string())
                    .unwrap_or_else(|| n.to_string())
            }
            _ => bucket.to_string(),
        }
    }

    pub fn parse_bucket(&self, text: &str) -> Result<Bucket, String> {
        let text = text.trim();
        let bucket = match self {
            Self::Calendar(CalendarGranularity::Weekday) => (1..=7)
                .find(|n| {
                    weekday_from_number(*n).is_some_and(|w| weekday_abbrev(w) == text)
                })
                .map(Bucket::Index)
                .ok_or_else(|| format!("unknown weekday `{text}`"))?,
            Self::Calendar(_) | Self::Lunar(LunarGranularity::PhaseDay) => text
                .parse::<u32>()
                .map(Bucket::Index)
                .map_err(|_| format!("invalid bucket `{text}`"))?,
            Self::Lunar(LunarGranularity::Phase) => Bucket::Phase(text.parse()?),
            Self::Lunar(LunarGranularity::EarlyLate(_)) => {
                let (phase, part) = text
                    .split_once(':')
                    .ok_or_else(|| format!("invalid split bucket `{text}`"))?;
                Bucket::Split(phase.parse()?, part.parse()?)
            }
        };
        if !self.domain().contains(&bucket) {
            return Err(format!("bucket `{text}` is outside the {self} range"));
        }
        Ok(bucket)
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lunar(LunarGranularity::EarlyLate(n)) => write!(f, "earlylate:{n}"),
            _ => f.write_str(self.token()),
        }
    }
}

impl FromStr for Granularity {
    type Err = String;

    /// Accepts the lowercase tokens, with `earlylate:N` selecting a split
    /// length other than the default.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(n) = s.strip_prefix("earlylate:") {
            let n: NonZeroU32 = n
                .parse()
                .map_err(|_| format!("invalid early/late length `{n}`"))?;
            return Ok(Self::early_late(n));
        }
        Self::all()
            .into_iter()
            .find(|g| g.token() == s)
            .ok_or_else(|| format!("unknown granularity `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Part {
    Early,
    Late,
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::Early => "Early",
            Part::Late => "Late",
        })
    }
}

impl FromStr for Part {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Early" => Ok(Part::Early),
            "Late" => Ok(Part::Late),
            _ => Err(format!("unknown split part `{s}`")),
        }
    }
}

/// One cell of a sampling partition. Ordering is the bucket id order used
/// for reports and tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bucket {
    /// Calendar keys and phase-day codes.
    Index(u32),
    Phase(Phase),
    Split(Phase, Part),
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bucket::Index(n) => write!(f, "{n}"),
            Bucket::Phase(p) => write!(f, "{p}"),
            Bucket::Split(p, part) => write!(f, "{p}:{part}"),
        }
    }
}

fn weekday_from_number(n: u32) -> Option<Weekday> {
    n.checked_sub(1)
        .and_then(|i| u8::try_from(i).ok())
        .and_then(|i| Weekday::try_from(i).ok())
}

fn weekday_abbrev(w: Weekday) -> &'static str {
    match w {
        Weekday::Mon => "Mon",
        Weekday::Tue => "Tue",
        Weekday::Wed => "Wed",
        Weekday::Thu => "Thu",
        Weekday::Fri => "Fri",
        Weekday::Sat => "Sat",
        Weekday::Sun => "Sun",
    }
}

/// Gregorian keys of a civil date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalendarKeys {
    pub year: i32,
    pub month: u32,
    pub day_of_month: u32,
    pub weekday: Weekday,
    pub day_of_year: u32,
    pub week_of_year: u32,
    pub bimester: u32,
    pub trimester: u32,
    pub semester: u32,
}

impl CalendarKeys {
    pub fn of(date: NaiveDate) -> Self {
        let month = date.month();
        let day_of_year = date.ordinal();
        Self {
            year: date.year(),
            month,
            day_of_month: date.day(),
            weekday: date.weekday(),
            day_of_year,
            week_of_year: (day_of_year - 1) / 7 + 1,
            bimester: month.div_ceil(2),
            trimester: month.div_ceil(3),
            semester: month.div_ceil(6),
        }
    }

    pub fn key(&self, granularity: CalendarGranularity) -> u32 {
        use CalendarGranularity as C;
        match granularity {
            C::Semester => self.semester,
            C::Trimester => self.trimester,
            C::Bimester => self.bimester,
            C::Month => self.month,
            C::WeekOfYear => self.week_of_year,
            C::DayOfYear => self.day_of_year,
            C::DayOfMonth => self.day_of_month,
            C::Weekday => self.weekday.number_from_monday(),
        }
    }
}

pub fn calendar_key(date: NaiveDate, granularity: CalendarGranularity) -> u32 {
    CalendarKeys::of(date).key(granularity)
}

pub fn lunar_key(luna: LunaIndex, granularity: LunarGranularity) -> Bucket {
    match granularity {
        LunarGranularity::PhaseDay => Bucket::Index(luna.code() as u32),
        LunarGranularity::Phase => Bucket::Phase(luna.phase()),
        LunarGranularity::EarlyLate(n) => {
            let part = if (luna.offset() as u32) < n.get() {
                Part::Early
            } else {
                Part::Late
            };
            Bucket::Split(luna.phase(), part)
        }
    }
}

/// A trading day fused with its diff, luna index and calendar keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotatedRow {
    pub bar: DailyBar,
    /// Absent for the first bar under close-to-close differencing.
    pub diff: Option<f64>,
    pub luna: LunaIndex,
    pub calendar: CalendarKeys,
}

impl AnnotatedRow {
    pub fn date(&self) -> NaiveDate {
        self.bar.date
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("{date} precedes the first phase event")]
    DateBeforeCoverage { date: NaiveDate },
    #[error("phase events do not cover {date} (last event before it is {event_date})")]
    CoverageGap {
        date: NaiveDate,
        event_date: NaiveDate,
    },
    #[error("bar dates are not strictly increasing at {date}")]
    UnsortedInput { date: NaiveDate },
    #[error("no row carries a diff")]
    EmptyAfterFilter,
    #[error("nothing to rank")]
    EmptyInput,
}

impl From<LunaError> for SamplingError {
    fn from(e: LunaError) -> Self {
        match e {
            LunaError::DateBeforeCoverage { date } => SamplingError::DateBeforeCoverage { date },
            LunaError::OffsetOverflow {
                date, event_date, ..
            } => SamplingError::CoverageGap { date, event_date },
            LunaError::UnsortedInput { date } => SamplingError::UnsortedInput { date },
            LunaError::CodeOutOfRange(_) => unreachable!("annotation never yields a code error"),
        }
    }
}

/// Fuses bars with their diffs, luna indexes and calendar keys.
pub fn fuse(
    bars: &[DailyBar],
    diffs: &DiffSeries,
    events: &[PhaseEvent],
) -> Result<Vec<AnnotatedRow>, SamplingError> {
    let dates: Vec<NaiveDate> = bars.iter().map(|b| b.date).collect();
    let lunas = annotate_luna(&dates, events)?;
    Ok(bars
        .iter()
        .zip(lunas)
        .map(|(bar, luna)| AnnotatedRow {
            bar: *bar,
            diff: diffs.get(bar.date),
            luna,
            calendar: CalendarKeys::of(bar.date),
        })
        .collect())
}

/// Rows whose date falls in `[from, to]`; either bound may be open.
pub fn filter_range(
    rows: &[AnnotatedRow],
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
) -> Vec<AnnotatedRow> {
    rows.iter()
        .filter(|r| from.is_none_or(|f| r.date() >= f) && to.is_none_or(|t| r.date() <= t))
        .copied()
        .collect()
}

/// Aggregated diffs of one bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketStat {
    pub bucket: Bucket,
    pub sum: f64,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy)]
struct Accumulator {
    sum: NeumaierSum,
    count: usize,
    min: f64,
    max: f64,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            sum: NeumaierSum::new(),
            count: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn finish(self, bucket: Bucket) -> BucketStat {
        let sum = self.sum.value();
        // rounding in the division can step just outside the observed range
        let mean = (sum / self.count as f64).clamp(self.min, self.max);
        BucketStat {
            bucket,
            sum,
            count: self.count,
            mean,
            min: self.min,
            max: self.max,
        }
    }
}

/// Diff-bearing rows in canonical order: ascending date, then diff value.
fn canonical(rows: &[AnnotatedRow]) -> Result<Vec<(&AnnotatedRow, f64)>, SamplingError> {
    let mut out: Vec<(&AnnotatedRow, f64)> =
        rows.iter().filter_map(|r| r.diff.map(|d| (r, d))).collect();
    if out.is_empty() {
        return Err(SamplingError::EmptyAfterFilter);
    }
    if !out.windows(2).all(|w| w[0].0.date() < w[1].0.date()) {
        out.sort_by(|a, b| a.0.date().cmp(&b.0.date()).then(a.1.total_cmp(&b.1)));
    }
    Ok(out)
}

/// Aggregates diffs per bucket, ordered by bucket.
///
/// Rows without a diff are skipped. Uses the rayon pool when the `parallel`
/// feature is enabled; the result is bit-identical to
/// [`aggregate_sequential`] either way.
pub fn aggregate(
    rows: &[AnnotatedRow],
    granularity: Granularity,
) -> Result<Vec<BucketStat>, SamplingError> {
    #[cfg(feature = "parallel")]
    {
        aggregate_parallel(rows, granularity)
    }
    #[cfg(not(feature = "parallel"))]
    {
        aggregate_sequential(rows, granularity)
    }
}

pub fn aggregate_sequential(
    rows: &[AnnotatedRow],
    granularity: Granularity,
) -> Result<Vec<BucketStat>, SamplingError> {
    let ordered = canonical(rows)?;
    let mut buckets: BTreeMap<Bucket, Accumulator> = BTreeMap::new();
    for (row, diff) in ordered {
        buckets
            .entry(granularity.key(row))
            .or_insert_with(Accumulator::new)
            .push(diff);
    }
    Ok(buckets.into_iter().map(|(b, acc)| acc.finish(b)).collect())
}

/// Rows per grouping task on the rayon pool.
#[cfg(feature = "parallel")]
const PAR_CHUNK: usize = 4096;

/// Parallel aggregation: chunks are grouped concurrently and merged in
/// chunk order, so each bucket sees its values in date order, then buckets
/// are reduced concurrently.
#[cfg(feature = "parallel")]
pub fn aggregate_parallel(
    rows: &[AnnotatedRow],
    granularity: Granularity,
) -> Result<Vec<BucketStat>, SamplingError> {
    use rayon::prelude::*;

    let ordered = canonical(rows)?;
    let grouped: BTreeMap<Bucket, Vec<f64>> = ordered
        .par_chunks(PAR_CHUNK)
        .map(|chunk| {
            let mut m: BTreeMap<Bucket, Vec<f64>> = BTreeMap::new();
            for (row, diff) in chunk {
                m.entry(granularity.key(row)).or_default().push(*diff);
            }
            m
        })
        .reduce(BTreeMap::new, |mut left, right| {
            for (bucket, mut values) in right {
                left.entry(bucket).or_default().append(&mut values);
            }
            left
        });

    Ok(grouped
        .into_par_iter()
        .map(|(bucket, values)| {
            let mut acc = Accumulator::new();
            for v in values {
                acc.push(v);
            }
            acc.finish(bucket)
        })
        .collect())
}

/// Aggregates one dataset under several granularities, in parallel across
/// granularities when the `parallel` feature is enabled.
pub fn aggregate_many(
    rows: &[AnnotatedRow],
    granularities: &[Granularity],
) -> Result<Vec<Vec<BucketStat>>, SamplingError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        granularities
            .par_iter()
            .map(|g| aggregate_sequential(rows, *g))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        granularities
            .iter()
            .map(|g| aggregate_sequential(rows, *g))
            .collect()
    }
}

/// Orders stats by sum, descending; equal sums keep ascending bucket order.
pub fn rank_buckets(stats: &[BucketStat]) -> Result<Vec<BucketStat>, SamplingError> {
    if stats.is_empty() {
        return Err(SamplingError::EmptyInput);
    }
    let mut ranked = stats.to_vec();
    ranked.sort_by(|a, b| b.sum.total_cmp(&a.sum).then(a.bucket.cmp(&b.bucket)));
    Ok(ranked)
}

pub const ANNOTATED_HEADER: &str = "date,open,high,low,close,volume,diff,luna";

/// Writes fused rows as `date,open,high,low,close,volume,diff,luna`; the
/// diff field is blank where undefined.
pub fn render_annotated_csv(rows: &[AnnotatedRow]) -> String {
    use std::fmt::Write;

    let mut out = String::from(ANNOTATED_HEADER);
    out.push('\n');
    for r in rows {
        let b = &r.bar;
        let diff = r.diff.map(|d| d.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            b.date.format("%Y-%m-%d"),
            b.open,
            b.high,
            b.low,
            b.close,
            b.volume,
            diff,
            r.luna.code()
        );
    }
    out
}

/// Reads rows written by [`render_annotated_csv`].
pub fn parse_annotated_csv(text: &str) -> Result<Vec<AnnotatedRow>, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == ANNOTATED_HEADER => {}
        _ => return Err(format!("expected header `{ANNOTATED_HEADER}`")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |what: &str| format!("line {}: {what}", idx + 1);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [date, open, high, low, close, volume, diff, luna] = fields.as_slice() else {
            return Err(err("expected 8 fields"));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("invalid number `{s}`")));
        let date: NaiveDate = date.parse().map_err(|_| err("invalid date"))?;
        let bar = DailyBar {
            date,
            open: num(open)?,
            high: num(high)?,
            low: num(low)?,
            close: num(close)?,
            volume: num(volume)?,
        };
        let diff = if diff.is_empty() { None } else { Some(num(diff)?) };
        let code: u32 = luna.parse().map_err(|_| err("invalid luna code"))?;
        let luna = LunaIndex::from_code(code).map_err(|e| err(&e.to_string()))?;
        rows.push(AnnotatedRow {
            bar,
            diff,
            luna,
            calendar: CalendarKeys::of(date),
        });
    }
    Ok(rows)
}
