//! Lunar-phase irregular sampling for daily market bars.
//!
//! Phase events (parsed from a table or generated from a mean lunation
//! model) are expanded into a per-day luna index, fused with OHLCV bars and
//! their daily point changes, and aggregated under Gregorian calendar keys
//! or lunar keys. Results render as CSV, JSON or SVG bar charts.
//!
//! ```
//! use chrono::NaiveDate;
//! use lunatic::{ephemeris, market, sampling, synthetic};
//!
//! let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
//! let bars = synthetic::random_walk(start, 60, 1);
//! let events = ephemeris::generate_phase_events(
//!     NaiveDate::from_ymd_opt(2019, 12, 15).unwrap(),
//!     NaiveDate::from_ymd_opt(2020, 4, 30).unwrap(),
//!     &ephemeris::EphemerisModel::default(),
//! )
//! .unwrap();
//! let diffs = market::compute_diffs(&bars, market::DiffKind::InterdayClose).unwrap();
//! let rows = sampling::fuse(&bars, &diffs, &events).unwrap();
//! let by_phase = sampling::aggregate(&rows, sampling::Granularity::PHASE).unwrap();
//! assert_eq!(by_phase.len(), 4);
//! ```

pub mod cli;
pub mod ephemeris;
pub mod luna;
pub mod market;
pub mod report;
pub mod sampling;
pub mod summation;
pub mod synthetic;

pub use ephemeris::{EphemerisModel, Phase, PhaseEvent};
pub use luna::LunaIndex;
pub use market::{DailyBar, DiffKind, DiffSeries};
pub use report::Report;
pub use sampling::{AnnotatedRow, Bucket, BucketStat, Granularity};
