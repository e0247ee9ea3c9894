#![allow(dead_code, clippy::manual_div_ceil)]

//! Shared fixtures and a brute-force aggregation oracle.
//!
//! The oracle derives every key from raw (year, month, day) with its own
//! calendar arithmetic and a linear scan over phase events, and sums naively
//! per candidate bucket, so it shares no code path with the engine.

use chrono::{Datelike, Duration, NaiveDate};
use lunatic::ephemeris::{generate_phase_events, EphemerisModel, Phase, PhaseEvent};
use lunatic::market::{compute_diffs, DailyBar, DiffKind};
use lunatic::sampling::{fuse, AnnotatedRow, Bucket, BucketStat, Granularity, LunarGranularity, Part};
use lunatic::synthetic::random_walk;

pub fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

/// The five-event 1989 phase table, verbatim including labels.
pub const TABLE_1989: &str = "year , month , day , luna
1989,1,7,0 (New Moon)
1989,1,14,10 (First)
1989,1,21,20 (Full Moon)
1989,1,29,30 (Third)
1989,2,5,0 (New Moon)
";

/// The filled-in 1992-01-04..1992-02-03 daily listing, verbatim.
pub const LISTING_1992: &str = " 1992,1,4,0 (New Moon)
 1992,1,5,1
 1992,1,6,2
 1992,1,7,3
 1992,1,8,4
 1992,1,9,5
 1992,1,10,6
 1992,1,11,7
 1992,1,12,10 (First)
 1992,1,13,11
 1992,1,14,12
 1992,1,15,13
 1992,1,16,14
 1992,1,17,15
 1992,1,18,16
 1992,1,19,20
 1992,1,20,21 (Full Moon)
 1992,1,21,22
 1992,1,22,23
 1992,1,23,24
 1992,1,24,25
 1992,1,25,26
 1992,1,26,30 (Third)
 1992,1,27,31
 1992,1,28,32
 1992,1,29,33
 1992,1,30,34
 1992,1,31,35
 1992,2,1,36
 1992,2,2,37
 1992,2,3,0 (New Moon)
";

/// (date, code) pairs of [`LISTING_1992`].
pub fn listing_1992() -> Vec<(NaiveDate, u32)> {
    LISTING_1992
        .lines()
        .map(|l| {
            let body = l.split('(').next().unwrap().trim();
            let f: Vec<u32> = body.split(',').map(|x| x.trim().parse().unwrap()).collect();
            (d(f[0] as i32, f[1], f[2]), f[3])
        })
        .collect()
}

/// The phase events behind the 1992 listing (days whose code is a base code
/// and which start a new decade).
pub fn events_1992() -> Vec<PhaseEvent> {
    vec![
        PhaseEvent::new(d(1992, 1, 4), Phase::NewMoon),
        PhaseEvent::new(d(1992, 1, 12), Phase::FirstQuarter),
        PhaseEvent::new(d(1992, 1, 19), Phase::FullMoon),
        PhaseEvent::new(d(1992, 1, 26), Phase::ThirdQuarter),
        PhaseEvent::new(d(1992, 2, 3), Phase::NewMoon),
    ]
}

/// Synthetic fused rows: a seeded random walk of `trading_days` sessions
/// starting at `start`, annotated with mean-model phase events.
pub fn synthetic_rows(start: NaiveDate, trading_days: usize, seed: u64) -> Vec<AnnotatedRow> {
    let bars = random_walk(start, trading_days, seed);
    let events = covering_events(&bars);
    let diffs = compute_diffs(&bars, DiffKind::InterdayClose).unwrap();
    fuse(&bars, &diffs, &events).unwrap()
}

pub fn covering_events(bars: &[DailyBar]) -> Vec<PhaseEvent> {
    generate_phase_events(
        bars[0].date - Duration::days(10),
        bars.last().unwrap().date,
        &EphemerisModel::default(),
    )
    .unwrap()
}

// ---- independent calendar arithmetic ----

fn is_leap(y: i32) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn month_lengths(y: i32) -> [u32; 12] {
    [31, if is_leap(y) { 29 } else { 28 }, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31]
}

pub fn oracle_day_of_year(y: i32, m: u32, day: u32) -> u32 {
    month_lengths(y)[..(m - 1) as usize].iter().sum::<u32>() + day
}

/// Sakamoto's method; 1 = Monday .. 7 = Sunday.
pub fn oracle_weekday(y: i32, m: u32, day: u32) -> u32 {
    const T: [i32; 12] = [0, 3, 2, 5, 0, 3, 5, 1, 4, 6, 2, 4];
    let y = if m < 3 { y - 1 } else { y };
    let dow = (y + y / 4 - y / 100 + y / 400 + T[(m - 1) as usize] + day as i32).rem_euclid(7);
    if dow == 0 {
        7
    } else {
        dow as u32
    }
}

/// Days since 1970-01-01 (Howard Hinnant's days_from_civil).
pub fn oracle_day_number(y: i32, m: u32, day: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y } as i64;
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let m = m as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + day as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

fn ymd(date: NaiveDate) -> (i32, u32, u32) {
    (date.year(), date.month(), date.day())
}

/// (phase ordinal, offset) by linear scan over the events.
pub fn oracle_luna(date: NaiveDate, events: &[PhaseEvent]) -> Option<(u32, i64)> {
    let (y, m, dd) = ymd(date);
    let today = oracle_day_number(y, m, dd);
    let mut best: Option<(u32, i64)> = None;
    for e in events {
        let (ey, em, ed) = ymd(e.date);
        let day = oracle_day_number(ey, em, ed);
        if day <= today {
            let ordinal = e.phase.base_code() as u32 / 10;
            best = Some((ordinal, today - day));
        }
    }
    best
}

/// Oracle bucket of a date with given luna (phase ordinal, offset).
pub fn oracle_bucket(granularity: Granularity, date: NaiveDate, luna: (u32, i64)) -> Bucket {
    let (y, m, dd) = ymd(date);
    let doy = oracle_day_of_year(y, m, dd);
    let phase = Phase::ALL[luna.0 as usize];
    match granularity.token() {
        "semester" => Bucket::Index((m + 5) / 6),
        "trimester" => Bucket::Index((m + 2) / 3),
        "bimester" => Bucket::Index((m + 1) / 2),
        "month" => Bucket::Index(m),
        "week" => Bucket::Index((doy + 6) / 7),
        "dayofyear" => Bucket::Index(doy),
        "dayofmonth" => Bucket::Index(dd),
        "weekday" => Bucket::Index(oracle_weekday(y, m, dd)),
        "phaseday" => Bucket::Index(luna.0 * 10 + luna.1 as u32),
        "phase" => Bucket::Phase(phase),
        "earlylate" => {
            let Granularity::Lunar(LunarGranularity::EarlyLate(n)) = granularity else {
                unreachable!()
            };
            let part = if luna.1 < n.get() as i64 { Part::Early } else { Part::Late };
            Bucket::Split(phase, part)
        }
        other => panic!("unknown granularity {other}"),
    }
}

/// Every candidate bucket of a granularity, enumerated independently.
pub fn oracle_domain(granularity: Granularity) -> Vec<Bucket> {
    let idx = |lo: u32, hi: u32| (lo..=hi).map(Bucket::Index).collect::<Vec<_>>();
    match granularity.token() {
        "semester" => idx(1, 2),
        "trimester" => idx(1, 4),
        "bimester" => idx(1, 6),
        "month" => idx(1, 12),
        "week" => idx(1, 53),
        "dayofyear" => idx(1, 366),
        "dayofmonth" => idx(1, 31),
        "weekday" => idx(1, 7),
        "phaseday" => idx(0, 39),
        "phase" => Phase::ALL.iter().map(|p| Bucket::Phase(*p)).collect(),
        "earlylate" => Phase::ALL
            .iter()
            .flat_map(|p| [Bucket::Split(*p, Part::Early), Bucket::Split(*p, Part::Late)])
            .collect(),
        other => panic!("unknown granularity {other}"),
    }
}

/// Naive two-loop recomputation: for every candidate bucket, scan every
/// diff-bearing row in date order. `events` supplies the luna assignment.
pub fn brute_force(
    rows: &[AnnotatedRow],
    events: &[PhaseEvent],
    granularity: Granularity,
) -> Vec<BucketStat> {
    let mut sorted: Vec<&AnnotatedRow> = rows.iter().filter(|r| r.diff.is_some()).collect();
    sorted.sort_by_key(|r| r.bar.date);
    let keyed: Vec<(Bucket, f64)> = sorted
        .iter()
        .map(|r| {
            let luna = oracle_luna(r.bar.date, events).expect("covered");
            (oracle_bucket(granularity, r.bar.date, luna), r.diff.unwrap())
        })
        .collect();

    let mut out = Vec::new();
    for bucket in oracle_domain(granularity) {
        let mut sum = 0.0;
        let mut count = 0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (b, v) in &keyed {
            if *b == bucket {
                sum += v;
                count += 1;
                min = min.min(*v);
                max = max.max(*v);
            }
        }
        if count > 0 {
            out.push(BucketStat {
                bucket,
                sum,
                count,
                mean: sum / count as f64,
                min,
                max,
            });
        }
    }
    out
}

/// `|a - b| <= 1e-9 * |b| + 1e-9`.
pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs() + 1e-9
}

/// Engine output matches the oracle bucket-for-bucket: identical buckets and
/// counts, sums/means within [`close`], exact min/max.
pub fn matches_oracle(engine: &[BucketStat], oracle: &[BucketStat]) -> Result<(), String> {
    if engine.len() != oracle.len() {
        return Err(format!("{} buckets vs oracle {}", engine.len(), oracle.len()));
    }
    for (e, o) in engine.iter().zip(oracle) {
        if e.bucket != o.bucket || e.count != o.count {
            return Err(format!("bucket/count mismatch: {e:?} vs {o:?}"));
        }
        if !close(e.sum, o.sum) || !close(e.mean, o.mean) || e.min != o.min || e.max != o.max {
            return Err(format!("value mismatch: {e:?} vs {o:?}"));
        }
    }
    Ok(())
}

/// Heights of the `rect.bar` elements of an SVG document, in document order.
/// Fails if the document is not well-formed XML.
pub fn svg_bar_heights(svg: &str) -> Result<Vec<f64>, String> {
    let doc = roxmltree::Document::parse(svg).map_err(|e| e.to_string())?;
    if doc.root_element().tag_name().name() != "svg" {
        return Err("root element is not <svg>".into());
    }
    Ok(doc
        .descendants()
        .filter(|n| n.has_tag_name("rect") && n.attribute("class") == Some("bar"))
        .map(|n| n.attribute("height").unwrap().parse::<f64>().unwrap())
        .collect())
}

/// Every bar height is within 0.5 px of `|sum|` scaled by the tallest bar.
pub fn heights_proportional(heights: &[f64], sums: &[f64]) -> Result<(), String> {
    let (imax, smax) = sums
        .iter()
        .map(|s| s.abs())
        .enumerate()
        .fold((0, 0.0), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
    let px_per_point = if smax > 0.0 { heights[imax] / smax } else { 0.0 };
    for (h, s) in heights.iter().zip(sums) {
        let expected = s.abs() * px_per_point;
        if (h - expected).abs() > 0.5 {
            return Err(format!("bar height {h} vs expected {expected} for sum {s}"));
        }
    }
    Ok(())
}
