//! CSV, JSON and SVG renderings of bucket statistics.

use std::fmt::Write;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::DiffKind;
use crate::sampling::{BucketStat, Granularity};

pub const CSV_HEADER: &str = "bucket,sum,count,mean,min,max";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("report has no buckets")]
    EmptyReport,
    #[error("chart must be at least 100x100 pixels, got {width}x{height}")]
    DimensionsTooSmall { width: u32, height: u32 },
    #[error("{0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    /// Input file names.
    pub sources: Vec<String>,
    /// Span of the aggregated rows.
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub diff_kind: DiffKind,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub title: String,
    pub granularity: Granularity,
    /// Always in ascending bucket order.
    stats: Vec<BucketStat>,
    pub metadata: Metadata,
}

impl Report {
    pub fn new(
        title: impl Into<String>,
        granularity: Granularity,
        mut stats: Vec<BucketStat>,
        metadata: Metadata,
    ) -> Self {
        stats.sort_by_key(|s| s.bucket);
        Self {
            title: title.into(),
            granularity,
            stats,
            metadata,
        }
    }

    pub fn stats(&self) -> &[BucketStat] {
        &self.stats
    }
}

/// Up to six decimals, trailing zeros trimmed.
pub fn format_number(x: f64) -> String {
    let mut s = format!("{x:.6}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

pub fn render_csv(report: &Report) -> Result<String, ReportError> {
    if report.stats.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in &report.stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            report.granularity.label(&s.bucket),
            format_number(s.sum),
            s.count,
            format_number(s.mean),
            format_number(s.min),
            format_number(s.max)
        );
    }
    Ok(out)
}

/// Reads the stats back from [`render_csv`] output.
pub fn parse_csv(text: &str, granularity: Granularity) -> Result<Vec<BucketStat>, ReportError> {
    let err = |line: usize, what: String| ReportError::Parse(format!("line {line}: {what}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(err(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut stats = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [bucket, sum, count, mean, min, max] = fields.as_slice() else {
            return Err(err(line_no, "expected 6 fields".into()));
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| err(line_no, format!("invalid number `{s}`")))
        };
        stats.push(BucketStat {
            bucket: granularity
                .parse_bucket(bucket)
                .map_err(|e| err(line_no, e))?,
            sum: num(sum)?,
            count: count
                .parse()
                .map_err(|_| err(line_no, format!("invalid count `{count}`")))?,
            mean: num(mean)?,
            min: num(min)?,
            max: num(max)?,
        });
    }
    Ok(stats)
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    title: String,
    granularity: String,
    metadata: MetadataDoc,
    stats: Vec<StatDoc>,
}

#[derive(Serialize, Deserialize)]
struct MetadataDoc {
    sources: Vec<String>,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
    diff_kind: String,
    generated_at: String,
}

#[derive(Serialize, Deserialize)]
struct StatDoc {
    bucket: String,
    sum: f64,
    count: usize,
    mean: f64,
    min: f64,
    max: f64,
}

/// Pretty-printed JSON object with keys `title`, `granularity`, `metadata`,
/// `stats`, in that order. Timestamps are written to whole seconds.
pub fn render_json(report: &Report) -> String {
    let m = &report.metadata;
    let doc = ReportDoc {
        title: report.title.clone(),
        granularity: report.granularity.to_string(),
        metadata: MetadataDoc {
            sources: m.sources.clone(),
            from: m.from,
            to: m.to,
            diff_kind: m.diff_kind.token().to_string(),
            generated_at: m.generated_at.to_rfc3339_opts(SecondsFormat::Secs, true),
        },
        stats: report
            .stats
            .iter()
            .map(|s| StatDoc {
                bucket: report.granularity.label(&s.bucket),
                sum: s.sum,
                count: s.count,
                mean: s.mean,
                min: s.min,
                max: s.max,
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("report serializes");
    out.push('\n');
    out
}

pub fn parse_json(text: &str) -> Result<Report, ReportError> {
    let parse = |e: String| ReportError::Parse(e);
    let doc: ReportDoc = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
    let granularity: Granularity = doc.granularity.parse().map_err(parse)?;
    let stats = doc
        .stats
        .into_iter()
        .map(|s| {
            Ok(BucketStat {
                bucket: granularity.parse_bucket(&s.bucket).map_err(parse)?,
                sum: s.sum,
                count: s.count,
                mean: s.mean,
                min: s.min,
                max: s.max,
            })
        })
        .collect::<Result<Vec<_>, ReportError>>()?;
    let generated_at = DateTime::parse_from_rfc3339(&doc.metadata.generated_at)
        .map_err(|e| parse(format!("generated_at: {e}")))?
        .with_timezone(&Utc);
    Ok(Report::new(
        doc.title,
        granularity,
        stats,
        Metadata {
            sources: doc.metadata.sources,
            from: doc.metadata.from,
            to: doc.metadata.to,
            diff_kind: doc.metadata.diff_kind.parse().map_err(parse)?,
            generated_at,
        },
    ))
}

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
/// Most bucket labels drawn on the x axis; denser charts label every k-th bar.
const MAX_X_LABELS: usize = 40;

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Standalone SVG bar chart of bucket sums.
///
/// Bars are drawn from a zero axis, upward for positive sums and downward for
/// negative ones, with heights proportional to `|sum|`. Each bar is a
/// `rect` of class `bar`.
pub fn render_svg_bar(report: &Report, width: u32, height: u32) -> Result<String, ReportError> {
    if width < 100 || height < 100 {
        return Err(ReportError::DimensionsTooSmall { width, height });
    }
    if report.stats.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let (w, h) = (width as f64, height as f64);
    let plot_w = w - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = h - MARGIN_TOP - MARGIN_BOTTOM;

    let pos_max = report.stats.iter().map(|s| s.sum).fold(0.0, f64::max);
    let neg_max = report.stats.iter().map(|s| -s.sum).fold(0.0, f64::max);
    let span = pos_max + neg_max;
    let (scale, zero_y) = if span > 0.0 {
        (plot_h / span, MARGIN_TOP + plot_h * pos_max / span)
    } else {
        (0.0, MARGIN_TOP + plot_h / 2.0)
    };

    let n = report.stats.len();
    let slot = plot_w / n as f64;
    let bar_w = slot * 0.8;
    let label_every = n.div_ceil(MAX_X_LABELS);

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text class="title" x="{:.2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        w / 2.0,
        escape_xml(&report.title)
    );

    for (i, s) in report.stats.iter().enumerate() {
        let x = MARGIN_LEFT + slot * i as f64 + (slot - bar_w) / 2.0;
        let bar_h = s.sum.abs() * scale;
        let (y, fill) = if s.sum >= 0.0 {
            (zero_y - bar_h, "#4682b4")
        } else {
            (zero_y, "#b22222")
        };
        let label = escape_xml(&report.granularity.label(&s.bucket));
        let _ = writeln!(
            out,
            r#"<rect class="bar" data-bucket="{label}" x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{bar_h:.2}" fill="{fill}"><title>{label}: {}</title></rect>"#,
            format_number(s.sum)
        );
        if i % label_every == 0 {
            let _ = writeln!(
                out,
                r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10" transform="rotate(-45 {:.2} {:.2})">{label}</text>"#,
                x + bar_w / 2.0,
                h - MARGIN_BOTTOM + 14.0,
                x + bar_w / 2.0,
                h - MARGIN_BOTTOM + 14.0,
            );
        }
    }

    let _ = writeln!(
        out,
        r#"<line class="zero-axis" x1="{MARGIN_LEFT:.2}" y1="{zero_y:.2}" x2="{:.2}" y2="{zero_y:.2}" stroke="black" stroke-width="1"/>"#,
        w - MARGIN_RIGHT
    );
    let _ = writeln!(
        out,
        r#"<line class="y-axis" x1="{MARGIN_LEFT:.2}" y1="{MARGIN_TOP:.2}" x2="{MARGIN_LEFT:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
        h - MARGIN_BOTTOM
    );
    let mut ticks = vec![(0.0, zero_y)];
    if pos_max > 0.0 {
        ticks.push((pos_max, zero_y - pos_max * scale));
    }
    if neg_max > 0.0 {
        ticks.push((-neg_max, zero_y + neg_max * scale));
    }
    for (value, y) in ticks {
        let _ = writeln!(
            out,
            r#"<text class="y-label" x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 3.0,
            format_number((value * 100.0_f64).round() / 100.0)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ephemeris::Phase;
    use crate::sampling::Bucket;

    fn stat(bucket: Bucket, sum: f64, count: usize) -> BucketStat {
        BucketStat {
            bucket,
            sum,
            count,
            mean: sum / count as f64,
            min: sum / count as f64 - 1.0,
            max: sum / count as f64 + 1.0,
        }
    }

    fn metadata() -> Metadata {
        Metadata {
            sources: vec!["dow.csv".into(), "phases.txt".into()],
            from: NaiveDate::from_ymd_opt(2000, 1, 3),
            to: NaiveDate::from_ymd_opt(2021, 12, 31),
            diff_kind: DiffKind::InterdayClose,
            generated_at: "2022-01-01T00:00:00Z".parse().unwrap(),
        }
    }

    #[test]
    fn number_format() {
        assert_eq!(format_number(2500.5), "2500.5");
        assert_eq!(format_number(440.0), "440");
        assert_eq!(format_number(1.0 / 3.0), "0.333333");
        assert_eq!(format_number(-0.0000001), "0");
        assert_eq!(format_number(-12.25), "-12.25");
    }

    #[test]
    fn csv_single_bucket() {
        let r = Report::new(
            "months",
            Granularity::MONTH,
            vec![stat(Bucket::Index(11), 2500.5, 440)],
            metadata(),
        );
        let csv = render_csv(&r).unwrap();
        assert!(csv.starts_with("bucket,sum,count,mean,min,max\n11,2500.5,440,"));
    }

    #[test]
    fn csv_orders_buckets() {
        let r = Report::new(
            "months",
            Granularity::MONTH,
            vec![
                stat(Bucket::Index(12), 1.0, 1),
                stat(Bucket::Index(2), 1.0, 1),
                stat(Bucket::Index(7), 1.0, 1),
            ],
            metadata(),
        );
        let csv = render_csv(&r).unwrap();
        let firsts: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(firsts, ["2", "7", "12"]);
    }

    #[test]
    fn empty_report_errors() {
        let r = Report::new("x", Granularity::PHASE, vec![], metadata());
        assert_eq!(render_csv(&r), Err(ReportError::EmptyReport));
        assert_eq!(render_svg_bar(&r, 400, 300), Err(ReportError::EmptyReport));
        assert!(render_json(&r).contains("\"stats\": []"));
    }

    #[test]
    fn svg_dimension_check() {
        let r = Report::new(
            "x",
            Granularity::PHASE,
            vec![stat(Bucket::Phase(Phase::NewMoon), 1.0, 1)],
            metadata(),
        );
        assert_eq!(
            render_svg_bar(&r, 99, 300),
            Err(ReportError::DimensionsTooSmall { width: 99, height: 300 })
        );
        assert!(render_svg_bar(&r, 100, 100).is_ok());
    }

    #[test]
    fn json_key_order_and_round_trip() {
        let r = Report::new(
            "Weekday <2000-2021>",
            Granularity::WEEKDAY,
            vec![stat(Bucket::Index(2), 0.1 + 0.2, 3), stat(Bucket::Index(5), -1e-7, 1)],
            metadata(),
        );
        let json = render_json(&r);
        let pos = |k: &str| json.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("title") < pos("granularity"));
        assert!(pos("granularity") < pos("metadata"));
        assert!(pos("metadata") < pos("stats"));
        assert!(json.contains("\"Tue\""));
        assert_eq!(parse_json(&json).unwrap(), r);
    }

    #[test]
    fn svg_title_is_escaped() {
        let r = Report::new(
            "A & B <c>",
            Granularity::PHASE,
            vec![stat(Bucket::Phase(Phase::FullMoon), 3.0, 1)],
            metadata(),
        );
        let svg = render_svg_bar(&r, 300, 200).unwrap();
        assert!(svg.contains("A &amp; B &lt;c&gt;"));
    }
}
