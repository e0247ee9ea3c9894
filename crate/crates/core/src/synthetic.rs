//! Seeded random-walk OHLCV series for tests, benchmarks and demos.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::market::DailyBar;

fn cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Business days (Monday to Friday) on or after `start`.
pub fn business_days(start: NaiveDate) -> impl Iterator<Item = NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
}

/// `trading_days` consistent daily bars starting at the first business day
/// on or after `start`. Closes follow a geometric random walk from 10000
/// with 1% daily volatility; prices are rounded to cents.
pub fn random_walk(start: NaiveDate, trading_days: usize, seed: u64) -> Vec<DailyBar> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = Normal::new(0.0002, 0.01).expect("valid normal");
    let gap = Normal::new(0.0, 0.002).expect("valid normal");
    let mut prev_close = 10_000.0;

    business_days(start)
        .take(trading_days)
        .map(|date| {
            let open = cents(prev_close * (1.0 + gap.sample(&mut rng)));
            let r: f64 = step.sample(&mut rng);
            let close = cents(open * r.exp());
            let high = cents(open.max(close) * (1.0 + rng.random::<f64>() * 0.005));
            let low = cents(open.min(close) * (1.0 - rng.random::<f64>() * 0.005));
            let volume = (rng.random::<f64>() * 4e8 + 1e8).round();
            prev_close = close;
            DailyBar {
                date,
                open,
                high,
                low,
                close,
                volume,
            }
        })
        .collect()
}
