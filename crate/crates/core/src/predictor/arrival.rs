use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::kde::{BandwidthRule, Kde1D};
use crate::error::{Error, Result};
use crate::sessions::{DayCount, DayType, SessionHistory, SlotClock, MINUTES_PER_DAY};

pub const DEFAULT_WINDOW_DAYS: usize = 5;

/// Mean daily arrival count over the `window_days` most recent days of `day_type`.
pub fn moving_average_count(
    counts: &[DayCount],
    day_type: DayType,
    window_days: usize,
) -> Result<f64> {
    let recent: Vec<usize> = counts
        .iter()
        .rev()
        .filter(|d| d.day.day_type() == day_type)
        .take(window_days.max(1))
        .map(|d| d.count)
        .collect();
    if recent.is_empty() {
        return Err(Error::NoMatchingDays {
            day_type: day_type.as_str(),
        });
    }
    Ok(recent.iter().sum::<usize>() as f64 / recent.len() as f64)
}

/// Five-day moving average of arrivals, weekdays and weekends kept apart.
pub fn initial_daily_count(history: &SessionHistory, day_type: DayType) -> Result<f64> {
    moving_average_count(&history.day_counts(), day_type, DEFAULT_WINDOW_DAYS)
}

/// `√((F_k + k/n_p) / 2)`: slow in the morning, one at the end of the day.
pub fn adaptation_gain(cdf_k: f64, k: usize, n_p: usize) -> f64 {
    libm::sqrt((cdf_k + k as f64 / n_p as f64) / 2.0)
}

/// Corrects the expected daily arrival count after `k` of `n_p` slots,
/// with `actual_so_far` arrivals observed against `n_hat_k · cdf_k` expected.
pub fn adapt_count(n_hat_k: f64, actual_so_far: usize, cdf_k: f64, k: usize, n_p: usize) -> f64 {
    adapt_count_with(adaptation_gain, n_hat_k, actual_so_far, cdf_k, k, n_p)
}

/// [`adapt_count`] with a caller-supplied gain `g(F_k, k, n_p)`; any
/// piecewise-continuous gain rising from 0 to 1 over the day is admissible.
pub fn adapt_count_with(
    gain: impl Fn(f64, usize, usize) -> f64,
    n_hat_k: f64,
    actual_so_far: usize,
    cdf_k: f64,
    k: usize,
    n_p: usize,
) -> f64 {
    let observed = actual_so_far as f64;
    let g = gain(cdf_k, k, n_p);
    // N̂ + g·(C − N̂·F) written so that g = F = 1 yields C exactly
    let next = n_hat_k * (1.0 - g * cdf_k) + g * observed;
    next.max(observed)
}

/// Time-of-day arrival distribution and the day's expected arrival count.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ArrivalModel {
    pub day_type: DayType,
    pub expected_daily_count: f64,
    density: Option<Kde1D>,
    /// `F` at instants `0..=n_p`.
    cdf: Vec<f64>,
}

impl ArrivalModel {
    /// Fits the arrival density on the history's arrivals of `day_type`
    /// (all arrivals if there are none of that type) and the moving-average count.
    pub fn fit(
        history: &SessionHistory,
        clock: &SlotClock,
        day_type: DayType,
        bandwidth: BandwidthRule,
        window_days: usize,
        default_count: Option<f64>,
    ) -> Result<Self> {
        let matching: Vec<f64> = history
            .sessions()
            .filter(|s| s.day().day_type() == day_type)
            .map(|s| s.arrival.minute_of_day())
            .collect();
        let samples = if matching.is_empty() {
            history
                .sessions()
                .map(|s| s.arrival.minute_of_day())
                .collect()
        } else {
            matching
        };
        if samples.is_empty() {
            return Err(Error::ModelFit("history holds no sessions".into()));
        }
        let density = Kde1D::reflected(
            &samples,
            bandwidth.bandwidth(&samples),
            0.0,
            MINUTES_PER_DAY as f64,
        )?;
        let count = match moving_average_count(&history.day_counts(), day_type, window_days) {
            Ok(n) => n,
            Err(e) => default_count.ok_or(e)?,
        };
        Ok(Self::from_density(density, clock, count, day_type))
    }

    pub fn from_density(
        density: Kde1D,
        clock: &SlotClock,
        expected_daily_count: f64,
        day_type: DayType,
    ) -> Self {
        let n = clock.slots_per_day();
        let mut cdf: Vec<f64> = (0..=n)
            .map(|k| density.cdf(clock.instant_minute(k)))
            .collect();
        cdf[0] = 0.0;
        cdf[n] = 1.0;
        ArrivalModel {
            day_type,
            expected_daily_count,
            density: Some(density),
            cdf,
        }
    }

    /// Model from a tabulated CDF over instants `0..=n_p`.
    pub fn from_cdf(cdf: Vec<f64>, expected_daily_count: f64, day_type: DayType) -> Result<Self> {
        let ok = cdf.len() >= 2
            && cdf[0] == 0.0
            && cdf[cdf.len() - 1] == 1.0
            && cdf.windows(2).all(|w| w[0] <= w[1]);
        if !ok {
            return Err(Error::ModelFit("arrival CDF must rise from 0 to 1".into()));
        }
        if !(expected_daily_count >= 0.0) {
            return Err(Error::ModelFit(format!(
                "negative daily count {expected_daily_count}"
            )));
        }
        Ok(ArrivalModel {
            day_type,
            expected_daily_count,
            density: None,
            cdf,
        })
    }

    pub fn density(&self) -> Option<&Kde1D> {
        self.density.as_ref()
    }

    pub fn slots_per_day(&self) -> usize {
        self.cdf.len() - 1
    }

    /// `F` at instant `k` (end of slot `k`).
    pub fn cdf_at(&self, k: usize) -> f64 {
        self.cdf[k.min(self.cdf.len() - 1)]
    }

    /// Probability that an arrival falls in one-based slot `s`.
    pub fn slot_probability(&self, s: usize) -> f64 {
        debug_assert!(s >= 1 && s < self.cdf.len());
        self.cdf[s] - self.cdf[s - 1]
    }
}

/// Expected arrivals in one-based slot `s` given `n_hat` arrivals for the day.
pub fn expected_arrivals_in_slot(n_hat: f64, model: &ArrivalModel, s: usize) -> f64 {
    n_hat * model.slot_probability(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sessions::DayIndex;

    fn counts(values: &[usize]) -> Vec<DayCount> {
        // consecutive Mondays
        values
            .iter()
            .enumerate()
            .map(|(i, &count)| DayCount {
                day: DayIndex(18631 + 7 * i as i64),
                count,
            })
            .collect()
    }

    #[test]
    fn five_day_mean() {
        let c = counts(&[30, 32, 28, 31, 29]);
        assert_eq!(moving_average_count(&c, DayType::Weekday, 5).unwrap(), 30.0);
        let c = counts(&[99, 30, 32, 28, 31, 29]);
        assert_eq!(moving_average_count(&c, DayType::Weekday, 5).unwrap(), 30.0);
        assert_eq!(
            moving_average_count(&counts(&[12]), DayType::Weekday, 5).unwrap(),
            12.0
        );
        assert_eq!(
            moving_average_count(&counts(&[0, 0]), DayType::Weekday, 5).unwrap(),
            0.0
        );
        assert!(matches!(
            moving_average_count(&counts(&[3]), DayType::Weekend, 5),
            Err(Error::NoMatchingDays { .. })
        ));
    }

    #[test]
    fn end_of_day_collapses_to_observed() {
        for (n_hat, c) in [(20.0, 5), (0.1 + 0.2, 7), (33.3, 41), (17.0, 0)] {
            assert_eq!(adapt_count(n_hat, c, 1.0, 144, 144), c as f64);
        }
    }

    #[test]
    fn mid_day_example() {
        let next = adapt_count(20.0, 5, 0.5, 72, 144);
        let expected = 20.0 + (5.0 - 10.0) * libm::sqrt(0.5);
        assert!((next - expected).abs() < 1e-12);
        assert!((next - 16.464).abs() < 1e-3);
    }

    #[test]
    fn early_gain_barely_moves() {
        let g = adaptation_gain(0.0, 1, 100_000);
        assert!(g < 0.003);
        let next = adapt_count(30.0, 2, 0.0, 1, 100_000);
        assert!((next - (30.0 + 2.0 * g)).abs() < 1e-12);
        assert!((next - 30.0).abs() < 0.01);
        assert!((adaptation_gain(0.0, 1, 144) - libm::sqrt(1.0 / 288.0)).abs() < 1e-15);
    }

    #[test]
    fn never_below_observed() {
        assert_eq!(adapt_count(2.0, 9, 0.9, 100, 144), 9.0);
    }

    #[test]
    fn uniform_slots() {
        let cdf: Vec<f64> = (0..=144).map(|k| k as f64 / 144.0).collect();
        let m = ArrivalModel::from_cdf(cdf, 10.0, DayType::Weekday).unwrap();
        for s in 1..=144 {
            assert!((expected_arrivals_in_slot(10.0, &m, s) - 10.0 / 144.0).abs() < 1e-12);
            assert_eq!(expected_arrivals_in_slot(0.0, &m, s), 0.0);
        }
        let total: f64 = (1..=144)
            .map(|s| expected_arrivals_in_slot(10.0, &m, s))
            .sum();
        assert!((total - 10.0).abs() < 1e-9);
    }

    #[test]
    fn from_cdf_validates() {
        assert!(
            ArrivalModel::from_cdf(alloc::vec![0.0, 0.7, 0.6, 1.0], 1.0, DayType::Weekday).is_err()
        );
        assert!(ArrivalModel::from_cdf(alloc::vec![0.0, 0.5], 1.0, DayType::Weekday).is_err());
    }
}
