use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::{ChargingSession, DayIndex, DayType, SlotClock, Timestamp, MINUTES_PER_DAY};
use crate::error::{Error, Result};
use crate::predictor::std_normal_cdf;

/// Expected number of arrivals per slot on a weekday.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum ArrivalProfile {
    /// One rate per slot, in expected arrivals.
    PerSlot(Vec<f64>),
    /// Gaussian-shaped morning peak carrying `daily_mean` arrivals in total.
    Bell {
        daily_mean: f64,
        peak_minute: f64,
        spread_minutes: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(default))]
pub struct SyntheticProfile {
    pub arrivals: ArrivalProfile,
    /// Multiplier on arrival rates for Saturdays and Sundays.
    pub weekend_scale: f64,
    pub stay_mean_minutes: f64,
    pub stay_sd_minutes: f64,
    pub min_stay_minutes: f64,
    pub energy_mean_kwh: f64,
    pub energy_sd_kwh: f64,
    pub energy_min_kwh: f64,
    pub energy_max_kwh: f64,
    /// Mean offset of the user-announced departure from the real one.
    pub stated_bias_minutes: f64,
    pub stated_sd_minutes: f64,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        SyntheticProfile {
            arrivals: ArrivalProfile::Bell {
                daily_mean: 30.0,
                peak_minute: 510.0,
                spread_minutes: 75.0,
            },
            weekend_scale: 0.3,
            stay_mean_minutes: 480.0,
            stay_sd_minutes: 120.0,
            min_stay_minutes: 60.0,
            energy_mean_kwh: 10.0,
            energy_sd_kwh: 5.0,
            energy_min_kwh: 1.0,
            energy_max_kwh: 40.0,
            stated_bias_minutes: 0.0,
            stated_sd_minutes: 30.0,
        }
    }
}

impl SyntheticProfile {
    pub fn slot_rates(&self, clock: &SlotClock) -> Result<Vec<f64>> {
        let n = clock.slots_per_day();
        let rates = match &self.arrivals {
            ArrivalProfile::PerSlot(rates) => {
                if rates.len() != n {
                    return Err(Error::Config(format!(
                        "arrival profile has {} slot rates, clock has {n} slots",
                        rates.len()
                    )));
                }
                rates.clone()
            }
            ArrivalProfile::Bell {
                daily_mean,
                peak_minute,
                spread_minutes,
            } => {
                if !(*spread_minutes > 0.0) {
                    return Err(Error::Config("bell spread must be positive".into()));
                }
                (0..n)
                    .map(|k| {
                        let lo = (clock.instant_minute(k) - peak_minute) / spread_minutes;
                        let hi = (clock.instant_minute(k + 1) - peak_minute) / spread_minutes;
                        daily_mean * (std_normal_cdf(hi) - std_normal_cdf(lo))
                    })
                    .collect()
            }
        };
        if let Some(bad) = rates.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::Config(format!(
                "arrival rate {bad} is negative or not finite"
            )));
        }
        Ok(rates)
    }

    fn validate(&self) -> Result<()> {
        let non_negative = [
            ("weekend_scale", self.weekend_scale),
            ("stay_sd_minutes", self.stay_sd_minutes),
            ("energy_sd_kwh", self.energy_sd_kwh),
            ("stated_sd_minutes", self.stated_sd_minutes),
            ("energy_min_kwh", self.energy_min_kwh),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.energy_max_kwh < self.energy_min_kwh {
            return Err(Error::Config("energy_max_kwh below energy_min_kwh".into()));
        }
        if !(self.min_stay_minutes >= 1.0) {
            return Err(Error::Config(
                "min_stay_minutes must be at least one minute".into(),
            ));
        }
        Ok(())
    }
}

/// Sessions for one calendar day. Deterministic in `seed`.
pub fn generate_synthetic(
    seed: u64,
    profile: &SyntheticProfile,
    clock: &SlotClock,
    day: DayIndex,
) -> Result<Vec<ChargingSession>> {
    generate_days(seed, profile, clock, day, 1)
}

/// Sessions for `days` consecutive days starting at `first`, sorted by arrival.
pub fn generate_days(
    seed: u64,
    profile: &SyntheticProfile,
    clock: &SlotClock,
    first: DayIndex,
    days: usize,
) -> Result<Vec<ChargingSession>> {
    profile.validate()?;
    let rates = profile.slot_rates(clock)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stay = Normal::new(profile.stay_mean_minutes, profile.stay_sd_minutes)
        .map_err(|e| Error::Config(format!("stay distribution: {e}")))?;
    let energy = Normal::new(profile.energy_mean_kwh, profile.energy_sd_kwh)
        .map_err(|e| Error::Config(format!("energy distribution: {e}")))?;
    let stated = Normal::new(profile.stated_bias_minutes, profile.stated_sd_minutes)
        .map_err(|e| Error::Config(format!("stated departure distribution: {e}")))?;

    let mut out = Vec::new();
    let mut day = first;
    for _ in 0..days {
        let scale = match day.day_type() {
            DayType::Weekday => 1.0,
            DayType::Weekend => profile.weekend_scale,
        };
        let mut serial = 0usize;
        for (k, rate) in rates.iter().enumerate() {
            let lambda = rate * scale;
            if lambda <= 0.0 {
                continue;
            }
            let arrivals = Poisson::new(lambda)
                .map_err(|e| Error::Config(format!("arrival rate {lambda}: {e}")))?
                .sample(&mut rng) as usize;
            for _ in 0..arrivals {
                let start = clock.instant_minute(k);
                let arrival_min =
                    libm::floor(start + rng.random::<f64>() * clock.cycle_minutes() as f64);
                let stay_min = libm::round(stay.sample(&mut rng).max(profile.min_stay_minutes));
                let last_minute = (MINUTES_PER_DAY - 1) as f64;
                let departure_min = (arrival_min + stay_min)
                    .min(last_minute)
                    .max(arrival_min + 1.0);
                let kwh = energy
                    .sample(&mut rng)
                    .clamp(profile.energy_min_kwh, profile.energy_max_kwh);
                let kwh = libm::round(kwh * 1000.0) / 1000.0;
                let stated_min = libm::round(departure_min + stated.sample(&mut rng))
                    .max(arrival_min + clock.cycle_minutes() as f64);

                out.push(ChargingSession {
                    session_id: format!("d{}-{:03}", day.0, serial),
                    arrival: Timestamp::from_day_minute(day, arrival_min),
                    departure: Timestamp::from_day_minute(day, departure_min),
                    requested_kwh: kwh,
                    user_stated_departure: Some(Timestamp::from_day_minute(day, stated_min)),
                });
                serial += 1;
            }
        }
        day = day.next();
    }
    out.sort_by(|a, b| {
        a.arrival
            .cmp(&b.arrival)
            .then_with(|| a.session_id.cmp(&b.session_id))
    });
    Ok(out)
}
