use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sessions::SlotClock;

/// Day-ahead hourly energy prices, currency per kWh, hour 0 to 23.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(try_from = "Vec<f64>", into = "Vec<f64>")
)]
pub struct PricingSchedule {
    hourly: Vec<f64>,
}

impl PricingSchedule {
    pub fn new(hourly: &[f64]) -> Result<Self> {
        if hourly.len() != 24 {
            return Err(Error::Config(format!(
                "expected 24 hourly prices, got {}",
                hourly.len()
            )));
        }
        if let Some(p) = hourly.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config(format!(
                "price {p} is negative or not finite"
            )));
        }
        Ok(PricingSchedule {
            hourly: hourly.to_vec(),
        })
    }

    pub fn flat(price: f64) -> Result<Self> {
        Self::new(&[price; 24])
    }

    pub fn hourly(&self) -> &[f64] {
        &self.hourly
    }

    /// Price during step `k`; each hourly price covers all of its cycles.
    pub fn price_at_step(&self, k: usize, clock: &SlotClock) -> f64 {
        self.hourly[clock.hour_of_step(k).min(23)]
    }

    pub fn slot_prices(&self, clock: &SlotClock) -> Vec<f64> {
        (0..clock.slots_per_day())
            .map(|k| self.price_at_step(k, clock))
            .collect()
    }

    /// Every price shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Result<Self> {
        let v: Vec<f64> = self.hourly.iter().map(|p| p + delta).collect();
        Self::new(&v)
    }
}

impl TryFrom<Vec<f64>> for PricingSchedule {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(&v)
    }
}

impl From<PricingSchedule> for Vec<f64> {
    fn from(p: PricingSchedule) -> Self {
        p.hourly
    }
}
