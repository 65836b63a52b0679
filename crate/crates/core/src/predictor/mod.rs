//! Non-parametric model of the day's EV load: how many arrive, when, how
//! much energy they want and when they leave.

mod arrival;
mod kde;
mod prediction;
mod slots;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub use arrival::{
    adapt_count, adapt_count_with, adaptation_gain, expected_arrivals_in_slot, initial_daily_count,
    moving_average_count, ArrivalModel, DEFAULT_WINDOW_DAYS,
};
pub use kde::{fit_kde, silverman_bandwidth, BandwidthRule, Kde1D, KdeSpec};
pub use prediction::{build_prediction_set, PredictionSet, SlotPrediction};
pub use slots::{fit_slot_models, SlotConditionalModel, SlotEntry, SlotModelSpec};

use crate::error::Result;
use crate::sessions::{DayType, SessionHistory, SlotClock, DEFAULT_WINDOW_SESSIONS};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * libm::exp(-0.5 * z * z)
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(default))]
pub struct PredictorParams {
    /// Sessions kept for fitting.
    pub window_sessions: usize,
    /// Same-type days averaged for the initial arrival count.
    pub window_days: usize,
    pub time_bandwidth: BandwidthRule,
    pub energy_bandwidth: BandwidthRule,
    /// Used when the history holds no day of the requested type.
    pub default_daily_count: Option<f64>,
}

impl Default for PredictorParams {
    fn default() -> Self {
        PredictorParams {
            window_sessions: DEFAULT_WINDOW_SESSIONS,
            window_days: DEFAULT_WINDOW_DAYS,
            time_bandwidth: BandwidthRule::Silverman { floor: 5.0 },
            energy_bandwidth: BandwidthRule::Silverman { floor: 0.25 },
            default_daily_count: None,
        }
    }
}

/// Everything fitted at the start of a day.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Predictor {
    pub arrival: ArrivalModel,
    pub slots: SlotConditionalModel,
}

impl Predictor {
    pub fn fit(
        history: &SessionHistory,
        clock: &SlotClock,
        day_type: DayType,
        params: &PredictorParams,
    ) -> Result<Self> {
        let arrival = ArrivalModel::fit(
            history,
            clock,
            day_type,
            params.time_bandwidth,
            params.window_days,
            params.default_daily_count,
        )?;
        let slots = fit_slot_models(
            history,
            clock,
            params.time_bandwidth,
            params.energy_bandwidth,
        )?;
        Ok(Predictor { arrival, slots })
    }

    pub fn prediction(&self, k: usize, n_hat: f64) -> PredictionSet {
        build_prediction_set(k, n_hat, &self.arrival, &self.slots)
    }
}
