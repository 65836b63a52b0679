use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::arrival::{expected_arrivals_in_slot, ArrivalModel};
use super::slots::SlotConditionalModel;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SlotPrediction {
    /// One-based slot.
    pub slot: usize,
    pub expected_arrivals: f64,
    /// Predicted request of each arrival in the slot, kWh.
    pub expected_energy_kwh: f64,
    pub expected_departure_step: usize,
}

/// Expected load still to arrive from slot `k` to the end of the day.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PredictionSet {
    pub k: usize,
    pub expected_daily_count: f64,
    pub slots: Vec<SlotPrediction>,
}

impl PredictionSet {
    pub fn expected_arrivals(&self) -> f64 {
        self.slots.iter().map(|s| s.expected_arrivals).sum()
    }

    /// Σ expected arrivals × expected energy over the remaining slots.
    pub fn total_expected_energy(&self) -> f64 {
        self.slots
            .iter()
            .map(|s| s.expected_arrivals * s.expected_energy_kwh)
            .sum()
    }
}

/// Prediction for slots `k..=n_p` from the current daily count `n_hat`.
/// `k = n_p + 1` gives an empty set.
pub fn build_prediction_set(
    k: usize,
    n_hat: f64,
    model: &ArrivalModel,
    slot_models: &SlotConditionalModel,
) -> PredictionSet {
    let n_p = model.slots_per_day();
    let slots = (k.max(1)..=n_p)
        .map(|s| SlotPrediction {
            slot: s,
            expected_arrivals: expected_arrivals_in_slot(n_hat, model, s),
            expected_energy_kwh: slot_models.expected_energy_kwh(s),
            expected_departure_step: slot_models.expected_departure_step(s),
        })
        .collect();
    PredictionSet {
        k,
        expected_daily_count: n_hat,
        slots,
    }
}
