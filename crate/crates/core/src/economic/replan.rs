//! Rolling replanning from the measured station state.
//!
//! Each cycle the envelope is rebuilt from what is still to be delivered,
//! in a frame where the energy delivered so far is zero. Each request is
//! expressed as the grid energy of the full-power cycles the battery model
//! needs to finish it, so every envelope corner lies on the planner's grid
//! and the taper is paid for up front.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::envelope::{stay_envelope, EnergyEnvelope};
use super::{dp_policy_s1, dp_policy_s2, LoadPolicy, PricingSchedule, StationSpec};
use crate::battery::{cycles_to_finish, EvChargeState, StationState};
use crate::error::Result;
use crate::predictor::{PredictionSet, Predictor};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(default))]
pub struct CostModelS2 {
    /// Currency per port-cycle short of the upper curve, per departed EV.
    pub weight: f64,
    /// Count predicted, not yet arrived EVs in the expected departures.
    pub include_predicted_departures: bool,
}

impl Default for CostModelS2 {
    fn default() -> Self {
        CostModelS2 {
            weight: 0.0003,
            include_predicted_departures: true,
        }
    }
}

/// Departure CDF over instants `0..=n_p`, counted `weight` times.
#[derive(Clone, Debug, PartialEq)]
pub struct DepartureCurve {
    pub weight: f64,
    pub cdf: Vec<f64>,
}

/// `b(k)`: expected number of EVs gone by instant `k`.
pub fn expected_departed_count(k: usize, curves: &[DepartureCurve]) -> f64 {
    curves.iter().map(|c| c.weight * c.cdf[k]).sum()
}

/// What the planner knows besides the measured station state.
#[derive(Clone, Copy, Debug)]
pub enum PlanInputs<'a> {
    /// Departures announced by the users, one entry per port.
    Stated { departures: &'a [Option<usize>] },
    /// Departures and future arrivals taken from the fitted model.
    Predictive {
        predictor: &'a Predictor,
        prediction: &'a PredictionSet,
        cost: CostModelS2,
    },
}

/// One EV's stay in steps and its request, for planning the whole day at once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stay {
    pub arrival: usize,
    pub departure: usize,
    pub energy_kwh: f64,
}

/// Expected departure step of an EV that arrived at step `arrival` and is
/// still connected at step `k`.
pub fn estimated_departure_step(
    predictor: &Predictor,
    arrival: usize,
    k: usize,
    spec: &StationSpec,
) -> usize {
    let n_p = spec.clock.slots_per_day();
    let now = spec.clock.instant_minute(k);
    let entry = predictor.slots.entry(arrival + 1);
    let step = match entry.departure.conditional_mean_above(now) {
        Some(m) => libm::floor(m / spec.clock.cycle_minutes() as f64) as usize,
        None => k + 1,
    };
    step.clamp(k + 1, n_p.max(k + 1))
}

/// Departure CDF of a connected EV given it is still there at instant `k`.
pub fn connected_departure_curve(
    predictor: &Predictor,
    arrival: usize,
    k: usize,
    spec: &StationSpec,
) -> Vec<f64> {
    let table = predictor.slots.departure_cdf(arrival + 1);
    let f_now = table[k];
    let survive = 1.0 - f_now;
    if survive < 1e-9 {
        let d = estimated_departure_step(predictor, arrival, k, spec);
        return table
            .iter()
            .enumerate()
            .map(|(i, _)| if i >= d { 1.0 } else { 0.0 })
            .collect();
    }
    table
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            if i <= k {
                0.0
            } else {
                ((f - f_now) / survive).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Grid energy of the full-power cycles the EV still needs.
fn planning_energy(ev: &EvChargeState, spec: &StationSpec) -> f64 {
    let n_p = spec.clock.slots_per_day();
    cycles_to_finish(ev, &spec.bms, spec.clock.cycle_minutes() as f64, n_p) as f64 * spec.step_kwh()
}

fn fresh_energy(kwh: f64, spec: &StationSpec) -> f64 {
    planning_energy(&EvChargeState::new(kwh, 0, 0, 0), spec)
}

fn open_requests<'a>(
    station: &'a StationState,
    spec: &'a StationSpec,
) -> impl Iterator<Item = (EvChargeState, f64)> + 'a {
    station
        .connected()
        .filter(|ev| !ev.is_finished())
        .map(move |ev| (*ev, planning_energy(ev, spec)))
        .filter(|(_, e)| *e > 0.0)
}

/// Plan from step `k` given the measured station.
pub fn replan(
    k: usize,
    station: &StationState,
    inputs: &PlanInputs<'_>,
    prices: &PricingSchedule,
    spec: &StationSpec,
) -> Result<LoadPolicy> {
    let n_p = spec.clock.slots_per_day();
    let step = spec.step_kwh();
    let mut env = EnergyEnvelope::zeros(n_p);
    match inputs {
        PlanInputs::Stated { departures } => {
            for (ev, energy) in open_requests(station, spec) {
                let stated = departures
                    .get(ev.port_index)
                    .copied()
                    .flatten()
                    .unwrap_or(ev.departure_slot);
                let d = stated.clamp(k + 1, n_p);
                env.add(&stay_envelope(k, d, energy, step, n_p)?, 1.0);
            }
            Ok(dp_policy_s1(&env, prices, spec, k, 0.0))
        }
        PlanInputs::Predictive {
            predictor,
            prediction,
            cost,
        } => {
            let mut curves = Vec::new();
            for (ev, energy) in open_requests(station, spec) {
                let d = estimated_departure_step(predictor, ev.arrival_slot, k, spec);
                env.add(&stay_envelope(k, d, energy, step, n_p)?, 1.0);
                curves.push(DepartureCurve {
                    weight: 1.0,
                    cdf: connected_departure_curve(predictor, ev.arrival_slot, k, spec),
                });
            }
            for sp in prediction.slots.iter().filter(|s| s.slot >= k + 2) {
                if sp.expected_arrivals <= 0.0 {
                    continue;
                }
                let energy = fresh_energy(sp.expected_energy_kwh, spec);
                let d = sp.expected_departure_step.clamp(sp.slot, n_p);
                env.add(
                    &stay_envelope(sp.slot - 1, d, energy, step, n_p)?,
                    sp.expected_arrivals,
                );
                if cost.include_predicted_departures {
                    curves.push(DepartureCurve {
                        weight: sp.expected_arrivals,
                        cdf: predictor.slots.departure_cdf(sp.slot).to_vec(),
                    });
                }
            }
            let departed: Vec<f64> = (0..=n_p)
                .map(|i| expected_departed_count(i, &curves))
                .collect();
            Ok(dp_policy_s2(
                &env,
                &departed,
                cost.weight,
                prices,
                spec,
                k,
                0.0,
            ))
        }
    }
}

/// Single plan for the whole day from the true stays, made before the first cycle.
pub fn offline_policy(
    stays: &[Stay],
    prices: &PricingSchedule,
    spec: &StationSpec,
) -> Result<LoadPolicy> {
    let n_p = spec.clock.slots_per_day();
    let step = spec.step_kwh();
    let mut env = EnergyEnvelope::zeros(n_p);
    for s in stays {
        let energy = fresh_energy(s.energy_kwh, spec);
        env.add(
            &stay_envelope(s.arrival, s.departure, energy, step, n_p)?,
            1.0,
        );
    }
    Ok(dp_policy_s1(&env, prices, spec, 0, 0.0))
}
