//! Cumulative-energy envelopes.
//!
//! Every vector is indexed by instant `k = 0..=n_p` and holds energy
//! delivered by the start of step `k`. An EV's upper curve rises at full
//! port power from its arrival; its lower curve is the latest start that
//! still fills it by departure. Targets are clipped to what the stay can
//! physically deliver at full power, which keeps `e_min ≤ e_max`.

use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::battery::BmsParams;
use crate::error::{Error, Result};
use crate::sessions::{ChargingSession, SlotClock};

pub(crate) const GRID_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EvEnvelope {
    pub arrival_step: usize,
    pub departure_step: usize,
    /// Energy the envelope drives towards: the request, clipped to the stay.
    pub target_kwh: f64,
    pub e_max: Vec<f64>,
    pub e_min: Vec<f64>,
}

/// Upper and lower envelope for one session on its arrival day.
pub fn per_ev_envelope(
    session: &ChargingSession,
    params: &BmsParams,
    clock: &SlotClock,
) -> Result<EvEnvelope> {
    if session.departure < session.arrival {
        return Err(Error::Session {
            id: session.session_id.clone(),
            reason: "departure before arrival".into(),
        });
    }
    let steps = session.steps(clock);
    stay_envelope(
        steps.arrival,
        steps.departure,
        session.requested_kwh,
        params.cycle_energy_kwh(clock),
        clock.slots_per_day(),
    )
}

/// Envelope of an EV present over steps `arrival..departure` wanting `energy_kwh`,
/// with `step_kwh` deliverable per cycle.
pub fn stay_envelope(
    arrival: usize,
    departure: usize,
    energy_kwh: f64,
    step_kwh: f64,
    slots_per_day: usize,
) -> Result<EvEnvelope> {
    if departure < arrival || departure > slots_per_day {
        return Err(Error::Config(format!(
            "stay {arrival}..{departure} does not fit a {slots_per_day}-slot day"
        )));
    }
    if !(energy_kwh >= 0.0) || !(step_kwh > 0.0) {
        return Err(Error::Config(format!(
            "bad envelope energy {energy_kwh} / step {step_kwh}"
        )));
    }
    let target = energy_kwh.min(step_kwh * (departure - arrival) as f64);
    let mut e_max = alloc::vec![0.0; slots_per_day + 1];
    let mut e_min = alloc::vec![0.0; slots_per_day + 1];
    for k in arrival..=slots_per_day {
        if k <= departure {
            e_max[k] = (step_kwh * (k - arrival) as f64).min(target);
            e_min[k] = (target - step_kwh * (departure - k) as f64).max(0.0);
        } else {
            e_max[k] = target;
            e_min[k] = target;
        }
    }
    Ok(EvEnvelope {
        arrival_step: arrival,
        departure_step: departure,
        target_kwh: target,
        e_max,
        e_min,
    })
}

/// Aggregated station envelope plus the number of EVs able to draw power
/// in each step (fractional when predicted EVs are folded in).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EnergyEnvelope {
    pub e_max: Vec<f64>,
    pub e_min: Vec<f64>,
    pub capacity: Vec<f64>,
}

impl EnergyEnvelope {
    pub fn zeros(slots_per_day: usize) -> Self {
        EnergyEnvelope {
            e_max: alloc::vec![0.0; slots_per_day + 1],
            e_min: alloc::vec![0.0; slots_per_day + 1],
            capacity: alloc::vec![0.0; slots_per_day],
        }
    }

    pub fn slots_per_day(&self) -> usize {
        self.capacity.len()
    }

    /// Adds `weight` copies of one EV's envelope.
    pub fn add(&mut self, ev: &EvEnvelope, weight: f64) {
        for (acc, v) in self.e_max.iter_mut().zip(&ev.e_max) {
            *acc += weight * v;
        }
        for (acc, v) in self.e_min.iter_mut().zip(&ev.e_min) {
            *acc += weight * v;
        }
        if ev.target_kwh > 0.0 {
            for c in &mut self.capacity[ev.arrival_step..ev.departure_step] {
                *c += weight;
            }
        }
    }

    /// Shifts both curves by a constant, e.g. energy already delivered.
    pub fn offset(&mut self, kwh: f64) {
        self.e_max.iter_mut().for_each(|v| *v += kwh);
        self.e_min.iter_mut().for_each(|v| *v += kwh);
    }
}

/// Elementwise sum of per-EV envelopes.
pub fn aggregate_envelope(per_ev: &[EvEnvelope], slots_per_day: usize) -> EnergyEnvelope {
    let mut env = EnergyEnvelope::zeros(slots_per_day);
    for ev in per_ev {
        env.add(ev, 1.0);
    }
    env
}

/// Admissible numbers of ports to switch ON from energy `e_a_k`, given the
/// envelope at the next instant and the grid limit `p_g_max_kw`.
/// `None` when the range is empty.
pub fn decision_space(
    e_a_k: f64,
    e_min_next: f64,
    e_max_next: f64,
    p_g_max_kw: f64,
    params: &BmsParams,
    clock: &SlotClock,
) -> Option<(u32, u32)> {
    let step = params.cycle_energy_kwh(clock);
    let lower = libm::ceil((e_min_next - e_a_k).max(0.0) / step - GRID_EPS);
    let headroom = (e_max_next - e_a_k).min(p_g_max_kw * clock.cycle_hours());
    let upper = libm::floor(headroom / step + GRID_EPS);
    if upper < 0.0 || upper < lower {
        None
    } else {
        Some((lower as u32, upper as u32))
    }
}
