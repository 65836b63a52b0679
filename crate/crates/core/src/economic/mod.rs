//! Day-ahead economic layer: envelopes of the station's cumulative energy
//! and the cheapest number of ON ports per cycle that stays inside them.

mod dp;
mod envelope;
mod pricing;
mod replan;

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub use dp::{solve, DpProblem, DpSolution, StateCost};
pub use envelope::{
    aggregate_envelope, decision_space, per_ev_envelope, stay_envelope, EnergyEnvelope, EvEnvelope,
};
pub use pricing::PricingSchedule;
pub use replan::{
    connected_departure_curve, estimated_departure_step, expected_departed_count, offline_policy,
    replan, CostModelS2, DepartureCurve, PlanInputs, Stay,
};

use crate::battery::BmsParams;
use crate::error::Result;
use crate::sessions::SlotClock;

/// Fixed description of the station the planner works for.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StationSpec {
    pub clock: SlotClock,
    pub bms: BmsParams,
    pub port_count: usize,
}

impl StationSpec {
    pub fn new(clock: SlotClock, bms: BmsParams, port_count: usize) -> Result<Self> {
        bms.validate()?;
        Ok(StationSpec {
            clock,
            bms,
            port_count,
        })
    }

    /// Grid energy of one ON port over one cycle.
    pub fn step_kwh(&self) -> f64 {
        self.bms.cycle_energy_kwh(&self.clock)
    }

    /// Grid limit `n · P_ch_max`.
    pub fn grid_limit_kw(&self) -> f64 {
        self.port_count as f64 * self.bms.p_ch_max_kw
    }
}

/// Planned number of ON ports for every step from `start` to the end of day.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LoadPolicy {
    pub start: usize,
    pub step_kwh: f64,
    pub counts: Vec<u32>,
    /// Planned cumulative energy at instants `start..=n_p`.
    pub planned_kwh: Vec<f64>,
    pub infeasible: Vec<bool>,
    pub expected_cost: f64,
}

impl LoadPolicy {
    fn from_solution(sol: &DpSolution, start: usize, e0: f64, step_kwh: f64) -> Self {
        LoadPolicy {
            start,
            step_kwh,
            counts: sol.actions.clone(),
            planned_kwh: sol
                .states
                .iter()
                .map(|&j| e0 + j as f64 * step_kwh)
                .collect(),
            infeasible: sol.infeasible.clone(),
            expected_cost: sol.cost,
        }
    }

    /// Ports allowed ON in step `k`; zero outside the plan.
    pub fn count_at(&self, k: usize) -> u32 {
        k.checked_sub(self.start)
            .and_then(|i| self.counts.get(i))
            .copied()
            .unwrap_or(0)
    }

    /// Power cap for step `k`, kW.
    pub fn cap_kw(&self, k: usize, p_ch_max_kw: f64) -> f64 {
        self.count_at(k) as f64 * p_ch_max_kw
    }

    pub fn is_feasible(&self) -> bool {
        !self.infeasible.iter().any(|&b| b)
    }

    /// Whether the first step of the plan had to leave the envelope.
    pub fn first_step_infeasible(&self) -> bool {
        self.infeasible.first().copied().unwrap_or(false)
    }
}

/// Cheapest plan that keeps the cumulative energy inside `envelope` from
/// instant `k0` on, starting at measured energy `e0` (same frame as the envelope).
pub fn dp_policy_s1(
    envelope: &EnergyEnvelope,
    prices: &PricingSchedule,
    spec: &StationSpec,
    k0: usize,
    e0: f64,
) -> LoadPolicy {
    let step = spec.step_kwh();
    let p = DpProblem::from_envelope(
        envelope,
        k0,
        e0,
        step,
        spec.port_count,
        &prices.slot_prices(&spec.clock),
        None,
    );
    LoadPolicy::from_solution(&solve(&p), k0, e0, step)
}

/// Plan without the lower curve; energy short of the upper curve is charged
/// `weight` per port-cycle and per expected departed EV. `departed` is indexed by
/// instant `0..=n_p`.
pub fn dp_policy_s2(
    envelope: &EnergyEnvelope,
    departed: &[f64],
    weight: f64,
    prices: &PricingSchedule,
    spec: &StationSpec,
    k0: usize,
    e0: f64,
) -> LoadPolicy {
    let step = spec.step_kwh();
    let state_cost = StateCost {
        weight,
        departed: departed[k0..].to_vec(),
    };
    let p = DpProblem::from_envelope(
        envelope,
        k0,
        e0,
        step,
        spec.port_count,
        &prices.slot_prices(&spec.clock),
        Some(state_cost),
    );
    LoadPolicy::from_solution(&solve(&p), k0, e0, step)
}
