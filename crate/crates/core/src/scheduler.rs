//! Real-time layer: which ports to switch ON under the economic cap.
//!
//! Every cycle each unfinished EV accrues priority `τ^m1 · (E*(1−Ē))^m2`,
//! where `τ` is the number of cycles since it arrived. The EVs with the
//! highest accumulated priority get the allowed ports.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::battery::{EvChargeState, StationState};

/// Exponents of the waiting-time and remaining-energy terms.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PriorityWeights {
    pub m1: i32,
    pub m2: i32,
}

impl Default for PriorityWeights {
    fn default() -> Self {
        PriorityWeights { m1: 1, m2: 1 }
    }
}

/// One cycle's increment for an EV at step `k`.
pub fn priority_increment(ev: &EvChargeState, k: usize, weights: PriorityWeights) -> f64 {
    let tau = k.saturating_sub(ev.arrival_slot) as f64;
    let remaining = ev.requested_kwh * (1.0 - ev.fraction_delivered);
    libm::pow(tau, weights.m1 as f64) * libm::pow(remaining.max(0.0), weights.m2 as f64)
}

/// Accumulated priority per port, reset when the port changes hands.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PriorityLedger {
    scores: BTreeMap<usize, f64>,
}

impl PriorityLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn score(&self, port: usize) -> Option<f64> {
        self.scores.get(&port).copied()
    }

    /// Overrides a port's accumulated priority.
    pub fn set(&mut self, port: usize, score: f64) {
        self.scores.insert(port, score);
    }

    pub fn remove(&mut self, port: usize) {
        self.scores.remove(&port);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Adds this cycle's increment for every connected unfinished EV and
    /// drops finished or absent ones.
    pub fn accumulate(&mut self, station: &StationState, k: usize, weights: PriorityWeights) {
        for (port, slot) in station.ports().iter().enumerate() {
            match slot {
                Some(ev) if !ev.is_finished() => {
                    *self.scores.entry(port).or_insert(0.0) += priority_increment(ev, k, weights);
                }
                _ => {
                    self.scores.remove(&port);
                }
            }
        }
    }
}

/// ON/OFF per port for one cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScheduleDecision {
    pub on: Vec<bool>,
}

impl ScheduleDecision {
    pub fn on_count(&self) -> usize {
        self.on.iter().filter(|&&b| b).count()
    }

    /// Port bitmask, bit `i` set when port `i` is ON (first 64 ports).
    pub fn mode(&self) -> u64 {
        self.on
            .iter()
            .take(64)
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0u64, |m, (i, _)| m | (1 << i))
    }
}

/// Switches ON at most `cap_count` unfinished EVs by descending priority;
/// ties go to the earlier arrival, then the lower port.
pub fn select(
    station: &StationState,
    ledger: &PriorityLedger,
    cap_count: usize,
) -> ScheduleDecision {
    let mut candidates: Vec<(usize, f64, usize)> = station
        .ports()
        .iter()
        .enumerate()
        .filter_map(|(p, slot)| {
            let ev = slot.as_ref()?;
            if ev.is_finished() {
                return None;
            }
            Some((p, ledger.score(p).unwrap_or(0.0), ev.arrival_slot))
        })
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)));
    let mut on = alloc::vec![false; station.port_count()];
    for &(p, _, _) in candidates.iter().take(cap_count) {
        on[p] = true;
    }
    ScheduleDecision { on }
}

/// First-come first-served without a cap: every unfinished EV is ON.
pub fn fcfs_select(station: &StationState) -> ScheduleDecision {
    ScheduleDecision {
        on: station
            .ports()
            .iter()
            .map(|s| s.as_ref().is_some_and(|ev| !ev.is_finished()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn station(evs: &[(f64, f64, usize)]) -> StationState {
        let mut st = StationState::new(evs.len() + 1);
        for &(req, frac, arr) in evs {
            let mut ev = EvChargeState::new(req, 0, arr, 144);
            ev.fraction_delivered = frac;
            st.occupy(ev);
        }
        st
    }

    #[test]
    fn increment_reference() {
        let mut ev = EvChargeState::new(10.0, 0, 50, 100);
        ev.fraction_delivered = 0.5;
        assert_eq!(
            priority_increment(&ev, 54, PriorityWeights::default()),
            20.0
        );
        assert_eq!(
            priority_increment(&ev, 54, PriorityWeights { m1: 0, m2: 0 }),
            1.0
        );
        assert_eq!(
            priority_increment(&ev, 50, PriorityWeights { m1: 0, m2: 1 }),
            5.0
        );
        assert_eq!(priority_increment(&ev, 50, PriorityWeights::default()), 0.0);
    }

    #[test]
    fn zero_cap_is_all_off() {
        let st = station(&[(5.0, 0.0, 1), (5.0, 0.2, 2)]);
        let mut l = PriorityLedger::new();
        l.accumulate(&st, 10, PriorityWeights::default());
        assert_eq!(select(&st, &l, 0).on_count(), 0);
    }

    #[test]
    fn large_cap_turns_on_every_unfinished() {
        let st = station(&[(5.0, 0.0, 1), (5.0, 1.0, 2), (5.0, 0.3, 3)]);
        let mut l = PriorityLedger::new();
        l.accumulate(&st, 10, PriorityWeights::default());
        let d = select(&st, &l, 99);
        assert_eq!(d.on, [true, false, true, false]);
        assert_eq!(d, fcfs_select(&st));
        assert_eq!(d.mode(), 0b101);
        assert_eq!(l.len(), 2);
    }

    #[test]
    fn picks_highest_priority() {
        // waited 9 with 5 kWh left = 45; waited 2 with 10 left = 20; waited 9 with 1 left = 9
        let st = station(&[(10.0, 0.5, 1), (10.0, 0.0, 8), (10.0, 0.9, 1)]);
        let mut l = PriorityLedger::new();
        l.accumulate(&st, 10, PriorityWeights::default());
        assert_eq!(select(&st, &l, 2).on, [true, true, false, false]);
        assert_eq!(select(&st, &l, 1).on, [true, false, false, false]);
    }

    #[test]
    fn ties_prefer_earlier_arrival_then_port() {
        let st = station(&[(4.0, 0.0, 5), (4.0, 0.0, 3), (4.0, 0.0, 3)]);
        let l = PriorityLedger::new();
        assert_eq!(select(&st, &l, 1).on, [false, true, false, false]);
        assert_eq!(select(&st, &l, 2).on, [false, true, true, false]);
    }

    #[test]
    fn ledger_resets_on_departure() {
        let mut st = station(&[(4.0, 0.0, 0)]);
        let mut l = PriorityLedger::new();
        l.accumulate(&st, 3, PriorityWeights::default());
        assert_eq!(l.score(0), Some(12.0));
        st.release(0);
        l.accumulate(&st, 4, PriorityWeights::default());
        assert!(l.is_empty());
    }
}
