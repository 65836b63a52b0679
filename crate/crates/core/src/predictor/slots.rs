use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::kde::{BandwidthRule, Kde1D};
use crate::error::{Error, Result};
use crate::sessions::{SessionHistory, SlotClock, MINUTES_PER_DAY};

/// Departure and energy models for EVs arriving in one slot.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SlotEntry {
    /// One-based slot whose arrivals trained this entry.
    pub slot: usize,
    pub members: usize,
    /// Departure minute of day, reflected on `[0, 1440]`.
    pub departure: Kde1D,
    pub energy: Kde1D,
    pub expected_energy_kwh: f64,
    pub expected_departure_minute: f64,
}

/// Per-slot conditional models, with empty slots borrowing from the
/// nearest populated slot (earlier slot on ties).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(try_from = "SlotModelSpec", into = "SlotModelSpec")
)]
pub struct SlotConditionalModel {
    cycle_minutes: u32,
    entries: Vec<SlotEntry>,
    /// Entry index for each slot, zero-based by slot.
    slot_entry: Vec<usize>,
    /// Departure CDF of each entry at instants `0..=n_p`.
    departure_cdf: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SlotModelSpec {
    pub cycle_minutes: u32,
    pub entries: Vec<SlotEntry>,
    pub slot_entry: Vec<usize>,
}

impl TryFrom<SlotModelSpec> for SlotConditionalModel {
    type Error = Error;

    fn try_from(spec: SlotModelSpec) -> Result<Self> {
        let clock = SlotClock::new(spec.cycle_minutes)?;
        if spec.slot_entry.len() != clock.slots_per_day()
            || spec.slot_entry.iter().any(|&i| i >= spec.entries.len())
        {
            return Err(Error::ModelFit(
                "slot table does not match its entries".into(),
            ));
        }
        Ok(Self::assemble(&clock, spec.entries, spec.slot_entry))
    }
}

impl From<SlotConditionalModel> for SlotModelSpec {
    fn from(m: SlotConditionalModel) -> Self {
        SlotModelSpec {
            cycle_minutes: m.cycle_minutes,
            entries: m.entries,
            slot_entry: m.slot_entry,
        }
    }
}

/// Fits departure-time and energy KDEs per arrival slot.
pub fn fit_slot_models(
    history: &SessionHistory,
    clock: &SlotClock,
    time_bandwidth: BandwidthRule,
    energy_bandwidth: BandwidthRule,
) -> Result<SlotConditionalModel> {
    let n = clock.slots_per_day();
    let mut departures: Vec<Vec<f64>> = alloc::vec![Vec::new(); n];
    let mut energies: Vec<Vec<f64>> = alloc::vec![Vec::new(); n];
    for s in history.sessions() {
        let k = clock.step_of_minute(s.arrival.minute_of_day());
        let dep = s
            .departure
            .minutes_since(s.day())
            .min(MINUTES_PER_DAY as f64);
        departures[k].push(dep);
        energies[k].push(s.requested_kwh);
    }
    if departures.iter().all(Vec::is_empty) {
        return Err(Error::ModelFit("history holds no sessions".into()));
    }

    let mut entries = Vec::new();
    let mut own = alloc::vec![None; n];
    for k in 0..n {
        if departures[k].is_empty() {
            continue;
        }
        let dep = &departures[k];
        let kwh = &energies[k];
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        own[k] = Some(entries.len());
        entries.push(SlotEntry {
            slot: k + 1,
            members: dep.len(),
            departure: Kde1D::reflected(
                dep,
                time_bandwidth.bandwidth(dep),
                0.0,
                MINUTES_PER_DAY as f64,
            )?,
            energy: super::kde::fit_kde(kwh, energy_bandwidth.bandwidth(kwh))?,
            expected_energy_kwh: mean(kwh),
            expected_departure_minute: mean(dep),
        });
    }

    let slot_entry = (0..n).map(|k| nearest_populated(&own, k)).collect();
    Ok(SlotConditionalModel::assemble(clock, entries, slot_entry))
}

fn nearest_populated(own: &[Option<usize>], k: usize) -> usize {
    if let Some(i) = own[k] {
        return i;
    }
    for d in 1..own.len() {
        if let Some(i) = k.checked_sub(d).and_then(|j| own[j]) {
            return i;
        }
        if let Some(i) = own.get(k + d).copied().flatten() {
            return i;
        }
    }
    unreachable!("at least one slot is populated")
}

impl SlotConditionalModel {
    fn assemble(clock: &SlotClock, entries: Vec<SlotEntry>, slot_entry: Vec<usize>) -> Self {
        let n = clock.slots_per_day();
        let departure_cdf = entries
            .iter()
            .map(|e| {
                (0..=n)
                    .map(|k| e.departure.cdf(clock.instant_minute(k)))
                    .collect()
            })
            .collect();
        SlotConditionalModel {
            cycle_minutes: clock.cycle_minutes(),
            entries,
            slot_entry,
            departure_cdf,
        }
    }

    pub fn slots_per_day(&self) -> usize {
        self.slot_entry.len()
    }

    pub fn entries(&self) -> &[SlotEntry] {
        &self.entries
    }

    /// Entry index serving one-based slot `s`.
    pub fn entry_index(&self, s: usize) -> usize {
        self.slot_entry[s - 1]
    }

    pub fn entry(&self, s: usize) -> &SlotEntry {
        &self.entries[self.entry_index(s)]
    }

    pub fn is_fallback(&self, s: usize) -> bool {
        self.entry(s).slot != s
    }

    pub fn expected_energy_kwh(&self, s: usize) -> f64 {
        self.entry(s).expected_energy_kwh
    }

    /// Departure step of an EV arriving in slot `s`, at least one cycle after arrival.
    pub fn expected_departure_step(&self, s: usize) -> usize {
        let minute = self.entry(s).expected_departure_minute;
        let k = libm::floor(minute / self.cycle_minutes as f64) as usize;
        k.clamp(s, self.slots_per_day())
    }

    /// Departure CDF of slot-`s` arrivals at instants `0..=n_p`.
    pub fn departure_cdf(&self, s: usize) -> &[f64] {
        &self.departure_cdf[self.entry_index(s)]
    }
}
