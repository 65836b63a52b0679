//! Per-EV charging dynamics.
//!
//! The normalized delivered energy `Ē` grows as `dĒ/dt = η·P(Ē)/E*`, where the
//! BMS curve `P(Ē)` is flat at `P_max` up to `δ₁`, decays linearly in `Ē` up
//! to `δ₂` and then holds a constant floor. Each region has a closed-form
//! solution (linear, exponential, linear), so a charge cycle is integrated
//! exactly by stepping from one region boundary to the next.

use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sessions::SlotClock;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BmsParams {
    /// Port rating and BMS ceiling, kW.
    pub p_ch_max_kw: f64,
    /// End of the constant-power region, as a fraction of the request.
    pub delta1: f64,
    /// End of the linear-taper region.
    pub delta2: f64,
    /// Grid-to-battery efficiency.
    pub eta: f64,
}

impl Default for BmsParams {
    /// Level-2 AC port (230 V × 32 A) with η = 0.95, δ₁ = 0.8, δ₂ = 0.95.
    fn default() -> Self {
        BmsParams {
            p_ch_max_kw: 7.36,
            delta1: 0.8,
            delta2: 0.95,
            eta: 0.95,
        }
    }
}

impl BmsParams {
    pub fn new(p_ch_max_kw: f64, delta1: f64, delta2: f64, eta: f64) -> Result<Self> {
        let p = BmsParams {
            p_ch_max_kw,
            delta1,
            delta2,
            eta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Battery that takes full power until it is full, with lossless transfer.
    pub fn ideal(p_ch_max_kw: f64) -> Self {
        BmsParams {
            p_ch_max_kw,
            delta1: 1.0,
            delta2: 1.0,
            eta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_ch_max_kw > 0.0) || !self.p_ch_max_kw.is_finite() {
            return Err(Error::Config(format!(
                "P_ch_max must be positive, got {}",
                self.p_ch_max_kw
            )));
        }
        if !(self.delta1 > 0.0 && self.delta1 <= self.delta2 && self.delta2 <= 1.0) {
            return Err(Error::Config(format!(
                "BMS thresholds need 0 < δ1 ≤ δ2 ≤ 1, got δ1={} δ2={}",
                self.delta1, self.delta2
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config(format!(
                "efficiency must lie in (0, 1], got {}",
                self.eta
            )));
        }
        Ok(())
    }

    /// Energy one ON port draws from the grid over a full cycle, kWh.
    pub fn cycle_energy_kwh(&self, clock: &SlotClock) -> f64 {
        self.p_ch_max_kw * clock.cycle_hours()
    }

    fn floor_power(&self) -> f64 {
        if self.delta1 >= 1.0 {
            self.p_ch_max_kw
        } else {
            (1.0 - self.delta2) / (1.0 - self.delta1) * self.p_ch_max_kw
        }
    }
}

/// Power the BMS accepts at normalized delivered energy `fraction`, kW.
pub fn bms_power(fraction: f64, params: &BmsParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Domain {
            what: "fraction delivered",
            value: fraction,
        });
    }
    let p = params.p_ch_max_kw;
    Ok(if fraction <= params.delta1 {
        p
    } else if fraction <= params.delta2 {
        (1.0 - fraction) * p / (1.0 - params.delta1)
    } else {
        params.floor_power()
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvChargeState {
    pub fraction_delivered: f64,
    pub requested_kwh: f64,
    pub port_index: usize,
    pub arrival_slot: usize,
    pub departure_slot: usize,
}

impl EvChargeState {
    pub fn new(
        requested_kwh: f64,
        port_index: usize,
        arrival_slot: usize,
        departure_slot: usize,
    ) -> Self {
        EvChargeState {
            fraction_delivered: if requested_kwh > 0.0 { 0.0 } else { 1.0 },
            requested_kwh,
            port_index,
            arrival_slot,
            departure_slot,
        }
    }

    pub fn delivered_kwh(&self) -> f64 {
        self.fraction_delivered * self.requested_kwh
    }

    pub fn remaining_kwh(&self) -> f64 {
        (1.0 - self.fraction_delivered) * self.requested_kwh
    }

    pub fn is_finished(&self) -> bool {
        self.fraction_delivered >= 1.0
    }
}

/// Result of holding a port in one state for an interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChargeOutcome {
    pub state: EvChargeState,
    /// Energy stored in the battery, kWh.
    pub delivered_kwh: f64,
    /// Energy drawn from the grid (before losses), kWh.
    pub grid_kwh: f64,
    /// Minutes the port actually carried current.
    pub active_minutes: f64,
}

/// Advances an EV by `dt_minutes` with its port ON or OFF.
pub fn step_charge(
    state: EvChargeState,
    switched_on: bool,
    dt_minutes: f64,
    params: &BmsParams,
) -> Result<EvChargeState> {
    charge_interval(state, switched_on, dt_minutes, params).map(|o| o.state)
}

/// [`step_charge`] with the energy bookkeeping of the interval.
pub fn charge_interval(
    state: EvChargeState,
    switched_on: bool,
    dt_minutes: f64,
    params: &BmsParams,
) -> Result<ChargeOutcome> {
    if !(dt_minutes > 0.0) {
        return Err(Error::Domain {
            what: "charge interval (minutes)",
            value: dt_minutes,
        });
    }
    if !(0.0..=1.0).contains(&state.fraction_delivered) {
        return Err(Error::Domain {
            what: "fraction delivered",
            value: state.fraction_delivered,
        });
    }
    let mut next = state;
    if state.requested_kwh <= 0.0 {
        next.fraction_delivered = 1.0;
        return Ok(ChargeOutcome {
            state: next,
            delivered_kwh: 0.0,
            grid_kwh: 0.0,
            active_minutes: 0.0,
        });
    }
    if !switched_on || state.is_finished() {
        return Ok(ChargeOutcome {
            state,
            delivered_kwh: 0.0,
            grid_kwh: 0.0,
            active_minutes: 0.0,
        });
    }
    let (fraction, active_minutes) = advance_fraction(
        state.fraction_delivered,
        state.requested_kwh,
        dt_minutes,
        params,
    );
    next.fraction_delivered = fraction;
    let delivered = (fraction - state.fraction_delivered) * state.requested_kwh;
    Ok(ChargeOutcome {
        state: next,
        delivered_kwh: delivered,
        grid_kwh: delivered / params.eta,
        active_minutes,
    })
}

// absorbs rounding left by a linear piece that ends at a full battery
fn snap_full(f: f64) -> f64 {
    if f > 1.0 - 1e-12 {
        1.0
    } else {
        f
    }
}

/// Exact solution of `dĒ/dt = η·P(Ē)/E*` over `dt_minutes`.
/// Returns the new fraction and the minutes spent charging.
fn advance_fraction(
    mut f: f64,
    requested_kwh: f64,
    dt_minutes: f64,
    params: &BmsParams,
) -> (f64, f64) {
    // fraction per hour at full power
    let rate_full = params.eta * params.p_ch_max_kw / requested_kwh;
    let mut left = dt_minutes / 60.0;

    while left > 0.0 && f < 1.0 {
        if f < params.delta1 {
            let target = params.delta1.min(1.0);
            let need = (target - f) / rate_full;
            if need >= left {
                f = snap_full(f + rate_full * left);
                left = 0.0;
            } else {
                f = target;
                left -= need;
            }
        } else if f < params.delta2 {
            // 1 - Ē decays exponentially with rate λ
            let lambda = rate_full / (1.0 - params.delta1);
            let need = if params.delta2 >= 1.0 {
                f64::INFINITY
            } else {
                libm::log((1.0 - f) / (1.0 - params.delta2)) / lambda
            };
            if need >= left {
                f = 1.0 - (1.0 - f) * libm::exp(-lambda * left);
                left = 0.0;
            } else {
                f = params.delta2;
                left -= need;
            }
        } else {
            let rate = params.eta * params.floor_power() / requested_kwh;
            let need = (1.0 - f) / rate;
            if need >= left {
                f = snap_full(f + rate * left);
                left = 0.0;
            } else {
                f = 1.0;
                left -= need;
            }
        }
    }
    (f.min(1.0), dt_minutes - left * 60.0)
}

/// Number of full ON cycles of `dt_minutes` the EV needs to finish,
/// at most `limit`.
pub fn cycles_to_finish(
    state: &EvChargeState,
    params: &BmsParams,
    dt_minutes: f64,
    limit: usize,
) -> usize {
    let mut f = state.fraction_delivered;
    if state.requested_kwh <= 0.0 {
        return 0;
    }
    let mut n = 0;
    while f < 1.0 && n < limit {
        f = advance_fraction(f, state.requested_kwh, dt_minutes, params).0;
        n += 1;
    }
    n
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub minute: f64,
    /// BMS power at this point of the charge, kW.
    pub power_kw: f64,
    /// Cumulative energy stored, kWh.
    pub energy_kwh: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChargeTrace {
    pub points: Vec<TracePoint>,
    /// The step is longer than the taper region lasts, so the trace skips over it.
    pub coarse_step: bool,
}

impl ChargeTrace {
    pub fn delivered_kwh(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.energy_kwh)
    }
}

const MAX_TRACE_STEPS: usize = 1_000_000;

/// Charges one EV from empty with the port held ON, sampling every `dt_minutes`.
pub fn simulate_full_charge(
    requested_kwh: f64,
    params: &BmsParams,
    dt_minutes: f64,
) -> Result<ChargeTrace> {
    params.validate()?;
    if !(requested_kwh > 0.0) {
        return Err(Error::Domain {
            what: "requested energy (kWh)",
            value: requested_kwh,
        });
    }
    if !(dt_minutes > 0.0) {
        return Err(Error::Domain {
            what: "trace step (minutes)",
            value: dt_minutes,
        });
    }
    let coarse_step = taper_minutes(requested_kwh, params).is_some_and(|span| dt_minutes > span);

    let mut points = Vec::new();
    let mut state = EvChargeState::new(requested_kwh, 0, 0, 0);
    let mut minute = 0.0;
    for _ in 0..MAX_TRACE_STEPS {
        points.push(TracePoint {
            minute,
            power_kw: bms_power(state.fraction_delivered, params)?,
            energy_kwh: state.delivered_kwh(),
        });
        if state.is_finished() {
            return Ok(ChargeTrace {
                points,
                coarse_step,
            });
        }
        let outcome = charge_interval(state, true, dt_minutes, params)?;
        minute += outcome.active_minutes;
        state = outcome.state;
    }
    Err(Error::NoCompletion(format!(
        "{requested_kwh} kWh not reached after {MAX_TRACE_STEPS} steps (δ2 = {})",
        params.delta2
    )))
}

/// Duration of the linear-taper region, minutes; `None` when it is empty.
fn taper_minutes(requested_kwh: f64, params: &BmsParams) -> Option<f64> {
    if params.delta1 >= params.delta2 || params.delta2 >= 1.0 {
        return None;
    }
    let lambda = params.eta * params.p_ch_max_kw / (requested_kwh * (1.0 - params.delta1));
    Some(60.0 * libm::log((1.0 - params.delta1) / (1.0 - params.delta2)) / lambda)
}

/// Occupancy of the station's ports and the energy handed out today.
#[derive(Clone, Debug, PartialEq)]
pub struct StationState {
    ports: Vec<Option<EvChargeState>>,
    departed_kwh: f64,
}

impl StationState {
    pub fn new(port_count: usize) -> Self {
        StationState {
            ports: alloc::vec![None; port_count],
            departed_kwh: 0.0,
        }
    }

    pub fn port_count(&self) -> usize {
        self.ports.len()
    }

    pub fn port(&self, index: usize) -> Option<&EvChargeState> {
        self.ports.get(index).and_then(Option::as_ref)
    }

    pub fn ports(&self) -> &[Option<EvChargeState>] {
        &self.ports
    }

    pub fn connected(&self) -> impl Iterator<Item = &EvChargeState> + '_ {
        self.ports.iter().flatten()
    }

    pub fn first_free_port(&self) -> Option<usize> {
        self.ports.iter().position(Option::is_none)
    }

    pub fn occupy(&mut self, mut ev: EvChargeState) -> Option<usize> {
        let port = self.first_free_port()?;
        ev.port_index = port;
        self.ports[port] = Some(ev);
        Some(port)
    }

    pub fn release(&mut self, port: usize) -> Option<EvChargeState> {
        let ev = self.ports.get_mut(port)?.take()?;
        self.departed_kwh += ev.delivered_kwh();
        Some(ev)
    }

    pub fn set(&mut self, port: usize, ev: EvChargeState) {
        self.ports[port] = Some(ev);
    }

    /// Energy delivered to every EV seen today, connected or gone.
    pub fn aggregate_delivered_kwh(&self) -> f64 {
        self.departed_kwh
            + self
                .connected()
                .map(EvChargeState::delivered_kwh)
                .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> BmsParams {
        BmsParams::new(5.0, 0.8, 0.97, 1.0).unwrap()
    }

    #[test]
    fn bms_branches() {
        let p = fig1();
        assert_eq!(bms_power(0.5, &p).unwrap(), 5.0);
        assert!((bms_power(0.9, &p).unwrap() - 2.5).abs() < 1e-12);
        assert!((bms_power(0.98, &p).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(bms_power(0.0, &p).unwrap(), 5.0);
        assert!(bms_power(1.01, &p).is_err());
        assert!(bms_power(-0.01, &p).is_err());
    }

    #[test]
    fn off_leaves_state_alone() {
        let s = EvChargeState {
            fraction_delivered: 0.3,
            ..EvChargeState::new(7.0, 2, 10, 40)
        };
        assert_eq!(step_charge(s, false, 10.0, &fig1()).unwrap(), s);
    }

    #[test]
    fn flat_region_closed_form() {
        let p = BmsParams::new(7.36, 0.8, 0.95, 1.0).unwrap();
        let s = EvChargeState::new(7.36, 0, 0, 10);
        let next = step_charge(s, true, 10.0, &p).unwrap();
        assert!((next.fraction_delivered - 1.0 / 6.0).abs() < 1e-12);

        let p = BmsParams { eta: 0.95, ..p };
        let next = step_charge(s, true, 10.0, &p).unwrap();
        assert!((next.fraction_delivered - 0.95 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_request_is_done() {
        let s = EvChargeState {
            fraction_delivered: 0.0,
            ..EvChargeState::new(0.0, 0, 0, 10)
        };
        let next = step_charge(s, true, 10.0, &fig1()).unwrap();
        assert_eq!(next.fraction_delivered, 1.0);
    }

    #[test]
    fn bad_interval() {
        let s = EvChargeState::new(5.0, 0, 0, 10);
        assert!(step_charge(s, true, 0.0, &fig1()).is_err());
    }

    #[test]
    fn taper_matches_fine_euler() {
        // region 2 in closed form vs a very fine explicit integration
        let p = fig1();
        let start = EvChargeState {
            fraction_delivered: 0.75,
            ..EvChargeState::new(7.0, 0, 0, 10)
        };
        let exact = step_charge(start, true, 20.0, &p)
            .unwrap()
            .fraction_delivered;
        let mut f: f64 = 0.75;
        let h = 1e-5; // hours
        for _ in 0..(20.0 / 60.0 / h) as usize {
            f += h * p.eta * bms_power(f.min(1.0), &p).unwrap() / 7.0;
        }
        assert!((exact - f).abs() < 1e-5, "{exact} vs {f}");
    }

    #[test]
    fn tiny_request_completes_in_one_step() {
        let p = BmsParams::new(1000.0, 0.8, 0.97, 1.0).unwrap();
        let trace = simulate_full_charge(0.1, &p, 10.0).unwrap();
        assert_eq!(trace.points.len(), 2);
        assert!((trace.delivered_kwh() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn coarse_step_warning() {
        let p = fig1();
        assert!(simulate_full_charge(7.0, &p, 60.0).unwrap().coarse_step);
        assert!(!simulate_full_charge(7.0, &p, 1.0).unwrap().coarse_step);
    }

    #[test]
    fn never_completes_with_open_taper() {
        let p = BmsParams::new(5.0, 0.8, 1.0, 1.0).unwrap();
        let s = EvChargeState::new(7.0, 0, 0, 10);
        let next = step_charge(s, true, 600.0, &p).unwrap();
        assert!(next.fraction_delivered < 1.0);
    }

    #[test]
    fn ideal_battery_is_linear() {
        let p = BmsParams::ideal(6.0);
        let s = EvChargeState::new(2.5, 0, 0, 10);
        let o = charge_interval(s, true, 10.0, &p).unwrap();
        assert!((o.delivered_kwh - 1.0).abs() < 1e-12);
        let o = charge_interval(o.state, true, 10.0, &p).unwrap();
        let o = charge_interval(o.state, true, 10.0, &p).unwrap();
        assert_eq!(o.state.fraction_delivered, 1.0);
        assert!((o.delivered_kwh - 0.5).abs() < 1e-12);
        assert!((o.active_minutes - 5.0).abs() < 1e-9);
    }

    #[test]
    fn station_aggregate_tracks_departures() {
        let p = fig1();
        let mut st = StationState::new(2);
        let a = st.occupy(EvChargeState::new(3.0, 0, 0, 5)).unwrap();
        let b = st.occupy(EvChargeState::new(4.0, 0, 0, 5)).unwrap();
        assert_eq!((a, b), (0, 1));
        assert!(st.occupy(EvChargeState::new(1.0, 0, 0, 5)).is_none());
        let ev = step_charge(*st.port(0).unwrap(), true, 10.0, &p).unwrap();
        st.set(0, ev);
        let before = st.aggregate_delivered_kwh();
        st.release(0);
        assert_eq!(st.aggregate_delivered_kwh(), before);
        assert_eq!(st.first_free_port(), Some(0));
    }

    #[test]
    fn cycles_needed() {
        let ideal = BmsParams::ideal(6.0);
        assert_eq!(
            cycles_to_finish(&EvChargeState::new(3.0, 0, 0, 10), &ideal, 10.0, 100),
            3
        );
        assert_eq!(
            cycles_to_finish(&EvChargeState::new(2.5, 0, 0, 10), &ideal, 10.0, 100),
            3
        );
        assert_eq!(
            cycles_to_finish(&EvChargeState::new(0.0, 0, 0, 10), &ideal, 10.0, 100),
            0
        );
        assert_eq!(
            cycles_to_finish(&EvChargeState::new(30.0, 0, 0, 10), &ideal, 10.0, 4),
            4
        );
        // the taper stretches a charge past the naive count
        let p = BmsParams::default();
        let naive = libm::ceil(10.0 / (p.eta * p.p_ch_max_kw / 6.0)) as usize;
        let mut st = EvChargeState::new(10.0, 0, 0, 144);
        let n = cycles_to_finish(&st, &p, 10.0, 144);
        assert!(n > naive);
        for _ in 0..n {
            st = step_charge(st, true, 10.0, &p).unwrap();
        }
        assert!(st.is_finished());
    }
}
