//! Cycle-by-cycle simulation of a station day under one of four
//! operating scenarios, and the metrics used to compare them.
//!
//! Within a cycle the order is: departures, arrivals, arrival-count
//! update, replanning, port selection, charging.
//!
//! The shortfall metric integrates how far the station's loading policy
//! falls below the lower envelope built afterwards from the true sessions.
//! The policy value at instant `k+1` is the energy delivered by `k` plus
//! what the cap of step `k` allows; for the offline scenario it is the
//! planned trajectory itself.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::battery::{charge_interval, BmsParams, EvChargeState, StationState};
use crate::economic::{
    offline_policy, replan, stay_envelope, CostModelS2, EnergyEnvelope, LoadPolicy, PlanInputs,
    PricingSchedule, StationSpec, Stay,
};
use crate::error::{Error, Result};
use crate::predictor::{adapt_count, Predictor, PredictorParams};
use crate::scheduler::{fcfs_select, select, PriorityLedger, PriorityWeights};
use crate::sessions::{ChargingSession, DayIndex, SessionHistory, SlotClock};

/// Share of the request that counts as served "at 90%".
pub const PARTIAL_SERVICE: f64 = 0.9;
const SERVED_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Scenario {
    /// Rolling plan from the departures users announce.
    S1,
    /// Rolling plan from predicted departures and arrivals.
    S2,
    /// One plan for the day with the true sessions known in advance.
    S3,
    /// No plan: every EV charges as soon as it arrives.
    S4,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
            Scenario::S4 => "S4",
        }
    }

    pub fn is_capped(self) -> bool {
        self != Scenario::S4
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S1" => Ok(Scenario::S1),
            "S2" => Ok(Scenario::S2),
            "S3" => Ok(Scenario::S3),
            "S4" => Ok(Scenario::S4),
            _ => Err(Error::Config(format!(
                "unknown scenario {s:?}, expected S1..S4"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub s2: CostModelS2,
    pub priority: PriorityWeights,
    pub bms: BmsParams,
    pub clock: SlotClock,
    pub port_count: usize,
    pub prices: PricingSchedule,
    pub predictor: PredictorParams,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, port_count: usize, prices: PricingSchedule) -> Self {
        ScenarioConfig {
            scenario,
            s2: CostModelS2::default(),
            priority: PriorityWeights::default(),
            bms: BmsParams::default(),
            clock: SlotClock::default(),
            port_count,
            prices,
            predictor: PredictorParams::default(),
        }
    }

    pub fn with_scenario(&self, scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bms.validate()?;
        if self.port_count == 0 {
            return Err(Error::Config("the station needs at least one port".into()));
        }
        if self.scenario == Scenario::S2 && !(self.s2.weight >= 0.0 && self.s2.weight.is_finite()) {
            return Err(Error::Config(format!(
                "S2 weight must be non-negative, got {}",
                self.s2.weight
            )));
        }
        Ok(())
    }

    pub fn station(&self) -> Result<StationSpec> {
        StationSpec::new(self.clock, self.bms, self.port_count)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CycleRecord {
    pub step: usize,
    pub price: f64,
    /// Grid power cap, kW; `None` when uncapped.
    pub cap_kw: Option<f64>,
    pub on_count: usize,
    pub connected: usize,
    pub grid_kwh: f64,
    pub delivered_kwh: f64,
    /// Delivered energy by the end of the step.
    pub cumulative_kwh: f64,
    /// Loading-policy value at the end of the step.
    pub policy_kwh: f64,
    pub e_min_kwh: f64,
    pub e_max_kwh: f64,
    /// Expected daily arrivals after this cycle's update (S2 only).
    pub expected_arrivals: Option<f64>,
    pub infeasible: bool,
    pub mode: u64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SessionRecord {
    pub session_id: String,
    pub port: Option<usize>,
    pub arrival_step: usize,
    pub departure_step: usize,
    pub requested_kwh: f64,
    pub delivered_kwh: f64,
    pub rejected: bool,
    pub truncated: bool,
}

impl SessionRecord {
    pub fn fully_served(&self) -> bool {
        self.delivered_kwh >= self.requested_kwh - SERVED_TOL * self.requested_kwh.max(1.0)
    }

    pub fn served_fraction(&self, share: f64) -> bool {
        self.delivered_kwh >= share * self.requested_kwh - SERVED_TOL * self.requested_kwh.max(1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DecisionRecord {
    pub step: usize,
    pub port: usize,
    pub on: bool,
    pub priority: f64,
    pub remaining_kwh: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DayTrace {
    pub day: Option<DayIndex>,
    pub scenario: Scenario,
    pub cycles: Vec<CycleRecord>,
    pub sessions: Vec<SessionRecord>,
    pub decisions: Vec<DecisionRecord>,
    /// Lower/upper envelope of the admitted sessions, delivered-energy terms.
    pub envelope: EnergyEnvelope,
    /// Loading policy at instants `0..=n_p`.
    pub policy_kwh: Vec<f64>,
    /// Delivered energy at instants `0..=n_p`.
    pub delivered_kwh: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Metrics {
    pub total_cost: f64,
    /// Cost of the planned caps, `Σ cap · P_max · T · price`.
    pub planned_cost: f64,
    /// kWh·cycles of loading policy below the lower envelope.
    pub delta_e_min: f64,
    /// The same area measured on delivered energy.
    pub delta_e_min_delivered: f64,
    pub requested_kwh: f64,
    pub delivered_kwh: f64,
    pub grid_kwh: f64,
    pub fully_served: usize,
    pub served_90pct: usize,
    pub total_arrivals: usize,
    pub rejected: usize,
    pub truncated: usize,
    pub infeasible_cycles: usize,
}

impl Metrics {
    /// Field-wise sum, for multi-day totals.
    pub fn accumulate(&mut self, other: &Metrics) {
        self.total_cost += other.total_cost;
        self.planned_cost += other.planned_cost;
        self.delta_e_min += other.delta_e_min;
        self.delta_e_min_delivered += other.delta_e_min_delivered;
        self.requested_kwh += other.requested_kwh;
        self.delivered_kwh += other.delivered_kwh;
        self.grid_kwh += other.grid_kwh;
        self.fully_served += other.fully_served;
        self.served_90pct += other.served_90pct;
        self.total_arrivals += other.total_arrivals;
        self.rejected += other.rejected;
        self.truncated += other.truncated;
        self.infeasible_cycles += other.infeasible_cycles;
    }
}

/// `Σ_k max(E^min_k − E_k, 0)` over the instants both cover.
pub fn delta_emin(trajectory: &[f64], e_min: &[f64]) -> f64 {
    trajectory
        .iter()
        .zip(e_min)
        .map(|(e, lo)| (lo - e).max(0.0))
        .sum()
}

/// Shortfall area of a trace's loading policy below `envelope`.
pub fn compute_delta_emin(trace: &DayTrace, envelope: &EnergyEnvelope) -> f64 {
    delta_emin(&trace.policy_kwh, &envelope.e_min)
}

struct Admitted {
    record: usize,
    port: usize,
    departure: usize,
    stated_departure: usize,
}

/// Which sessions get a port; depends only on arrivals and departures.
fn admission_plan(
    sessions: &[ChargingSession],
    clock: &SlotClock,
    port_count: usize,
) -> Vec<Option<usize>> {
    let n_p = clock.slots_per_day();
    let steps: Vec<_> = sessions.iter().map(|s| s.steps(clock)).collect();
    let mut busy_until: Vec<Option<usize>> = alloc::vec![None; port_count];
    let mut out = alloc::vec![None; sessions.len()];
    for c in 0..n_p {
        for b in busy_until.iter_mut() {
            if b.is_some_and(|d| d <= c) {
                *b = None;
            }
        }
        for (i, st) in steps.iter().enumerate() {
            if st.arrival != c || st.departure <= st.arrival {
                continue;
            }
            if let Some(p) = busy_until.iter().position(Option::is_none) {
                busy_until[p] = Some(st.departure);
                out[i] = Some(p);
            }
        }
    }
    out
}

fn sorted_day(sessions: &[ChargingSession]) -> Result<(Option<DayIndex>, Vec<ChargingSession>)> {
    let mut v = sessions.to_vec();
    for s in &v {
        s.validate()?;
    }
    v.sort_by(|a, b| {
        a.arrival
            .cmp(&b.arrival)
            .then_with(|| a.session_id.cmp(&b.session_id))
    });
    let day = v.first().map(ChargingSession::day);
    if let Some(d) = day {
        if let Some(other) = v.iter().find(|s| s.day() != d) {
            return Err(Error::Session {
                id: other.session_id.clone(),
                reason: format!(
                    "arrives on day {} but the run covers day {}",
                    other.day().0,
                    d.0
                ),
            });
        }
    }
    Ok((day, v))
}

/// Simulates one day of `sessions` under `config`. `history` feeds the
/// predictor and must hold earlier days for S2.
pub fn run_day(
    sessions: &[ChargingSession],
    config: &ScenarioConfig,
    history: &SessionHistory,
) -> Result<(DayTrace, Metrics)> {
    config.validate()?;
    let spec = config.station()?;
    let clock = config.clock;
    let n_p = clock.slots_per_day();
    let dt = clock.cycle_minutes() as f64;
    let step_kwh = spec.step_kwh();
    let deliver_step = step_kwh * config.bms.eta;
    let (day, sessions) = sorted_day(sessions)?;

    let predictor = if config.scenario == Scenario::S2 {
        if history.is_empty() {
            return Err(Error::MissingHistory(
                "S2 needs a session history to fit its predictor",
            ));
        }
        let day_type = day
            .map(DayIndex::day_type)
            .unwrap_or(crate::sessions::DayType::Weekday);
        Some(Predictor::fit(
            history,
            &clock,
            day_type,
            &config.predictor,
        )?)
    } else {
        None
    };

    let steps: Vec<_> = sessions.iter().map(|s| s.steps(&clock)).collect();
    let ports_for = admission_plan(&sessions, &clock, config.port_count);

    let mut records: Vec<SessionRecord> = sessions
        .iter()
        .zip(&steps)
        .zip(&ports_for)
        .map(|((s, st), port)| SessionRecord {
            session_id: s.session_id.clone(),
            port: *port,
            arrival_step: st.arrival,
            departure_step: st.departure,
            requested_kwh: s.requested_kwh,
            delivered_kwh: 0.0,
            rejected: port.is_none() && st.departure > st.arrival,
            truncated: st.truncated,
        })
        .collect();

    let mut envelope = EnergyEnvelope::zeros(n_p);
    let mut stays = Vec::new();
    for (i, st) in steps.iter().enumerate() {
        if ports_for[i].is_some() {
            envelope.add(
                &stay_envelope(
                    st.arrival,
                    st.departure,
                    sessions[i].requested_kwh,
                    deliver_step,
                    n_p,
                )?,
                1.0,
            );
            stays.push(Stay {
                arrival: st.arrival,
                departure: st.departure,
                energy_kwh: sessions[i].requested_kwh,
            });
        }
    }

    let mut trace = DayTrace {
        day,
        scenario: config.scenario,
        cycles: Vec::new(),
        sessions: Vec::new(),
        decisions: Vec::new(),
        envelope,
        policy_kwh: alloc::vec![0.0; n_p + 1],
        delivered_kwh: alloc::vec![0.0; n_p + 1],
    };
    let mut metrics = Metrics {
        total_arrivals: sessions.len(),
        requested_kwh: sessions.iter().map(|s| s.requested_kwh).sum(),
        ..Metrics::default()
    };
    if sessions.is_empty() {
        return Ok((trace, metrics));
    }

    let offline: Option<LoadPolicy> = if config.scenario == Scenario::S3 {
        Some(offline_policy(&stays, &config.prices, &spec)?)
    } else {
        None
    };

    let mut station = StationState::new(config.port_count);
    let mut ledger = PriorityLedger::new();
    let mut on_port: Vec<Option<Admitted>> = (0..config.port_count).map(|_| None).collect();
    let mut n_hat = predictor
        .as_ref()
        .map(|p| p.arrival.expected_daily_count)
        .unwrap_or(0.0);
    let mut cumulative = 0.0;

    for c in 0..n_p {
        // departures
        for port in 0..config.port_count {
            if on_port[port].as_ref().is_some_and(|a| a.departure <= c) {
                let a = on_port[port].take().unwrap();
                let ev = station.release(port).unwrap();
                records[a.record].delivered_kwh = ev.delivered_kwh();
            }
        }
        // arrivals
        for (i, st) in steps.iter().enumerate() {
            if st.arrival != c {
                continue;
            }
            if let Some(port) = ports_for[i] {
                let ev =
                    EvChargeState::new(sessions[i].requested_kwh, port, st.arrival, st.departure);
                station.set(port, ev);
                on_port[port] = Some(Admitted {
                    record: i,
                    port,
                    departure: st.departure,
                    stated_departure: sessions[i].stated_departure_step(&clock),
                });
            }
        }

        let price = config.prices.price_at_step(c, &clock);
        let mut expected_arrivals = None;
        let (cap_count, infeasible): (Option<usize>, bool) = match config.scenario {
            Scenario::S1 => {
                let departures: Vec<Option<usize>> = on_port
                    .iter()
                    .map(|a| a.as_ref().map(|a| a.stated_departure))
                    .collect();
                let pol = replan(
                    c,
                    &station,
                    &PlanInputs::Stated {
                        departures: &departures,
                    },
                    &config.prices,
                    &spec,
                )?;
                (Some(pol.count_at(c) as usize), pol.first_step_infeasible())
            }
            Scenario::S2 => {
                let p = predictor.as_ref().unwrap();
                let seen = steps.iter().filter(|st| st.arrival <= c).count();
                n_hat = adapt_count(n_hat, seen, p.arrival.cdf_at(c + 1), c + 1, n_p);
                expected_arrivals = Some(n_hat);
                let prediction = p.prediction(c + 2, n_hat);
                let inputs = PlanInputs::Predictive {
                    predictor: p,
                    prediction: &prediction,
                    cost: config.s2,
                };
                let pol = replan(c, &station, &inputs, &config.prices, &spec)?;
                (Some(pol.count_at(c) as usize), pol.first_step_infeasible())
            }
            Scenario::S3 => {
                let pol = offline.as_ref().unwrap();
                (Some(pol.count_at(c) as usize), pol.infeasible[c])
            }
            Scenario::S4 => (None, false),
        };

        ledger.accumulate(&station, c, config.priority);
        let decision = match cap_count {
            Some(n) => select(&station, &ledger, n),
            None => fcfs_select(&station),
        };
        for (port, slot) in station.ports().iter().enumerate() {
            if let Some(ev) = slot {
                trace.decisions.push(DecisionRecord {
                    step: c,
                    port,
                    on: decision.on[port],
                    priority: ledger.score(port).unwrap_or(0.0),
                    remaining_kwh: ev.remaining_kwh(),
                });
            }
        }

        let before = cumulative;
        let (mut grid, mut delivered) = (0.0, 0.0);
        for port in 0..config.port_count {
            if let Some(ev) = station.port(port).copied() {
                let out = charge_interval(ev, decision.on[port], dt, &config.bms)?;
                grid += out.grid_kwh;
                delivered += out.delivered_kwh;
                station.set(port, out.state);
            }
        }
        cumulative += delivered;
        metrics.total_cost += grid * price;
        metrics.grid_kwh += grid;
        let planned_ports = cap_count.unwrap_or_else(|| decision.on_count());
        metrics.planned_cost += planned_ports as f64 * step_kwh * price;
        if infeasible {
            metrics.infeasible_cycles += 1;
        }
        let policy = match &offline {
            Some(pol) => pol.planned_kwh[c + 1] * config.bms.eta,
            None => before + planned_ports as f64 * deliver_step,
        };
        trace.policy_kwh[c + 1] = policy;
        trace.delivered_kwh[c + 1] = cumulative;
        trace.cycles.push(CycleRecord {
            step: c,
            price,
            cap_kw: cap_count.map(|n| n as f64 * config.bms.p_ch_max_kw),
            on_count: decision.on_count(),
            connected: station.connected().count(),
            grid_kwh: grid,
            delivered_kwh: delivered,
            cumulative_kwh: cumulative,
            policy_kwh: policy,
            e_min_kwh: trace.envelope.e_min[c + 1],
            e_max_kwh: trace.envelope.e_max[c + 1],
            expected_arrivals,
            infeasible,
            mode: decision.mode(),
        });
    }
    for port in 0..config.port_count {
        if let Some(a) = on_port[port].take() {
            let ev = station.release(a.port).unwrap();
            records[a.record].delivered_kwh = ev.delivered_kwh();
        }
    }

    metrics.delivered_kwh = records.iter().map(|r| r.delivered_kwh).sum();
    metrics.fully_served = records.iter().filter(|r| r.fully_served()).count();
    metrics.served_90pct = records
        .iter()
        .filter(|r| r.served_fraction(PARTIAL_SERVICE))
        .count();
    metrics.rejected = records.iter().filter(|r| r.rejected).count();
    metrics.truncated = records.iter().filter(|r| r.truncated).count();
    metrics.delta_e_min = compute_delta_emin(&trace, &trace.envelope);
    metrics.delta_e_min_delivered = delta_emin(&trace.delivered_kwh, &trace.envelope.e_min);
    trace.sessions = records;
    Ok((trace, metrics))
}

/// Offline benchmark: one plan from the true sessions, then simulated.
pub fn run_offline_s3(
    sessions: &[ChargingSession],
    config: &ScenarioConfig,
) -> Result<(DayTrace, Metrics)> {
    run_day(
        sessions,
        &config.with_scenario(Scenario::S3),
        &SessionHistory::new(config.predictor.window_sessions),
    )
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DayResult {
    pub day: DayIndex,
    pub metrics: Metrics,
    pub cumulative_cost: f64,
    pub cumulative_delta_e_min: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub days: Vec<DayResult>,
    pub total: Metrics,
}

/// Runs every config over consecutive days; after each day its sessions
/// join `history`, which then feeds the next day's predictor.
pub fn run_range(
    days: &[(DayIndex, Vec<ChargingSession>)],
    configs: &[ScenarioConfig],
    history: SessionHistory,
) -> Result<Vec<ScenarioRun>> {
    run_range_with(days, configs, history, |_, _, _| {})
}

/// [`run_range`] that hands every day's trace to `observe` along with the
/// index of its config.
pub fn run_range_with(
    days: &[(DayIndex, Vec<ChargingSession>)],
    configs: &[ScenarioConfig],
    mut history: SessionHistory,
    mut observe: impl FnMut(usize, DayIndex, &DayTrace),
) -> Result<Vec<ScenarioRun>> {
    let mut runs: Vec<ScenarioRun> = configs
        .iter()
        .map(|c| ScenarioRun {
            scenario: c.scenario,
            days: Vec::new(),
            total: Metrics::default(),
        })
        .collect();
    for (day, sessions) in days {
        for (i, (cfg, run)) in configs.iter().zip(runs.iter_mut()).enumerate() {
            let (trace, m) = run_day(sessions, cfg, &history)?;
            observe(i, *day, &trace);
            run.total.accumulate(&m);
            run.days.push(DayResult {
                day: *day,
                metrics: m,
                cumulative_cost: run.total.total_cost,
                cumulative_delta_e_min: run.total.delta_e_min,
            });
        }
        history.push_day(*day, sessions);
    }
    Ok(runs)
}
