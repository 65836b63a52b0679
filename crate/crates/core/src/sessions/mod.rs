//! Charging sessions, the slot clock and the rolling session history.
//!
//! Timestamps are plain seconds on the station's local wall clock, counted
//! from 1970-01-01T00:00:00. Calendar parsing lives in the `evcharge` crate;
//! everything here is integer arithmetic so it works without `std`.

mod synthetic;

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synthetic::{generate_days, generate_synthetic, ArrivalProfile, SyntheticProfile};

pub const MINUTES_PER_DAY: u32 = 1440;
const SECONDS_PER_DAY: i64 = 86_400;

/// Local wall-clock time in whole seconds since 1970-01-01T00:00:00.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_seconds(seconds: i64) -> Self {
        Timestamp(seconds)
    }

    pub fn from_day_minute(day: DayIndex, minute: f64) -> Self {
        Timestamp(day.0 * SECONDS_PER_DAY + libm::round(minute * 60.0) as i64)
    }

    pub const fn seconds(self) -> i64 {
        self.0
    }

    pub const fn day(self) -> DayIndex {
        DayIndex(self.0.div_euclid(SECONDS_PER_DAY))
    }

    /// Minutes since local midnight, fractional.
    pub fn minute_of_day(self) -> f64 {
        self.0.rem_euclid(SECONDS_PER_DAY) as f64 / 60.0
    }

    /// Minutes elapsed since midnight of `day`; may exceed 1440.
    pub fn minutes_since(self, day: DayIndex) -> f64 {
        (self.0 - day.0 * SECONDS_PER_DAY) as f64 / 60.0
    }
}

/// Calendar day number, 0 = 1970-01-01.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct DayIndex(pub i64);

impl DayIndex {
    /// 0 = Monday .. 6 = Sunday. 1970-01-01 was a Thursday.
    pub fn weekday(self) -> u8 {
        (self.0 + 3).rem_euclid(7) as u8
    }

    pub fn day_type(self) -> DayType {
        if self.weekday() >= 5 {
            DayType::Weekend
        } else {
            DayType::Weekday
        }
    }

    pub fn next(self) -> DayIndex {
        DayIndex(self.0 + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    pub fn as_str(self) -> &'static str {
        match self {
            DayType::Weekday => "weekday",
            DayType::Weekend => "weekend",
        }
    }
}

/// Splits the day into `slots_per_day` charge cycles of `cycle_minutes`.
///
/// Two indexings are used throughout the crate. A *step* `k` is the
/// zero-based index of the interval `[k·T, (k+1)·T)` and doubles as the
/// instant at its start; instants run `0..=slots_per_day`. A *slot* `s` is
/// the one-based name of the same interval, `s = k + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SlotClock {
    cycle_minutes: u32,
    slots_per_day: usize,
}

impl SlotClock {
    pub fn new(cycle_minutes: u32) -> Result<Self> {
        if cycle_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(cycle_minutes) {
            return Err(Error::Config(format!(
                "cycle length {cycle_minutes} min does not divide a 1440-minute day"
            )));
        }
        Ok(SlotClock {
            cycle_minutes,
            slots_per_day: (MINUTES_PER_DAY / cycle_minutes) as usize,
        })
    }

    pub fn cycle_minutes(&self) -> u32 {
        self.cycle_minutes
    }

    pub fn cycle_hours(&self) -> f64 {
        self.cycle_minutes as f64 / 60.0
    }

    pub fn slots_per_day(&self) -> usize {
        self.slots_per_day
    }

    /// Zero-based step containing `minute` (clamped into the day).
    pub fn step_of_minute(&self, minute: f64) -> usize {
        if minute <= 0.0 {
            return 0;
        }
        let k = libm::floor(minute / self.cycle_minutes as f64) as usize;
        k.min(self.slots_per_day - 1)
    }

    /// One-based slot holding the time of day of `t`.
    pub fn slot_of(&self, t: Timestamp) -> usize {
        self.step_of_minute(t.minute_of_day()) + 1
    }

    /// Minute of day at which instant `k` falls.
    pub fn instant_minute(&self, k: usize) -> f64 {
        (k as u64 * self.cycle_minutes as u64) as f64
    }

    /// Hour-of-day the step belongs to.
    pub fn hour_of_step(&self, k: usize) -> usize {
        (k * self.cycle_minutes as usize) / 60
    }
}

impl Default for SlotClock {
    fn default() -> Self {
        SlotClock {
            cycle_minutes: 10,
            slots_per_day: 144,
        }
    }
}

/// One EV visit: who, when it plugged in and out, and how much it asked for.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ChargingSession {
    pub session_id: String,
    pub arrival: Timestamp,
    pub departure: Timestamp,
    pub requested_kwh: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub user_stated_departure: Option<Timestamp>,
}

/// Where a session falls on the slot grid of its arrival day.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionSteps {
    pub arrival: usize,
    pub departure: usize,
    /// Departure fell after the end of the arrival day and was cut at midnight.
    pub truncated: bool,
}

impl ChargingSession {
    pub fn new(
        session_id: impl Into<String>,
        arrival: Timestamp,
        departure: Timestamp,
        requested_kwh: f64,
        user_stated_departure: Option<Timestamp>,
    ) -> Result<Self> {
        let session = ChargingSession {
            session_id: session_id.into(),
            arrival,
            departure,
            requested_kwh,
            user_stated_departure,
        };
        session.validate()?;
        Ok(session)
    }

    pub fn validate(&self) -> Result<()> {
        let reject = |reason: String| Error::Session {
            id: self.session_id.clone(),
            reason,
        };
        if self.departure <= self.arrival {
            return Err(reject(String::from("departure is not after arrival")));
        }
        if !(self.requested_kwh >= 0.0) || !self.requested_kwh.is_finite() {
            return Err(reject(format!(
                "requested energy {} kWh is not a non-negative number",
                self.requested_kwh
            )));
        }
        Ok(())
    }

    pub fn day(&self) -> DayIndex {
        self.arrival.day()
    }

    pub fn steps(&self, clock: &SlotClock) -> SessionSteps {
        let arrival = clock.step_of_minute(self.arrival.minute_of_day());
        let (departure, truncated) = departure_step(self.departure, self.day(), clock);
        SessionSteps {
            arrival,
            departure: departure.max(arrival),
            truncated,
        }
    }

    /// Departure step the user announced; falls back to the true departure.
    pub fn stated_departure_step(&self, clock: &SlotClock) -> usize {
        let t = self.user_stated_departure.unwrap_or(self.departure);
        let arrival = clock.step_of_minute(self.arrival.minute_of_day());
        departure_step(t, self.day(), clock).0.max(arrival)
    }
}

/// Departures count from the start of their step: an EV leaving at 16:05
/// with 10-minute cycles can charge through step 95 but not step 96.
fn departure_step(t: Timestamp, day: DayIndex, clock: &SlotClock) -> (usize, bool) {
    let minutes = t.minutes_since(day);
    if minutes < 0.0 {
        return (0, false);
    }
    if minutes > MINUTES_PER_DAY as f64 {
        return (clock.slots_per_day(), true);
    }
    let k = libm::floor(minutes / clock.cycle_minutes() as f64) as usize;
    (k.min(clock.slots_per_day()), false)
}

/// Arrival count observed on one calendar day.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DayCount {
    pub day: DayIndex,
    pub count: usize,
}

/// Rolling window of the most recent sessions plus per-day arrival counts.
#[derive(Clone, Debug, Default)]
pub struct SessionHistory {
    sessions: VecDeque<ChargingSession>,
    window_size: usize,
    day_counts: BTreeMap<DayIndex, usize>,
}

pub const DEFAULT_WINDOW_SESSIONS: usize = 500;

impl SessionHistory {
    pub fn new(window_size: usize) -> Self {
        SessionHistory {
            sessions: VecDeque::new(),
            window_size,
            day_counts: BTreeMap::new(),
        }
    }

    /// Builds a history from loose sessions. Every calendar day between the
    /// first and last arrival is recorded, with zero for days nobody came.
    pub fn from_sessions(mut sessions: Vec<ChargingSession>, window_size: usize) -> Self {
        sessions.sort_by_key(|s| s.arrival);
        let mut history = SessionHistory::new(window_size);
        if let (Some(first), Some(last)) = (sessions.first(), sessions.last()) {
            let mut day = first.day();
            let end = last.day();
            while day <= end {
                history.day_counts.insert(day, 0);
                day = day.next();
            }
        }
        for session in sessions {
            *history.day_counts.entry(session.day()).or_insert(0) += 1;
            history.push_session(session);
        }
        history
    }

    /// Records a completed day. `sessions` are that day's arrivals.
    pub fn push_day(&mut self, day: DayIndex, sessions: &[ChargingSession]) {
        let mut sorted: Vec<&ChargingSession> = sessions.iter().collect();
        sorted.sort_by_key(|s| s.arrival);
        self.day_counts.insert(day, sorted.len());
        for session in sorted {
            self.push_session(session.clone());
        }
    }

    fn push_session(&mut self, session: ChargingSession) {
        self.sessions.push_back(session);
        while self.sessions.len() > self.window_size {
            self.sessions.pop_front();
        }
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Training window, oldest first.
    pub fn sessions(&self) -> impl Iterator<Item = &ChargingSession> + '_ {
        self.sessions.iter()
    }

    pub fn day_counts(&self) -> Vec<DayCount> {
        self.day_counts
            .iter()
            .map(|(&day, &count)| DayCount { day, count })
            .collect()
    }
}
