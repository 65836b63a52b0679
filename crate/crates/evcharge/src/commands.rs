//! The subcommands, callable without the argument parser.

use std::path::PathBuf;

use chrono::NaiveDate;
use evcharge_core::predictor::{initial_daily_count, Predictor};
use evcharge_core::sessions::{
    generate_days, ArrivalProfile, ChargingSession, DayIndex, DayType, SessionHistory,
    SyntheticProfile,
};
use evcharge_core::simulator::{run_range_with, ScenarioRun};
use serde::Serialize;

use crate::config::{DaySelection, RunConfig};
use crate::error::{CliError, CliResult};
use crate::input::{date_of_day, day_of_date, format_time, group_by_day, read_sessions};
use crate::output::{
    run_labels, write_comparison, write_cumulative, write_json, write_metrics, CsvOut, TraceWriters,
};

/// First day of generated corpora, a Monday.
pub const SYNTHETIC_START: DayIndex = DayIndex(18631);

pub type Day = (DayIndex, Vec<ChargingSession>);

/// Sessions split into the days used as history and the days to simulate.
#[derive(Debug)]
pub struct Corpus {
    pub history: Vec<Day>,
    pub eval: Vec<Day>,
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn load_sessions(cfg: &RunConfig, days_needed: usize) -> CliResult<Vec<ChargingSession>> {
    match &cfg.sessions {
        Some(path) => {
            let file = read_sessions(path, cfg.utc_offset_min)?;
            if !file.skipped.is_empty() {
                warn(format_args!(
                    "{}: skipped {} invalid session(s), first: {}",
                    path.display(),
                    file.skipped.len(),
                    file.skipped[0]
                ));
            }
            Ok(file.sessions)
        }
        None => Ok(generate_days(
            cfg.seed,
            &SyntheticProfile::default(),
            &cfg.base.clock,
            SYNTHETIC_START,
            days_needed,
        )?),
    }
}

/// Loads or generates sessions and applies the day selection.
pub fn load_corpus(cfg: &RunConfig) -> CliResult<Corpus> {
    let needed = match cfg.selection {
        DaySelection::Last(n) => cfg.history_days + n,
        DaySelection::Range(a, b) => {
            let start = SYNTHETIC_START
                .0
                .max(day_of_date(a).0 - cfg.history_days as i64);
            (day_of_date(b).0 - start + 1).max(1) as usize
        }
    };
    let sessions = load_sessions(cfg, needed)?;
    if sessions.is_empty() {
        return Err(CliError::Usage("no sessions found".into()));
    }
    let mut days = group_by_day(&sessions);
    let split = match cfg.selection {
        DaySelection::Last(n) => {
            if n > days.len() {
                return Err(CliError::Usage(format!(
                    "asked for {n} day(s) but the sessions span {}",
                    days.len()
                )));
            }
            days.len() - n
        }
        DaySelection::Range(a, b) => {
            let (first, last) = (day_of_date(a), day_of_date(b));
            days.retain(|(d, _)| *d <= last);
            let split = days.iter().take_while(|(d, _)| *d < first).count();
            if split == days.len() {
                return Err(CliError::Usage(format!("no sessions between {a} and {b}")));
            }
            split
        }
    };
    let eval = days.split_off(split);
    for (day, sessions) in &eval {
        let cut = sessions.iter().filter(|s| s.departure.day() > *day).count();
        if sessions.is_empty() {
            warn(format_args!("no sessions on {}", date_of_day(*day)));
        } else if cut > 0 {
            warn(format_args!(
                "{}: {cut} session(s) stay past midnight and are cut at the end of the day",
                date_of_day(*day)
            ));
        }
    }
    Ok(Corpus {
        history: days,
        eval,
    })
}

fn history_of(cfg: &RunConfig, days: &[Day]) -> SessionHistory {
    let mut h = SessionHistory::new(cfg.base.predictor.window_sessions);
    for (d, s) in days {
        h.push_day(*d, s);
    }
    h
}

/// Runs every configured scenario over the evaluated days. `observe`
/// sees each day's trace with the index of its scenario.
pub fn run_scenarios(
    cfg: &RunConfig,
    corpus: &Corpus,
    mut observe: impl FnMut(usize, DayIndex, &evcharge_core::simulator::DayTrace) -> CliResult<()>,
) -> CliResult<Vec<ScenarioRun>> {
    let mut failure = None;
    let runs = run_range_with(
        &corpus.eval,
        &cfg.scenario_configs(),
        history_of(cfg, &corpus.history),
        |i, day, trace| {
            if failure.is_none() {
                failure = observe(i, day, trace).err();
            }
        },
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(runs),
    }
}

fn report_rejections(
    run_scenario: &str,
    day: DayIndex,
    trace: &evcharge_core::simulator::DayTrace,
    ports: usize,
) {
    for s in trace.sessions.iter().filter(|s| s.rejected) {
        warn(format_args!(
            "{run_scenario} {}: session {} rejected at step {}, all {ports} ports busy",
            date_of_day(day),
            s.session_id,
            s.arrival_step
        ));
    }
}

/// `simulate`: per-scenario traces and metrics plus `cumulative.csv`.
pub fn simulate(cfg: &RunConfig) -> CliResult<Vec<ScenarioRun>> {
    cfg.require_scenarios(1)?;
    let corpus = load_corpus(cfg)?;
    let mut writers = Vec::new();
    for s in &cfg.scenarios {
        writers.push(TraceWriters::create(&cfg.out.join(s.as_str()))?);
    }
    let ports = cfg.base.port_count;
    let runs = run_scenarios(cfg, &corpus, |i, day, trace| {
        report_rejections(cfg.scenarios[i].as_str(), day, trace, ports);
        writers[i].day(day, trace)
    })?;
    for (w, run) in writers.into_iter().zip(&runs) {
        w.commit()?;
        write_metrics(
            &cfg.out.join(run.scenario.as_str()).join("metrics.json"),
            run,
        )?;
    }
    write_cumulative(&cfg.out.join("cumulative.csv"), &runs)?;
    Ok(runs)
}

/// `compare`: side-by-side cumulative cost and deficit in `comparison.csv`.
pub fn compare(cfg: &RunConfig) -> CliResult<Vec<ScenarioRun>> {
    cfg.require_scenarios(2)?;
    let corpus = load_corpus(cfg)?;
    let ports = cfg.base.port_count;
    let runs = run_scenarios(cfg, &corpus, |i, day, trace| {
        report_rejections(cfg.scenarios[i].as_str(), day, trace, ports);
        Ok(())
    })?;
    write_comparison(&cfg.out.join("comparison.csv"), &runs)?;
    Ok(runs)
}

/// Fitted predictors and the initial arrival estimate for each day type.
#[derive(Debug, Serialize)]
pub struct ModelDump {
    pub sessions: usize,
    pub days: usize,
    pub weekday: Option<FittedDay>,
    pub weekend: Option<FittedDay>,
}

#[derive(Debug, Serialize)]
pub struct FittedDay {
    pub initial_daily_count: f64,
    pub predictor: Predictor,
}

/// `fit`: fits the predictor on every loaded session and writes `model.json`.
pub fn fit(cfg: &RunConfig) -> CliResult<(ModelDump, PathBuf)> {
    let corpus = load_corpus(&RunConfig {
        selection: DaySelection::Last(1),
        ..cfg.clone()
    })?;
    let days: Vec<Day> = corpus.history.into_iter().chain(corpus.eval).collect();
    let history = history_of(cfg, &days);
    if history.is_empty() {
        return Err(CliError::Usage("fit needs at least one session".into()));
    }
    let fit_type = |t: DayType| -> CliResult<Option<FittedDay>> {
        let count = match initial_daily_count(&history, t) {
            Ok(c) => c,
            Err(_) if cfg.base.predictor.default_daily_count.is_none() => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let predictor = Predictor::fit(&history, &cfg.base.clock, t, &cfg.base.predictor)?;
        Ok(Some(FittedDay {
            initial_daily_count: count,
            predictor,
        }))
    };
    let dump = ModelDump {
        sessions: history.len(),
        days: days.len(),
        weekday: fit_type(DayType::Weekday)?,
        weekend: fit_type(DayType::Weekend)?,
    };
    let path = write_json(&cfg.out.join("model.json"), &dump)?;
    Ok((dump, path))
}

/// Settings of `generate`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerateSpec {
    pub seed: u64,
    pub start: NaiveDate,
    pub days: usize,
    pub profile: SyntheticProfile,
    pub cycle_minutes: u32,
}

impl Default for GenerateSpec {
    fn default() -> Self {
        GenerateSpec {
            seed: crate::config::DEFAULT_SEED,
            start: date_of_day(SYNTHETIC_START),
            days: 28,
            profile: SyntheticProfile::default(),
            cycle_minutes: 10,
        }
    }
}

/// Sets the daily mean of a bell-shaped profile.
pub fn with_daily_mean(mut profile: SyntheticProfile, mean: f64) -> SyntheticProfile {
    if let ArrivalProfile::Bell { daily_mean, .. } = &mut profile.arrivals {
        *daily_mean = mean;
    }
    profile
}

/// `generate`: a synthetic session corpus as CSV.
pub fn generate(spec: &GenerateSpec, out: &std::path::Path) -> CliResult<usize> {
    let clock = evcharge_core::sessions::SlotClock::new(spec.cycle_minutes)?;
    let sessions = generate_days(
        spec.seed,
        &spec.profile,
        &clock,
        day_of_date(spec.start),
        spec.days,
    )?;
    let mut csv = CsvOut::create(
        out,
        &[
            "session_id",
            "arrival",
            "departure",
            "requested_kwh",
            "stated_departure",
        ],
    )?;
    for s in &sessions {
        csv.row([
            s.session_id.clone(),
            format_time(s.arrival),
            format_time(s.departure),
            format!("{}", s.requested_kwh),
            s.user_stated_departure.map(format_time).unwrap_or_default(),
        ])?;
    }
    csv.commit()?;
    Ok(sessions.len())
}

/// Fixed-width totals, one row per run.
pub fn summary_table(runs: &[ScenarioRun]) -> String {
    let mut s = format!(
        "{:<8} {:>12} {:>12} {:>14} {:>11} {:>11} {:>6} {:>6} {:>8} {:>8}\n",
        "scenario",
        "cost",
        "planned",
        "delta_e_min",
        "requested",
        "delivered",
        "full",
        ">=90%",
        "arrivals",
        "rejected"
    );
    for (label, r) in run_labels(runs).iter().zip(runs) {
        let m = &r.total;
        s.push_str(&format!(
            "{:<8} {:>12.4} {:>12.4} {:>14.4} {:>11.3} {:>11.3} {:>6} {:>6} {:>8} {:>8}\n",
            label,
            m.total_cost,
            m.planned_cost,
            m.delta_e_min,
            m.requested_kwh,
            m.delivered_kwh,
            m.fully_served,
            m.served_90pct,
            m.total_arrivals,
            m.rejected
        ));
    }
    s
}
