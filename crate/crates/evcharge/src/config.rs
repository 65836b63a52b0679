//! Run configuration: a flat TOML file overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::Args;
use evcharge_core::battery::BmsParams;
use evcharge_core::economic::PricingSchedule;
use evcharge_core::predictor::BandwidthRule;
use evcharge_core::sessions::SlotClock;
use evcharge_core::simulator::{Scenario, ScenarioConfig};
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::input::read_prices;

/// Every setting a run accepts. Each field may come from the config file
/// or a flag; flags win.
#[derive(Args, Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Session file (CSV or JSON). Without it a synthetic corpus is generated from --seed.
    #[arg(long)]
    pub sessions: Option<PathBuf>,
    /// 24 hourly prices (CSV or JSON array). Defaults to a flat 0.15 per kWh.
    #[arg(long)]
    pub prices: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scenario to run, repeatable: S1, S2, S3 or S4.
    #[arg(long = "scenario")]
    #[serde(rename = "scenarios")]
    pub scenarios: Vec<Scenario>,
    /// Evaluate the last N days; earlier days form the history.
    #[arg(long, conflicts_with = "date_range")]
    pub days: Option<usize>,
    /// Evaluate FIRST..LAST (inclusive, YYYY-MM-DD).
    #[arg(long)]
    pub date_range: Option<String>,
    #[arg(long)]
    pub ports: Option<usize>,
    /// Charge-cycle length in minutes.
    #[arg(long)]
    pub cycle_min: Option<u32>,
    /// S2 weight per expected departed EV.
    #[arg(long)]
    pub w: Option<f64>,
    /// Exponent of waiting time in the priority.
    #[arg(long, allow_negative_numbers = true)]
    pub m1: Option<i32>,
    /// Exponent of remaining energy in the priority.
    #[arg(long, allow_negative_numbers = true)]
    pub m2: Option<i32>,
    /// Seed of the synthetic corpus.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Port rating, kW.
    #[arg(long)]
    pub p_max_kw: Option<f64>,
    #[arg(long)]
    pub delta1: Option<f64>,
    #[arg(long)]
    pub delta2: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Sessions kept to fit the predictor.
    #[arg(long)]
    pub window_sessions: Option<usize>,
    /// Same-type days averaged for the initial arrival count.
    #[arg(long)]
    pub window_days: Option<usize>,
    /// Arrival-time bandwidth: `silverman` or a fixed width in minutes.
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// Shift zoned timestamps to this UTC offset, minutes (-480 for Pacific).
    #[arg(long, allow_negative_numbers = true)]
    pub utc_offset_min: Option<i32>,
    /// History days generated before the evaluated ones when no session file is given.
    #[arg(long)]
    pub history_days: Option<usize>,
}

macro_rules! overlay {
    ($top:expr, $base:expr; $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f),)* ..$top }
    };
}

impl Settings {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::input(path, e.message()))
    }

    /// `self` with every unset field taken from `base`.
    pub fn over(self, base: Settings) -> Settings {
        let picks_days = self.days.is_some() || self.date_range.is_some();
        let scenarios = if self.scenarios.is_empty() {
            base.scenarios.clone()
        } else {
            self.scenarios.clone()
        };
        let mut s = overlay!(self, base; sessions, prices, out, ports, cycle_min, w, m1, m2,
            seed, p_max_kw, delta1, delta2, eta, window_sessions, window_days, bandwidth,
            utc_offset_min, history_days);
        if !picks_days {
            s.days = base.days;
            s.date_range = base.date_range;
        }
        s.scenarios = scenarios;
        s
    }
}

/// Which days of the corpus are simulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DaySelection {
    Last(usize),
    Range(NaiveDate, NaiveDate),
}

/// Settings checked and turned into core types.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub sessions: Option<PathBuf>,
    pub out: PathBuf,
    pub scenarios: Vec<Scenario>,
    pub selection: DaySelection,
    pub seed: u64,
    pub history_days: usize,
    pub utc_offset_min: Option<i32>,
    /// Shared by every scenario; only `scenario` differs between runs.
    pub base: ScenarioConfig,
}

pub const DEFAULT_PORTS: usize = 54;
pub const DEFAULT_PRICE: f64 = 0.15;
pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_HISTORY_DAYS: usize = 28;

impl RunConfig {
    pub fn resolve(s: Settings) -> CliResult<RunConfig> {
        let usage = |m: String| CliError::Usage(m);
        let selection = match (s.days, s.date_range.as_deref()) {
            (Some(_), Some(_)) => {
                return Err(usage("give --days or --date-range, not both".into()))
            }
            (Some(0), None) => return Err(usage("--days must be at least 1".into())),
            (Some(n), None) => DaySelection::Last(n),
            (None, Some(r)) => parse_range(r).map_err(usage)?,
            (None, None) => DaySelection::Last(1),
        };
        if let Some(p) = s.sessions.as_ref().filter(|p| !p.exists()) {
            return Err(CliError::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "session file not found"),
            ));
        }
        let prices = match &s.prices {
            Some(p) => read_prices(p)?,
            None => PricingSchedule::flat(DEFAULT_PRICE)?,
        };

        let mut base = ScenarioConfig::new(
            s.scenarios.first().copied().unwrap_or(Scenario::S1),
            s.ports.unwrap_or(DEFAULT_PORTS),
            prices,
        );
        if let Some(m) = s.cycle_min {
            base.clock = SlotClock::new(m)?;
        }
        let d = BmsParams::default();
        base.bms = BmsParams::new(
            s.p_max_kw.unwrap_or(d.p_ch_max_kw),
            s.delta1.unwrap_or(d.delta1),
            s.delta2.unwrap_or(d.delta2),
            s.eta.unwrap_or(d.eta),
        )?;
        if let Some(w) = s.w {
            base.s2.weight = w;
        }
        if let Some(m1) = s.m1 {
            base.priority.m1 = m1;
        }
        if let Some(m2) = s.m2 {
            base.priority.m2 = m2;
        }
        if let Some(n) = s.window_sessions {
            base.predictor.window_sessions = n;
        }
        if let Some(n) = s.window_days {
            base.predictor.window_days = n;
        }
        if let Some(b) = &s.bandwidth {
            base.predictor.time_bandwidth = parse_bandwidth(b).map_err(usage)?;
        }
        base.validate()?;

        Ok(RunConfig {
            sessions: s.sessions,
            out: s.out.unwrap_or_else(|| PathBuf::from("out")),
            scenarios: s.scenarios,
            selection,
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            history_days: s.history_days.unwrap_or(DEFAULT_HISTORY_DAYS),
            utc_offset_min: s.utc_offset_min,
            base,
        })
    }

    pub fn require_scenarios(&self, at_least: usize) -> CliResult<()> {
        if self.scenarios.len() < at_least {
            return Err(CliError::Usage(format!(
                "give at least {at_least} scenario(s) with --scenario S1..S4"
            )));
        }
        Ok(())
    }

    pub fn scenario_configs(&self) -> Vec<ScenarioConfig> {
        self.scenarios
            .iter()
            .map(|&s| self.base.with_scenario(s))
            .collect()
    }
}

fn parse_range(text: &str) -> Result<DaySelection, String> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| format!("date range {text:?} should look like 2021-01-04..2021-01-08"))?;
    let date = |t: &str| {
        NaiveDate::parse_from_str(t.trim(), "%Y-%m-%d").map_err(|e| format!("{t:?}: {e}"))
    };
    let (first, last) = (date(a)?, date(b)?);
    if last < first {
        return Err(format!("date range {text:?} ends before it starts"));
    }
    Ok(DaySelection::Range(first, last))
}

fn parse_bandwidth(text: &str) -> Result<BandwidthRule, String> {
    let default = BandwidthRule::Silverman { floor: 5.0 };
    if text.eq_ignore_ascii_case("silverman") {
        return Ok(default);
    }
    match text.parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(BandwidthRule::Fixed(h)),
        _ => Err(format!(
            "bandwidth {text:?} should be `silverman` or a positive number of minutes"
        )),
    }
}
