//! Result files. Everything is written to a temporary file beside its
//! target and renamed into place once complete.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use evcharge_core::sessions::DayIndex;
use evcharge_core::simulator::{DayTrace, Metrics, Scenario, ScenarioRun};
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};
use crate::input::date_of_day;

/// A file that only appears at `path` when [`AtomicFile::commit`] succeeds.
pub struct AtomicFile {
    path: PathBuf,
    inner: BufWriter<NamedTempFile>,
}

impl AtomicFile {
    pub fn create(path: &Path) -> CliResult<Self> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(AtomicFile {
            path: path.to_path_buf(),
            inner: BufWriter::new(tmp),
        })
    }

    pub fn commit(self) -> CliResult<PathBuf> {
        let path = self.path;
        let tmp = self
            .inner
            .into_inner()
            .map_err(|e| CliError::io(&path, e.into_error()))?;
        tmp.persist(&path)
            .map_err(|e| CliError::io(&path, e.error))?;
        Ok(path)
    }
}

impl Write for AtomicFile {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.inner.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<PathBuf> {
    let mut f = AtomicFile::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::io(path, e.into()))?;
    f.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    f.commit()
}

/// CSV file committed atomically.
pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<AtomicFile>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> CliResult<Self> {
        let mut writer = csv::Writer::from_writer(AtomicFile::create(path)?);
        writer
            .write_record(header)
            .map_err(|e| CliError::io(path, e.into()))?;
        Ok(CsvOut {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, T>(&mut self, fields: I) -> CliResult<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| CliError::io(&self.path, e.into()))
    }

    pub fn commit(self) -> CliResult<PathBuf> {
        let path = self.path;
        let f = self
            .writer
            .into_inner()
            .map_err(|e| CliError::io(&path, e.into_error()))?;
        f.commit()
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// The per-day files of one scenario: trace, sessions, decisions, policy.
pub struct TraceWriters {
    trace: CsvOut,
    sessions: CsvOut,
    decisions: CsvOut,
    policy: CsvOut,
}

pub const TRACE_HEADER: &[&str] = &[
    "date",
    "step",
    "price",
    "cap_kw",
    "on_count",
    "connected",
    "grid_kwh",
    "delivered_kwh",
    "cumulative_kwh",
    "policy_kwh",
    "e_min_kwh",
    "e_max_kwh",
    "expected_arrivals",
    "infeasible",
    "mode",
];

impl TraceWriters {
    pub fn create(dir: &Path) -> CliResult<Self> {
        Ok(TraceWriters {
            trace: CsvOut::create(&dir.join("trace.csv"), TRACE_HEADER)?,
            sessions: CsvOut::create(
                &dir.join("sessions_out.csv"),
                &[
                    "date",
                    "session_id",
                    "port",
                    "arrival_step",
                    "departure_step",
                    "requested_kwh",
                    "delivered_kwh",
                    "fully_served",
                    "rejected",
                    "truncated",
                ],
            )?,
            decisions: CsvOut::create(
                &dir.join("decisions.csv"),
                &["date", "step", "port", "on", "priority", "remaining_kwh"],
            )?,
            policy: CsvOut::create(
                &dir.join("policy.csv"),
                &[
                    "date",
                    "instant",
                    "policy_kwh",
                    "delivered_kwh",
                    "e_min_kwh",
                    "e_max_kwh",
                ],
            )?,
        })
    }

    pub fn day(&mut self, day: DayIndex, t: &DayTrace) -> CliResult<()> {
        let date = date_of_day(day).to_string();
        for c in &t.cycles {
            self.trace.row([
                date.clone(),
                c.step.to_string(),
                num(c.price),
                opt(c.cap_kw),
                c.on_count.to_string(),
                c.connected.to_string(),
                num(c.grid_kwh),
                num(c.delivered_kwh),
                num(c.cumulative_kwh),
                num(c.policy_kwh),
                num(c.e_min_kwh),
                num(c.e_max_kwh),
                opt(c.expected_arrivals),
                c.infeasible.to_string(),
                c.mode.to_string(),
            ])?;
        }
        for s in &t.sessions {
            self.sessions.row([
                date.clone(),
                s.session_id.clone(),
                s.port.map(|p| p.to_string()).unwrap_or_default(),
                s.arrival_step.to_string(),
                s.departure_step.to_string(),
                num(s.requested_kwh),
                num(s.delivered_kwh),
                s.fully_served().to_string(),
                s.rejected.to_string(),
                s.truncated.to_string(),
            ])?;
        }
        for d in &t.decisions {
            self.decisions.row([
                date.clone(),
                d.step.to_string(),
                d.port.to_string(),
                d.on.to_string(),
                num(d.priority),
                num(d.remaining_kwh),
            ])?;
        }
        for (k, &p) in t.policy_kwh.iter().enumerate() {
            self.policy.row([
                date.clone(),
                k.to_string(),
                num(p),
                opt(t.delivered_kwh.get(k).copied()),
                opt(t.envelope.e_min.get(k).copied()),
                opt(t.envelope.e_max.get(k).copied()),
            ])?;
        }
        Ok(())
    }

    pub fn commit(self) -> CliResult<Vec<PathBuf>> {
        Ok(vec![
            self.trace.commit()?,
            self.sessions.commit()?,
            self.decisions.commit()?,
            self.policy.commit()?,
        ])
    }
}

#[derive(Serialize)]
struct DayEntry<'a> {
    date: String,
    #[serde(flatten)]
    metrics: &'a Metrics,
    cumulative_cost: f64,
    cumulative_delta_e_min: f64,
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    scenario: Scenario,
    total: &'a Metrics,
    days: Vec<DayEntry<'a>>,
}

pub fn write_metrics(path: &Path, run: &ScenarioRun) -> CliResult<PathBuf> {
    let file = MetricsFile {
        scenario: run.scenario,
        total: &run.total,
        days: run
            .days
            .iter()
            .map(|d| DayEntry {
                date: date_of_day(d.day).to_string(),
                metrics: &d.metrics,
                cumulative_cost: d.cumulative_cost,
                cumulative_delta_e_min: d.cumulative_delta_e_min,
            })
            .collect(),
    };
    write_json(path, &file)
}

/// Long-format daily and cumulative cost and deficit of every run.
pub fn write_cumulative(path: &Path, runs: &[ScenarioRun]) -> CliResult<PathBuf> {
    let mut out = CsvOut::create(
        path,
        &[
            "date",
            "scenario",
            "total_cost",
            "cumulative_cost",
            "delta_e_min",
            "cumulative_delta_e_min",
            "fully_served",
            "served_90pct",
            "total_arrivals",
        ],
    )?;
    for run in runs {
        for d in &run.days {
            out.row([
                date_of_day(d.day).to_string(),
                run.scenario.to_string(),
                num(d.metrics.total_cost),
                num(d.cumulative_cost),
                num(d.metrics.delta_e_min),
                num(d.cumulative_delta_e_min),
                d.metrics.fully_served.to_string(),
                d.metrics.served_90pct.to_string(),
                d.metrics.total_arrivals.to_string(),
            ])?;
        }
    }
    out.commit()
}

/// Column labels for runs, numbered when a scenario repeats.
pub fn run_labels(runs: &[ScenarioRun]) -> Vec<String> {
    runs.iter()
        .enumerate()
        .map(|(i, r)| {
            let seen = runs[..i]
                .iter()
                .filter(|o| o.scenario == r.scenario)
                .count();
            if seen == 0 {
                r.scenario.to_string()
            } else {
                format!("{}_{}", r.scenario, seen + 1)
            }
        })
        .collect()
}

/// Wide per-day comparison: cumulative cost and deficit of every run, then
/// each run's difference from the first.
pub fn write_comparison(path: &Path, runs: &[ScenarioRun]) -> CliResult<PathBuf> {
    let labels = run_labels(runs);
    let mut header = vec![String::from("date")];
    for l in &labels {
        header.push(format!("{l}_cost"));
        header.push(format!("{l}_cumulative_cost"));
        header.push(format!("{l}_cumulative_delta_e_min"));
    }
    for l in &labels[1..] {
        header.push(format!("{l}_minus_{}_cumulative_cost", labels[0]));
        header.push(format!("{l}_minus_{}_cumulative_delta_e_min", labels[0]));
    }
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut out = CsvOut::create(path, &refs)?;
    let n_days = runs.first().map_or(0, |r| r.days.len());
    for i in 0..n_days {
        let mut row = vec![date_of_day(runs[0].days[i].day).to_string()];
        for r in runs {
            let d = &r.days[i];
            row.push(num(d.metrics.total_cost));
            row.push(num(d.cumulative_cost));
            row.push(num(d.cumulative_delta_e_min));
        }
        let base = &runs[0].days[i];
        for r in &runs[1..] {
            let d = &r.days[i];
            row.push(num(d.cumulative_cost - base.cumulative_cost));
            row.push(num(d.cumulative_delta_e_min - base.cumulative_delta_e_min));
        }
        out.row(row)?;
    }
    out.commit()
}
