use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::Result;

/// One task execution interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub worker: usize,
    pub subnet: usize,
    pub frame: i64,
    pub start: f64,
    pub end: f64,
    /// Block labels covered by the task.
    pub label: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    /// `"cost"` for simulated schedules, `"us"` for measured runs.
    pub time_unit: String,
    pub events: Vec<Event>,
    /// Time between consecutive outputs in steady state.
    pub steady_state_period: f64,
    /// Outputs per time unit in steady state.
    pub throughput: f64,
    pub makespan: f64,
    /// Mean time from the start of a frame's first task to its output.
    pub latency: f64,
}

impl Timeline {
    pub fn new(time_unit: &str) -> Self {
        Timeline {
            time_unit: time_unit.to_string(),
            ..Default::default()
        }
    }

    /// Pairs of events on the same worker whose intervals overlap.
    pub fn overlaps(&self) -> Vec<(usize, usize)> {
        let mut idx: Vec<usize> = (0..self.events.len()).collect();
        idx.sort_by(|&a, &b| {
            let (x, y) = (&self.events[a], &self.events[b]);
            (x.worker, x.start, x.end).partial_cmp(&(y.worker, y.start, y.end)).unwrap()
        });
        idx.windows(2)
            .filter(|w| {
                let (x, y) = (&self.events[w[0]], &self.events[w[1]]);
                x.worker == y.worker && y.start < x.end && x.end > x.start && y.end > y.start
            })
            .map(|w| (w[0], w[1]))
            .collect()
    }
}

/// The timeline as a Chrome tracing document: one complete (`"X"`) event
/// per interval, the worker as thread id and the block label as category.
pub fn trace_json(timeline: &Timeline) -> serde_json::Value {
    let events: Vec<serde_json::Value> = timeline
        .events
        .iter()
        .map(|e| {
            json!({
                "name": format!("subnet {} frame {}", e.subnet, e.frame),
                "cat": e.label,
                "ph": "X",
                "ts": e.start,
                "dur": e.end - e.start,
                "pid": 1,
                "tid": e.worker,
                "args": { "subnet": e.subnet, "frame": e.frame },
            })
        })
        .collect();
    json!({
        "traceEvents": events,
        "displayTimeUnit": "ms",
        "otherData": { "time_unit": timeline.time_unit },
    })
}

pub fn emit_trace(timeline: &Timeline, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut f, &trace_json(timeline))?;
    f.flush()?;
    Ok(())
}

/// One row of the throughput metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub config: String,
    pub subnetworks: usize,
    pub clocks: String,
    pub workers: usize,
    /// Sequential unclocked period over this configuration's period.
    pub throughput_factor: f64,
    pub latency: f64,
    pub info_latency: i64,
}

pub fn write_metrics_csv<W: Write>(w: W, rows: &[MetricsRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(csv_error)?;
    }
    wr.flush()?;
    Ok(())
}

pub(crate) fn csv_error(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
