//! Run reports: one row per frame plus aggregates derived from the rows.
//!
//! Text form:
//!
//! ```text
//! [config]
//! key = value
//! [frames]
//! frame phase primary_retained primary_patches aux_retained aux_patches rho merges aux_mode events
//! ...
//! [aggregate]
//! key = value
//! ```
//!
//! Floats are written in shortest round-trip form, so parsing a report
//! and recomputing the aggregates reproduces them exactly.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::auxview::AuxMode;
use crate::config::{CostModel, EngineConfig};
use crate::error::{Error, Result};
use crate::pipeline::{Engine, EventKind, StepOutput};
use crate::trace::Trace;

pub const FRAME_COLUMNS: &str =
    "frame phase primary_retained primary_patches aux_retained aux_patches rho merges aux_mode events";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub frame: u64,
    pub phase: String,
    pub primary_retained: usize,
    pub primary_patches: usize,
    /// Zero when the layout has no auxiliary camera.
    pub aux_retained: usize,
    pub aux_patches: usize,
    pub merges: usize,
    pub aux_mode: Option<AuxMode>,
    pub events: Vec<EventKind>,
}

impl ReportRow {
    pub fn from_step(out: &StepOutput) -> Self {
        Self {
            frame: out.frame_index,
            phase: out.phase.as_str().to_string(),
            primary_retained: out.primary.retained(),
            primary_patches: out.primary.patches(),
            aux_retained: out.auxiliary.as_ref().map_or(0, |a| a.retained()),
            aux_patches: out.auxiliary.as_ref().map_or(0, |a| a.patches()),
            merges: out.merges(),
            aux_mode: out.aux_mode,
            events: out.events.iter().map(|e| e.kind).collect(),
        }
    }

    pub fn retained(&self) -> usize {
        self.primary_retained + self.aux_retained
    }

    pub fn patches(&self) -> usize {
        self.primary_patches + self.aux_patches
    }

    /// Retention ratio over all cameras.
    pub fn rho(&self) -> f64 {
        self.retained() as f64 / self.patches() as f64
    }
}

/// Sum of full-resolution cost over sum of actual cost, per frame
/// `(retained, patches)`.
pub fn predicted_speedup(frames: impl IntoIterator<Item = (usize, usize)>, cost: &CostModel) -> f64 {
    let (mut full, mut actual) = (0.0, 0.0);
    for (retained, patches) in frames {
        full += cost.cost(patches);
        actual += cost.cost(retained);
    }
    if actual > 0.0 {
        full / actual
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub frames: usize,
    pub mean_rho: f64,
    /// Total retained on the last frame.
    pub steady_state_retained: usize,
    pub predicted_speedup: f64,
    pub reinit_events: usize,
    pub restore_events: usize,
    pub remerge_events: usize,
    pub aux_transitions: usize,
}

impl Aggregate {
    pub fn from_rows(rows: &[ReportRow], cost: &CostModel) -> Self {
        let count = |f: fn(&EventKind) -> bool| rows.iter().flat_map(|r| &r.events).filter(|e| f(e)).count();
        let rho_sum: f64 = rows.iter().map(ReportRow::rho).sum();
        Self {
            frames: rows.len(),
            mean_rho: if rows.is_empty() {
                1.0
            } else {
                rho_sum / rows.len() as f64
            },
            steady_state_retained: rows.last().map_or(0, ReportRow::retained),
            predicted_speedup: predicted_speedup(rows.iter().map(|r| (r.retained(), r.patches())), cost),
            reinit_events: count(|e| matches!(e, EventKind::Reinit)),
            restore_events: count(|e| matches!(e, EventKind::Restore { .. })),
            remerge_events: count(|e| matches!(e, EventKind::Remerge { .. })),
            aux_transitions: count(|e| matches!(e, EventKind::AuxTransition { .. })),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: EngineConfig,
    pub rows: Vec<ReportRow>,
    pub aggregate: Aggregate,
}

/// Steps a fresh engine over every frame of `trace`.
pub fn run_trace(config: &EngineConfig, trace: &Trace) -> Result<RunReport> {
    trace.header.validate()?;
    let mut engine = Engine::new(config.clone(), trace.layout())?;
    let mut rows = Vec::with_capacity(trace.frames.len());
    for frame in &trace.frames {
        rows.push(ReportRow::from_step(&engine.step(frame)?));
    }
    Ok(RunReport::new(config.clone(), rows))
}

fn malformed(reason: impl Into<String>) -> Error {
    Error::Malformed {
        what: "report".into(),
        reason: reason.into(),
    }
}

fn parse_event(s: &str) -> Result<EventKind> {
    let region = |v: &str| v.parse::<usize>().map_err(|_| malformed(format!("bad event `{s}`")));
    match s.split_once(':') {
        None if s == "reinit" => Ok(EventKind::Reinit),
        Some(("restore", k)) => Ok(EventKind::Restore { region: region(k)? }),
        Some(("remerge", k)) => Ok(EventKind::Remerge { region: region(k)? }),
        Some(("aux", m)) => {
            let to = AuxMode::from_str(m).map_err(|_| malformed(format!("bad event `{s}`")))?;
            let from = match to {
                AuxMode::Merge => AuxMode::FullView,
                AuxMode::FullView => AuxMode::Merge,
            };
            Ok(EventKind::AuxTransition { from, to })
        }
        _ => Err(malformed(format!("bad event `{s}`"))),
    }
}

fn parse_row(line: &str) -> Result<ReportRow> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 10 {
        return Err(malformed(format!("expected 10 columns in `{line}`")));
    }
    let num = |i: usize| {
        fields[i]
            .parse::<usize>()
            .map_err(|_| malformed(format!("bad number `{}`", fields[i])))
    };
    let row = ReportRow {
        frame: fields[0]
            .parse()
            .map_err(|_| malformed(format!("bad frame `{}`", fields[0])))?,
        phase: fields[1].to_string(),
        primary_retained: num(2)?,
        primary_patches: num(3)?,
        aux_retained: num(4)?,
        aux_patches: num(5)?,
        merges: num(7)?,
        aux_mode: match fields[8] {
            "-" => None,
            m => Some(AuxMode::from_str(m).map_err(|_| malformed(format!("bad aux mode `{m}`")))?),
        },
        events: match fields[9] {
            "-" => Vec::new(),
            list => list.split(',').map(parse_event).collect::<Result<_>>()?,
        },
    };
    let rho: f64 = fields[6]
        .parse()
        .map_err(|_| malformed(format!("bad rho `{}`", fields[6])))?;
    if rho != row.rho() {
        return Err(malformed(format!(
            "frame {} rho {rho} disagrees with its counts",
            row.frame
        )));
    }
    Ok(row)
}

impl RunReport {
    pub fn new(config: EngineConfig, rows: Vec<ReportRow>) -> Self {
        let aggregate = Aggregate::from_rows(&rows, &config.cost);
        Self {
            config,
            rows,
            aggregate,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("[config]\n");
        out.push_str(&self.config.to_text());
        out.push_str("[frames]\n");
        out.push_str(FRAME_COLUMNS);
        out.push('\n');
        for r in &self.rows {
            let events = if r.events.is_empty() {
                "-".to_string()
            } else {
                r.events.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
            };
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {}",
                r.frame,
                r.phase,
                r.primary_retained,
                r.primary_patches,
                r.aux_retained,
                r.aux_patches,
                r.rho(),
                r.merges,
                r.aux_mode.map_or("-", AuxMode::as_str),
                events
            );
        }
        let a = &self.aggregate;
        out.push_str("[aggregate]\n");
        let _ = writeln!(out, "frames = {}", a.frames);
        let _ = writeln!(out, "mean_rho = {}", a.mean_rho);
        let _ = writeln!(out, "steady_state_retained = {}", a.steady_state_retained);
        let _ = writeln!(out, "predicted_speedup = {}", a.predicted_speedup);
        let _ = writeln!(out, "reinit_events = {}", a.reinit_events);
        let _ = writeln!(out, "restore_events = {}", a.restore_events);
        let _ = writeln!(out, "remerge_events = {}", a.remerge_events);
        let _ = writeln!(out, "aux_transitions = {}", a.aux_transitions);
        out
    }

    /// Parses a report and checks that its aggregate block matches the
    /// recomputation from its rows.
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = "";
        let (mut config_text, mut rows, mut agg) = (String::new(), Vec::new(), Vec::new());
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                section = match line {
                    "[config]" => "config",
                    "[frames]" => "frames",
                    "[aggregate]" => "aggregate",
                    other => return Err(malformed(format!("unknown section {other}"))),
                };
                continue;
            }
            match section {
                "config" => {
                    config_text.push_str(line);
                    config_text.push('\n');
                }
                "frames" if line == FRAME_COLUMNS => {}
                "frames" => rows.push(parse_row(line)?),
                "aggregate" => {
                    let (k, v) = line
                        .split_once('=')
                        .ok_or_else(|| malformed(format!("bad line `{line}`")))?;
                    agg.push((k.trim().to_string(), v.trim().to_string()));
                }
                _ => return Err(malformed("content before the first section")),
            }
        }
        let config = EngineConfig::parse_text(&config_text)?;
        let report = RunReport::new(config, rows);
        let expected = report.to_text();
        let expected_agg = expected.split("[aggregate]\n").nth(1).unwrap_or_default();
        let found: String = agg.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        if found != expected_agg {
            return Err(malformed("aggregate block disagrees with the rows"));
        }
        Ok(report)
    }
}
