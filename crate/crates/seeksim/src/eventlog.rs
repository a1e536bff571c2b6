//! Episode logs as JSON lines.
//!
//! The first line is `{"kind":"start", ...}` with the episode start, score
//! weights and explored-area grid; then one `{"kind":"step", ...}` line per
//! action; then optionally `{"kind":"result", ...}` with the simulator's own
//! summary. A single JSON document holding the whole log is accepted too.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use seeksim_core::agents::{rescore, EpisodeLog, EventRecord};
use seeksim_core::sim::EpisodeStart;
use seeksim_core::task::{EpisodeResult, ScoreWeights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Start { start: EpisodeStart, weights: ScoreWeights, cell_size: f64, visit_radius: f64 },
    Step(EventRecord),
    Result(EpisodeResult),
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log has no start line")]
    MissingStart,
}

pub fn write_event_log(w: &mut impl Write, log: &EpisodeLog) -> io::Result<()> {
    let mut line = |l: &LogLine| -> io::Result<()> {
        serde_json::to_writer(&mut *w, l)?;
        w.write_all(b"\n")
    };
    line(&LogLine::Start { start: log.start.clone(), weights: log.weights, cell_size: log.cell_size, visit_radius: log.visit_radius })?;
    for e in &log.events {
        line(&LogLine::Step(e.clone()))?;
    }
    line(&LogLine::Result(log.result.clone()))
}

pub fn event_log_string(log: &EpisodeLog) -> String {
    let mut out = Vec::new();
    write_event_log(&mut out, log).expect("writing to memory");
    String::from_utf8(out).expect("json is utf-8")
}

/// A parsed log and the summary it carried, if any. When the log has no
/// result line, `log.result` is the rescored summary.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedLog {
    pub log: EpisodeLog,
    pub reported: Option<EpisodeResult>,
}

pub fn read_event_log(r: impl BufRead) -> Result<LoadedLog, LogError> {
    let text = io::read_to_string(r)?;
    if let Ok(log) = serde_json::from_str::<EpisodeLog>(&text) {
        return Ok(LoadedLog { reported: Some(log.result.clone()), log });
    }
    let mut head = None;
    let (mut events, mut reported) = (Vec::new(), None);
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(raw);
        let line: LogLine = serde_path_to_error::deserialize(de)
            .map_err(|e| LogError::Parse { line: i + 1, message: format!("{}: {}", e.path(), e.inner()) })?;
        match line {
            LogLine::Start { start, weights, cell_size, visit_radius } if head.is_none() => {
                head = Some((start, weights, cell_size, visit_radius))
            }
            LogLine::Start { .. } => return Err(LogError::Parse { line: i + 1, message: "second start line".into() }),
            _ if head.is_none() => return Err(LogError::MissingStart),
            LogLine::Step(e) => events.push(e),
            LogLine::Result(r) => reported = Some(r),
        }
    }
    let (start, weights, cell_size, visit_radius) = head.ok_or(LogError::MissingStart)?;
    let mut log = EpisodeLog { start, weights, cell_size, visit_radius, events, result: reported.clone().unwrap_or_else(dummy_result) };
    if reported.is_none() {
        log.result = rescore(&log);
    }
    Ok(LoadedLog { log, reported })
}

fn dummy_result() -> EpisodeResult {
    EpisodeResult {
        recall: 0.0,
        precision: 0.0,
        collisions: 0,
        actions: 0,
        limit: 0,
        score: 0.0,
        explored_m2: 0.0,
        found: 0,
        n_targets: 0,
        attempts: 0,
        successes: 0,
    }
}
