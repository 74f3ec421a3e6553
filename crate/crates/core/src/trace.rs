//! `.ajsonl` metric traces: a header line followed by one metrics message per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{FrameError, MetricFrame};
use crate::engine::{run_session, EngineError, SessionConfig, SpotlightDecision};
use crate::gesture::GestureTracker;
use crate::wire::{ConfigMsg, MetricsMsg, SpotlightMsg, WireError, WireMessage};

pub const TRACE_VERSION: u32 = 1;
pub const TRACE_EXTENSION: &str = "ajsonl";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace is missing its header line")]
    MissingHeader,
    #[error("line 1: unsupported trace version {0}")]
    BadVersion(u32),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: WireError },
    #[error("line {line}: expected a metrics message, found `{found}`")]
    UnexpectedMessage { line: usize, found: &'static str },
    #[error("line {line}: t_ms {t_ms} goes back in time (previous {prev_ms})")]
    Regression { line: usize, t_ms: u64, prev_ms: u64 },
    #[error("line {line}: {source}")]
    Frame { line: usize, source: FrameError },
    #[error("frame {index} is out of order ({t_ms} ms after {prev_ms} ms)")]
    Unsorted { index: usize, t_ms: u64, prev_ms: u64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraceHeader {
    #[serde(rename = "type")]
    kind: String,
    version: u32,
    session: String,
    config: ConfigMsg,
}

const HEADER_TYPE: &str = "trace_header";

/// A parsed trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub session: String,
    pub config: SessionConfig<f64>,
    pub frames: Vec<MetricFrame<f64>>,
}

/// Writes the header and then one line per frame. Frames must be sorted by `t_ms`.
pub fn write_trace<W: Write>(
    frames: &[MetricFrame<f64>],
    session: &str,
    config: &SessionConfig<f64>,
    mut sink: W,
) -> Result<(), TraceError> {
    if let Some(i) = frames.windows(2).position(|w| w[1].t_ms < w[0].t_ms) {
        return Err(TraceError::Unsorted { index: i + 1, t_ms: frames[i + 1].t_ms, prev_ms: frames[i].t_ms });
    }
    let header = TraceHeader {
        kind: HEADER_TYPE.to_string(),
        version: TRACE_VERSION,
        session: session.to_string(),
        config: ConfigMsg::snapshot(config, None),
    };
    serde_json::to_writer(&mut sink, &header).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    for frame in frames {
        let line = WireMessage::Metrics(MetricsMsg::from_frame(frame)).encode();
        sink.write_all(line.as_bytes())?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

/// Parses and validates a trace. Errors name the 1-based line at fault.
/// Unknown fields are ignored; blank lines are skipped.
pub fn read_trace<R: BufRead>(source: R) -> Result<Trace, TraceError> {
    let mut lines = source.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (session, config) = loop {
        let Some((line, text)) = lines.next() else {
            return Err(TraceError::MissingHeader);
        };
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let header: TraceHeader = match serde_json::from_str(&text) {
            Ok(h) => h,
            Err(_) => return Err(TraceError::MissingHeader),
        };
        if header.kind != HEADER_TYPE {
            return Err(TraceError::MissingHeader);
        }
        if header.version != TRACE_VERSION {
            return Err(TraceError::BadVersion(header.version));
        }
        let config = header
            .config
            .to_session_config()
            .map_err(|source| TraceError::Parse { line, source })?;
        break (header.session, config);
    };

    let mut frames = Vec::new();
    let mut prev_ms = 0;
    for (line, text) in lines {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let msg = WireMessage::decode(&text).map_err(|source| TraceError::Parse { line, source })?;
        let WireMessage::Metrics(m) = msg else {
            return Err(TraceError::UnexpectedMessage { line, found: msg.type_name() });
        };
        let frame = m.to_frame().map_err(|source| match source {
            WireError::Frame(source) => TraceError::Frame { line, source },
            source => TraceError::Parse { line, source },
        })?;
        if frame.t_ms < prev_ms {
            return Err(TraceError::Regression { line, t_ms: frame.t_ms, prev_ms });
        }
        prev_ms = frame.t_ms;
        frames.push(frame);
    }
    Ok(Trace { session, config, frames })
}

/// Replays a trace straight into the engine, windowing on `t_ms`.
pub fn replay_engine(trace: &Trace, tracker: &mut GestureTracker<f64>) -> Result<Vec<SpotlightDecision<f64>>, TraceError> {
    let gestures = tracker.annotate(&trace.frames);
    let paired: Vec<_> = trace.frames.iter().cloned().zip(gestures).collect();
    Ok(run_session(&paired, &trace.config)?)
}

/// One spotlight message per line.
pub fn decision_log(decisions: &[SpotlightDecision<f64>]) -> String {
    let mut out = String::new();
    for d in decisions {
        out.push_str(&WireMessage::Spotlight(SpotlightMsg::from_decision(d)).encode());
        out.push('\n');
    }
    out
}
