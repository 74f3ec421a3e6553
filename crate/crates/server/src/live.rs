//! Streams recorded or generated frames through a real server.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{debug, info};
use tokio::sync::mpsc;
use tokio::time::{sleep_until, Instant};

use spotlight_core::trace::Trace;
use spotlight_core::wire::{MetricsMsg, WireMessage};
use spotlight_core::{MetricFrame, Role, SessionConfig, SpotlightDecision, WeightProfile};

use crate::client::{Client, ClientReceiver, ClientSender};
use crate::server::{Server, ServerConfig, SessionRecord};
use crate::session::SessionStats;
use crate::ServerError;

/// Pacing of a live stream relative to the frames' `t_ms`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Speed {
    /// Send as fast as the sockets accept.
    Max,
    /// `t_ms / factor` after the start; `real` is a factor of 1.
    Factor(f64),
}

impl Speed {
    pub const REAL: Speed = Speed::Factor(1.0);

    /// Where frame time `t_ms` lands on the wall clock, if paced.
    pub fn offset(&self, t_ms: u64) -> Option<Duration> {
        match self {
            Speed::Max => None,
            Speed::Factor(f) => Some(Duration::from_secs_f64(t_ms as f64 / 1000.0 / f)),
        }
    }
}

impl FromStr for Speed {
    type Err = ServerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Speed::REAL),
            "max" => Ok(Speed::Max),
            _ => s
                .strip_prefix('x')
                .and_then(|n| n.parse::<f64>().ok())
                .filter(|f| f.is_finite() && *f > 0.0)
                .map(Speed::Factor)
                .ok_or_else(|| ServerError::Speed(s.to_string())),
        }
    }
}

impl fmt::Display for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speed::Max => f.write_str("max"),
            Speed::Factor(x) if *x == 1.0 => f.write_str("real"),
            Speed::Factor(x) => write!(f, "x{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveOutcome {
    /// Decisions as received by the presenter connection.
    pub decisions: Vec<SpotlightDecision>,
    pub frames_sent: u64,
    /// Error replies received by the sending connections.
    pub frame_errors: u64,
    /// Notices received, per audience member.
    pub notices: BTreeMap<String, u64>,
    pub elapsed: Duration,
    /// Server-side counters, known only when the server ran in process.
    pub server_stats: Option<SessionStats>,
}

async fn count_replies(mut rx: ClientReceiver) -> (u64, u64) {
    let (mut errors, mut notices) = (0, 0);
    while let Ok(Some(msg)) = rx.recv().await {
        match msg {
            WireMessage::Error { code, detail } => {
                debug!("frame rejected: {code}: {detail}");
                errors += 1;
            }
            WireMessage::Notice { .. } => notices += 1,
            _ => {}
        }
    }
    (errors, notices)
}

async fn expect_ack(control: &mut mpsc::UnboundedReceiver<WireMessage>, of: &str) -> Result<(), ServerError> {
    while let Some(msg) = control.recv().await {
        match msg {
            WireMessage::Ack { of: got } if got == of => return Ok(()),
            WireMessage::Error { code, detail } => return Err(ServerError::Rejected { code, detail }),
            _ => continue,
        }
    }
    Err(ServerError::Closed)
}

/// Joins as `presenter` (creating the session), connects one audience socket
/// per distinct participant, sends `frames` in order at `speed`, then ends the
/// session. `profile`, if given, is sent as `set_weights` before any frame.
pub async fn stream_frames(
    url: &str,
    session: &str,
    presenter: &str,
    frames: &[MetricFrame],
    speed: Speed,
    profile: Option<&WeightProfile>,
) -> Result<LiveOutcome, ServerError> {
    let (mut ptx, mut prx) = Client::connect_and_join(url, session, presenter, Role::Presenter).await?.split();
    let decisions = Arc::new(Mutex::new(Vec::new()));
    let (control_tx, mut control) = mpsc::unbounded_channel();
    let collector = {
        let decisions = decisions.clone();
        tokio::spawn(async move {
            let mut errors = 0u64;
            while let Ok(Some(msg)) = prx.recv().await {
                match msg {
                    WireMessage::Spotlight(s) => decisions.lock().unwrap().push(s),
                    other => {
                        if matches!(other, WireMessage::Error { .. }) {
                            errors += 1;
                        }
                        let _ = control_tx.send(other);
                    }
                }
            }
            errors
        })
    };
    if let Some(p) = profile {
        ptx.send(&WireMessage::SetWeights { profile: p.to_map() }).await?;
        expect_ack(&mut control, "set_weights").await?;
    }

    let ids: BTreeSet<&str> = frames
        .iter()
        .map(|f| f.participant_id.as_str())
        .filter(|id| *id != presenter)
        .collect();
    let mut senders: BTreeMap<&str, ClientSender> = BTreeMap::new();
    let mut readers = Vec::new();
    for id in ids {
        let (tx, rx) = Client::connect_and_join(url, session, id, Role::Audience).await?.split();
        senders.insert(id, tx);
        readers.push((id.to_string(), tokio::spawn(count_replies(rx))));
    }

    let start = Instant::now();
    for frame in frames {
        if let Some(at) = speed.offset(frame.t_ms) {
            sleep_until(start + at).await;
        }
        let msg = WireMessage::Metrics(MetricsMsg::from_frame(frame));
        match senders.get_mut(frame.participant_id.as_str()) {
            Some(tx) => tx.send(&msg).await?,
            None => ptx.send(&msg).await?,
        }
    }
    // a completed close handshake means the server has queued every frame of that socket
    for tx in senders.values_mut() {
        tx.close().await?;
    }
    let mut frame_errors = 0;
    let mut notices = BTreeMap::new();
    for (id, reader) in readers {
        let (errors, n) = reader.await.map_err(|_| ServerError::Closed)?;
        frame_errors += errors;
        notices.insert(id, n);
    }

    ptx.send(&WireMessage::End).await?;
    expect_ack(&mut control, "end").await?;
    ptx.close().await?;
    frame_errors += collector.await.map_err(|_| ServerError::Closed)?;
    let elapsed = start.elapsed();

    let decisions = std::mem::take(&mut *decisions.lock().unwrap())
        .iter()
        .map(|m| m.to_decision())
        .collect::<Result<Vec<_>, _>>()?;
    info!("live stream of {} frames took {:.3} s", frames.len(), elapsed.as_secs_f64());
    Ok(LiveOutcome {
        decisions,
        frames_sent: frames.len() as u64,
        frame_errors,
        notices,
        elapsed,
        server_stats: None,
    })
}

/// Runs `frames` through a server started in process on a loopback port.
///
/// The window length is divided by the speed factor so decisions cover the
/// same stretch of frame time; at `max` it is left as configured.
pub async fn stream_in_process(
    session: &str,
    config: &SessionConfig,
    frames: &[MetricFrame],
    speed: Speed,
) -> Result<LiveOutcome, ServerError> {
    let mut server_session = config.clone();
    if let Speed::Factor(f) = speed {
        server_session.window_ms = ((config.window_ms as f64 / f).round() as u64).max(1);
    }
    let (done_tx, done_rx) = tokio::sync::oneshot::channel::<SessionRecord>();
    let done_tx = Mutex::new(Some(done_tx));
    let mut server_config = ServerConfig::new(server_session);
    server_config.on_end = Some(Arc::new(move |record| {
        if let Some(tx) = done_tx.lock().unwrap().take() {
            let _ = tx.send(record);
        }
    }));
    let server = Server::bind("127.0.0.1:0", server_config).await?;
    let handle = server.spawn()?;
    let outcome = stream_frames(&handle.url(), session, &config.presenter_id, frames, speed, None).await;
    let record = done_rx.await.ok();
    handle.shutdown();
    let mut outcome = outcome?;
    outcome.server_stats = record.map(|r| r.stats);
    Ok(outcome)
}

/// Live replay of a trace through an in-process server.
pub async fn replay_live(trace: &Trace, speed: Speed) -> Result<LiveOutcome, ServerError> {
    stream_in_process(&trace.session, &trace.config, &trace.frames, speed).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_parsing() {
        assert_eq!("real".parse::<Speed>().unwrap(), Speed::REAL);
        assert_eq!("max".parse::<Speed>().unwrap(), Speed::Max);
        assert_eq!("x4".parse::<Speed>().unwrap(), Speed::Factor(4.0));
        assert_eq!("x0.5".parse::<Speed>().unwrap(), Speed::Factor(0.5));
        for bad in ["", "x", "x0", "x-2", "4", "xinf", "fast"] {
            assert!(bad.parse::<Speed>().is_err(), "{bad}");
        }
        assert_eq!(Speed::Factor(4.0).to_string(), "x4");
        assert_eq!(Speed::REAL.to_string(), "real");
    }

    #[test]
    fn pacing_offsets() {
        assert_eq!(Speed::Max.offset(1000), None);
        assert_eq!(Speed::Factor(2.0).offset(3000), Some(Duration::from_millis(1500)));
    }
}
