//! Sockets, the session registry and one actor task per session.

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use log::{debug, info, warn};
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio::time::{sleep_until, Instant};
use tokio_tungstenite::tungstenite::Message;

use spotlight_core::wire::WireMessage;
use spotlight_core::{GestureTracker, MetricFrame, Role, SessionConfig, SpotlightDecision};

use crate::session::{ConnId, Outbound, SessionCore, SessionStats};

/// Everything a finished session leaves behind.
#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub session: String,
    pub config: SessionConfig,
    pub decisions: Vec<SpotlightDecision>,
    /// Present when the server records frames.
    pub frames: Option<Vec<MetricFrame>>,
    pub stats: SessionStats,
}

pub type EndHook = Arc<dyn Fn(SessionRecord) + Send + Sync>;

/// Settings shared by every session the server creates.
#[derive(Clone)]
pub struct ServerConfig {
    /// Template for new sessions; the presenter id is replaced by whoever creates the session.
    pub session: SessionConfig,
    pub tracker: GestureTracker,
    pub record_frames: bool,
    pub on_end: Option<EndHook>,
}

impl ServerConfig {
    pub fn new(session: SessionConfig) -> Self {
        Self { session, tracker: GestureTracker::shipped(), record_frames: false, on_end: None }
    }
}

impl std::fmt::Debug for ServerConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerConfig")
            .field("session", &self.session)
            .field("record_frames", &self.record_frames)
            .field("on_end", &self.on_end.is_some())
            .finish_non_exhaustive()
    }
}

type Outbox = mpsc::UnboundedSender<WireMessage>;

enum Event {
    Join { conn: ConnId, participant: String, role: Role, outbox: Outbox, joined: oneshot::Sender<bool> },
    Message { conn: ConnId, msg: WireMessage },
    Disconnect { conn: ConnId },
    Stats { reply: oneshot::Sender<SessionStats> },
}

type Registry = Arc<Mutex<HashMap<String, mpsc::UnboundedSender<Event>>>>;

struct Shared {
    config: ServerConfig,
    sessions: Registry,
    next_conn: AtomicU64,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    /// Fails if the address is unavailable.
    pub async fn bind(addr: impl ToSocketAddrs, config: ServerConfig) -> io::Result<Self> {
        config.session.validate().map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        let listener = TcpListener::bind(addr).await?;
        Ok(Self {
            listener,
            shared: Arc::new(Shared { config, sessions: Registry::default(), next_conn: AtomicU64::new(1) }),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever.
    pub async fn run(self) -> io::Result<()> {
        loop {
            let (stream, peer) = self.listener.accept().await?;
            let _ = stream.set_nodelay(true);
            let conn = self.shared.next_conn.fetch_add(1, Ordering::Relaxed);
            debug!("connection {conn} from {peer}");
            tokio::spawn(connection(stream, conn, self.shared.clone()));
        }
    }

    /// Runs the accept loop on a background task.
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let sessions = self.shared.sessions.clone();
        let task = tokio::spawn(async move {
            if let Err(e) = self.run().await {
                warn!("accept loop stopped: {e}");
            }
        });
        Ok(ServerHandle { addr, sessions, task })
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    sessions: Registry,
    task: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}", self.addr)
    }

    /// Current counters of a live session.
    pub async fn stats(&self, session: &str) -> Option<SessionStats> {
        let tx = self.sessions.lock().unwrap().get(session).cloned()?;
        let (reply, rx) = oneshot::channel();
        tx.send(Event::Stats { reply }).ok()?;
        rx.await.ok()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn shutdown(self) {
        self.task.abort();
    }
}

async fn connection(stream: TcpStream, conn: ConnId, shared: Arc<Shared>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            debug!("connection {conn}: handshake failed: {e}");
            return;
        }
    };
    let (mut sink, mut stream) = ws.split();
    let (outbox, mut outgoing) = mpsc::unbounded_channel::<WireMessage>();
    let writer = tokio::spawn(async move {
        while let Some(msg) = outgoing.recv().await {
            if sink.send(Message::text(msg.encode())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let mut session: Option<mpsc::UnboundedSender<Event>> = None;
    while let Some(frame) = stream.next().await {
        let text = match frame {
            Ok(Message::Text(t)) => t,
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(Message::Binary(_)) => {
                let _ = outbox.send(WireMessage::error("malformed", "binary frames are not accepted"));
                continue;
            }
            Ok(_) => continue,
        };
        let msg = match WireMessage::decode(text.as_str()) {
            Ok(m) => m,
            Err(e) => {
                let _ = outbox.send(WireMessage::error(e.code(), e.to_string()));
                continue;
            }
        };
        match (&session, msg) {
            (Some(tx), msg) => {
                if tx.send(Event::Message { conn, msg }).is_err() {
                    let _ = outbox.send(WireMessage::error("session_ended", "session has ended"));
                }
            }
            (None, WireMessage::Join { session: id, participant, role }) => {
                let Some(tx) = lookup_or_create(&shared, &id, &participant, role) else {
                    let _ = outbox.send(WireMessage::error("no_session", format!("no session `{id}`; a presenter must join first")));
                    continue;
                };
                let (joined, ok) = oneshot::channel();
                let event = Event::Join { conn, participant, role, outbox: outbox.clone(), joined };
                if tx.send(event).is_err() {
                    let _ = outbox.send(WireMessage::error("session_ended", format!("session `{id}` has ended")));
                    continue;
                }
                if ok.await.unwrap_or(false) {
                    session = Some(tx);
                }
            }
            (None, msg) => {
                let _ = outbox.send(WireMessage::error("not_joined", format!("send join before `{}`", msg.type_name())));
            }
        }
    }
    if let Some(tx) = session {
        let _ = tx.send(Event::Disconnect { conn });
    }
    drop(outbox);
    let _ = writer.await;
    debug!("connection {conn} closed");
}

fn lookup_or_create(
    shared: &Arc<Shared>,
    id: &str,
    participant: &str,
    role: Role,
) -> Option<mpsc::UnboundedSender<Event>> {
    let mut sessions = shared.sessions.lock().unwrap();
    if let Some(tx) = sessions.get(id) {
        if !tx.is_closed() {
            return Some(tx.clone());
        }
    }
    if role != Role::Presenter {
        return None;
    }
    let mut config = shared.config.session.clone();
    config.presenter_id = participant.to_string();
    let mut core = SessionCore::new(id, config, shared.config.tracker.clone()).ok()?;
    if shared.config.record_frames {
        core.record_frames();
    }
    let (tx, rx) = mpsc::unbounded_channel();
    sessions.insert(id.to_string(), tx.clone());
    info!("session {id} created by presenter {participant}");
    tokio::spawn(session_actor(core, rx, shared.sessions.clone(), shared.config.on_end.clone()));
    Some(tx)
}

/// The single serializer of one session. Ticks take priority over queued
/// events so a busy queue cannot delay a decision.
async fn session_actor(
    mut core: SessionCore,
    mut events: mpsc::UnboundedReceiver<Event>,
    registry: Registry,
    on_end: Option<EndHook>,
) {
    let window = Duration::from_millis(core.config().window_ms);
    let started_at = Instant::now();
    let mut k: u32 = 1;
    let mut outboxes: HashMap<ConnId, Outbox> = HashMap::new();
    let mut decisions = Vec::new();

    let deliver = |outboxes: &HashMap<ConnId, Outbox>, out: Vec<Outbound>| {
        for o in out {
            if let Some(tx) = outboxes.get(&o.to) {
                let _ = tx.send(o.msg);
            }
        }
    };

    loop {
        let ended = core.is_ended();
        tokio::select! {
            biased;
            _ = sleep_until(started_at + window * k), if !ended => {
                let (decision, out) = core.tick();
                debug!("session {}: window {} -> {:?}", core.id(), decision.window_index, decision.participant);
                decisions.push(decision);
                deliver(&outboxes, out);
                k += 1;
            }
            event = events.recv() => {
                let Some(event) = event else { break };
                match event {
                    Event::Join { conn, participant, role, outbox, joined } => {
                        let (out, ok) = core.handle_join(conn, &participant, role);
                        if ok {
                            outboxes.insert(conn, outbox);
                            deliver(&outboxes, out);
                        } else {
                            for o in out {
                                let _ = outbox.send(o.msg);
                            }
                        }
                        let _ = joined.send(ok);
                        if !core.has_connections() {
                            break;
                        }
                    }
                    Event::Message { conn, msg } => {
                        let ending = matches!(msg, WireMessage::End) && !core.is_ended();
                        let out = core.handle_message(conn, &msg);
                        if ending && core.is_ended() {
                            // the open window is closed before the acknowledgement
                            let (decision, tick_out) = core.tick();
                            decisions.push(decision);
                            deliver(&outboxes, tick_out);
                        }
                        deliver(&outboxes, out);
                    }
                    Event::Disconnect { conn } => {
                        core.disconnect(conn);
                        outboxes.remove(&conn);
                        if !core.has_connections() {
                            break;
                        }
                    }
                    Event::Stats { reply } => {
                        let _ = reply.send(core.stats());
                    }
                }
            }
        }
    }

    events.close();
    {
        let mut sessions = registry.lock().unwrap();
        // a newer session may already have taken the id
        if sessions.get(core.id()).is_some_and(|tx| tx.is_closed()) {
            sessions.remove(core.id());
        }
    }
    info!("session {} closed after {} windows", core.id(), decisions.len());
    if let Some(hook) = on_end {
        hook(SessionRecord {
            session: core.id().to_string(),
            config: core.config().clone(),
            decisions,
            frames: core.recorded_frames().map(<[_]>::to_vec),
            stats: core.stats(),
        });
    }
}
