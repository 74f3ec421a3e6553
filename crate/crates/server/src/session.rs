//! Per-session protocol logic, free of I/O.
//!
//! [`SessionCore`] consumes one event at a time and returns the messages to
//! send, addressed by connection id. The async layer feeds it from a single
//! queue per session, so every effect happens in one total order.

use std::collections::BTreeMap;

use log::{debug, info};

use spotlight_core::affect::validate_profile;
use spotlight_core::wire::{ConfigMsg, MetricsMsg, SpotlightMsg, WireMessage};
use spotlight_core::{
    ControlCommand, ControlError, GestureTracker, MetricFrame, Role, SessionConfig, SpotlightDecision,
    SpotlightEngine,
};

pub type ConnId = u64;

/// A message addressed to one connection.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: ConnId,
    pub msg: WireMessage,
}

fn reply(to: ConnId, msg: WireMessage) -> Vec<Outbound> {
    vec![Outbound { to, msg }]
}

fn error(to: ConnId, code: &str, detail: impl Into<String>) -> Vec<Outbound> {
    reply(to, WireMessage::error(code, detail))
}

#[derive(Debug, Clone, PartialEq)]
struct Member {
    role: Role,
    conn: Option<ConnId>,
}

/// Counters exposed for monitoring and tests.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SessionStats {
    pub frames_accepted: u64,
    pub frames_rejected: u64,
    /// Frames from presenters or consoles, dropped without reply.
    pub frames_dropped: u64,
    pub windows_closed: u64,
    /// Sum of every participant's accumulated score, closed windows plus the open one.
    pub score_total: f64,
}

#[derive(Debug)]
pub struct SessionCore {
    id: String,
    engine: SpotlightEngine,
    tracker: GestureTracker,
    roster: BTreeMap<String, Member>,
    conns: BTreeMap<ConnId, String>,
    ended: bool,
    stats: SessionStats,
    closed_score: f64,
    recorded: Option<Vec<MetricFrame>>,
}

impl SessionCore {
    /// A session whose presenter is `config.presenter_id`; nobody has joined yet.
    pub fn new(id: impl Into<String>, config: SessionConfig, tracker: GestureTracker) -> Result<Self, String> {
        let engine = SpotlightEngine::new(config).map_err(|e| e.to_string())?;
        Ok(Self {
            id: id.into(),
            engine,
            tracker,
            roster: BTreeMap::new(),
            conns: BTreeMap::new(),
            ended: false,
            stats: SessionStats::default(),
            closed_score: 0.0,
            recorded: None,
        })
    }

    /// Keep every accepted frame (with its client timestamp) for trace export.
    pub fn record_frames(&mut self) {
        self.recorded.get_or_insert_with(Vec::new);
    }

    pub fn recorded_frames(&self) -> Option<&[MetricFrame]> {
        self.recorded.as_deref()
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn engine(&self) -> &SpotlightEngine {
        &self.engine
    }

    pub fn config(&self) -> &SessionConfig {
        self.engine.config()
    }

    pub fn is_ended(&self) -> bool {
        self.ended
    }

    pub fn has_connections(&self) -> bool {
        !self.conns.is_empty()
    }

    pub fn role_of(&self, participant: &str) -> Option<Role> {
        self.roster.get(participant).map(|m| m.role)
    }

    pub fn stats(&self) -> SessionStats {
        let open: f64 = self.engine.scoreboard().iter().map(|(_, e)| e.score).sum();
        SessionStats { score_total: self.closed_score + open, ..self.stats }
    }

    fn config_snapshot(&self) -> WireMessage {
        let mut msg = ConfigMsg::snapshot(self.engine.config(), Some(self.engine.state()));
        msg.profile = self.engine.upcoming_profile().to_map();
        WireMessage::Config(msg)
    }

    /// Connections of the presenter and all consoles.
    fn control_side(&self) -> impl Iterator<Item = ConnId> + '_ {
        self.roster
            .values()
            .filter(|m| matches!(m.role, Role::Presenter | Role::Console))
            .filter_map(|m| m.conn)
    }

    fn consoles(&self) -> impl Iterator<Item = ConnId> + '_ {
        self.roster.values().filter(|m| m.role == Role::Console).filter_map(|m| m.conn)
    }

    /// Returns the replies and whether `conn` is now bound to `participant`.
    pub fn handle_join(&mut self, conn: ConnId, participant: &str, role: Role) -> (Vec<Outbound>, bool) {
        if self.ended {
            return (error(conn, "session_ended", format!("session `{}` has ended", self.id)), false);
        }
        if participant.is_empty() {
            return (error(conn, "malformed", "participant id is empty"), false);
        }
        if self.conns.contains_key(&conn) {
            return (error(conn, "already_joined", "connection already joined this session"), false);
        }
        let presenter = self.engine.config().presenter_id.clone();
        match self.roster.get(participant) {
            Some(m) if m.conn.is_some() || m.role != role => {
                return (error(conn, "duplicate_id", format!("`{participant}` is already in the session")), false);
            }
            _ => {}
        }
        if role == Role::Presenter && participant != presenter {
            return (error(conn, "second_presenter", format!("session already has presenter `{presenter}`")), false);
        }
        if role != Role::Presenter && participant == presenter {
            return (error(conn, "duplicate_id", format!("`{participant}` is the presenter")), false);
        }

        self.roster.insert(participant.to_string(), Member { role, conn: Some(conn) });
        self.conns.insert(conn, participant.to_string());
        if role == Role::Audience {
            self.engine.register(participant);
        }
        info!("session {}: {participant} joined as {role:?}", self.id);
        let mut out = reply(conn, WireMessage::ack("join"));
        if matches!(role, Role::Console | Role::Presenter) {
            out.push(Outbound { to: conn, msg: self.config_snapshot() });
        }
        (out, true)
    }

    pub fn handle_metrics(&mut self, conn: ConnId, msg: &MetricsMsg) -> Vec<Outbound> {
        let Some(sender) = self.conns.get(&conn) else {
            return error(conn, "not_joined", "join a session before sending metrics");
        };
        if self.ended {
            self.stats.frames_rejected += 1;
            return error(conn, "session_ended", "session has ended");
        }
        let role = self.roster[sender].role;
        if role != Role::Audience {
            self.stats.frames_dropped += 1;
            return Vec::new();
        }
        if msg.participant != *sender {
            self.stats.frames_rejected += 1;
            return error(conn, "participant_mismatch", format!("connection is joined as `{sender}`"));
        }
        let frame = match msg.to_frame() {
            Ok(f) => f,
            Err(e) => {
                self.stats.frames_rejected += 1;
                return error(conn, e.code(), e.to_string());
            }
        };
        let gesture = self.tracker.observe(&frame);
        self.engine.ingest(&frame, &gesture);
        self.stats.frames_accepted += 1;
        if let Some(rec) = &mut self.recorded {
            rec.push(frame);
        }
        Vec::new()
    }

    pub fn handle_control(&mut self, conn: ConnId, msg: &WireMessage) -> Vec<Outbound> {
        let Some(sender) = self.conns.get(&conn) else {
            return error(conn, "not_joined", "join a session before sending controls");
        };
        let role = self.roster[sender].role;
        if role == Role::Audience {
            return error(conn, "forbidden", "audience members cannot steer the session");
        }
        if self.ended {
            return error(conn, "session_ended", "session has ended");
        }
        let command = match msg {
            WireMessage::SetWeights { profile } => match validate_profile(profile.iter().map(|(k, v)| (k, *v))) {
                Ok(v) => ControlCommand::SetWeights(v.profile),
                Err(e) => return error(conn, "invalid_profile", e.to_string()),
            },
            WireMessage::Pin { participant } => ControlCommand::Pin(participant.clone()),
            WireMessage::Unpin => ControlCommand::Unpin,
            WireMessage::Pause => ControlCommand::Pause,
            WireMessage::Resume => ControlCommand::Resume,
            WireMessage::End => {
                if role != Role::Presenter {
                    return error(conn, "forbidden", "only the presenter can end the session");
                }
                self.ended = true;
                info!("session {} ended by presenter", self.id);
                return reply(conn, WireMessage::ack("end"));
            }
            other => return error(conn, "malformed", format!("`{}` is not a control message", other.type_name())),
        };
        if let Err(e) = self.engine.apply_control(command) {
            let code = match e {
                ControlError::PinPresenter => "pin_presenter",
                ControlError::UnknownParticipant(_) => "unknown_participant",
            };
            return error(conn, code, e.to_string());
        }
        debug!("session {}: control {} applied", self.id, msg.type_name());
        let mut out = reply(conn, WireMessage::ack(msg.type_name()));
        let config = self.config_snapshot();
        let mut targets: Vec<ConnId> = self.consoles().collect();
        if role == Role::Presenter {
            targets.push(conn);
        }
        out.extend(targets.into_iter().map(|to| Outbound { to, msg: config.clone() }));
        out
    }

    /// Closes the open window and addresses the decision and the personal notice.
    pub fn tick(&mut self) -> (SpotlightDecision, Vec<Outbound>) {
        self.closed_score += self.engine.scoreboard().iter().map(|(_, e)| e.score).sum::<f64>();
        let decision = self.engine.close_window();
        self.stats.windows_closed += 1;
        let msg = WireMessage::Spotlight(SpotlightMsg::from_decision(&decision));
        let mut out: Vec<Outbound> = self.control_side().map(|to| Outbound { to, msg: msg.clone() }).collect();
        if let Some(to) = decision
            .participant
            .as_deref()
            .and_then(|p| self.roster.get(p))
            .and_then(|m| m.conn)
        {
            out.push(Outbound {
                to,
                msg: WireMessage::Notice { spotlighted: true, window: decision.window_index },
            });
        }
        (decision, out)
    }

    /// The participant stays on the roster; only the connection binding goes.
    pub fn disconnect(&mut self, conn: ConnId) {
        if let Some(p) = self.conns.remove(&conn) {
            if let Some(m) = self.roster.get_mut(&p) {
                m.conn = None;
            }
            debug!("session {}: {p} disconnected", self.id);
        }
    }

    /// Routes a decoded message from a joined connection.
    pub fn handle_message(&mut self, conn: ConnId, msg: &WireMessage) -> Vec<Outbound> {
        match msg {
            WireMessage::Metrics(m) => self.handle_metrics(conn, m),
            WireMessage::SetWeights { .. }
            | WireMessage::Pin { .. }
            | WireMessage::Unpin
            | WireMessage::Pause
            | WireMessage::Resume
            | WireMessage::End => self.handle_control(conn, msg),
            WireMessage::Join { .. } => error(conn, "already_joined", "connection already joined a session"),
            other => error(conn, "malformed", format!("clients do not send `{}`", other.type_name())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use spotlight_core::affect::{metric_values, score_frame};
    use spotlight_core::{ExpressionVector, HeadPoseSample, Reason, WeightProfile};

    const P: ConnId = 1;
    const C: ConnId = 2;

    fn session() -> SessionCore {
        let mut s = SessionCore::new("s", SessionConfig::new("pres"), GestureTracker::shipped()).unwrap();
        assert!(s.handle_join(P, "pres", Role::Presenter).1);
        assert!(s.handle_join(C, "console", Role::Console).1);
        s
    }

    fn metrics(id: &str, t_ms: u64, brow: f64) -> MetricsMsg {
        let mut e = ExpressionVector::zeros();
        e.brow_furrow = brow;
        MetricsMsg::from_frame(&MetricFrame::with_face(id, t_ms, e, HeadPoseSample { yaw_deg: 0.0, roll_deg: 0.0, y: 0.5 }))
    }

    fn codes(out: &[Outbound]) -> Vec<(ConnId, String)> {
        out.iter()
            .map(|o| {
                let tag = match &o.msg {
                    WireMessage::Error { code, .. } => format!("error:{code}"),
                    WireMessage::Ack { of } => format!("ack:{of}"),
                    m => m.type_name().to_string(),
                };
                (o.to, tag)
            })
            .collect()
    }

    #[test]
    fn joins() {
        let mut s = SessionCore::new("s", SessionConfig::new("pres"), GestureTracker::shipped()).unwrap();
        let (out, ok) = s.handle_join(1, "pres", Role::Presenter);
        assert!(ok);
        assert_eq!(codes(&out), [(1, "ack:join".into()), (1, "config".into())]);
        let (out, ok) = s.handle_join(2, "a", Role::Audience);
        assert!(ok);
        assert_eq!(codes(&out), [(2, "ack:join".into())]);
        assert!(s.engine().is_registered("a"));

        let (out, ok) = s.handle_join(3, "a", Role::Audience);
        assert!(!ok);
        assert_eq!(codes(&out), [(3, "error:duplicate_id".into())]);
        let (out, _) = s.handle_join(4, "other", Role::Presenter);
        assert_eq!(codes(&out), [(4, "error:second_presenter".into())]);
        let (out, _) = s.handle_join(5, "pres", Role::Audience);
        assert_eq!(codes(&out), [(5, "error:duplicate_id".into())]);

        let (out, ok) = s.handle_join(6, "con", Role::Console);
        assert!(ok);
        assert_eq!(codes(&out), [(6, "ack:join".into()), (6, "config".into())]);
        assert!(!s.engine().is_registered("con"));
    }

    #[test]
    fn rejoin_after_disconnect() {
        let mut s = session();
        assert!(s.handle_join(3, "a", Role::Audience).1);
        s.disconnect(3);
        assert_eq!(s.role_of("a"), Some(Role::Audience));
        assert!(s.handle_join(4, "a", Role::Audience).1);
    }

    #[test]
    fn valid_frame_adds_its_score() {
        let mut s = session();
        s.handle_join(3, "a", Role::Audience);
        let m = metrics("a", 0, 0.5);
        assert!(s.handle_metrics(3, &m).is_empty());
        let frame = m.to_frame().unwrap();
        let expected = score_frame(&frame, &GestureTracker::shipped().observe(&frame), &WeightProfile::shipped_default());
        assert_eq!(s.engine().scoreboard().get("a").unwrap().score, expected);
        assert_eq!(s.stats().frames_accepted, 1);
    }

    #[test]
    fn frame_rejections() {
        let mut s = session();
        assert_eq!(codes(&s.handle_metrics(9, &metrics("a", 0, 0.1))), [(9, "error:not_joined".into())]);
        s.handle_join(3, "a", Role::Audience);
        let mut bad = metrics("a", 0, 0.1);
        bad.head.as_mut().unwrap().yaw_deg = 200.0;
        assert_eq!(codes(&s.handle_metrics(3, &bad)), [(3, "error:out_of_range".into())]);
        assert_eq!(codes(&s.handle_metrics(3, &metrics("b", 0, 0.1))), [(3, "error:participant_mismatch".into())]);
        // presenter and console frames are dropped silently
        assert!(s.handle_metrics(P, &metrics("pres", 0, 1.0)).is_empty());
        assert!(s.handle_metrics(C, &metrics("console", 0, 1.0)).is_empty());
        assert_eq!(s.engine().scoreboard().len(), 1);
        let st = s.stats();
        assert_eq!((st.frames_accepted, st.frames_rejected, st.frames_dropped), (0, 2, 2));

        assert_eq!(codes(&s.handle_control(P, &WireMessage::End)), [(P, "ack:end".into())]);
        assert_eq!(codes(&s.handle_metrics(3, &metrics("a", 1, 0.1))), [(3, "error:session_ended".into())]);
        let (out, ok) = s.handle_join(7, "late", Role::Audience);
        assert!(!ok);
        assert_eq!(codes(&out), [(7, "error:session_ended".into())]);
    }

    #[test]
    fn tick_broadcasts_and_notifies() {
        let mut s = session();
        s.handle_join(3, "a", Role::Audience);
        s.handle_join(4, "b", Role::Audience);
        s.handle_metrics(3, &metrics("a", 0, 0.9));
        s.handle_metrics(4, &metrics("b", 0, 0.1));
        let (d, out) = s.tick();
        assert_eq!(d.participant.as_deref(), Some("a"));
        assert_eq!(
            codes(&out),
            [(C, "spotlight".into()), (P, "spotlight".into()), (3, "notice".into())]
        );
        assert_eq!(out[2].msg, WireMessage::Notice { spotlighted: true, window: 0 });
        let (d, out) = s.tick();
        assert_eq!(d.participant.as_deref(), Some("b"));
        assert_eq!(out.iter().filter(|o| o.to == 3).count(), 0);
        assert_eq!(out.iter().filter(|o| o.to == 4).count(), 1);
    }

    #[test]
    fn controls() {
        let mut s = session();
        s.handle_join(3, "a", Role::Audience);
        s.handle_join(4, "b", Role::Audience);
        assert_eq!(codes(&s.handle_control(3, &WireMessage::Pause)), [(3, "error:forbidden".into())]);
        assert_eq!(
            codes(&s.handle_control(C, &WireMessage::Pin { participant: "zed".into() })),
            [(C, "error:unknown_participant".into())]
        );
        assert_eq!(
            codes(&s.handle_control(C, &WireMessage::Pin { participant: "pres".into() })),
            [(C, "error:pin_presenter".into())]
        );
        let bad = WireMessage::SetWeights { profile: [("joy".to_string(), 1.0)].into() };
        assert_eq!(codes(&s.handle_control(C, &bad)), [(C, "error:invalid_profile".into())]);
        assert_eq!(codes(&s.handle_control(C, &WireMessage::End)), [(C, "error:forbidden".into())]);

        let mut profile = WeightProfile::shipped_default().to_map();
        profile.insert("happiness".into(), 0.9);
        let out = s.handle_control(C, &WireMessage::SetWeights { profile: profile.clone() });
        assert_eq!(codes(&out), [(C, "ack:set_weights".into()), (C, "config".into())]);
        let WireMessage::Config(cfg) = &out[1].msg else { panic!() };
        assert_eq!(cfg.profile, profile);

        let out = s.handle_control(P, &WireMessage::Pause);
        assert_eq!(codes(&out), [(P, "ack:pause".into()), (C, "config".into()), (P, "config".into())]);
        for _ in 0..2 {
            let (d, _) = s.tick();
            assert_eq!((d.participant, d.reason), (None, Reason::Paused));
        }
        s.handle_control(C, &WireMessage::Resume);
        let (d, _) = s.tick();
        assert!(d.participant.is_some());
    }

    #[test]
    fn interleaved_streams_keep_totals() {
        let mut s = session();
        let ids: Vec<String> = (0..8).map(|i| format!("m{i}")).collect();
        for (i, id) in ids.iter().enumerate() {
            s.handle_join(10 + i as ConnId, id, Role::Audience);
        }
        let mut rng = spotlight_core::SplitMix64::new(5);
        let mut client_trackers = GestureTracker::shipped();
        let mut expected = 0.0;
        let mut t = [0u64; 8];
        for step in 0..4000 {
            let who = rng.pick_index(8);
            t[who] += 66;
            let y = 0.5 + 0.02 * ((t[who] as f64) / 100.0).sin();
            let mut e = ExpressionVector::zeros();
            e.happiness = (rng.next_u64() % 100) as f64 / 100.0;
            let frame = MetricFrame::with_face(ids[who].clone(), t[who], e, HeadPoseSample { yaw_deg: 1.0, roll_deg: 0.0, y });
            let g = client_trackers.observe(&frame);
            let values = metric_values(&frame, &g).unwrap();
            expected += WeightProfile::shipped_default()
                .weights()
                .iter()
                .zip(values)
                .map(|(w, v)| w * v)
                .sum::<f64>();
            s.handle_metrics(10 + who as ConnId, &MetricsMsg::from_frame(&frame));
            if step % 500 == 499 {
                s.tick();
            }
        }
        let st = s.stats();
        assert_eq!(st.frames_accepted, 4000);
        assert!((st.score_total - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn recording_keeps_client_timestamps() {
        let mut s = session();
        s.record_frames();
        s.handle_join(3, "a", Role::Audience);
        s.handle_metrics(3, &metrics("a", 12_345, 0.2));
        assert_eq!(s.recorded_frames().unwrap()[0].t_ms, 12_345);
    }
}
