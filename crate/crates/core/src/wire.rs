//! JSON wire documents shared by the server, trace files and configuration files.
//!
//! Every message is a single-line JSON object with a `type` tag. Field order
//! in the structs below is the canonical encoding order; maps (profiles,
//! breakdowns) encode with sorted keys.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{
    validate_profile, ExpressionVector, FrameError, HeadPoseSample, MetricFrame, MetricKey, ProfileError,
    ValidatedProfile, WeightProfile,
};
use crate::engine::{Normalization, Policy, Reason, SessionConfig, SpotlightDecision, SpotlightState};
use crate::gesture::{DetectorConfig, GestureAxis, HmmError, HmmParams};

#[derive(Debug, Error)]
pub enum WireError {
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Frame(#[from] FrameError),
    #[error("{0}")]
    Profile(#[from] ProfileError),
    #[error("{0}")]
    Hmm(#[from] HmmError),
    #[error("malformed message: {0}")]
    Malformed(String),
}

impl WireError {
    /// Short machine-readable code used in error replies.
    pub fn code(&self) -> &'static str {
        match self {
            WireError::Json(_) | WireError::Malformed(_) => "malformed",
            WireError::Frame(_) => "out_of_range",
            WireError::Profile(_) => "invalid_profile",
            WireError::Hmm(_) => "invalid_hmm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Audience,
    Presenter,
    Console,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExprDoc {
    pub happiness: f64,
    pub sadness: f64,
    pub surprise: f64,
    pub neutral: f64,
    pub anger: f64,
    pub disgust: f64,
    pub fear: f64,
    pub brow_furrow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadDoc {
    pub yaw_deg: f64,
    pub roll_deg: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsMsg {
    pub participant: String,
    pub t_ms: u64,
    pub face: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<ExprDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<HeadDoc>,
}

impl MetricsMsg {
    pub fn from_frame(frame: &MetricFrame<f64>) -> Self {
        let (expr, head) = match &frame.face {
            Some(f) => {
                let e = &f.expressions;
                (
                    Some(ExprDoc {
                        happiness: e.happiness,
                        sadness: e.sadness,
                        surprise: e.surprise,
                        neutral: e.neutral,
                        anger: e.anger,
                        disgust: e.disgust,
                        fear: e.fear,
                        brow_furrow: e.brow_furrow,
                    }),
                    Some(HeadDoc { yaw_deg: f.head.yaw_deg, roll_deg: f.head.roll_deg, y: f.head.y }),
                )
            }
            None => (None, None),
        };
        Self {
            participant: frame.participant_id.clone(),
            t_ms: frame.t_ms,
            face: frame.face.is_some(),
            expr,
            head,
        }
    }

    /// Converts to a range-checked frame. `expr`/`head` are ignored when `face` is false.
    pub fn to_frame(&self) -> Result<MetricFrame<f64>, WireError> {
        let frame = if self.face {
            let (Some(e), Some(h)) = (&self.expr, &self.head) else {
                return Err(WireError::Malformed("face is true but expr or head is missing".into()));
            };
            MetricFrame::with_face(
                self.participant.clone(),
                self.t_ms,
                ExpressionVector {
                    happiness: e.happiness,
                    sadness: e.sadness,
                    surprise: e.surprise,
                    neutral: e.neutral,
                    anger: e.anger,
                    disgust: e.disgust,
                    fear: e.fear,
                    brow_furrow: e.brow_furrow,
                },
                HeadPoseSample { yaw_deg: h.yaw_deg, roll_deg: h.roll_deg, y: h.y },
            )
        } else {
            MetricFrame::no_face(self.participant.clone(), self.t_ms)
        };
        frame.validate()?;
        Ok(frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotlightMsg {
    pub window: u64,
    pub participant: Option<String>,
    pub score: f64,
    pub reason: Reason,
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub breakdown: BTreeMap<String, f64>,
}

impl SpotlightMsg {
    pub fn from_decision(d: &SpotlightDecision<f64>) -> Self {
        Self {
            window: d.window_index,
            participant: d.participant.clone(),
            score: d.score,
            reason: d.reason,
            t_start_ms: d.t_start_ms,
            t_end_ms: d.t_end_ms,
            breakdown: MetricKey::ALL
                .into_iter()
                .map(|k| (k.as_str().to_string(), d.breakdown[k.index()]))
                .collect(),
        }
    }

    /// Inverse of [`from_decision`](Self::from_decision); unknown breakdown keys are errors.
    pub fn to_decision(&self) -> Result<SpotlightDecision<f64>, WireError> {
        let mut breakdown = [0.0; MetricKey::COUNT];
        for (k, v) in &self.breakdown {
            let key: MetricKey = k.parse()?;
            breakdown[key.index()] = *v;
        }
        Ok(SpotlightDecision {
            window_index: self.window,
            participant: self.participant.clone(),
            score: self.score,
            breakdown,
            t_start_ms: self.t_start_ms,
            t_end_ms: self.t_end_ms,
            reason: self.reason,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigMsg {
    pub window_ms: u64,
    pub policy: Policy,
    pub profile: BTreeMap<String, f64>,
    pub paused: bool,
    pub pinned: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presenter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
}

impl ConfigMsg {
    /// Full snapshot including seed, presenter and normalization.
    pub fn snapshot(config: &SessionConfig<f64>, state: Option<&SpotlightState>) -> Self {
        Self {
            window_ms: config.window_ms,
            policy: config.policy,
            profile: config.profile.to_map(),
            paused: state.is_some_and(|s| s.paused),
            pinned: state.and_then(|s| s.pinned.clone()),
            seed: Some(config.seed),
            presenter: Some(config.presenter_id.clone()),
            normalization: Some(config.normalization),
        }
    }

    /// Rebuilds a session config; missing optional fields take their defaults.
    pub fn to_session_config(&self) -> Result<SessionConfig<f64>, WireError> {
        let presenter = self
            .presenter
            .clone()
            .ok_or_else(|| WireError::Malformed("config has no presenter".into()))?;
        let profile = validate_profile(self.profile.iter().map(|(k, v)| (k, *v)))?.profile;
        let config = SessionConfig {
            window_ms: self.window_ms,
            policy: self.policy,
            seed: self.seed.unwrap_or(0),
            presenter_id: presenter,
            profile,
            normalization: self.normalization.unwrap_or_default(),
        };
        config.validate().map_err(|e| WireError::Malformed(e.to_string()))?;
        Ok(config)
    }
}

/// Every message type exchanged over a session connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Join {
        session: String,
        participant: String,
        role: Role,
    },
    Metrics(MetricsMsg),
    Spotlight(SpotlightMsg),
    Notice {
        spotlighted: bool,
        window: u64,
    },
    SetWeights {
        profile: BTreeMap<String, f64>,
    },
    Pin {
        participant: String,
    },
    Unpin,
    Pause,
    Resume,
    /// Presenter ends the session.
    End,
    Config(ConfigMsg),
    Ack {
        of: String,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl WireMessage {
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn decode(text: &str) -> Result<Self, WireError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn error(code: impl Into<String>, detail: impl Into<String>) -> Self {
        WireMessage::Error { code: code.into(), detail: detail.into() }
    }

    pub fn ack(of: impl Into<String>) -> Self {
        WireMessage::Ack { of: of.into() }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            WireMessage::Join { .. } => "join",
            WireMessage::Metrics(_) => "metrics",
            WireMessage::Spotlight(_) => "spotlight",
            WireMessage::Notice { .. } => "notice",
            WireMessage::SetWeights { .. } => "set_weights",
            WireMessage::Pin { .. } => "pin",
            WireMessage::Unpin => "unpin",
            WireMessage::Pause => "pause",
            WireMessage::Resume => "resume",
            WireMessage::End => "end",
            WireMessage::Config(_) => "config",
            WireMessage::Ack { .. } => "ack",
            WireMessage::Error { .. } => "error",
        }
    }
}

/// Parses a flat `{key: weight}` document.
pub fn parse_weights_doc(text: &str) -> Result<ValidatedProfile<f64>, WireError> {
    let map: BTreeMap<String, f64> = serde_json::from_str(text)?;
    Ok(validate_profile(map)?)
}

pub fn weights_doc(profile: &WeightProfile<f64>) -> String {
    serde_json::to_string(&profile.to_map()).expect("maps of floats serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmDoc {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<[f64; 3]>,
}

impl HmmDoc {
    pub fn from_params(p: &HmmParams<f64>) -> Self {
        Self {
            initial: p.initial().to_vec(),
            transition: p.transition().to_vec(),
            emission: p.emission().to_vec(),
        }
    }

    pub fn to_params(&self) -> Result<HmmParams<f64>, WireError> {
        Ok(HmmParams::new(self.initial.clone(), self.transition.clone(), self.emission.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorDoc {
    pub dead_zone: f64,
    pub window: usize,
    pub gain: f64,
    pub gesture: HmmDoc,
    pub null: HmmDoc,
}

impl DetectorDoc {
    pub fn from_config(c: &DetectorConfig<f64>) -> Self {
        Self {
            dead_zone: c.dead_zone,
            window: c.window,
            gain: c.gain,
            gesture: HmmDoc::from_params(&c.gesture),
            null: HmmDoc::from_params(&c.null),
        }
    }

    pub fn to_config(&self) -> Result<DetectorConfig<f64>, WireError> {
        let c = DetectorConfig {
            dead_zone: self.dead_zone,
            window: self.window,
            gain: self.gain,
            gesture: self.gesture.to_params()?,
            null: self.null.to_params()?,
        };
        c.validate()?;
        Ok(c)
    }
}

/// `{"nod": {...}, "shake": {...}}`; an absent axis keeps the shipped detector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GestureConfigDoc {
    #[serde(default)]
    pub nod: Option<DetectorDoc>,
    #[serde(default)]
    pub shake: Option<DetectorDoc>,
}

impl GestureConfigDoc {
    pub fn parse(text: &str) -> Result<(DetectorConfig<f64>, DetectorConfig<f64>), WireError> {
        let doc: GestureConfigDoc = serde_json::from_str(text)?;
        let nod = match &doc.nod {
            Some(d) => d.to_config()?,
            None => DetectorConfig::shipped(GestureAxis::Nod),
        };
        let shake = match &doc.shake {
            Some(d) => d.to_config()?,
            None => DetectorConfig::shipped(GestureAxis::Shake),
        };
        Ok((nod, shake))
    }
}
