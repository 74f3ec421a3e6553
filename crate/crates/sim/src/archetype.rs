//! Parameterized synthetic audience behaviours.

use serde::{Deserialize, Serialize};

use spotlight_core::ExpressionVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchetypeKind {
    /// Nods along, smiling a little while doing so.
    Nodder,
    Smiler,
    /// Furrows the brow and shakes the head.
    Confused,
    /// Neutral face, head still.
    Stoic,
    /// Drifts downwards slowly; never oscillates.
    Sleeper,
    CameraOff,
    /// Each episode is a nod, a smile or confusion, chosen at random.
    Mixed,
}

impl ArchetypeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchetypeKind::Nodder => "nodder",
            ArchetypeKind::Smiler => "smiler",
            ArchetypeKind::Confused => "confused",
            ArchetypeKind::Stoic => "stoic",
            ArchetypeKind::Sleeper => "sleeper",
            ArchetypeKind::CameraOff => "camera_off",
            ArchetypeKind::Mixed => "mixed",
        }
    }
}

/// What happens during one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeKind {
    Nod,
    Smile,
    Confusion,
    Droop,
}

/// Baseline expression confidences, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Baseline {
    pub happiness: f64,
    pub sadness: f64,
    pub surprise: f64,
    pub neutral: f64,
    pub anger: f64,
    pub disgust: f64,
    pub fear: f64,
    pub brow_furrow: f64,
}

impl Baseline {
    pub fn to_expressions(self) -> ExpressionVector {
        ExpressionVector {
            happiness: self.happiness,
            sadness: self.sadness,
            surprise: self.surprise,
            neutral: self.neutral,
            anger: self.anger,
            disgust: self.disgust,
            fear: self.fear,
            brow_furrow: self.brow_furrow,
        }
    }

    fn fields(&self) -> [f64; 8] {
        [
            self.happiness,
            self.sadness,
            self.surprise,
            self.neutral,
            self.anger,
            self.disgust,
            self.fear,
            self.brow_furrow,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeParams {
    /// Episodes per minute.
    pub event_rate: f64,
    pub episode_len_ms: u64,
    pub baseline: Baseline,
    /// Peak vertical displacement during a nod, normalized y.
    pub nod_amplitude: f64,
    /// Peak yaw during a shake, degrees.
    pub shake_amplitude_deg: f64,
    pub noise_std_y: f64,
    pub noise_std_deg: f64,
}

/// Optional per-participant overrides as they appear in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamOverrides {
    pub event_rate: Option<f64>,
    pub episode_len_ms: Option<u64>,
    pub baseline: Option<Baseline>,
    pub nod_amplitude: Option<f64>,
    pub shake_amplitude_deg: Option<f64>,
    pub noise_std_y: Option<f64>,
    pub noise_std_deg: Option<f64>,
    /// Sets both noise levels.
    pub noise_std: Option<f64>,
}

pub const DEFAULT_EVENT_RATE: f64 = 4.0;
pub const DEFAULT_EPISODE_LEN_MS: u64 = 2_000;
pub const DEFAULT_NOD_AMPLITUDE: f64 = 0.02;
pub const DEFAULT_SHAKE_AMPLITUDE_DEG: f64 = 6.0;
pub const DEFAULT_NOISE_STD_Y: f64 = 0.001;
pub const DEFAULT_NOISE_STD_DEG: f64 = 0.3;
/// Oscillation frequency of nods and shakes.
pub const GESTURE_HZ: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Archetype {
    pub kind: ArchetypeKind,
    pub params: ArchetypeParams,
}

impl Archetype {
    pub fn new(kind: ArchetypeKind) -> Self {
        let baseline = |happiness, brow_furrow, neutral, sadness| Baseline {
            happiness,
            brow_furrow,
            neutral,
            sadness,
            ..Baseline::default()
        };
        let (event_rate, episode_len_ms, base) = match kind {
            ArchetypeKind::Nodder => (DEFAULT_EVENT_RATE, DEFAULT_EPISODE_LEN_MS, baseline(0.2, 0.0, 0.5, 0.0)),
            ArchetypeKind::Smiler => (DEFAULT_EVENT_RATE, DEFAULT_EPISODE_LEN_MS, baseline(0.3, 0.0, 0.4, 0.0)),
            ArchetypeKind::Confused => (DEFAULT_EVENT_RATE, DEFAULT_EPISODE_LEN_MS, baseline(0.0, 0.2, 0.5, 0.0)),
            ArchetypeKind::Stoic => (0.0, DEFAULT_EPISODE_LEN_MS, baseline(0.0, 0.0, 0.9, 0.0)),
            ArchetypeKind::Sleeper => (2.0, 4_000, baseline(0.0, 0.0, 0.7, 0.2)),
            ArchetypeKind::CameraOff => (0.0, DEFAULT_EPISODE_LEN_MS, Baseline::default()),
            ArchetypeKind::Mixed => (DEFAULT_EVENT_RATE, DEFAULT_EPISODE_LEN_MS, baseline(0.1, 0.05, 0.6, 0.0)),
        };
        Self {
            kind,
            params: ArchetypeParams {
                event_rate,
                episode_len_ms,
                baseline: base,
                nod_amplitude: DEFAULT_NOD_AMPLITUDE,
                shake_amplitude_deg: DEFAULT_SHAKE_AMPLITUDE_DEG,
                noise_std_y: DEFAULT_NOISE_STD_Y,
                noise_std_deg: DEFAULT_NOISE_STD_DEG,
            },
        }
    }

    pub fn with_overrides(kind: ArchetypeKind, o: &ParamOverrides) -> Self {
        let mut a = Self::new(kind);
        let p = &mut a.params;
        if let Some(v) = o.event_rate {
            p.event_rate = v;
        }
        if let Some(v) = o.episode_len_ms {
            p.episode_len_ms = v;
        }
        if let Some(v) = o.baseline {
            p.baseline = v;
        }
        if let Some(v) = o.nod_amplitude {
            p.nod_amplitude = v;
        }
        if let Some(v) = o.shake_amplitude_deg {
            p.shake_amplitude_deg = v;
        }
        if let Some(v) = o.noise_std {
            p.noise_std_y = v;
            p.noise_std_deg = v;
        }
        if let Some(v) = o.noise_std_y {
            p.noise_std_y = v;
        }
        if let Some(v) = o.noise_std_deg {
            p.noise_std_deg = v;
        }
        a
    }

    pub fn validate(&self) -> Result<(), String> {
        let p = &self.params;
        let non_negative = [
            ("event_rate", p.event_rate),
            ("nod_amplitude", p.nod_amplitude),
            ("shake_amplitude_deg", p.shake_amplitude_deg),
            ("noise_std_y", p.noise_std_y),
            ("noise_std_deg", p.noise_std_deg),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if p.event_rate > 0.0 && p.episode_len_ms == 0 {
            return Err("episode_len_ms must be positive when episodes occur".into());
        }
        if p.baseline.fields().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("baseline confidences must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// Episode type for the given uniform draw in `[0, 1)`; `None` for archetypes without episodes.
    pub fn episode_kind(&self, draw: f64) -> Option<EpisodeKind> {
        match self.kind {
            ArchetypeKind::Nodder => Some(EpisodeKind::Nod),
            ArchetypeKind::Smiler => Some(EpisodeKind::Smile),
            ArchetypeKind::Confused => Some(EpisodeKind::Confusion),
            ArchetypeKind::Sleeper => Some(EpisodeKind::Droop),
            ArchetypeKind::Mixed => Some(if draw < 1.0 / 3.0 {
                EpisodeKind::Nod
            } else if draw < 2.0 / 3.0 {
                EpisodeKind::Smile
            } else {
                EpisodeKind::Confusion
            }),
            ArchetypeKind::Stoic | ArchetypeKind::CameraOff => None,
        }
    }
}
