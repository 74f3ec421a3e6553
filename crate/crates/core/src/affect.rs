//! Affect metric types and the per-frame weighted score.
//!
//! A [`MetricFrame`] is one analyzed video frame of one participant. Its
//! expression confidences and the participant's current head-gesture
//! probabilities are combined with a [`WeightProfile`] into a single
//! non-negative score, which the engine accumulates per window.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Metrics that carry a weight in the per-frame score.
///
/// Anger, disgust and fear are sensed (see [`ExpressionVector`]) but do not
/// take part in scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKey {
    Happiness,
    Sadness,
    Surprise,
    Neutral,
    BrowFurrow,
    HeadNod,
    HeadShake,
}

impl MetricKey {
    pub const COUNT: usize = 7;

    /// All keys in canonical order. Score summation follows this order.
    pub const ALL: [MetricKey; MetricKey::COUNT] = [
        MetricKey::Happiness,
        MetricKey::Sadness,
        MetricKey::Surprise,
        MetricKey::Neutral,
        MetricKey::BrowFurrow,
        MetricKey::HeadNod,
        MetricKey::HeadShake,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKey::Happiness => "happiness",
            MetricKey::Sadness => "sadness",
            MetricKey::Surprise => "surprise",
            MetricKey::Neutral => "neutral",
            MetricKey::BrowFurrow => "brow_furrow",
            MetricKey::HeadNod => "head_nod",
            MetricKey::HeadShake => "head_shake",
        }
    }
}

impl fmt::Display for MetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKey {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricKey::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ProfileError::UnknownKey(s.to_string()))
    }
}

/// Independent per-class expression confidences, each in `[0, 1]`.
///
/// The values do not need to sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExpressionVector<S> {
    pub happiness: S,
    pub sadness: S,
    pub surprise: S,
    pub neutral: S,
    pub anger: S,
    pub disgust: S,
    pub fear: S,
    /// Brow lowerer (AU4) confidence, used as the confusion signal.
    pub brow_furrow: S,
}

impl<S: Scalar> ExpressionVector<S> {
    pub fn zeros() -> Self {
        let z = S::zero();
        Self {
            happiness: z,
            sadness: z,
            surprise: z,
            neutral: z,
            anger: z,
            disgust: z,
            fear: z,
            brow_furrow: z,
        }
    }

    fn named(&self) -> [(&'static str, S); 8] {
        [
            ("happiness", self.happiness),
            ("sadness", self.sadness),
            ("surprise", self.surprise),
            ("neutral", self.neutral),
            ("anger", self.anger),
            ("disgust", self.disgust),
            ("fear", self.fear),
            ("brow_furrow", self.brow_furrow),
        ]
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        for (name, v) in self.named() {
            check_range(name, v, S::zero(), S::one())?;
        }
        Ok(())
    }

    /// Multiplies every confidence by `factor` without clamping.
    pub fn scaled(&self, factor: S) -> Self {
        Self {
            happiness: self.happiness * factor,
            sadness: self.sadness * factor,
            surprise: self.surprise * factor,
            neutral: self.neutral * factor,
            anger: self.anger * factor,
            disgust: self.disgust * factor,
            fear: self.fear * factor,
            brow_furrow: self.brow_furrow * factor,
        }
    }
}

/// Head orientation and vertical face position for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadPoseSample<S> {
    /// Left-right rotation in degrees, `[-90, 90]`.
    pub yaw_deg: S,
    /// Roll in degrees, `[-90, 90]`.
    pub roll_deg: S,
    /// Normalized vertical face-center position, `[0, 1]`, 0 at the top of the frame.
    pub y: S,
}

impl<S: Scalar> HeadPoseSample<S> {
    pub fn validate(&self) -> Result<(), FrameError> {
        let ninety = S::lit(90.0);
        check_range("yaw_deg", self.yaw_deg, -ninety, ninety)?;
        check_range("roll_deg", self.roll_deg, -ninety, ninety)?;
        check_range("y", self.y, S::zero(), S::one())
    }
}

/// What the analyzer saw when a face was found in the frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FaceObservation<S> {
    pub expressions: ExpressionVector<S>,
    pub head: HeadPoseSample<S>,
}

/// One timestamped sample of a participant's expressions and head pose.
///
/// `face` is `None` when no face was detected; expressions and head pose are
/// then absent together.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricFrame<S> {
    pub participant_id: String,
    /// Milliseconds since session start.
    pub t_ms: u64,
    pub face: Option<FaceObservation<S>>,
}

impl<S: Scalar> MetricFrame<S> {
    pub fn with_face(
        participant_id: impl Into<String>,
        t_ms: u64,
        expressions: ExpressionVector<S>,
        head: HeadPoseSample<S>,
    ) -> Self {
        Self {
            participant_id: participant_id.into(),
            t_ms,
            face: Some(FaceObservation { expressions, head }),
        }
    }

    pub fn no_face(participant_id: impl Into<String>, t_ms: u64) -> Self {
        Self {
            participant_id: participant_id.into(),
            t_ms,
            face: None,
        }
    }

    pub fn face_detected(&self) -> bool {
        self.face.is_some()
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if self.participant_id.is_empty() {
            return Err(FrameError::EmptyParticipant);
        }
        if let Some(face) = &self.face {
            face.expressions.validate()?;
            face.head.validate()?;
        }
        Ok(())
    }
}

/// Head nod and head shake probabilities for the current frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GestureEstimate<S> {
    pub nod_prob: S,
    pub shake_prob: S,
}

impl<S: Scalar> GestureEstimate<S> {
    pub fn zero() -> Self {
        Self {
            nod_prob: S::zero(),
            shake_prob: S::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("participant id is empty")]
    EmptyParticipant,
    #[error("field {field} = {value} outside [{min}, {max}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
}

fn check_range<S: Scalar>(field: &'static str, v: S, min: S, max: S) -> Result<(), FrameError> {
    // NaN fails both comparisons and is rejected here as well.
    if v >= min && v <= max {
        Ok(())
    } else {
        Err(FrameError::OutOfRange {
            field,
            value: v.to_f64().unwrap_or(f64::NAN),
            min: min.to_f64().unwrap_or(f64::NAN),
            max: max.to_f64().unwrap_or(f64::NAN),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("unknown metric key `{0}`")]
    UnknownKey(String),
    #[error("weight for `{key}` is negative ({value})")]
    Negative { key: MetricKey, value: f64 },
    #[error("weight for `{key}` is not finite")]
    NonFinite { key: MetricKey },
}

/// A bound the default profile must satisfy that a custom profile breaks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundViolation {
    /// Weight should stay below the given ceiling.
    AboveCeiling { key: MetricKey, weight: f64, ceiling: f64 },
    /// Weight should exceed the given floor.
    BelowFloor { key: MetricKey, weight: f64, floor: f64 },
}

impl fmt::Display for BoundViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundViolation::AboveCeiling { key, weight, ceiling } => {
                write!(f, "{key} weight {weight} is not below {ceiling}")
            }
            BoundViolation::BelowFloor { key, weight, floor } => {
                write!(f, "{key} weight {weight} is not above {floor}")
            }
        }
    }
}

/// Disfavoured responses are kept under this weight.
pub const LOW_WEIGHT_CEILING: f64 = 0.1;
/// Favoured responses are kept over this weight.
pub const HIGH_WEIGHT_FLOOR: f64 = 0.5;

/// Non-negative weight per [`MetricKey`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightProfile<S> {
    weights: [S; MetricKey::COUNT],
}

impl<S: Scalar> WeightProfile<S> {
    /// brow_furrow 0.6, head_nod 0.6, head_shake 0.3, surprise 0.4,
    /// happiness 0.4, neutral 0.05, sadness 0.05.
    pub fn shipped_default() -> Self {
        let mut weights = [S::zero(); MetricKey::COUNT];
        for (key, w) in [
            (MetricKey::Happiness, 0.4),
            (MetricKey::Sadness, 0.05),
            (MetricKey::Surprise, 0.4),
            (MetricKey::Neutral, 0.05),
            (MetricKey::BrowFurrow, 0.6),
            (MetricKey::HeadNod, 0.6),
            (MetricKey::HeadShake, 0.3),
        ] {
            weights[key.index()] = S::lit(w);
        }
        Self { weights }
    }

    /// Builds a profile from per-key weights, rejecting negative or non-finite values.
    pub fn from_weights(weights: [S; MetricKey::COUNT]) -> Result<Self, ProfileError> {
        for key in MetricKey::ALL {
            let w = weights[key.index()];
            if !w.is_finite() {
                return Err(ProfileError::NonFinite { key });
            }
            if w < S::zero() {
                return Err(ProfileError::Negative {
                    key,
                    value: w.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self { weights })
    }

    pub fn weight(&self, key: MetricKey) -> S {
        self.weights[key.index()]
    }

    pub fn weights(&self) -> &[S; MetricKey::COUNT] {
        &self.weights
    }

    /// Multiplies every weight by `factor` (which must be ≥ 0).
    pub fn scaled(&self, factor: S) -> Result<Self, ProfileError> {
        let mut weights = self.weights;
        for w in weights.iter_mut() {
            *w = *w * factor;
        }
        Self::from_weights(weights)
    }

    /// Lists the reference bounds this profile breaks: sadness and neutral
    /// below 0.1, brow furrow and head nod above 0.5.
    pub fn bound_violations(&self) -> Vec<BoundViolation> {
        let mut out = Vec::new();
        for key in [MetricKey::Sadness, MetricKey::Neutral] {
            let w = self.weight(key);
            if w >= S::lit(LOW_WEIGHT_CEILING) {
                out.push(BoundViolation::AboveCeiling {
                    key,
                    weight: w.to_f64().unwrap_or(f64::NAN),
                    ceiling: LOW_WEIGHT_CEILING,
                });
            }
        }
        for key in [MetricKey::BrowFurrow, MetricKey::HeadNod] {
            let w = self.weight(key);
            if w <= S::lit(HIGH_WEIGHT_FLOOR) {
                out.push(BoundViolation::BelowFloor {
                    key,
                    weight: w.to_f64().unwrap_or(f64::NAN),
                    floor: HIGH_WEIGHT_FLOOR,
                });
            }
        }
        out
    }

    pub fn is_conformant(&self) -> bool {
        self.bound_violations().is_empty()
    }

    /// Weights keyed by their wire names.
    pub fn to_map(&self) -> BTreeMap<String, S> {
        MetricKey::ALL
            .into_iter()
            .map(|k| (k.as_str().to_string(), self.weight(k)))
            .collect()
    }
}

impl<S: Scalar> Default for WeightProfile<S> {
    fn default() -> Self {
        Self::shipped_default()
    }
}

/// Result of [`validate_profile`]: the accepted profile plus any bound it breaks.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedProfile<S> {
    pub profile: WeightProfile<S>,
    pub violations: Vec<BoundViolation>,
}

impl<S> ValidatedProfile<S> {
    pub fn is_conformant(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Parses a key → weight mapping. Keys left out get weight 0.
///
/// Unknown keys and negative or non-finite weights are errors. Profiles that
/// break the reference bounds are accepted and flagged in `violations`.
pub fn validate_profile<S, I, K>(entries: I) -> Result<ValidatedProfile<S>, ProfileError>
where
    S: Scalar,
    I: IntoIterator<Item = (K, S)>,
    K: AsRef<str>,
{
    let mut weights = [S::zero(); MetricKey::COUNT];
    for (name, w) in entries {
        let key: MetricKey = name.as_ref().parse()?;
        weights[key.index()] = w;
    }
    let profile = WeightProfile::from_weights(weights)?;
    let violations = profile.bound_violations();
    Ok(ValidatedProfile { profile, violations })
}

/// The value each [`MetricKey`] takes for this frame.
pub fn metric_values<S: Scalar>(
    frame: &MetricFrame<S>,
    gesture: &GestureEstimate<S>,
) -> Option<[S; MetricKey::COUNT]> {
    let face = frame.face.as_ref()?;
    let e = &face.expressions;
    Some([
        e.happiness,
        e.sadness,
        e.surprise,
        e.neutral,
        e.brow_furrow,
        gesture.nod_prob,
        gesture.shake_prob,
    ])
}

/// Per-key contribution `weight × value`; all zero when no face was detected.
pub fn frame_contributions<S: Scalar>(
    frame: &MetricFrame<S>,
    gesture: &GestureEstimate<S>,
    profile: &WeightProfile<S>,
) -> [S; MetricKey::COUNT] {
    let mut out = [S::zero(); MetricKey::COUNT];
    if let Some(values) = metric_values(frame, gesture) {
        for key in MetricKey::ALL {
            out[key.index()] = profile.weight(key) * values[key.index()];
        }
    }
    out
}

/// Weighted sum of a frame's metrics, summed in [`MetricKey::ALL`] order.
pub fn score_frame<S: Scalar>(
    frame: &MetricFrame<S>,
    gesture: &GestureEstimate<S>,
    profile: &WeightProfile<S>,
) -> S {
    frame_contributions(frame, gesture, profile)
        .into_iter()
        .fold(S::zero(), |acc, c| acc + c)
}
