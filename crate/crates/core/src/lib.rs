//! Spotlight selection for live presentations.
//!
//! Audience members' per-frame affect metrics are scored with a weight
//! profile, accumulated over fixed windows, and at each window boundary the
//! most expressive member is selected for display to the presenter.
//!
//! The scoring, gesture and engine modules are generic over [`Scalar`]
//! (`f32` or `f64`). The aliases at the crate root fix the scalar to `f64`,
//! which is what the wire format and trace files carry.

pub mod affect;
pub mod engine;
pub mod gesture;
pub mod rng;
pub mod scalar;
pub mod trace;
pub mod wire;

pub use affect::{BoundViolation, FrameError, MetricKey, ProfileError};
pub use engine::{ControlError, EngineError, Normalization, Policy, Reason};
pub use gesture::{GestureAxis, HmmError, ObservationSymbol};
pub use rng::SplitMix64;
pub use scalar::Scalar;
pub use wire::{Role, WireError, WireMessage};

/// Window length used by every entry point unless overridden.
pub const DEFAULT_WINDOW_MS: u64 = 15_000;

pub type ExpressionVector = affect::ExpressionVector<f64>;
pub type HeadPoseSample = affect::HeadPoseSample<f64>;
pub type FaceObservation = affect::FaceObservation<f64>;
pub type MetricFrame = affect::MetricFrame<f64>;
pub type GestureEstimate = affect::GestureEstimate<f64>;
pub type WeightProfile = affect::WeightProfile<f64>;
pub type ValidatedProfile = affect::ValidatedProfile<f64>;
pub type HmmParams = gesture::HmmParams<f64>;
pub type DetectorConfig = gesture::DetectorConfig<f64>;
pub type GestureDetector = gesture::GestureDetector<f64>;
pub type GestureTracker = gesture::GestureTracker<f64>;
pub type SessionConfig = engine::SessionConfig<f64>;
pub type WindowScoreboard = engine::WindowScoreboard<f64>;
pub type ScoreEntry = engine::ScoreEntry<f64>;
pub type SpotlightDecision = engine::SpotlightDecision<f64>;
pub type SpotlightEngine = engine::SpotlightEngine<f64>;
pub type ControlCommand = engine::ControlCommand<f64>;

/// Single-precision variants.
pub mod f32 {
    pub type MetricFrame = crate::affect::MetricFrame<f32>;
    pub type GestureEstimate = crate::affect::GestureEstimate<f32>;
    pub type WeightProfile = crate::affect::WeightProfile<f32>;
    pub type HmmParams = crate::gesture::HmmParams<f32>;
    pub type GestureTracker = crate::gesture::GestureTracker<f32>;
    pub type SessionConfig = crate::engine::SessionConfig<f32>;
    pub type SpotlightEngine = crate::engine::SpotlightEngine<f32>;
    pub type SpotlightDecision = crate::engine::SpotlightDecision<f32>;
}
