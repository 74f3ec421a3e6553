//! Synthetic audiences for the spotlight engine.
//!
//! A [`ScenarioSpec`] lists audience members by behaviour archetype. The
//! simulator renders their metric frames, runs the gesture detectors and the
//! engine directly (no network), and reports how the spotlight was spread
//! across the audience.

pub mod archetype;
pub mod report;
pub mod scenario;

use thiserror::Error;

use spotlight_core::engine::run_windows;
use spotlight_core::{EngineError, GestureEstimate, GestureTracker, MetricFrame, Policy, SessionConfig};

pub use archetype::{Archetype, ArchetypeKind, ArchetypeParams, Baseline, ParamOverrides};
pub use report::{ComparisonReport, PolicySummary, ReportDoc, SessionReport, Spread};
pub use scenario::{gen_frames, MemberSpec, ScenarioSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("malformed scenario document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config presenter `{config}` differs from scenario presenter `{scenario}`")]
    PresenterMismatch { config: String, scenario: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Frames and gesture estimates of a scenario, computed once and reusable
/// across policies and seeds.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    scenario: ScenarioSpec,
    frames: Vec<MetricFrame>,
    gestures: Vec<GestureEstimate>,
}

impl PreparedScenario {
    pub fn new(scenario: &ScenarioSpec) -> Result<Self, SimError> {
        Self::with_tracker(scenario, GestureTracker::shipped())
    }

    pub fn with_tracker(scenario: &ScenarioSpec, mut tracker: GestureTracker) -> Result<Self, SimError> {
        scenario.validate()?;
        let frames = gen_frames(scenario);
        let gestures = tracker.annotate(&frames);
        Ok(Self { scenario: scenario.clone(), frames, gestures })
    }

    pub fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    pub fn frames(&self) -> &[MetricFrame] {
        &self.frames
    }

    pub fn gestures(&self) -> &[GestureEstimate] {
        &self.gestures
    }

    /// Runs `duration_ms / window_ms` complete windows.
    pub fn run(&self, config: &SessionConfig) -> Result<SessionReport, SimError> {
        if config.presenter_id != self.scenario.presenter {
            return Err(SimError::PresenterMismatch {
                config: config.presenter_id.clone(),
                scenario: self.scenario.presenter.clone(),
            });
        }
        config.validate()?;
        let n_windows = self.scenario.duration_ms / config.window_ms;
        let decisions = run_windows(self.frames.iter().zip(&self.gestures), config, n_windows)?;
        Ok(SessionReport::from_decisions(
            config.policy,
            config.seed,
            self.scenario.audience.iter().map(|m| m.id.as_str()),
            &decisions,
        ))
    }

    /// One run per (policy, seed), seeds `base.seed .. base.seed + n_seeds`.
    pub fn compare(&self, base: &SessionConfig, policies: &[Policy], n_seeds: usize) -> Result<ComparisonReport, SimError> {
        if n_seeds == 0 {
            return Err(SimError::Scenario("at least one seed is required".into()));
        }
        let mut summaries = Vec::with_capacity(policies.len());
        for &policy in policies {
            let runs = (0..n_seeds as u64)
                .map(|i| {
                    let mut config = base.clone();
                    config.policy = policy;
                    config.seed = base.seed.wrapping_add(i);
                    self.run(&config)
                })
                .collect::<Result<Vec<_>, _>>()?;
            summaries.push(PolicySummary::from_runs(policy, &runs));
        }
        Ok(ComparisonReport {
            n_seeds,
            audience_size: self.scenario.audience.len(),
            policies: summaries,
        })
    }
}

/// Generates the scenario, detects gestures and runs the engine.
pub fn run_scenario(scenario: &ScenarioSpec, config: &SessionConfig) -> Result<SessionReport, SimError> {
    PreparedScenario::new(scenario)?.run(config)
}

/// Runs every policy over `n_seeds` engine seeds on the same generated audience.
pub fn compare_policies(
    scenario: &ScenarioSpec,
    base: &SessionConfig,
    policies: &[Policy],
    n_seeds: usize,
) -> Result<ComparisonReport, SimError> {
    PreparedScenario::new(scenario)?.compare(base, policies, n_seeds)
}

/// Config matching the scenario's presenter with all other fields at their defaults.
pub fn default_config(scenario: &ScenarioSpec) -> SessionConfig {
    SessionConfig::new(scenario.presenter.clone())
}
