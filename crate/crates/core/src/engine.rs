//! Windowed spotlight selection.
//!
//! Frames are scored as they arrive and accumulated per participant into a
//! [`WindowScoreboard`]. When a window closes, one audience member is chosen
//! for the next window according to the session [`Policy`]:
//!
//! * `Affective`: highest accumulated score; exact ties are broken by the
//!   seeded generator over the tied ids in lexicographic order. If the
//!   winner is the member already in the spotlight and there is anyone else
//!   eligible, the best of the others is taken instead.
//! * `Random`: uniform over the eligible members other than the current one.
//! * `RoundRobin`: the next id after the current one, lexicographically.
//!
//! A pause blanks the spotlight and a pin overrides the policy. The presenter
//! is never scored and never selected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{frame_contributions, GestureEstimate, MetricFrame, MetricKey, WeightProfile};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::DEFAULT_WINDOW_MS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Affective,
    Random,
    RoundRobin,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Affective, Policy::Random, Policy::RoundRobin];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Affective => "affective",
            Policy::Random => "random",
            Policy::RoundRobin => "roundrobin",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown policy `{s}` (expected affective, random or roundrobin)"))
    }
}

/// How accumulated scores are compared at window close.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Raw accumulated score.
    #[default]
    Sum,
    /// Accumulated score divided by the participant's frame count.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Argmax,
    SecondHighestNoRepeat,
    TieBreak,
    RandomPolicy,
    RoundRobin,
    Pinned,
    Paused,
    NoEligible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig<S> {
    pub window_ms: u64,
    pub policy: Policy,
    pub seed: u64,
    pub presenter_id: String,
    pub profile: WeightProfile<S>,
    pub normalization: Normalization,
}

impl<S: Scalar> SessionConfig<S> {
    /// Defaults: 15 s windows, affective policy, seed 0, shipped weights, raw sums.
    pub fn new(presenter_id: impl Into<String>) -> Self {
        Self {
            window_ms: DEFAULT_WINDOW_MS,
            policy: Policy::Affective,
            seed: 0,
            presenter_id: presenter_id.into(),
            profile: WeightProfile::shipped_default(),
            normalization: Normalization::Sum,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.window_ms == 0 {
            return Err(EngineError::ZeroWindow);
        }
        if self.presenter_id.is_empty() {
            return Err(EngineError::NoPresenter);
        }
        Ok(())
    }

    pub fn is_presenter(&self, id: &str) -> bool {
        self.presenter_id == id
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("window length must be positive")]
    ZeroWindow,
    #[error("presenter id must not be empty")]
    NoPresenter,
    #[error("frames are not sorted by time: frame {index} at {t_ms} ms follows {prev_ms} ms")]
    Unsorted { index: usize, t_ms: u64, prev_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("the presenter cannot be pinned")]
    PinPresenter,
    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),
}

/// One participant's accumulation for the open window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreEntry<S> {
    pub score: S,
    pub frame_count: u64,
    pub breakdown: [S; MetricKey::COUNT],
}

impl<S: Scalar> ScoreEntry<S> {
    fn zero() -> Self {
        Self {
            score: S::zero(),
            frame_count: 0,
            breakdown: [S::zero(); MetricKey::COUNT],
        }
    }

    /// Score and breakdown as compared under `normalization`.
    pub fn effective(&self, normalization: Normalization) -> (S, [S; MetricKey::COUNT]) {
        match normalization {
            Normalization::Sum => (self.score, self.breakdown),
            Normalization::Mean if self.frame_count == 0 => (S::zero(), [S::zero(); MetricKey::COUNT]),
            Normalization::Mean => {
                let n = S::from_u64(self.frame_count).expect("frame count fits scalar");
                (self.score / n, self.breakdown.map(|b| b / n))
            }
        }
    }
}

/// Per-participant accumulation for one window, keyed by participant id.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScoreboard<S> {
    pub window_index: u64,
    entries: BTreeMap<String, ScoreEntry<S>>,
}

impl<S: Scalar> WindowScoreboard<S> {
    pub fn new(window_index: u64) -> Self {
        Self { window_index, entries: BTreeMap::new() }
    }

    /// Adds a participant with a zero entry if not already present.
    /// The presenter is never registered.
    pub fn register(&mut self, id: &str, config: &SessionConfig<S>) {
        if !config.is_presenter(id) && !self.entries.contains_key(id) {
            self.entries.insert(id.to_string(), ScoreEntry::zero());
        }
    }

    /// Adds the frame's score. Presenter frames are dropped and `false` is returned.
    pub fn ingest(
        &mut self,
        frame: &MetricFrame<S>,
        gesture: &GestureEstimate<S>,
        config: &SessionConfig<S>,
    ) -> bool {
        if config.is_presenter(&frame.participant_id) {
            return false;
        }
        let entry = self
            .entries
            .entry(frame.participant_id.clone())
            .or_insert_with(ScoreEntry::zero);
        let contributions = frame_contributions(frame, gesture, &config.profile);
        let frame_score = contributions.iter().fold(S::zero(), |acc, &c| acc + c);
        entry.score = entry.score + frame_score;
        for (b, c) in entry.breakdown.iter_mut().zip(contributions) {
            *b = *b + c;
        }
        entry.frame_count += 1;
        true
    }

    pub fn get(&self, id: &str) -> Option<&ScoreEntry<S>> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    /// Registered participants in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &ScoreEntry<S>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Next window's board: same participants, all zero.
    pub fn fresh(&self) -> Self {
        Self {
            window_index: self.window_index + 1,
            entries: self.entries.keys().map(|k| (k.clone(), ScoreEntry::zero())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpotlightState {
    pub current: Option<String>,
    pub pinned: Option<String>,
    pub paused: bool,
    pub rng: SplitMix64,
}

impl SpotlightState {
    pub fn new(seed: u64) -> Self {
        Self { current: None, pinned: None, paused: false, rng: SplitMix64::new(seed) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpotlightDecision<S> {
    pub window_index: u64,
    pub participant: Option<String>,
    pub score: S,
    pub breakdown: [S; MetricKey::COUNT],
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub reason: Reason,
}

/// Picks from `candidates` (already in lexicographic order) the ones with the
/// highest score, drawing from `rng` only when several tie exactly.
fn best_of<'a, S: Scalar>(candidates: &[(&'a str, S)], rng: &mut SplitMix64) -> (&'a str, bool) {
    let max = candidates
        .iter()
        .map(|&(_, s)| s)
        .fold(S::neg_infinity(), |m, s| if s > m { s } else { m });
    let tied: Vec<&str> = candidates.iter().filter(|&&(_, s)| s == max).map(|&(id, _)| id).collect();
    if tied.len() == 1 {
        (tied[0], false)
    } else {
        (tied[rng.pick_index(tied.len())], true)
    }
}

/// Ends the window described by `board` and chooses who is shown next.
///
/// Returns the decision, the updated spotlight state and a zeroed board for
/// the following window.
pub fn close_window<S: Scalar>(
    board: &WindowScoreboard<S>,
    state: &SpotlightState,
    config: &SessionConfig<S>,
) -> (SpotlightDecision<S>, SpotlightState, WindowScoreboard<S>) {
    let mut next = state.clone();
    let eligible: Vec<(&str, S)> = board
        .iter()
        .map(|(id, e)| (id, e.effective(config.normalization).0))
        .collect();

    let (participant, reason) = if state.paused {
        (None, Reason::Paused)
    } else if let Some(pinned) = &state.pinned {
        (Some(pinned.as_str()), Reason::Pinned)
    } else if eligible.is_empty() {
        (None, Reason::NoEligible)
    } else {
        let current = state.current.as_deref();
        let (id, reason) = match config.policy {
            Policy::Affective => {
                let (top, tie) = best_of(&eligible, &mut next.rng);
                if Some(top) == current && eligible.len() >= 2 {
                    let rest: Vec<(&str, S)> =
                        eligible.iter().copied().filter(|&(id, _)| Some(id) != current).collect();
                    (best_of(&rest, &mut next.rng).0, Reason::SecondHighestNoRepeat)
                } else if tie {
                    (top, Reason::TieBreak)
                } else {
                    (top, Reason::Argmax)
                }
            }
            Policy::Random => {
                let mut pool: Vec<&str> =
                    eligible.iter().map(|&(id, _)| id).filter(|&id| Some(id) != current).collect();
                if pool.is_empty() {
                    pool = eligible.iter().map(|&(id, _)| id).collect();
                }
                (pool[next.rng.pick_index(pool.len())], Reason::RandomPolicy)
            }
            Policy::RoundRobin => {
                let after = current.and_then(|c| eligible.iter().find(|&&(id, _)| id > c));
                (after.unwrap_or(&eligible[0]).0, Reason::RoundRobin)
            }
        };
        (Some(id), reason)
    };

    let (score, breakdown) = participant
        .and_then(|id| board.get(id))
        .map(|e| e.effective(config.normalization))
        .unwrap_or((S::zero(), [S::zero(); MetricKey::COUNT]));
    let t_start_ms = board.window_index * config.window_ms;
    let decision = SpotlightDecision {
        window_index: board.window_index,
        participant: participant.map(str::to_string),
        score,
        breakdown,
        t_start_ms,
        t_end_ms: t_start_ms + config.window_ms,
        reason,
    };
    next.current = decision.participant.clone();
    (decision, next, board.fresh())
}

/// Runtime control from the presenter side.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlCommand<S> {
    SetWeights(WeightProfile<S>),
    Pin(String),
    Unpin,
    Pause,
    Resume,
}

/// Owns one session's scoreboard and spotlight state.
#[derive(Debug, Clone)]
pub struct SpotlightEngine<S> {
    config: SessionConfig<S>,
    pending_profile: Option<WeightProfile<S>>,
    board: WindowScoreboard<S>,
    state: SpotlightState,
}

impl<S: Scalar> SpotlightEngine<S> {
    pub fn new(config: SessionConfig<S>) -> Result<Self, EngineError> {
        config.validate()?;
        let state = SpotlightState::new(config.seed);
        Ok(Self { config, pending_profile: None, board: WindowScoreboard::new(0), state })
    }

    pub fn config(&self) -> &SessionConfig<S> {
        &self.config
    }

    /// Profile that will be in force from the next window on.
    pub fn upcoming_profile(&self) -> &WeightProfile<S> {
        self.pending_profile.as_ref().unwrap_or(&self.config.profile)
    }

    pub fn scoreboard(&self) -> &WindowScoreboard<S> {
        &self.board
    }

    pub fn state(&self) -> &SpotlightState {
        &self.state
    }

    pub fn register(&mut self, id: &str) {
        self.board.register(id, &self.config);
    }

    pub fn is_registered(&self, id: &str) -> bool {
        self.board.contains(id)
    }

    pub fn ingest(&mut self, frame: &MetricFrame<S>, gesture: &GestureEstimate<S>) -> bool {
        self.board.ingest(frame, gesture, &self.config)
    }

    pub fn close_window(&mut self) -> SpotlightDecision<S> {
        let (decision, state, board) = close_window(&self.board, &self.state, &self.config);
        self.state = state;
        self.board = board;
        if let Some(profile) = self.pending_profile.take() {
            self.config.profile = profile;
        }
        decision
    }

    /// Weight changes apply from the next window; pin and pause affect the
    /// decision made at the next boundary.
    pub fn apply_control(&mut self, command: ControlCommand<S>) -> Result<(), ControlError> {
        match command {
            ControlCommand::SetWeights(profile) => self.pending_profile = Some(profile),
            ControlCommand::Pin(id) => {
                if self.config.is_presenter(&id) {
                    return Err(ControlError::PinPresenter);
                }
                if !self.board.contains(&id) {
                    return Err(ControlError::UnknownParticipant(id));
                }
                self.state.pinned = Some(id);
            }
            ControlCommand::Unpin => self.state.pinned = None,
            ControlCommand::Pause => self.state.paused = true,
            ControlCommand::Resume => self.state.paused = false,
        }
        Ok(())
    }
}

/// Runs exactly `n_windows` windows; a frame at `t_ms` goes to window
/// `t_ms / window_ms`, and frames past the last window are ignored.
pub fn run_windows<'a, S, I>(
    frames: I,
    config: &SessionConfig<S>,
    n_windows: u64,
) -> Result<Vec<SpotlightDecision<S>>, EngineError>
where
    S: Scalar,
    I: IntoIterator<Item = (&'a MetricFrame<S>, &'a GestureEstimate<S>)>,
{
    let mut engine = SpotlightEngine::new(config.clone())?;
    let mut decisions = Vec::with_capacity(n_windows as usize);
    let mut prev_ms = 0;
    for (index, (frame, gesture)) in frames.into_iter().enumerate() {
        if frame.t_ms < prev_ms {
            return Err(EngineError::Unsorted { index, t_ms: frame.t_ms, prev_ms });
        }
        prev_ms = frame.t_ms;
        let window = frame.t_ms / config.window_ms;
        if window >= n_windows {
            break;
        }
        while engine.scoreboard().window_index < window {
            decisions.push(engine.close_window());
        }
        engine.ingest(frame, gesture);
    }
    while (decisions.len() as u64) < n_windows {
        decisions.push(engine.close_window());
    }
    Ok(decisions)
}

/// One decision per window from window 0 through the window of the last frame.
pub fn run_session<S: Scalar>(
    frames: &[(MetricFrame<S>, GestureEstimate<S>)],
    config: &SessionConfig<S>,
) -> Result<Vec<SpotlightDecision<S>>, EngineError> {
    config.validate()?;
    if let Some(index) = frames.windows(2).position(|w| w[1].0.t_ms < w[0].0.t_ms) {
        return Err(EngineError::Unsorted {
            index: index + 1,
            t_ms: frames[index + 1].0.t_ms,
            prev_ms: frames[index].0.t_ms,
        });
    }
    let n_windows = frames.last().map_or(0, |(f, _)| f.t_ms / config.window_ms + 1);
    run_windows(frames.iter().map(|(f, g)| (f, g)), config, n_windows)
}
