//! Scenario files and synthetic frame generation.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use spotlight_core::{ExpressionVector, HeadPoseSample, MetricFrame};

use crate::archetype::{Archetype, ArchetypeKind, EpisodeKind, ParamOverrides, GESTURE_HZ};
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSpec {
    pub id: String,
    pub archetype: ArchetypeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamOverrides>,
}

/// A scenario as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub duration_ms: u64,
    #[serde(default = "default_fps")]
    pub fps: u32,
    #[serde(default = "default_presenter")]
    pub presenter: String,
    #[serde(default)]
    pub seed: u64,
    pub audience: Vec<MemberSpec>,
}

fn default_fps() -> u32 {
    15
}

fn default_presenter() -> String {
    "presenter".to_string()
}

impl ScenarioSpec {
    /// `audience` entries are `(id, archetype)` with default parameters.
    pub fn new(duration_ms: u64, fps: u32, seed: u64, audience: &[(&str, ArchetypeKind)]) -> Self {
        Self {
            duration_ms,
            fps,
            presenter: default_presenter(),
            seed,
            audience: audience
                .iter()
                .map(|&(id, archetype)| MemberSpec { id: id.to_string(), archetype, params: None })
                .collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let spec: ScenarioSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.fps == 0 {
            return Err(SimError::Scenario("fps must be positive".into()));
        }
        if self.audience.is_empty() {
            return Err(SimError::Scenario("audience is empty".into()));
        }
        if self.presenter.is_empty() {
            return Err(SimError::Scenario("presenter id is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for m in &self.audience {
            if m.id.is_empty() {
                return Err(SimError::Scenario("audience member with empty id".into()));
            }
            if m.id == self.presenter {
                return Err(SimError::Scenario(format!("presenter `{}` listed in the audience", m.id)));
            }
            if !seen.insert(m.id.as_str()) {
                return Err(SimError::Scenario(format!("duplicate audience id `{}`", m.id)));
            }
            self.archetype(m).validate().map_err(|e| SimError::Scenario(format!("{}: {e}", m.id)))?;
        }
        Ok(())
    }

    pub fn archetype(&self, member: &MemberSpec) -> Archetype {
        match &member.params {
            Some(o) => Archetype::with_overrides(member.archetype, o),
            None => Archetype::new(member.archetype),
        }
    }

    /// Frame timestamps shared by every participant: `i * 1000 / fps` below `duration_ms`.
    pub fn frame_times(&self) -> impl Iterator<Item = u64> + '_ {
        let fps = u64::from(self.fps);
        (0..).map(move |i: u64| i * 1000 / fps).take_while(move |&t| t < self.duration_ms)
    }
}

#[derive(Debug, Clone, Copy)]
struct Episode {
    start_ms: u64,
    kind: EpisodeKind,
}

/// Poisson episode starts; episodes never overlap.
fn schedule(arch: &Archetype, duration_ms: u64, rng: &mut ChaCha8Rng) -> Vec<Episode> {
    let p = &arch.params;
    if p.event_rate <= 0.0 || arch.episode_kind(0.0).is_none() {
        return Vec::new();
    }
    let gap = Exp::new(p.event_rate / 60_000.0).expect("positive rate");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t >= duration_ms as f64 {
            return out;
        }
        let start_ms = t as u64;
        let kind = arch.episode_kind(rng.random::<f64>()).expect("archetype has episodes");
        out.push(Episode { start_ms, kind });
        t = (start_ms + p.episode_len_ms) as f64;
    }
}

struct MemberTrack {
    id: String,
    arch: Archetype,
    episodes: Vec<Episode>,
    next_episode: usize,
    rng: ChaCha8Rng,
}

impl MemberTrack {
    fn sample(&mut self, t_ms: u64) -> MetricFrame {
        if self.arch.kind == ArchetypeKind::CameraOff {
            return MetricFrame::no_face(self.id.clone(), t_ms);
        }
        let p = self.arch.params;
        while self.next_episode < self.episodes.len()
            && self.episodes[self.next_episode].start_ms + p.episode_len_ms <= t_ms
        {
            self.next_episode += 1;
        }
        let active = self
            .episodes
            .get(self.next_episode)
            .filter(|e| e.start_ms <= t_ms)
            .map(|e| (e.kind, (t_ms - e.start_ms) as f64));

        let mut expr = p.baseline.to_expressions();
        let mut y = 0.5;
        let mut yaw = 0.0;
        if let Some((kind, dt)) = active {
            let len = p.episode_len_ms as f64;
            let envelope = (PI * dt / len).sin();
            let wave = (TAU * GESTURE_HZ * dt / 1000.0).sin();
            let spike = |base: f64, peak: f64| base + (peak - base).max(0.0) * envelope;
            match kind {
                EpisodeKind::Nod => {
                    y += p.nod_amplitude * wave;
                    expr.happiness = spike(expr.happiness, 0.6);
                }
                EpisodeKind::Smile => expr.happiness = spike(expr.happiness, 0.9),
                EpisodeKind::Confusion => {
                    yaw += p.shake_amplitude_deg * wave;
                    expr.brow_furrow = spike(expr.brow_furrow, 0.9);
                }
                EpisodeKind::Droop => {
                    y += 0.1 * dt / len;
                    expr.neutral = spike(expr.neutral, 0.9);
                }
            }
        }
        y += gaussian(&mut self.rng, p.noise_std_y);
        yaw += gaussian(&mut self.rng, p.noise_std_deg);
        let roll = gaussian(&mut self.rng, p.noise_std_deg);
        MetricFrame::with_face(
            self.id.clone(),
            t_ms,
            clamp_expressions(expr),
            HeadPoseSample {
                yaw_deg: yaw.clamp(-90.0, 90.0),
                roll_deg: roll.clamp(-90.0, 90.0),
                y: y.clamp(0.0, 1.0),
            },
        )
    }
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        Normal::new(0.0, std).expect("finite std").sample(rng)
    }
}

fn clamp_expressions(mut e: ExpressionVector) -> ExpressionVector {
    for v in [
        &mut e.happiness,
        &mut e.sadness,
        &mut e.surprise,
        &mut e.neutral,
        &mut e.anger,
        &mut e.disgust,
        &mut e.fear,
        &mut e.brow_furrow,
    ] {
        *v = v.clamp(0.0, 1.0);
    }
    e
}

/// Generates every participant's frames, merged in time order (audience order
/// within one timestamp). A pure function of the scenario.
pub fn gen_frames(scenario: &ScenarioSpec) -> Vec<MetricFrame> {
    let mut tracks: Vec<MemberTrack> = scenario
        .audience
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let arch = scenario.archetype(m);
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
            rng.set_stream(i as u64);
            let episodes = schedule(&arch, scenario.duration_ms, &mut rng);
            MemberTrack { id: m.id.clone(), arch, episodes, next_episode: 0, rng }
        })
        .collect();
    let mut frames = Vec::new();
    for t in scenario.frame_times() {
        for track in tracks.iter_mut() {
            frames.push(track.sample(t));
        }
    }
    frames
}
