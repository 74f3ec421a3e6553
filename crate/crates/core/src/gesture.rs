//! Head nod and head shake detection with discrete-observation HMMs.
//!
//! Each detector tracks one scalar signal (vertical face position for nods,
//! yaw for shakes), sign-quantizes its first difference, and compares the
//! likelihood of the recent symbol window under an oscillation model against
//! a stillness model. The per-symbol log-likelihood ratio, scaled by a gain,
//! goes through a logistic to give a probability.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::affect::{GestureEstimate, MetricFrame};
use crate::scalar::Scalar;

/// Sign of the tracked signal's first difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservationSymbol {
    Pos = 0,
    Neg = 1,
    Still = 2,
}

impl ObservationSymbol {
    pub const ALL: [ObservationSymbol; 3] = [Self::Pos, Self::Neg, Self::Still];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn mirrored(self) -> Self {
        match self {
            Self::Pos => Self::Neg,
            Self::Neg => Self::Pos,
            Self::Still => Self::Still,
        }
    }
}

/// Pos above `dead_zone`, Neg below `-dead_zone`, Still otherwise.
pub fn quantize<S: Scalar>(delta: S, dead_zone: S) -> ObservationSymbol {
    if delta > dead_zone {
        ObservationSymbol::Pos
    } else if delta < -dead_zone {
        ObservationSymbol::Neg
    } else {
        ObservationSymbol::Still
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HmmError {
    #[error("model needs at least one state")]
    NoStates,
    #[error("{what} has wrong shape: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} contains a negative or non-finite entry")]
    BadEntry { what: &'static str },
    #[error("{what} sums to {sum}, expected 1")]
    NotStochastic { what: String, sum: f64 },
    #[error("observation sequence is empty")]
    EmptySequence,
    #[error("dead zone must be positive")]
    DeadZone,
    #[error("detection window must hold at least two symbols")]
    Window,
}

/// Discrete HMM over the three-symbol alphabet (emission columns ordered Pos, Neg, Still).
#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams<S> {
    initial: Vec<S>,
    transition: Vec<Vec<S>>,
    emission: Vec<[S; 3]>,
}

impl<S: Scalar> HmmParams<S> {
    pub fn new(
        initial: Vec<S>,
        transition: Vec<Vec<S>>,
        emission: Vec<[S; 3]>,
    ) -> Result<Self, HmmError> {
        let n = initial.len();
        if n == 0 {
            return Err(HmmError::NoStates);
        }
        if transition.len() != n {
            return Err(HmmError::Shape { what: "transition", expected: n, got: transition.len() });
        }
        if emission.len() != n {
            return Err(HmmError::Shape { what: "emission", expected: n, got: emission.len() });
        }
        check_distribution("initial", &initial)?;
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(HmmError::Shape { what: "transition row", expected: n, got: row.len() });
            }
            check_distribution(&format!("transition row {i}"), row)?;
        }
        for (i, row) in emission.iter().enumerate() {
            check_distribution(&format!("emission row {i}"), row)?;
        }
        Ok(Self { initial, transition, emission })
    }

    /// Three-state oscillation model: up phase, down phase, pause.
    pub fn shipped_gesture() -> Self {
        let l = S::lit;
        Self::new(
            vec![l(0.4), l(0.4), l(0.2)],
            vec![
                vec![l(0.15), l(0.70), l(0.15)],
                vec![l(0.70), l(0.15), l(0.15)],
                vec![l(0.35), l(0.35), l(0.30)],
            ],
            vec![
                [l(0.80), l(0.05), l(0.15)],
                [l(0.05), l(0.80), l(0.15)],
                [l(0.10), l(0.10), l(0.80)],
            ],
        )
        .expect("shipped gesture model is valid")
    }

    /// One-state stillness model.
    pub fn shipped_null() -> Self {
        let l = S::lit;
        Self::new(vec![S::one()], vec![vec![S::one()]], vec![[l(0.05), l(0.05), l(0.90)]])
            .expect("shipped null model is valid")
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn initial(&self) -> &[S] {
        &self.initial
    }

    pub fn transition(&self) -> &[Vec<S>] {
        &self.transition
    }

    pub fn emission(&self) -> &[[S; 3]] {
        &self.emission
    }
}

fn check_distribution<S: Scalar>(what: &str, row: &[S]) -> Result<(), HmmError> {
    if row.iter().any(|p| !p.is_finite() || *p < S::zero()) {
        return Err(HmmError::BadEntry { what: "probability row" });
    }
    let sum = row.iter().fold(S::zero(), |a, &p| a + p);
    // 1e-9 is below f32 resolution; allow a few ulps there.
    let tol = S::lit(1e-9).max(S::epsilon() * S::lit(8.0));
    if (sum - S::one()).abs() > tol {
        return Err(HmmError::NotStochastic {
            what: what.to_string(),
            sum: sum.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Natural-log likelihood `ln P(symbols | hmm)` via the scaled forward recursion.
///
/// Returns `-inf` when the sequence is impossible under the model.
pub fn forward_loglik<S: Scalar>(
    symbols: &[ObservationSymbol],
    hmm: &HmmParams<S>,
) -> Result<S, HmmError> {
    let (first, rest) = symbols.split_first().ok_or(HmmError::EmptySequence)?;
    let n = hmm.n_states();
    let mut alpha: Vec<S> = (0..n)
        .map(|i| hmm.initial[i] * hmm.emission[i][first.index()])
        .collect();
    let mut loglik = S::zero();
    let mut next = vec![S::zero(); n];
    for step in std::iter::once(None).chain(rest.iter().map(Some)) {
        if let Some(sym) = step {
            for (j, slot) in next.iter_mut().enumerate() {
                let mut acc = S::zero();
                for (i, a) in alpha.iter().enumerate() {
                    acc = acc + *a * hmm.transition[i][j];
                }
                *slot = acc * hmm.emission[j][sym.index()];
            }
            std::mem::swap(&mut alpha, &mut next);
        }
        let scale = alpha.iter().fold(S::zero(), |a, &p| a + p);
        if scale <= S::zero() {
            return Ok(S::neg_infinity());
        }
        loglik = loglik + scale.ln();
        for a in alpha.iter_mut() {
            *a = *a / scale;
        }
    }
    Ok(loglik)
}

/// Which head signal a detector follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GestureAxis {
    /// Vertical face position, normalized.
    Nod,
    /// Yaw in degrees.
    Shake,
}

/// Quantization, window and calibration settings for one detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig<S> {
    pub dead_zone: S,
    /// Maximum number of symbols kept.
    pub window: usize,
    /// Multiplies the per-symbol log-likelihood ratio before the logistic.
    pub gain: S,
    pub gesture: HmmParams<S>,
    pub null: HmmParams<S>,
}

impl<S: Scalar> DetectorConfig<S> {
    pub const DEFAULT_WINDOW: usize = 30;
    pub const DEFAULT_GAIN: f64 = 8.0;

    pub fn shipped(axis: GestureAxis) -> Self {
        let dead_zone = match axis {
            GestureAxis::Nod => S::lit(0.005),
            GestureAxis::Shake => S::lit(2.0),
        };
        Self {
            dead_zone,
            window: Self::DEFAULT_WINDOW,
            gain: S::lit(Self::DEFAULT_GAIN),
            gesture: HmmParams::shipped_gesture(),
            null: HmmParams::shipped_null(),
        }
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        if self.dead_zone.is_nan() || self.dead_zone <= S::zero() {
            return Err(HmmError::DeadZone);
        }
        if self.window < 2 {
            return Err(HmmError::Window);
        }
        Ok(())
    }

    /// Probability for a symbol history; 0 with fewer than two symbols.
    pub fn probability(&self, history: &[ObservationSymbol]) -> S {
        if history.len() < 2 {
            return S::zero();
        }
        let g = forward_loglik(history, &self.gesture).expect("non-empty history");
        let n = forward_loglik(history, &self.null).expect("non-empty history");
        let len = S::from_usize(history.len()).expect("history length fits scalar");
        let llr = (g - n) / len;
        if llr.is_nan() {
            // both models rule the sequence out
            return S::zero();
        }
        logistic(llr * self.gain)
    }
}

fn logistic<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Streaming detector for one axis of one participant.
#[derive(Debug, Clone)]
pub struct GestureDetector<S> {
    axis: GestureAxis,
    config: DetectorConfig<S>,
    history: VecDeque<ObservationSymbol>,
    prev_value: Option<S>,
}

impl<S: Scalar> GestureDetector<S> {
    pub fn new(axis: GestureAxis, config: DetectorConfig<S>) -> Result<Self, HmmError> {
        config.validate()?;
        let window = config.window;
        Ok(Self {
            axis,
            config,
            history: VecDeque::with_capacity(window),
            prev_value: None,
        })
    }

    pub fn shipped(axis: GestureAxis) -> Self {
        Self::new(axis, DetectorConfig::shipped(axis)).expect("shipped detector config is valid")
    }

    pub fn axis(&self) -> GestureAxis {
        self.axis
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = ObservationSymbol> + '_ {
        self.history.iter().copied()
    }

    /// Feeds one raw sample. Returns `None` and leaves the state untouched
    /// for a non-finite sample.
    pub fn step(&mut self, sample: S) -> Option<S> {
        if !sample.is_finite() {
            return None;
        }
        if let Some(prev) = self.prev_value {
            if self.history.len() == self.config.window {
                self.history.pop_front();
            }
            self.history.push_back(quantize(sample - prev, self.config.dead_zone));
        }
        self.prev_value = Some(sample);
        Some(self.config.probability(self.history.make_contiguous()))
    }

    pub fn reset(&mut self) {
        self.history.clear();
        self.prev_value = None;
    }
}

/// Nod and shake detectors for every participant seen so far.
#[derive(Debug, Clone)]
pub struct GestureTracker<S> {
    nod: DetectorConfig<S>,
    shake: DetectorConfig<S>,
    detectors: BTreeMap<String, (GestureDetector<S>, GestureDetector<S>)>,
}

impl<S: Scalar> GestureTracker<S> {
    pub fn new(nod: DetectorConfig<S>, shake: DetectorConfig<S>) -> Result<Self, HmmError> {
        nod.validate()?;
        shake.validate()?;
        Ok(Self { nod, shake, detectors: BTreeMap::new() })
    }

    pub fn shipped() -> Self {
        Self::new(
            DetectorConfig::shipped(GestureAxis::Nod),
            DetectorConfig::shipped(GestureAxis::Shake),
        )
        .expect("shipped detector configs are valid")
    }

    /// Advances the participant's detectors with the frame's head pose.
    /// A frame without a face resets them and yields zero probabilities.
    pub fn observe(&mut self, frame: &MetricFrame<S>) -> GestureEstimate<S> {
        let pair = self
            .detectors
            .entry(frame.participant_id.clone())
            .or_insert_with(|| {
                (
                    GestureDetector::new(GestureAxis::Nod, self.nod.clone()).expect("validated"),
                    GestureDetector::new(GestureAxis::Shake, self.shake.clone()).expect("validated"),
                )
            });
        match &frame.face {
            None => {
                pair.0.reset();
                pair.1.reset();
                GestureEstimate::zero()
            }
            Some(face) => GestureEstimate {
                nod_prob: pair.0.step(face.head.y).unwrap_or_else(S::zero),
                shake_prob: pair.1.step(face.head.yaw_deg).unwrap_or_else(S::zero),
            },
        }
    }

    /// Runs [`observe`](Self::observe) over a time-ordered frame sequence.
    pub fn annotate<'a, I>(&mut self, frames: I) -> Vec<GestureEstimate<S>>
    where
        I: IntoIterator<Item = &'a MetricFrame<S>>,
    {
        frames.into_iter().map(|f| self.observe(f)).collect()
    }
}

impl<S: Scalar> Default for GestureTracker<S> {
    fn default() -> Self {
        Self::shipped()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use ObservationSymbol::*;

    fn null() -> HmmParams<f64> {
        HmmParams::shipped_null()
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0, 0.005), Still);
        assert_eq!(quantize(0.02, 0.005), Pos);
        assert_eq!(quantize(-3.0, 2.0), Neg);
        assert_eq!(quantize(0.005, 0.005), Still);
    }

    #[test]
    fn null_model_hand_values() {
        assert_relative_eq!(forward_loglik(&[Still], &null()).unwrap(), 0.9f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(forward_loglik(&[Still], &null()).unwrap(), -0.10536, epsilon = 1e-5);
        assert_relative_eq!(forward_loglik(&[Pos, Pos], &null()).unwrap(), -5.9915, epsilon = 1e-4);
    }

    #[test]
    fn empty_sequence_is_error() {
        assert_eq!(forward_loglik::<f64>(&[], &null()), Err(HmmError::EmptySequence));
    }

    #[test]
    fn impossible_sequence_is_neg_infinity() {
        let hmm = HmmParams::new(vec![1.0], vec![vec![1.0]], vec![[0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(forward_loglik(&[Still, Pos], &hmm).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_malformed_models() {
        assert_eq!(HmmParams::<f64>::new(vec![], vec![], vec![]), Err(HmmError::NoStates));
        assert!(matches!(
            HmmParams::new(vec![0.5, 0.6], vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![[1.0, 0.0, 0.0]; 2]),
            Err(HmmError::NotStochastic { .. })
        ));
        assert!(matches!(
            HmmParams::new(vec![1.0], vec![vec![1.0, 0.0]], vec![[1.0, 0.0, 0.0]]),
            Err(HmmError::Shape { .. })
        ));
        assert!(matches!(
            HmmParams::new(vec![1.0], vec![vec![1.0]], vec![[1.2, -0.2, 0.0]]),
            Err(HmmError::BadEntry { .. })
        ));
    }

    #[test]
    fn f32_models_validate() {
        let g = HmmParams::<f32>::shipped_gesture();
        let ll = forward_loglik(&[Pos, Neg, Pos], &g).unwrap();
        let ll64 = forward_loglik(&[Pos, Neg, Pos], &HmmParams::<f64>::shipped_gesture()).unwrap();
        assert_relative_eq!(ll as f64, ll64, epsilon = 1e-5);
    }

    #[test]
    fn single_sample_and_first_delta_give_zero() {
        let mut d = GestureDetector::<f64>::shipped(GestureAxis::Nod);
        assert_eq!(d.step(0.5), Some(0.0));
        assert_eq!(d.history().len(), 0);
        assert_eq!(d.step(0.52), Some(0.0));
        assert_eq!(d.history().len(), 1);
        assert!(d.step(0.5).unwrap() > 0.0);
    }

    #[test]
    fn non_finite_sample_leaves_state() {
        let mut d = GestureDetector::<f64>::shipped(GestureAxis::Shake);
        d.step(0.0);
        d.step(5.0);
        let before: Vec<_> = d.history().collect();
        assert_eq!(d.step(f64::NAN), None);
        assert_eq!(d.step(f64::INFINITY), None);
        assert_eq!(d.history().collect::<Vec<_>>(), before);
        // prev_value still 5.0
        d.step(5.0);
        assert_eq!(d.history().last(), Some(Still));
    }

    #[test]
    fn reset_clears_and_is_idempotent() {
        let mut d = GestureDetector::<f64>::shipped(GestureAxis::Nod);
        for i in 0..10 {
            d.step(0.5 + 0.02 * (i % 2) as f64);
        }
        d.reset();
        assert_eq!(d.history().len(), 0);
        d.reset();
        assert_eq!(d.history().len(), 0);
        assert_eq!(d.step(0.9), Some(0.0));
    }

    #[test]
    fn history_is_bounded_by_window() {
        let mut d = GestureDetector::<f64>::shipped(GestureAxis::Nod);
        for i in 0..100 {
            d.step((i as f64 * 0.7).sin() * 0.05 + 0.5);
            assert!(d.history().len() <= 30);
        }
        assert_eq!(d.history().len(), 30);
    }

    #[test]
    fn tracker_resets_on_missing_face() {
        let mut t = GestureTracker::<f64>::shipped();
        let head = |y| crate::affect::HeadPoseSample { yaw_deg: 0.0, roll_deg: 0.0, y };
        let e = crate::affect::ExpressionVector::zeros();
        for i in 0..20 {
            let y = 0.5 + 0.02 * (std::f64::consts::TAU * 1.5 * i as f64 / 15.0).sin();
            t.observe(&MetricFrame::with_face("a", i * 66, e, head(y)));
        }
        let busy = t.observe(&MetricFrame::with_face("a", 1400, e, head(0.5)));
        assert!(busy.nod_prob > 0.5);
        assert_eq!(t.observe(&MetricFrame::no_face("a", 1466)), GestureEstimate::zero());
        assert_eq!(t.observe(&MetricFrame::with_face("a", 1533, e, head(0.5))).nod_prob, 0.0);
    }

    fn symbol() -> impl Strategy<Value = ObservationSymbol> {
        prop_oneof![Just(Pos), Just(Neg), Just(Still)]
    }

    proptest! {
        #[test]
        fn loglik_is_non_positive(seq in proptest::collection::vec(symbol(), 1..60)) {
            prop_assert!(forward_loglik(&seq, &HmmParams::<f64>::shipped_gesture()).unwrap() <= 0.0);
            prop_assert!(forward_loglik(&seq, &null()).unwrap() <= 0.0);
        }

        #[test]
        fn detector_output_is_probability(samples in proptest::collection::vec(-1.0e3..1.0e3f64, 0..80)) {
            let mut d = GestureDetector::<f64>::shipped(GestureAxis::Shake);
            for s in samples {
                let p = d.step(s).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }

        #[test]
        fn mirrored_signal_same_probability(samples in proptest::collection::vec(0.0..1.0f64, 2..60)) {
            let mut up = GestureDetector::<f64>::shipped(GestureAxis::Nod);
            let mut down = GestureDetector::<f64>::shipped(GestureAxis::Nod);
            for s in samples {
                let a = up.step(s).unwrap();
                let b = down.step(-s).unwrap();
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
