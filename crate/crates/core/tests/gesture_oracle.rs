//! Forward-algorithm checks against path enumeration and a plain
//! probability-space recursion written independently of the library.

use proptest::prelude::*;
use spotlight_core::gesture::{forward_loglik, quantize, DetectorConfig, GestureDetector, HmmParams, ObservationSymbol};
use spotlight_core::GestureAxis;
use ObservationSymbol::*;

/// Σ over every state path of initial × transitions × emissions.
fn brute_force_likelihood(seq: &[ObservationSymbol], hmm: &HmmParams<f64>) -> f64 {
    let n = hmm.n_states();
    let len = seq.len();
    let mut total = 0.0;
    let mut path = vec![0usize; len];
    loop {
        let mut p = hmm.initial()[path[0]] * hmm.emission()[path[0]][seq[0].index()];
        for t in 1..len {
            p *= hmm.transition()[path[t - 1]][path[t]] * hmm.emission()[path[t]][seq[t].index()];
        }
        total += p;
        // odometer increment
        let mut k = 0;
        loop {
            if k == len {
                return total;
            }
            path[k] += 1;
            if path[k] < n {
                break;
            }
            path[k] = 0;
            k += 1;
        }
    }
}

/// Unscaled forward recursion in probability space.
fn plain_forward(seq: &[ObservationSymbol], hmm: &HmmParams<f64>) -> f64 {
    let n = hmm.n_states();
    let mut alpha: Vec<f64> = (0..n).map(|i| hmm.initial()[i] * hmm.emission()[i][seq[0].index()]).collect();
    for sym in &seq[1..] {
        alpha = (0..n)
            .map(|j| (0..n).map(|i| alpha[i] * hmm.transition()[i][j]).sum::<f64>() * hmm.emission()[j][sym.index()])
            .collect();
    }
    alpha.iter().sum()
}

fn oracle_probability(seq: &[ObservationSymbol], gain: f64) -> f64 {
    let g = plain_forward(seq, &HmmParams::shipped_gesture()).ln();
    let n = plain_forward(seq, &HmmParams::shipped_null()).ln();
    let llr = (g - n) / seq.len() as f64;
    1.0 / (1.0 + (-gain * llr).exp())
}

fn symbol() -> impl Strategy<Value = ObservationSymbol> {
    prop_oneof![Just(Pos), Just(Neg), Just(Still)]
}

fn stochastic_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01..1.0f64, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn arb_hmm() -> impl Strategy<Value = HmmParams<f64>> {
    (1usize..=3).prop_flat_map(|n| {
        (
            stochastic_row(n),
            proptest::collection::vec(stochastic_row(n), n),
            proptest::collection::vec(stochastic_row(3).prop_map(|r| [r[0], r[1], r[2]]), n),
        )
            .prop_map(|(i, t, e)| HmmParams::new(i, t, e).expect("normalized rows"))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn forward_matches_path_enumeration(hmm in arb_hmm(), seq in proptest::collection::vec(symbol(), 1..=6)) {
        let expected = brute_force_likelihood(&seq, &hmm).ln();
        let got = forward_loglik(&seq, &hmm).unwrap();
        prop_assert!(((got - expected) / expected).abs() <= 1e-9, "got {got}, expected {expected}");
    }
}

#[test]
fn shipped_models_match_enumeration_exhaustively() {
    // all 3^1 + ... + 3^6 sequences
    let gesture = HmmParams::shipped_gesture();
    let null = HmmParams::shipped_null();
    for len in 1..=6u32 {
        for code in 0..3usize.pow(len) {
            let seq: Vec<_> = (0..len).map(|k| ObservationSymbol::ALL[(code / 3usize.pow(k)) % 3]).collect();
            for hmm in [&gesture, &null] {
                let expected = brute_force_likelihood(&seq, hmm).ln();
                let got = forward_loglik(&seq, hmm).unwrap();
                assert!(((got - expected) / expected).abs() <= 1e-9, "{seq:?}: {got} vs {expected}");
            }
        }
    }
}

fn feed(axis: GestureAxis, samples: impl IntoIterator<Item = f64>) -> (f64, Vec<ObservationSymbol>) {
    let mut d = GestureDetector::shipped(axis);
    let mut p = 0.0;
    for s in samples {
        p = d.step(s).unwrap();
    }
    (p, d.history().collect())
}

#[test]
fn constant_signal_is_not_a_gesture() {
    let (p, hist) = feed(GestureAxis::Nod, std::iter::repeat_n(0.5, 30));
    assert!(hist.iter().all(|&s| s == Still));
    assert_eq!(hist.len(), 29);
    let oracle = oracle_probability(&hist, 8.0);
    assert!((p - oracle).abs() < 1e-12);
    assert!(p <= 0.1, "p = {p}");
}

#[test]
fn alternating_runs_are_a_gesture() {
    // sign flips every 4 samples: a ~1.9 Hz oscillation at 15 fps
    let samples = (0..31).scan(0.5, |y, i| {
        let out = *y;
        *y += if (i / 4) % 2 == 0 { 0.02 } else { -0.02 };
        Some(out)
    });
    let (p, hist) = feed(GestureAxis::Nod, samples);
    assert_eq!(hist.len(), 30);
    let oracle = oracle_probability(&hist, 8.0);
    assert!((p - oracle).abs() < 1e-12);
    assert!(p >= 0.9, "p = {p}");
}

#[test]
fn oscillation_outranks_stillness_in_llr() {
    let gesture = HmmParams::<f64>::shipped_gesture();
    let null = HmmParams::<f64>::shipped_null();
    let alternating: Vec<_> = (0..30).map(|i| if (i / 4) % 2 == 0 { Pos } else { Neg }).collect();
    let still = vec![Still; 30];
    let llr = |s: &[ObservationSymbol]| forward_loglik(s, &gesture).unwrap() - forward_loglik(s, &null).unwrap();
    assert!(llr(&alternating) > llr(&still));
    assert!(llr(&alternating) > 0.0 && llr(&still) < 0.0);
}

#[test]
fn shipped_dead_zones() {
    let nod = DetectorConfig::<f64>::shipped(GestureAxis::Nod);
    let shake = DetectorConfig::<f64>::shipped(GestureAxis::Shake);
    assert_eq!(quantize(0.0, nod.dead_zone), Still);
    assert_eq!(quantize(0.02, nod.dead_zone), Pos);
    assert_eq!(quantize(-3.0, shake.dead_zone), Neg);
    assert_eq!((nod.window, nod.gain), (30, 8.0));
}
