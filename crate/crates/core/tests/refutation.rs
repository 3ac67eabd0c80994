use std::cell::RefCell;

use causet::estimators::{regression_adjustment, EffectQuery};
use causet::frame::{Column, Frame};
use causet::refutation::{
    refutation_p_value, refute, refute_placebo, refute_random_common_cause, refute_subset,
    refute_unobserved_confounder, RefuteOptions, Refuter,
};
use causet::rng::SplitMix64;
use causet::synth;
use causet::Result;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn adjusted(f: &Frame, q: &EffectQuery) -> Result<f64> {
    Ok(regression_adjustment(f, q)?.value)
}

/// Difference in arm means; never looks at the adjustment set.
fn naive(f: &Frame, q: &EffectQuery) -> Result<f64> {
    let t = f.binary(&q.treatment)?;
    let y = f.complete(&q.outcome)?;
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
    for (ti, yi) in t.iter().zip(y) {
        if *ti == 1.0 {
            s1 += yi;
            n1 += 1.0;
        } else {
            s0 += yi;
            n0 += 1.0;
        }
    }
    Ok(s1 / n1 - s0 / n0)
}

fn synth_frame(n: usize, seed: u64) -> (Frame, EffectQuery) {
    let s = synth::generate(n, 5, 1.0, seed).unwrap();
    (s.to_frame(), EffectQuery::new("w", "y", s.covariate_names()))
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn every_refuter_is_deterministic(seed in any::<u64>()) {
        let (f, q) = synth_frame(300, 3);
        let opts = RefuteOptions { repetitions: 5, seed, ..RefuteOptions::default() };
        for r in Refuter::ALL {
            let a = refute(r, &adjusted, &f, &q, &opts).unwrap();
            let b = refute(r, &adjusted, &f, &q, &opts).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.refuted_effects.len(), 5);
            prop_assert!(a.refuted_effects.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn zero_strength_confounder_is_identity(seed in any::<u64>()) {
        let (f, q) = synth_frame(300, seed % 50);
        let rep = refute_unobserved_confounder(&adjusted, &f, &q, 0.0, 0.0, 5, seed).unwrap();
        prop_assert!(rep.refuted_effects.iter().all(|&v| v == rep.original_effect));
        prop_assert_eq!(rep.relative_change, 0.0);
    }

    #[test]
    fn random_cause_cannot_move_a_covariate_blind_estimator(seed in any::<u64>()) {
        let (f, q) = synth_frame(300, 5);
        let rep = refute_random_common_cause(&naive, &f, &q, 5, seed).unwrap();
        prop_assert_eq!(rep.relative_change, 0.0);
    }

    #[test]
    fn p_value_is_a_probability(
        original in -10.0f64..10.0,
        refuted in proptest::collection::vec(-10.0f64..10.0, 30..60),
    ) {
        let p = refutation_p_value(original, &refuted).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn subset_leaves_the_input_untouched() {
    let (f, q) = synth_frame(400, 8);
    let before = f.clone();
    let rep = refute_subset(&adjusted, &f, &q, 0.8, 10, 1).unwrap();
    assert_eq!(f, before);
    assert_eq!(rep.refuted_effects.len(), 10);
}

#[test]
fn near_full_subset_reproduces_the_estimate() {
    let (f, q) = synth_frame(10_000, 9);
    let rep = refute_subset(&adjusted, &f, &q, 0.999, 10, 2).unwrap();
    assert!(rep.relative_change < 0.01, "{}", rep.relative_change);
}

#[test]
fn subset_spread_shrinks_with_n() {
    let spread = |n| {
        let (f, q) = synth_frame(n, 12);
        std_dev(&refute_subset(&adjusted, &f, &q, 0.8, 30, 4).unwrap().refuted_effects)
    };
    let (small, large) = (spread(1000), spread(10_000));
    assert!(large < small, "{large} vs {small}");
}

#[test]
fn subset_rejects_degenerate_fractions() {
    let (f, q) = synth_frame(50, 1);
    for frac in [0.0, 1.0, -0.2, 1.5] {
        assert_eq!(refute_subset(&adjusted, &f, &q, frac, 3, 0).unwrap_err().kind(), "InvalidArgument");
    }
}

#[test]
fn placebo_is_independent_of_the_real_treatment() {
    let (f, q) = synth_frame(10_000, 21);
    let real = f.binary("w").unwrap().to_vec();
    let stats = RefCell::new(Vec::new());
    let probe = |g: &Frame, q: &EffectQuery| -> Result<f64> {
        let t = g.binary(&q.treatment)?;
        if t != real.as_slice() {
            let mut table = [[0.0f64; 2]; 2];
            for (a, b) in real.iter().zip(t) {
                table[*a as usize][*b as usize] += 1.0;
            }
            let n = real.len() as f64;
            let mut chi = 0.0;
            for (i, row) in table.iter().enumerate() {
                for (j, obs) in row.iter().enumerate() {
                    let want = (table[i][0] + table[i][1]) * (table[0][j] + table[1][j]) / n;
                    chi += (obs - want).powi(2) / want;
                }
            }
            stats.borrow_mut().push(1.0 - ChiSquared::new(1.0).unwrap().cdf(chi));
        }
        naive(g, q)
    };
    let rep = refute_placebo(&probe, &f, &q, 5, 3).unwrap();
    let p = stats.borrow();
    assert_eq!(p.len(), 5);
    assert!(p.iter().all(|&v| v > 0.01), "{p:?}");
    let rate = rep.parameters["treated_rate"];
    assert!((rate - real.iter().sum::<f64>() / 10_000.0).abs() < 1e-12);
}

#[test]
fn placebo_pulls_synthetic_effect_toward_zero() {
    let (f, q) = synth_frame(5000, 30);
    let rep = refute_placebo(&adjusted, &f, &q, 30, 5).unwrap();
    assert!(rep.mean_refuted.abs() < 0.25 * rep.original_effect.abs(), "{} vs {}", rep.mean_refuted, rep.original_effect);
}

#[test]
fn placebo_in_a_null_world_stays_near_zero() {
    let mut rng = SplitMix64::new(77);
    let n = 4000;
    let t: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.4) { 1.0 } else { 0.0 }).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let f = Frame::new(vec![Column::binary("t", t), Column::numeric("y", y)]).unwrap();
    let q = EffectQuery::new("t", "y", vec![]);
    let rep = refute_placebo(&naive, &f, &q, 30, 1).unwrap();
    assert!(rep.original_effect.abs() < 0.1);
    assert!(rep.mean_refuted.abs() < 0.05);
}

#[test]
fn random_cause_barely_moves_adjusted_estimate() {
    let (f, q) = synth_frame(5000, 31);
    let rep = refute_random_common_cause(&adjusted, &f, &q, 30, 6).unwrap();
    assert!(rep.relative_change < 0.10, "{}", rep.relative_change);
}

#[test]
fn confounder_sensitivity_grows_with_outcome_strength() {
    let (f, q) = synth_frame(5000, 40);
    let change: Vec<f64> = [0.0, 0.25, 0.5]
        .iter()
        .map(|&sy| refute_unobserved_confounder(&adjusted, &f, &q, 0.5, sy, 30, 7).unwrap().relative_change)
        .collect();
    assert!(change.windows(2).all(|w| w[0] <= w[1]), "{change:?}");
    assert!((0.02..=0.5).contains(&change[2]), "{change:?}");
}

#[test]
fn confounder_rejects_strengths_outside_unit_interval() {
    let (f, q) = synth_frame(50, 1);
    for (st, sy) in [(1.0, 0.0), (0.0, 1.0), (-0.1, 0.2)] {
        assert!(refute_unobserved_confounder(&adjusted, &f, &q, st, sy, 3, 0).is_err());
    }
}

#[test]
fn p_value_degenerate_and_extreme_cases() {
    assert_eq!(refutation_p_value(1.5, &[1.5; 30]).unwrap(), 1.0);
    assert_eq!(refutation_p_value(1.0, &[1.5; 30]).unwrap(), 0.0);
    let spread: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
    let sd = std_dev(&spread);
    assert!(refutation_p_value(10.0 * sd, &spread).unwrap() < 1e-6);
    assert_eq!(refutation_p_value(0.0, &[0.0; 29]).unwrap_err().kind(), "InvalidArgument");
}

#[test]
fn p_value_matches_monte_carlo_tail() {
    let mut rng = SplitMix64::new(2024);
    for case in 0..5 {
        let (mu, sd) = (case as f64 - 2.0, 0.5 + case as f64 * 0.3);
        let refuted: Vec<f64> = (0..100).map(|_| mu + sd * rng.normal()).collect();
        let original = mu + sd * (0.3 + 0.5 * case as f64);
        let m = refuted.iter().sum::<f64>() / 100.0;
        let s = std_dev(&refuted);
        let draws = 400_000;
        let hits = (0..draws).filter(|_| (s * rng.normal()).abs() >= (original - m).abs()).count();
        let mc = hits as f64 / draws as f64;
        let p = refutation_p_value(original, &refuted).unwrap();
        assert!((p - mc).abs() < 0.02, "case {case}: {p} vs {mc}");
    }
}
