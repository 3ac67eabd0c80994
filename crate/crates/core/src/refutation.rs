//! Refutation battery: re-run an estimation procedure on perturbed copies of
//! the data and summarize how far the estimate moves.
//!
//! Repetition `r` draws from `SplitMix64::new(derive_seed(seed, r))`, so a
//! report depends only on `(seed, repetitions)` and the input.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::estimators::{EffectQuery, PropensityModel, DEFAULT_CLIP};
use crate::frame::{ceil_fraction, shuffled_partition, Column, Frame};
use crate::learners::logistic::sigmoid;
use crate::rng::{derive_seed, SplitMix64};

pub const DEFAULT_REPETITIONS: usize = 100;
pub const DEFAULT_SUBSET_FRACTION: f64 = 0.8;
/// Repetitions required before a p-value is reported.
pub const MIN_P_VALUE_REPETITIONS: usize = 30;
/// Placebo passes when `|mean_refuted| < PLACEBO_RATIO * |original|`.
pub const PLACEBO_RATIO: f64 = 0.25;
/// Random-cause and subset refuters pass when `relative_change < STABILITY_LIMIT`.
pub const STABILITY_LIMIT: f64 = 0.10;

/// A re-runnable estimation procedure returning a scalar effect.
pub trait Estimator {
    fn estimate(&self, frame: &Frame, query: &EffectQuery) -> Result<f64>;
}

impl<F> Estimator for F
where
    F: Fn(&Frame, &EffectQuery) -> Result<f64>,
{
    fn estimate(&self, frame: &Frame, query: &EffectQuery) -> Result<f64> {
        self(frame, query)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refuter {
    RandomCommonCause,
    PlaceboTreatment,
    DataSubset,
    UnobservedConfounder,
}

impl Refuter {
    pub const ALL: [Refuter; 4] = [
        Refuter::RandomCommonCause,
        Refuter::PlaceboTreatment,
        Refuter::DataSubset,
        Refuter::UnobservedConfounder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Refuter::RandomCommonCause => "random_common_cause",
            Refuter::PlaceboTreatment => "placebo_treatment",
            Refuter::DataSubset => "data_subset",
            Refuter::UnobservedConfounder => "unobserved_confounder",
        }
    }
}

impl std::str::FromStr for Refuter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Refuter::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown refuter `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Sensitivity readout without a pass/fail threshold.
    Informational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefutationReport {
    pub refuter: Refuter,
    pub original_effect: f64,
    /// Sorted ascending.
    pub refuted_effects: Vec<f64>,
    pub mean_refuted: f64,
    /// `|mean_refuted - original| / |original|`.
    pub relative_change: f64,
    /// Two-sided normal tail of the original effect among the refuted ones;
    /// absent below the minimum repetition count.
    pub p_value: Option<f64>,
    pub repetitions: usize,
    pub seed: u64,
    pub parameters: BTreeMap<String, f64>,
    pub verdict: Verdict,
    pub verdict_rule: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefuteOptions {
    pub repetitions: usize,
    pub seed: u64,
    pub subset_fraction: f64,
    pub strength_t: f64,
    pub strength_y: f64,
}

impl Default for RefuteOptions {
    fn default() -> Self {
        RefuteOptions {
            repetitions: DEFAULT_REPETITIONS,
            seed: 0,
            subset_fraction: DEFAULT_SUBSET_FRACTION,
            strength_t: 0.5,
            strength_y: 0.5,
        }
    }
}

/// Run one refuter with the knobs from `opts`.
pub fn refute(
    refuter: Refuter,
    est: &dyn Estimator,
    frame: &Frame,
    query: &EffectQuery,
    opts: &RefuteOptions,
) -> Result<RefutationReport> {
    match refuter {
        Refuter::RandomCommonCause => refute_random_common_cause(est, frame, query, opts.repetitions, opts.seed),
        Refuter::PlaceboTreatment => refute_placebo(est, frame, query, opts.repetitions, opts.seed),
        Refuter::DataSubset => refute_subset(est, frame, query, opts.subset_fraction, opts.repetitions, opts.seed),
        Refuter::UnobservedConfounder => refute_unobserved_confounder(
            est,
            frame,
            query,
            opts.strength_t,
            opts.strength_y,
            opts.repetitions,
            opts.seed,
        ),
    }
}

fn run<F>(
    refuter: Refuter,
    est: &dyn Estimator,
    frame: &Frame,
    query: &EffectQuery,
    repetitions: usize,
    seed: u64,
    parameters: BTreeMap<String, f64>,
    mut perturb: F,
) -> Result<RefutationReport>
where
    F: FnMut(&mut SplitMix64, f64) -> Result<(Frame, EffectQuery)>,
{
    if repetitions == 0 {
        return Err(Error::InvalidArgument("at least one repetition required".into()));
    }
    let original = est.estimate(frame, query)?;
    let mut refuted = Vec::with_capacity(repetitions);
    for r in 0..repetitions {
        let mut rng = SplitMix64::new(derive_seed(seed, r as u64));
        let (f, q) = perturb(&mut rng, original)?;
        refuted.push(est.estimate(&f, &q)?);
    }
    refuted.sort_by(f64::total_cmp);
    let mean = pivoted_mean(&refuted);
    let relative_change = if original != 0.0 {
        (mean - original).abs() / original.abs()
    } else if mean == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let p_value = if repetitions >= MIN_P_VALUE_REPETITIONS {
        Some(refutation_p_value(original, &refuted)?)
    } else {
        None
    };
    let pass_if = |ok: bool| if ok { Verdict::Pass } else { Verdict::Fail };
    let (verdict, verdict_rule) = match refuter {
        Refuter::PlaceboTreatment => (
            pass_if(mean.abs() < PLACEBO_RATIO * original.abs()),
            format!("pass if |mean_refuted| < {PLACEBO_RATIO} * |original_effect|"),
        ),
        Refuter::RandomCommonCause | Refuter::DataSubset => (
            pass_if(relative_change < STABILITY_LIMIT),
            format!("pass if relative_change < {STABILITY_LIMIT}"),
        ),
        Refuter::UnobservedConfounder => (
            Verdict::Informational,
            "informational: relative_change is the sensitivity to the simulated confounder".to_string(),
        ),
    };
    Ok(RefutationReport {
        refuter,
        original_effect: original,
        refuted_effects: refuted,
        mean_refuted: mean,
        relative_change,
        p_value,
        repetitions,
        seed,
        parameters,
        verdict,
        verdict_rule,
    })
}

/// Mean computed around the first value, so a constant sample returns that
/// constant exactly.
fn pivoted_mean(v: &[f64]) -> f64 {
    let pivot = v[0];
    pivot + v.iter().map(|x| x - pivot).sum::<f64>() / v.len() as f64
}

fn unused_name(frame: &Frame, stem: &str) -> String {
    let mut name = stem.to_string();
    let mut k = 1;
    while frame.has_column(&name) {
        name = format!("{stem}_{k}");
        k += 1;
    }
    name
}

/// Add an independent N(0, 1) column to the adjustment set.
pub fn refute_random_common_cause(
    est: &dyn Estimator,
    frame: &Frame,
    query: &EffectQuery,
    repetitions: usize,
    seed: u64,
) -> Result<RefutationReport> {
    let name = unused_name(frame, "random_common_cause");
    let n = frame.n_rows();
    run(
        Refuter::RandomCommonCause,
        est,
        frame,
        query,
        repetitions,
        seed,
        BTreeMap::new(),
        |rng, _| {
            let values = (0..n).map(|_| rng.normal()).collect();
            let f = frame.with_column(Column::numeric(&name, values))?;
            let mut q = query.clone();
            q.adjustment.push(name.clone());
            Ok((f, q))
        },
    )
}

/// Replace the treatment with an independent Bernoulli(mean(t)) draw.
pub fn refute_placebo(
    est: &dyn Estimator,
    frame: &Frame,
    query: &EffectQuery,
    repetitions: usize,
    seed: u64,
) -> Result<RefutationReport> {
    let t = frame.binary(&query.treatment)?;
    let n = t.len();
    let rate = t.iter().sum::<f64>() / n as f64;
    run(
        Refuter::PlaceboTreatment,
        est,
        frame,
        query,
        repetitions,
        seed,
        BTreeMap::from([("treated_rate".to_string(), rate)]),
        |rng, _| {
            let values = (0..n).map(|_| if rng.bernoulli(rate) { 1.0 } else { 0.0 }).collect();
            Ok((frame.with_column(Column::binary(&query.treatment, values))?, query.clone()))
        },
    )
}

/// Re-estimate on uniform row subsamples of size `ceil(fraction * n)`.
pub fn refute_subset(
    est: &dyn Estimator,
    frame: &Frame,
    query: &EffectQuery,
    fraction: f64,
    repetitions: usize,
    seed: u64,
) -> Result<RefutationReport> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("subset fraction {fraction} outside (0, 1)")));
    }
    let n = frame.n_rows();
    if ceil_fraction(n, fraction) == 0 {
        return Err(Error::EmptyFrame);
    }
    run(
        Refuter::DataSubset,
        est,
        frame,
        query,
        repetitions,
        seed,
        BTreeMap::from([("fraction".to_string(), fraction)]),
        |rng, _| {
            let (rows, _) = shuffled_partition(n, fraction, rng.next_u64());
            Ok((frame.take_rows(&rows), query.clone()))
        },
    )
}

/// Simulate a latent `u ~ N(0, 1)` that shifts treatment odds by
/// `strength_t * u` and the outcome by `strength_y * u`, then re-estimate
/// without `u`.
///
/// Each unit's assignment probability `p` is its clipped propensity on the
/// adjustment set. With `q = sigmoid(logit(p) + strength_t * u)`, a treated
/// unit stays treated with probability `min(1, q / p)` and a control switches
/// with probability `max(0, (q - p) / (1 - p))`, so `P(t' = 1 | x, u) = q`.
/// Switched units also move by `(t' - t) * original`, so reassignment alone
/// leaves the effect in place and the change measures confounding by `u`.
pub fn refute_unobserved_confounder(
    est: &dyn Estimator,
    frame: &Frame,
    query: &EffectQuery,
    strength_t: f64,
    strength_y: f64,
    repetitions: usize,
    seed: u64,
) -> Result<RefutationReport> {
    for s in [strength_t, strength_y] {
        if !(0.0..1.0).contains(&s) {
            return Err(Error::InvalidArgument(format!("confounder strength {s} outside [0, 1)")));
        }
    }
    let t = frame.binary(&query.treatment)?;
    let y = frame.complete(&query.outcome)?;
    let n = t.len();
    let p = if strength_t != 0.0 {
        PropensityModel::fit(frame, &query.treatment, &query.adjustment, DEFAULT_CLIP)?.scores(frame)?
    } else {
        Vec::new()
    };
    run(
        Refuter::UnobservedConfounder,
        est,
        frame,
        query,
        repetitions,
        seed,
        BTreeMap::from([
            ("strength_t".to_string(), strength_t),
            ("strength_y".to_string(), strength_y),
        ]),
        |rng, original| {
            let mut t2 = t.to_vec();
            let mut y2 = y.to_vec();
            for i in 0..n {
                let u = rng.normal();
                let v = rng.uniform();
                if strength_t != 0.0 {
                    let pi = p[i];
                    let q = sigmoid((pi / (1.0 - pi)).ln() + strength_t * u);
                    t2[i] = if t[i] == 1.0 {
                        if v < (q / pi).min(1.0) { 1.0 } else { 0.0 }
                    } else if v < ((q - pi) / (1.0 - pi)).max(0.0) {
                        1.0
                    } else {
                        0.0
                    };
                    // a switched unit takes on the estimated effect of its new arm
                    y2[i] += (t2[i] - t[i]) * original;
                }
                if strength_y != 0.0 {
                    y2[i] += strength_y * u;
                }
            }
            let mut f = frame.clone();
            if strength_t != 0.0 {
                f = f.with_column(Column::binary(&query.treatment, t2))?;
            }
            if strength_t != 0.0 || strength_y != 0.0 {
                f = f.with_column(Column::numeric(&query.outcome, y2))?;
            }
            Ok((f, query.clone()))
        },
    )
}

/// Two-sided tail probability of `original` under a normal fitted to
/// `refuted` (sample mean and standard deviation). A zero-spread sample gives
/// 1 when it equals `original` and 0 otherwise.
pub fn refutation_p_value(original: f64, refuted: &[f64]) -> Result<f64> {
    if refuted.len() < MIN_P_VALUE_REPETITIONS {
        return Err(Error::InvalidArgument(format!(
            "p-value needs at least {MIN_P_VALUE_REPETITIONS} repetitions, got {}",
            refuted.len()
        )));
    }
    if refuted.iter().all(|&v| v == refuted[0]) {
        return Ok(if original == refuted[0] { 1.0 } else { 0.0 });
    }
    let n = refuted.len() as f64;
    let mean = pivoted_mean(refuted);
    let var = refuted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let z = (original - mean).abs() / var.sqrt();
    Ok(erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Frame, EffectQuery) {
        let n = 200;
        let mut rng = SplitMix64::new(5);
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let t: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let y: Vec<f64> = (0..n).map(|i| x[i] + 2.0 * t[i] + 0.1 * rng.normal()).collect();
        let f = Frame::new(vec![
            Column::numeric("x", x),
            Column::binary("t", t),
            Column::numeric("y", y),
        ])
        .unwrap();
        (f, EffectQuery::new("t", "y", vec!["x".into()]))
    }

    fn diff_in_means(f: &Frame, q: &EffectQuery) -> Result<f64> {
        let t = f.binary(&q.treatment)?;
        let y = f.complete(&q.outcome)?;
        let (mut a, mut na, mut b, mut nb) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..t.len() {
            if t[i] == 1.0 {
                a += y[i];
                na += 1.0;
            } else {
                b += y[i];
                nb += 1.0;
            }
        }
        if na == 0.0 || nb == 0.0 {
            return Err(Error::SingleClass(q.treatment.clone()));
        }
        Ok(a / na - b / nb)
    }

    #[test]
    fn covariate_blind_estimator_ignores_random_cause() {
        let (f, q) = data();
        let r = refute_random_common_cause(&diff_in_means, &f, &q, 30, 1).unwrap();
        assert_eq!(r.relative_change, 0.0);
        assert!(r.refuted_effects.iter().all(|&v| v == r.original_effect));
        assert_eq!(r.p_value, Some(1.0));
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn placebo_moves_toward_zero() {
        let (f, q) = data();
        let r = refute_placebo(&diff_in_means, &f, &q, 40, 2).unwrap();
        assert!(r.mean_refuted.abs() < 0.25 * r.original_effect.abs());
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.p_value.unwrap() < 1e-6);
    }

    #[test]
    fn refuters_are_deterministic() {
        let (f, q) = data();
        for refuter in Refuter::ALL {
            let opts = RefuteOptions {
                repetitions: 5,
                seed: 11,
                ..Default::default()
            };
            let a = refute(refuter, &diff_in_means, &f, &q, &opts).unwrap();
            let b = refute(refuter, &diff_in_means, &f, &q, &opts).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.refuted_effects.len(), 5);
            assert!(a.refuted_effects.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn zero_strength_confounder_is_identity() {
        let (f, q) = data();
        let r = refute_unobserved_confounder(&diff_in_means, &f, &q, 0.0, 0.0, 10, 3).unwrap();
        assert!(r.refuted_effects.iter().all(|v| v.to_bits() == r.original_effect.to_bits()));
        assert_eq!(r.verdict, Verdict::Informational);
    }

    #[test]
    fn subset_size_and_bounds() {
        let (f, q) = data();
        let sizes = std::cell::RefCell::new(Vec::new());
        let probe = |fr: &Frame, qq: &EffectQuery| {
            sizes.borrow_mut().push(fr.n_rows());
            diff_in_means(fr, qq)
        };
        refute_subset(&probe, &f, &q, 0.7, 3, 0).unwrap();
        assert_eq!(*sizes.borrow(), vec![200, 140, 140, 140]);
        assert!(refute_subset(&diff_in_means, &f, &q, 1.0, 3, 0).is_err());
    }

    #[test]
    fn p_value_extremes() {
        let same = vec![1.5; 30];
        assert_eq!(refutation_p_value(1.5, &same).unwrap(), 1.0);
        assert_eq!(refutation_p_value(2.0, &same).unwrap(), 0.0);
        let spread: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let sd = (40.0f64 / 39.0).sqrt();
        assert!(refutation_p_value(10.0 * sd, &spread).unwrap() < 1e-6);
        assert!((refutation_p_value(0.0, &spread).unwrap() - 1.0).abs() < 1e-15);
        assert!(refutation_p_value(0.0, &spread[..29]).is_err());
    }
}
