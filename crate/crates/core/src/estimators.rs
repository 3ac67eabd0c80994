//! Average-effect estimators built on a propensity model: regression
//! adjustment, 1-NN propensity matching (ATT), inverse propensity weighting
//! and propensity stratification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::learners::{Design, FittedModel, LearnerKind, LearnerSpec};

/// Propensity scores are clipped to `[DEFAULT_CLIP, 1 - DEFAULT_CLIP]`.
pub const DEFAULT_CLIP: f64 = 0.05;
pub const DEFAULT_STRATA: usize = 5;

/// Treatment, outcome and adjustment columns of one effect query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectQuery {
    pub treatment: String,
    pub outcome: String,
    pub adjustment: Vec<String>,
}

impl EffectQuery {
    pub fn new(treatment: impl Into<String>, outcome: impl Into<String>, adjustment: Vec<String>) -> Self {
        EffectQuery {
            treatment: treatment.into(),
            outcome: outcome.into(),
            adjustment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimand {
    #[serde(rename = "ATE")]
    Ate,
    #[serde(rename = "ATT")]
    Att,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub method: String,
    pub estimand: Estimand,
    /// Effect in outcome units.
    pub value: f64,
    /// `value / mean(y | t = 0)`; absent when the control mean is zero.
    pub relative_effect: Option<f64>,
    pub n_treated: usize,
    pub n_control: usize,
    pub adjustment_set: Vec<String>,
    pub seed: Option<u64>,
}

impl EffectEstimate {
    /// Wrap an externally computed effect with the arm counts and relative
    /// effect of `query` on `frame`.
    pub fn for_query(frame: &Frame, query: &EffectQuery, method: &str, estimand: Estimand, value: f64) -> Result<Self> {
        Ok(Arms::from_frame(frame, query)?.estimate(method, estimand, value, query))
    }
}

/// Treatment and outcome vectors checked for both arms.
pub(crate) struct Arms<'a> {
    pub t: &'a [f64],
    pub y: &'a [f64],
    pub n_treated: usize,
    pub n_control: usize,
}

impl<'a> Arms<'a> {
    pub fn from_frame(frame: &'a Frame, query: &EffectQuery) -> Result<Self> {
        let t = frame.binary(&query.treatment)?;
        let y = frame.complete(&query.outcome)?;
        Self::new(t, y, &query.treatment)
    }

    pub fn new(t: &'a [f64], y: &'a [f64], name: &str) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} treatment values, {} outcomes",
                t.len(),
                y.len()
            )));
        }
        let n_treated = t.iter().filter(|&&v| v == 1.0).count();
        let n_control = t.len() - n_treated;
        if n_treated == 0 || n_control == 0 {
            return Err(Error::SingleClass(name.to_string()));
        }
        Ok(Arms {
            t,
            y,
            n_treated,
            n_control,
        })
    }

    fn control_mean(&self) -> f64 {
        let s: f64 = self.t.iter().zip(self.y).filter(|(t, _)| **t == 0.0).map(|(_, y)| y).sum();
        s / self.n_control as f64
    }

    fn estimate(&self, method: &str, estimand: Estimand, value: f64, query: &EffectQuery) -> EffectEstimate {
        let base = self.control_mean();
        EffectEstimate {
            method: method.to_string(),
            estimand,
            value,
            relative_effect: (base != 0.0).then(|| value / base),
            n_treated: self.n_treated,
            n_control: self.n_control,
            adjustment_set: query.adjustment.clone(),
            seed: None,
        }
    }
}

/// Logistic model of treatment on the adjustment set, with clipped scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub model: FittedModel,
    pub epsilon: f64,
}

impl PropensityModel {
    pub fn fit(frame: &Frame, treatment: &str, adjustment: &[String], epsilon: f64) -> Result<Self> {
        Self::fit_with(frame, treatment, adjustment, epsilon, &LearnerSpec::logistic())
    }

    /// As [`PropensityModel::fit`] with explicit logistic settings.
    pub fn fit_with(
        frame: &Frame,
        treatment: &str,
        adjustment: &[String],
        epsilon: f64,
        spec: &LearnerSpec,
    ) -> Result<Self> {
        if spec.kind != LearnerKind::Logistic {
            return Err(Error::InvalidArgument(format!(
                "propensity model must be logistic, got {}",
                spec.kind.as_str()
            )));
        }
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("clip epsilon {epsilon} outside [0, 0.5)")));
        }
        let t = frame.binary(treatment)?;
        if t.iter().all(|&v| v == t[0]) || t.is_empty() {
            return Err(Error::SingleClass(treatment.to_string()));
        }
        let x = Design::from_frame(frame, adjustment)?;
        let model = spec.fit(&x, t, None).map_err(|e| match e {
            Error::SingleClass(_) => Error::SingleClass(treatment.to_string()),
            other => other,
        })?;
        Ok(PropensityModel { model, epsilon })
    }

    /// Clipped scores for every row of `frame`.
    pub fn scores(&self, frame: &Frame) -> Result<Vec<f64>> {
        let x = Design::from_frame(frame, &self.model.features)?;
        self.scores_for(&x)
    }

    pub fn scores_for(&self, x: &Design) -> Result<Vec<f64>> {
        let lo = self.epsilon;
        let hi = 1.0 - self.epsilon;
        Ok(self.model.predict(x)?.into_iter().map(|p| p.clamp(lo, hi)).collect())
    }

    pub fn features(&self) -> &[String] {
        &self.model.features
    }
}

/// OLS of outcome on treatment plus adjustment set; the treatment coefficient (ATE).
pub fn regression_adjustment(frame: &Frame, query: &EffectQuery) -> Result<EffectEstimate> {
    let arms = Arms::from_frame(frame, query)?;
    if query.adjustment.contains(&query.treatment) {
        return Err(Error::InvalidArgument("treatment listed in its own adjustment set".into()));
    }
    let x = Design::from_frame(frame, &query.adjustment)?.with_column(&query.treatment, arms.t.to_vec())?;
    let model = LearnerSpec::linear().fit(&x, arms.y, None)?;
    let value = model
        .coefficient(&query.treatment)
        .expect("treatment is a model feature");
    Ok(arms.estimate("regression_adjustment", Estimand::Ate, value, query))
}

/// Mean over treated units of `y_i - y_match`, matching each treated unit to
/// the control with the nearest score (with replacement; ties go to the
/// lowest row index).
pub fn matched_att(t: &[f64], y: &[f64], scores: &[f64]) -> Result<f64> {
    Arms::new(t, y, "treatment")?;
    if scores.len() != t.len() {
        return Err(Error::DimensionMismatch("one score per row required".into()));
    }
    let mut controls: Vec<usize> = (0..t.len()).filter(|&i| t[i] == 0.0).collect();
    controls.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let key: Vec<f64> = controls.iter().map(|&i| scores[i]).collect();

    let mut total = 0.0;
    let mut count = 0usize;
    for i in (0..t.len()).filter(|&i| t[i] == 1.0) {
        let s = scores[i];
        let pos = key.partition_point(|&k| k < s);
        // best control at or above s: first entry of its score group
        let above = (pos < key.len()).then(|| controls[pos]);
        // best control below s: first entry of the group holding key[pos - 1]
        let below = (pos > 0).then(|| {
            let v = key[pos - 1];
            controls[key.partition_point(|&k| k < v)]
        });
        let chosen = match (below, above) {
            (Some(b), Some(a)) => {
                let (db, da) = (s - scores[b], scores[a] - s);
                if db < da || (db == da && b < a) {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("controls are non-empty"),
        };
        total += y[i] - y[chosen];
        count += 1;
    }
    Ok(total / count as f64)
}

pub fn psm_att(frame: &Frame, query: &EffectQuery, pm: &PropensityModel) -> Result<EffectEstimate> {
    let arms = Arms::from_frame(frame, query)?;
    let scores = pm.scores(frame)?;
    let value = matched_att(arms.t, arms.y, &scores)?;
    Ok(arms.estimate("psm", Estimand::Att, value, query))
}

/// `mean(t y / e) - mean((1 - t) y / (1 - e))`.
pub fn weighted_ate(t: &[f64], y: &[f64], scores: &[f64]) -> Result<f64> {
    Arms::new(t, y, "treatment")?;
    if scores.len() != t.len() {
        return Err(Error::DimensionMismatch("one score per row required".into()));
    }
    let n = t.len() as f64;
    let treated: f64 = (0..t.len()).map(|i| t[i] * y[i] / scores[i]).sum();
    let control: f64 = (0..t.len()).map(|i| (1.0 - t[i]) * y[i] / (1.0 - scores[i])).sum();
    Ok(treated / n - control / n)
}

pub fn ipw_ate(frame: &Frame, query: &EffectQuery, pm: &PropensityModel) -> Result<EffectEstimate> {
    let arms = Arms::from_frame(frame, query)?;
    let scores = pm.scores(frame)?;
    let value = weighted_ate(arms.t, arms.y, &scores)?;
    Ok(arms.estimate("ipw", Estimand::Ate, value, query))
}

/// Stratum index (0-based) of every unit under `k` score-quantile strata.
///
/// Cut `j` is the `floor(j n / k)`-th smallest score; a unit belongs to the
/// number of cuts its score exceeds, so tied scores share a stratum.
pub fn propensity_strata(scores: &[f64], k: usize) -> Vec<usize> {
    let n = scores.len();
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..k)
        .map(|j| {
            let r = j * n / k;
            if r == 0 {
                f64::NEG_INFINITY
            } else {
                sorted[r - 1]
            }
        })
        .collect();
    scores
        .iter()
        .map(|&s| cuts.iter().filter(|&&c| s > c).count())
        .collect()
}

/// Stratified difference in means; returns `(effect, units kept)`.
pub fn stratified_difference(t: &[f64], y: &[f64], scores: &[f64], k: usize) -> Result<(f64, usize)> {
    Arms::new(t, y, "treatment")?;
    if k == 0 {
        return Err(Error::InvalidArgument("stratum count must be at least 1".into()));
    }
    if scores.len() != t.len() {
        return Err(Error::DimensionMismatch("one score per row required".into()));
    }
    let strata = propensity_strata(scores, k);
    // (treated count, treated sum, control count, control sum)
    let mut acc = vec![(0usize, 0.0f64, 0usize, 0.0f64); k];
    for i in 0..t.len() {
        let a = &mut acc[strata[i]];
        if t[i] == 1.0 {
            a.0 += 1;
            a.1 += y[i];
        } else {
            a.2 += 1;
            a.3 += y[i];
        }
    }
    let kept: Vec<_> = acc.iter().filter(|a| a.0 > 0 && a.2 > 0).collect();
    if kept.is_empty() {
        return Err(Error::NoValidStrata);
    }
    let n_kept: usize = kept.iter().map(|a| a.0 + a.2).sum();
    let value = kept
        .iter()
        .map(|a| (a.0 + a.2) as f64 / n_kept as f64 * (a.1 / a.0 as f64 - a.3 / a.2 as f64))
        .sum();
    Ok((value, n_kept))
}

pub fn stratified_ate(frame: &Frame, query: &EffectQuery, pm: &PropensityModel, k: usize) -> Result<EffectEstimate> {
    let arms = Arms::from_frame(frame, query)?;
    let scores = pm.scores(frame)?;
    let (value, _) = stratified_difference(arms.t, arms.y, &scores, k)?;
    Ok(arms.estimate("stratification", Estimand::Ate, value, query))
}
