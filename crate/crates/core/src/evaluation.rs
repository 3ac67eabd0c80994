//! Validation metrics for effect predictions: MSE, histogram KL divergence,
//! uplift (cumulative gain) curves with AUUC, and prediction-vs-truth scatter.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 50;
/// Smoothing mass added to every histogram bin before normalizing.
pub const KL_SMOOTHING: f64 = 1e-9;

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::DimensionMismatch("empty input".into()));
    }
    Ok(())
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Counts of `values` in `bins` equal-width bins over `[lo, hi]`; the top edge
/// falls into the last bin.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = hi - lo;
    for &v in values {
        let k = if width > 0.0 {
            (((v - lo) / width * bins as f64).floor().max(0.0) as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    counts
}

/// `KL(p || q)` between histograms of two samples on their common range.
/// Returns 0 when every value in both samples is identical.
pub fn kl_divergence(p_sample: &[f64], q_sample: &[f64], bins: usize) -> Result<f64> {
    if p_sample.is_empty() || q_sample.is_empty() {
        return Err(Error::DimensionMismatch("KL divergence needs non-empty samples".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    if p_sample.iter().chain(q_sample).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("KL divergence needs finite values".into()));
    }
    let lo = p_sample.iter().chain(q_sample).copied().fold(f64::INFINITY, f64::min);
    let hi = p_sample.iter().chain(q_sample).copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(0.0);
    }
    let masses = |sample: &[f64]| {
        let n = sample.len() as f64;
        let total = 1.0 + bins as f64 * KL_SMOOTHING;
        histogram(sample, lo, hi, bins)
            .into_iter()
            .map(|c| (c as f64 / n + KL_SMOOTHING) / total)
            .collect::<Vec<_>>()
    };
    let p = masses(p_sample);
    let q = masses(q_sample);
    let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
    Ok(kl.max(0.0))
}

/// Linear-interpolated percentile (`q` in `[0, 100]`) of a non-empty sample.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let r = q / 100.0 * (s.len() - 1) as f64;
    let (lo, hi) = (r.floor() as usize, r.ceil() as usize);
    s[lo] + (s[hi] - s[lo]) * (r - lo as f64)
}

/// Diagnostic KL variant: 99 bins between the 0.1th and 99.9th percentiles of
/// the pooled samples, values outside dropped, bin masses clipped to
/// `[0.001, 0.999]` and renormalized. Less sensitive to predicted mass outside
/// the support of `q_sample` than [`kl_divergence`].
pub fn kl_divergence_clipped(p_sample: &[f64], q_sample: &[f64]) -> Result<f64> {
    if p_sample.is_empty() || q_sample.is_empty() {
        return Err(Error::DimensionMismatch("KL divergence needs non-empty samples".into()));
    }
    let pooled: Vec<f64> = p_sample.iter().chain(q_sample).copied().collect();
    let (lo, hi) = (percentile(&pooled, 0.1), percentile(&pooled, 99.9));
    if !(hi > lo) {
        return Ok(0.0);
    }
    let masses = |sample: &[f64]| {
        let inside: Vec<f64> = sample.iter().copied().filter(|v| (lo..=hi).contains(v)).collect();
        let n = inside.len().max(1) as f64;
        let clipped: Vec<f64> = histogram(&inside, lo, hi, 99)
            .into_iter()
            .map(|c| (c as f64 / n).clamp(0.001, 0.999))
            .collect();
        let total: f64 = clipped.iter().sum();
        clipped.into_iter().map(|m| m / total).collect::<Vec<_>>()
    };
    let p = masses(p_sample);
    let q = masses(q_sample);
    Ok(p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpliftPoint {
    pub fraction: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftCurve {
    pub points: Vec<UpliftPoint>,
    /// Trapezoidal area under gain vs. fraction from the origin, divided by n.
    pub auuc: f64,
}

/// Cumulative gain when units are taken in descending order of `ite_pred`
/// (ties by row index). Gain is zero until both arms have appeared.
pub fn uplift_curve(ite_pred: &[f64], w: &[f64], y: &[f64]) -> Result<UpliftCurve> {
    same_len(ite_pred, w)?;
    same_len(ite_pred, y)?;
    if w.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("treatment must be 0/1".into()));
    }
    if !(w.contains(&1.0) && w.contains(&0.0)) {
        return Err(Error::SingleClass("treatment".into()));
    }
    let n = ite_pred.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ite_pred[b].total_cmp(&ite_pred[a]).then(a.cmp(&b)));

    let (mut nt, mut st, mut nc, mut sc) = (0usize, 0.0, 0usize, 0.0);
    let mut points = Vec::with_capacity(n);
    let mut area = 0.0;
    let mut prev = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if w[i] == 1.0 {
            nt += 1;
            st += y[i];
        } else {
            nc += 1;
            sc += y[i];
        }
        let k = k + 1;
        let gain = if nt > 0 && nc > 0 {
            (st / nt as f64 - sc / nc as f64) * k as f64
        } else {
            0.0
        };
        area += (prev + gain) / 2.0;
        prev = gain;
        points.push(UpliftPoint {
            fraction: k as f64 / n as f64,
            gain,
        });
    }
    // each trapezoid has width 1/n; the extra 1/n makes curves of different n comparable
    let auuc = area / n as f64 / n as f64;
    Ok(UpliftCurve { points, auuc })
}

/// Gain curve for data with known per-unit effects: `gain(k)` is the sum of
/// `tau_true` over the top `k` units by `ite_pred`. Same ordering and AUUC
/// normalization as [`uplift_curve`].
pub fn effect_gain_curve(ite_pred: &[f64], tau_true: &[f64]) -> Result<UpliftCurve> {
    same_len(ite_pred, tau_true)?;
    let n = ite_pred.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ite_pred[b].total_cmp(&ite_pred[a]).then(a.cmp(&b)));
    let mut points = Vec::with_capacity(n);
    let (mut gain, mut prev, mut area) = (0.0, 0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        gain += tau_true[i];
        area += (prev + gain) / 2.0;
        prev = gain;
        points.push(UpliftPoint {
            fraction: (k + 1) as f64 / n as f64,
            gain,
        });
    }
    Ok(UpliftCurve {
        points,
        auuc: area / n as f64 / n as f64,
    })
}

impl UpliftCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(["fraction", "gain"]).map_err(io)?;
        for p in &self.points {
            w.write_record([p.fraction.to_string(), p.gain.to_string()]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Predicted-vs-true pairs with the OLS line `pred = intercept + slope * truth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatter {
    pub truth: Vec<f64>,
    pub predicted: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

pub fn prediction_scatter(ite_pred: &[f64], tau_true: &[f64]) -> Result<Scatter> {
    same_len(ite_pred, tau_true)?;
    let n = tau_true.len() as f64;
    let mt = tau_true.iter().sum::<f64>() / n;
    let mp = ite_pred.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (t, p) in tau_true.iter().zip(ite_pred) {
        sxy += (t - mt) * (p - mp);
        sxx += (t - mt) * (t - mt);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateRange("true effects have zero variance".into()));
    }
    let slope = sxy / sxx;
    Ok(Scatter {
        truth: tau_true.to_vec(),
        predicted: ite_pred.to_vec(),
        slope,
        intercept: mp - slope * mt,
    })
}

impl Scatter {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(["tau_true", "ite_pred"]).map_err(io)?;
        for (t, p) in self.truth.iter().zip(&self.predicted) {
            w.write_record([t.to_string(), p.to_string()]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}
