//! Synthetic data with a hard nuisance (baseline and propensity) and an easy
//! treatment effect:
//!
//! ```text
//! b   = sin(pi x0 x1) + 2 (x2 - 0.5)^2 + x3 + 0.5 x4
//! e   = clip(sin(pi x0 x1), 0.1, 0.9)
//! tau = (x0 + x1) / 2
//! w   ~ Bernoulli(e)
//! y   = b + (w - 0.5) tau + sigma N(0, 1)
//! ```
//!
//! Per row the stream draws `p` uniforms for `x`, one uniform for `w` and
//! two uniforms for the normal, so rows never share state.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::{Column, Frame};
use crate::rng::SplitMix64;

pub const MIN_FEATURES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    /// Column-major covariates, `p` columns of length `n`.
    pub x: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub tau_true: Vec<f64>,
    pub e_true: Vec<f64>,
    pub b_true: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

pub fn baseline(x: &[f64]) -> f64 {
    (PI * x[0] * x[1]).sin() + 2.0 * (x[2] - 0.5).powi(2) + x[3] + 0.5 * x[4]
}

pub fn propensity(x: &[f64]) -> f64 {
    (PI * x[0] * x[1]).sin().clamp(0.1, 0.9)
}

pub fn effect(x: &[f64]) -> f64 {
    (x[0] + x[1]) / 2.0
}

pub fn generate(n: usize, p: usize, sigma: f64, seed: u64) -> Result<SyntheticSet> {
    if p < MIN_FEATURES {
        return Err(Error::InvalidDimension(format!("need at least {MIN_FEATURES} features, got {p}")));
    }
    if n == 0 {
        return Err(Error::InvalidDimension("need at least one row".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut x = vec![Vec::with_capacity(n); p];
    let mut set = SyntheticSet {
        x: Vec::new(),
        w: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        tau_true: Vec::with_capacity(n),
        e_true: Vec::with_capacity(n),
        b_true: Vec::with_capacity(n),
        sigma,
        seed,
    };
    let mut row = vec![0.0; p];
    for _ in 0..n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = rng.uniform();
            x[j].push(*v);
        }
        let b = baseline(&row);
        let e = propensity(&row);
        let tau = effect(&row);
        let w = if rng.uniform() < e { 1.0 } else { 0.0 };
        let noise = rng.normal();
        set.y.push(b + (w - 0.5) * tau + sigma * noise);
        set.w.push(w);
        set.tau_true.push(tau);
        set.e_true.push(e);
        set.b_true.push(b);
    }
    set.x = x;
    Ok(set)
}

impl SyntheticSet {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn covariate_names(&self) -> Vec<String> {
        (0..self.x.len()).map(|j| format!("x{j}")).collect()
    }

    /// Columns `x0..x{p-1}, w, y, tau_true, e_true, b_true`.
    pub fn to_frame(&self) -> Frame {
        let mut cols: Vec<Column> = self
            .covariate_names()
            .into_iter()
            .zip(&self.x)
            .map(|(name, c)| Column::numeric(name, c.clone()))
            .collect();
        cols.push(Column::binary("w", self.w.clone()));
        cols.push(Column::numeric("y", self.y.clone()));
        cols.push(Column::numeric("tau_true", self.tau_true.clone()));
        cols.push(Column::numeric("e_true", self.e_true.clone()));
        cols.push(Column::numeric("b_true", self.b_true.clone()));
        Frame::new(cols).expect("synthetic columns are consistent")
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.to_frame().write_csv(writer)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_frame().save_csv(path)
    }

    pub fn mean_tau(&self) -> f64 {
        self.tau_true.iter().sum::<f64>() / self.n() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_columns() {
        let s = generate(10_000, 5, 1.0, 3).unwrap();
        assert_eq!(s.x.len(), 5);
        assert!(s.x.iter().all(|c| c.len() == 10_000));
        assert_eq!(s.y.len(), 10_000);
        let f = s.to_frame();
        let names: Vec<&str> = f.column_names().collect();
        assert_eq!(names, ["x0", "x1", "x2", "x3", "x4", "w", "y", "tau_true", "e_true", "b_true"]);
    }

    #[test]
    fn too_few_features() {
        assert!(matches!(generate(10, 4, 1.0, 0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn noiseless_decomposition() {
        let s = generate(500, 6, 0.0, 9).unwrap();
        for i in 0..s.n() {
            assert_eq!(s.y[i], s.b_true[i] + (s.w[i] - 0.5) * s.tau_true[i]);
            assert_eq!(s.tau_true[i], (s.x[0][i] + s.x[1][i]) / 2.0);
            assert!((0.1..=0.9).contains(&s.e_true[i]));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate(200, 5, 1.0, 42).unwrap(), generate(200, 5, 1.0, 42).unwrap());
        assert_ne!(generate(200, 5, 1.0, 42).unwrap().y, generate(200, 5, 1.0, 43).unwrap().y);
    }

    #[test]
    fn sigma_only_changes_noise() {
        let a = generate(100, 5, 0.0, 1).unwrap();
        let b = generate(100, 5, 2.0, 1).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.w, b.w);
    }

    #[test]
    fn mean_effect_near_half() {
        let s = generate(10_000, 5, 1.0, 7).unwrap();
        assert!((s.mean_tau() - 0.5).abs() < 0.01);
    }
}
