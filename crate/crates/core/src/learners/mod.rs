//! Base supervised learners: weighted ridge-jittered least squares, logistic
//! regression by IRLS, and squared-error gradient-boosted regression trees.
//!
//! Models are fitted on a named [`Design`] and remember their feature names
//! in sorted order, so prediction accepts the same features in any column
//! order and the fit itself does not depend on column order.

mod gbt;
mod linear;
pub(crate) mod logistic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

pub use gbt::{Ensemble, Tree, TreeNode};

/// Named, column-major covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Design {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, n_rows: usize) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n_rows {
                return Err(Error::DimensionMismatch(format!(
                    "feature `{name}` has {} rows, expected {n_rows}",
                    col.len()
                )));
            }
        }
        let mut sorted = names.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateColumn(w[0].clone()));
        }
        Ok(Design {
            names,
            columns,
            n_rows,
        })
    }

    /// Design with no features (intercept-only models).
    pub fn empty(n_rows: usize) -> Self {
        Design {
            names: Vec::new(),
            columns: Vec::new(),
            n_rows,
        }
    }

    /// Complete numeric/binary columns of `frame`.
    pub fn from_frame<S: AsRef<str>>(frame: &Frame, names: &[S]) -> Result<Self> {
        let columns = names
            .iter()
            .map(|n| frame.complete(n.as_ref()).map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        Design::new(
            names.iter().map(|n| n.as_ref().to_string()).collect(),
            columns,
            frame.n_rows(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Copy with `name` appended (or replaced).
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Design> {
        if values.len() != self.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "feature `{name}` has {} rows, expected {}",
                values.len(),
                self.n_rows
            )));
        }
        let mut out = self.clone();
        match out.names.iter().position(|n| n == name) {
            Some(i) => out.columns[i] = values,
            None => {
                out.names.push(name.to_string());
                out.columns.push(values);
            }
        }
        Ok(out)
    }

    pub fn take_rows(&self, rows: &[usize]) -> Design {
        Design {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            n_rows: rows.len(),
        }
    }

    /// Columns in the order of `names`.
    fn aligned(&self, names: &[String]) -> Result<Vec<&[f64]>> {
        if names.len() != self.names.len() {
            return Err(Error::DimensionMismatch(format!(
                "model expects features {names:?}, got {:?}",
                self.names
            )));
        }
        names
            .iter()
            .map(|n| {
                self.column(n)
                    .ok_or_else(|| Error::DimensionMismatch(format!("missing feature `{n}`")))
            })
            .collect()
    }

    fn canonical_names(&self) -> Vec<String> {
        let mut names = self.names.clone();
        names.sort();
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Linear,
    Logistic,
    Gbt,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Linear => "linear",
            LearnerKind::Logistic => "logistic",
            LearnerKind::Gbt => "gbt",
        }
    }
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LearnerKind::Linear),
            "logistic" => Ok(LearnerKind::Logistic),
            "gbt" => Ok(LearnerKind::Gbt),
            other => Err(Error::InvalidArgument(format!("unknown learner kind `{other}`"))),
        }
    }
}

/// Learner family plus hyperparameters. Each kind reads only its own knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    /// Boosting rounds (gbt) or IRLS iterations (logistic).
    pub max_iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub tolerance: f64,
    pub ridge: f64,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        LearnerSpec {
            kind,
            max_iterations: 100,
            learning_rate: 0.1,
            max_depth: 3,
            tolerance: 1e-6,
            ridge: 1e-8,
        }
    }

    pub fn linear() -> Self {
        Self::new(LearnerKind::Linear)
    }

    pub fn logistic() -> Self {
        Self::new(LearnerKind::Logistic)
    }

    pub fn gbt() -> Self {
        Self::new(LearnerKind::Gbt)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        // zero is accepted: it degenerates boosting to the mean predictor
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.ridge >= 0.0) {
            return bad("ridge must be non-negative");
        }
        Ok(())
    }

    /// Fit on `x`, `y` with optional per-row weights (linear and gbt only).
    pub fn fit(&self, x: &Design, y: &[f64], weights: Option<&[f64]>) -> Result<FittedModel> {
        self.validate()?;
        if x.n_rows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} design rows, {} targets",
                x.n_rows(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::DimensionMismatch("no training rows".into()));
        }
        if let Some(w) = weights {
            if w.len() != y.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} weights for {} rows",
                    w.len(),
                    y.len()
                )));
            }
            if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || w.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidArgument("weights must be finite, non-negative and not all zero".into()));
            }
        }
        let features = x.canonical_names();
        let cols = x.aligned(&features)?;
        let params = match self.kind {
            LearnerKind::Linear => linear::fit(&cols, y, weights, self.ridge)?,
            LearnerKind::Logistic => {
                if weights.is_some() {
                    return Err(Error::InvalidArgument("logistic fits are unweighted".into()));
                }
                logistic::fit(&cols, y, self.max_iterations, self.tolerance)?
            }
            LearnerKind::Gbt => gbt::fit(&cols, y, weights, self)?,
        };
        Ok(FittedModel {
            spec: *self,
            features,
            params,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Parameters {
    Linear {
        intercept: f64,
        coefficients: Vec<f64>,
    },
    Logistic {
        intercept: f64,
        coefficients: Vec<f64>,
        iterations: usize,
        converged: bool,
    },
    Gbt(Ensemble),
}

/// A fitted learner; serializes to JSON with kind, hyperparameters and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: LearnerSpec,
    /// Feature names in the (sorted) order used by `params`.
    pub features: Vec<String>,
    pub params: Parameters,
}

impl FittedModel {
    /// Predictions (probabilities for logistic models).
    pub fn predict(&self, x: &Design) -> Result<Vec<f64>> {
        let cols = x.aligned(&self.features)?;
        let n = x.n_rows();
        Ok(match &self.params {
            Parameters::Linear {
                intercept,
                coefficients,
            } => linear_predictor(&cols, *intercept, coefficients, n),
            Parameters::Logistic {
                intercept,
                coefficients,
                ..
            } => linear_predictor(&cols, *intercept, coefficients, n)
                .into_iter()
                .map(logistic::sigmoid)
                .collect(),
            Parameters::Gbt(ens) => ens.predict(&cols, n),
        })
    }

    /// Coefficient of `feature` for linear/logistic models.
    pub fn coefficient(&self, feature: &str) -> Option<f64> {
        let i = self.features.iter().position(|f| f == feature)?;
        match &self.params {
            Parameters::Linear { coefficients, .. } | Parameters::Logistic { coefficients, .. } => {
                Some(coefficients[i])
            }
            Parameters::Gbt(_) => None,
        }
    }

    pub fn intercept(&self) -> Option<f64> {
        match &self.params {
            Parameters::Linear { intercept, .. } | Parameters::Logistic { intercept, .. } => Some(*intercept),
            Parameters::Gbt(_) => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

fn linear_predictor(cols: &[&[f64]], intercept: f64, coefficients: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![intercept; n];
    for (col, &b) in cols.iter().zip(coefficients) {
        for (o, &x) in out.iter_mut().zip(col.iter()) {
            *o += b * x;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(cols: &[(&str, Vec<f64>)]) -> Design {
        let n = cols.first().map_or(0, |c| c.1.len());
        Design::new(
            cols.iter().map(|c| c.0.to_string()).collect(),
            cols.iter().map(|c| c.1.clone()).collect(),
            n,
        )
        .unwrap()
    }

    #[test]
    fn predict_matches_by_name() {
        let x = design(&[("a", vec![0.0, 1.0, 2.0, 3.0]), ("b", vec![1.0, 0.0, 1.0, 5.0])]);
        let y: Vec<f64> = (0..4).map(|i| 1.0 + 2.0 * i as f64 - x.column("b").unwrap()[i]).collect();
        let m = LearnerSpec::linear().fit(&x, &y, None).unwrap();
        let swapped = design(&[("b", vec![1.0, 0.0, 1.0, 5.0]), ("a", vec![0.0, 1.0, 2.0, 3.0])]);
        assert_eq!(m.predict(&x).unwrap(), m.predict(&swapped).unwrap());
        let wrong = design(&[("a", vec![0.0]), ("c", vec![1.0])]);
        assert!(matches!(m.predict(&wrong), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn dimension_checks() {
        let x = design(&[("a", vec![0.0, 1.0])]);
        assert!(matches!(
            LearnerSpec::linear().fit(&x, &[1.0], None),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            LearnerSpec::gbt().fit(&x, &[1.0, 2.0], Some(&[1.0])),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn spec_validation() {
        let mut s = LearnerSpec::gbt();
        s.max_depth = 0;
        assert!(s.validate().is_err());
        let mut s = LearnerSpec::gbt();
        s.max_iterations = 0;
        assert!(s.validate().is_err());
        let mut s = LearnerSpec::gbt();
        s.learning_rate = -0.1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let x = design(&[("a", vec![0.0, 1.0, 2.0, 3.0, 4.0])]);
        let y = [0.0, 0.0, 1.0, 1.0, 3.0];
        let m = LearnerSpec::gbt().fit(&x, &y, None).unwrap();
        let back = FittedModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
        assert!(m.to_json().contains("\"kind\": \"gbt\""));
    }
}
