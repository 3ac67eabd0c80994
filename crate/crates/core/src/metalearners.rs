//! S, T, X and R meta-learners over a linear or boosted-tree base learner.
//!
//! Nuisance models are fitted once on the full frame (no cross-fitting).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Arms, EffectQuery, PropensityModel};
use crate::frame::Frame;
use crate::learners::{Design, FittedModel, LearnerKind, LearnerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetaLearner {
    S,
    T,
    X,
    R,
}

impl MetaLearner {
    pub const ALL: [MetaLearner; 4] = [MetaLearner::S, MetaLearner::T, MetaLearner::X, MetaLearner::R];

    pub fn as_str(self) -> &'static str {
        match self {
            MetaLearner::S => "S",
            MetaLearner::T => "T",
            MetaLearner::X => "X",
            MetaLearner::R => "R",
        }
    }

    pub fn needs_propensity(self) -> bool {
        matches!(self, MetaLearner::X | MetaLearner::R)
    }
}

impl std::str::FromStr for MetaLearner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(MetaLearner::S),
            "T" | "t" => Ok(MetaLearner::T),
            "X" | "x" => Ok(MetaLearner::X),
            "R" | "r" => Ok(MetaLearner::R),
            other => Err(Error::InvalidArgument(format!("unknown meta-learner `{other}`"))),
        }
    }
}

/// Sub-models needed to predict effects for new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner")]
pub enum Stages {
    S {
        treatment: String,
        model: FittedModel,
    },
    T {
        mu0: FittedModel,
        mu1: FittedModel,
    },
    X {
        mu0: FittedModel,
        mu1: FittedModel,
        tau0: FittedModel,
        tau1: FittedModel,
        propensity: PropensityModel,
    },
    R {
        outcome: FittedModel,
        tau: FittedModel,
        propensity: PropensityModel,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateModel {
    pub learner: MetaLearner,
    pub base: LearnerSpec,
    pub features: Vec<String>,
    /// Per-unit effects on the fitting frame.
    pub ite: Vec<f64>,
    pub ate: f64,
    pub stages: Stages,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_base(base: &LearnerSpec) -> Result<()> {
    match base.kind {
        LearnerKind::Linear | LearnerKind::Gbt => base.validate(),
        LearnerKind::Logistic => Err(Error::InvalidArgument(
            "meta-learner bases must be regression learners (linear or gbt)".into(),
        )),
    }
}

struct Prepared<'a> {
    x: Design,
    t: &'a [f64],
    y: &'a [f64],
    treated: Vec<usize>,
    control: Vec<usize>,
}

fn prepare<'a>(frame: &'a Frame, query: &EffectQuery, base: &LearnerSpec) -> Result<Prepared<'a>> {
    check_base(base)?;
    let arms = Arms::from_frame(frame, query)?;
    if query.adjustment.contains(&query.treatment) {
        return Err(Error::InvalidArgument("treatment listed in its own adjustment set".into()));
    }
    let x = Design::from_frame(frame, &query.adjustment)?;
    let treated = (0..arms.t.len()).filter(|&i| arms.t[i] == 1.0).collect();
    let control = (0..arms.t.len()).filter(|&i| arms.t[i] == 0.0).collect();
    Ok(Prepared {
        x,
        t: arms.t,
        y: arms.y,
        treated,
        control,
    })
}

fn pick(v: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| v[i]).collect()
}

fn finish(learner: MetaLearner, base: &LearnerSpec, query: &EffectQuery, ite: Vec<f64>, stages: Stages) -> CateModel {
    let ate = mean(&ite);
    CateModel {
        learner,
        base: *base,
        features: query.adjustment.clone(),
        ite,
        ate,
        stages,
    }
}

/// One model of `y` on `z ∪ {t}`; effect is `mu(x, 1) - mu(x, 0)`.
pub fn s_learner(frame: &Frame, query: &EffectQuery, base: &LearnerSpec) -> Result<CateModel> {
    let p = prepare(frame, query, base)?;
    let model = base.fit(&p.x.with_column(&query.treatment, p.t.to_vec())?, p.y, None)?;
    let stages = Stages::S {
        treatment: query.treatment.clone(),
        model,
    };
    let ite = predict_stages(&stages, &p.x, None)?;
    Ok(finish(MetaLearner::S, base, query, ite, stages))
}

/// Separate arm models; effect is `mu1(x) - mu0(x)`.
pub fn t_learner(frame: &Frame, query: &EffectQuery, base: &LearnerSpec) -> Result<CateModel> {
    let p = prepare(frame, query, base)?;
    let (mu0, mu1) = arm_models(&p, base)?;
    let stages = Stages::T { mu0, mu1 };
    let ite = predict_stages(&stages, &p.x, None)?;
    Ok(finish(MetaLearner::T, base, query, ite, stages))
}

fn arm_models(p: &Prepared, base: &LearnerSpec) -> Result<(FittedModel, FittedModel)> {
    let mu0 = base.fit(&p.x.take_rows(&p.control), &pick(p.y, &p.control), None)?;
    let mu1 = base.fit(&p.x.take_rows(&p.treated), &pick(p.y, &p.treated), None)?;
    Ok((mu0, mu1))
}

/// Cross-imputed effects blended by the propensity: `e tau0 + (1 - e) tau1`.
pub fn x_learner(frame: &Frame, query: &EffectQuery, base: &LearnerSpec, pm: &PropensityModel) -> Result<CateModel> {
    let p = prepare(frame, query, base)?;
    let (mu0, mu1) = arm_models(&p, base)?;

    let xt = p.x.take_rows(&p.treated);
    let d1: Vec<f64> = mu0
        .predict(&xt)?
        .iter()
        .zip(&p.treated)
        .map(|(m, &i)| p.y[i] - m)
        .collect();
    let xc = p.x.take_rows(&p.control);
    let d0: Vec<f64> = mu1
        .predict(&xc)?
        .iter()
        .zip(&p.control)
        .map(|(m, &i)| m - p.y[i])
        .collect();
    let tau1 = base.fit(&xt, &d1, None)?;
    let tau0 = base.fit(&xc, &d0, None)?;

    let g = pm.scores(frame)?;
    let stages = Stages::X {
        mu0,
        mu1,
        tau0,
        tau1,
        propensity: pm.clone(),
    };
    let ite = predict_stages(&stages, &p.x, Some(&g))?;
    Ok(finish(MetaLearner::X, base, query, ite, stages))
}

/// Residual-on-residual fit: regress `(y - m) / (t - e)` on `z` with weights
/// `(t - e)^2`.
pub fn r_learner(frame: &Frame, query: &EffectQuery, base: &LearnerSpec, pm: &PropensityModel) -> Result<CateModel> {
    let p = prepare(frame, query, base)?;
    let outcome = base.fit(&p.x, p.y, None)?;
    let m = outcome.predict(&p.x)?;
    let e = pm.scores(frame)?;
    let n = p.y.len();
    let mut pseudo = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let tt = p.t[i] - e[i];
        if tt == 0.0 {
            return Err(Error::InvalidArgument("propensity equals treatment; clip scores away from 0 and 1".into()));
        }
        pseudo.push((p.y[i] - m[i]) / tt);
        weights.push(tt * tt);
    }
    let tau = base.fit(&p.x, &pseudo, Some(&weights))?;
    let stages = Stages::R {
        outcome,
        tau,
        propensity: pm.clone(),
    };
    let ite = predict_stages(&stages, &p.x, None)?;
    Ok(finish(MetaLearner::R, base, query, ite, stages))
}

/// Dispatch by learner; X and R require a propensity model.
pub fn fit(
    learner: MetaLearner,
    frame: &Frame,
    query: &EffectQuery,
    base: &LearnerSpec,
    pm: Option<&PropensityModel>,
) -> Result<CateModel> {
    let need = || Error::InvalidArgument(format!("{}-learner needs a propensity model", learner.as_str()));
    match learner {
        MetaLearner::S => s_learner(frame, query, base),
        MetaLearner::T => t_learner(frame, query, base),
        MetaLearner::X => x_learner(frame, query, base, pm.ok_or_else(need)?),
        MetaLearner::R => r_learner(frame, query, base, pm.ok_or_else(need)?),
    }
}

fn predict_stages(stages: &Stages, x: &Design, scores: Option<&[f64]>) -> Result<Vec<f64>> {
    let diff = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>();
    Ok(match stages {
        Stages::S { treatment, model } => {
            let n = x.n_rows();
            let on = model.predict(&x.with_column(treatment, vec![1.0; n])?)?;
            let off = model.predict(&x.with_column(treatment, vec![0.0; n])?)?;
            diff(on, off)
        }
        Stages::T { mu0, mu1 } => diff(mu1.predict(x)?, mu0.predict(x)?),
        Stages::X {
            tau0, tau1, propensity, ..
        } => {
            let owned;
            let g = match scores {
                Some(g) => g,
                None => {
                    owned = propensity.scores_for(&propensity_design(propensity, x)?)?;
                    &owned
                }
            };
            let t0 = tau0.predict(x)?;
            let t1 = tau1.predict(x)?;
            (0..x.n_rows()).map(|i| g[i] * t0[i] + (1.0 - g[i]) * t1[i]).collect()
        }
        Stages::R { tau, .. } => tau.predict(x)?,
    })
}

fn propensity_design(pm: &PropensityModel, x: &Design) -> Result<Design> {
    let names = pm.features();
    let cols = names
        .iter()
        .map(|n| {
            x.column(n)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::UnknownColumn(n.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Design::new(names.to_vec(), cols, x.n_rows())
}

impl CateModel {
    /// Effects for the rows of another frame holding the same covariates.
    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        let x = Design::from_frame(frame, &self.features)?;
        let scores = match &self.stages {
            Stages::X { propensity, .. } => Some(propensity.scores(frame)?),
            _ => None,
        };
        predict_stages(&self.stages, &x, scores.as_deref())
    }

    pub fn name(&self) -> String {
        format!("{}-{}", self.learner.as_str(), self.base.kind.as_str())
    }

    /// `row,ite` per unit of the fitting frame.
    pub fn write_ite_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(["row", "ite"]).map_err(io)?;
        for (i, v) in self.ite.iter().enumerate() {
            w.write_record([i.to_string(), v.to_string()]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Column;

    fn frame(x: Vec<f64>, t: Vec<f64>, y: Vec<f64>) -> Frame {
        Frame::new(vec![
            Column::numeric("x", x),
            Column::binary("t", t),
            Column::numeric("y", y),
        ])
        .unwrap()
    }

    fn query() -> EffectQuery {
        EffectQuery::new("t", "y", vec!["x".into()])
    }

    /// Every x value appears once per arm, so t is balanced and orthogonal to x.
    fn balanced(f: impl Fn(f64, f64) -> f64) -> Frame {
        let mut x = Vec::new();
        let mut t = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            for arm in [0.0, 1.0] {
                let xi = i as f64 / 4.0;
                x.push(xi);
                t.push(arm);
                y.push(f(xi, arm));
            }
        }
        frame(x, t, y)
    }

    #[test]
    fn s_learner_additive_shift() {
        let f = balanced(|_, t| 3.0 + 2.0 * t);
        let m = s_learner(&f, &query(), &LearnerSpec::linear()).unwrap();
        assert!(m.ite.iter().all(|v| (v - 2.0).abs() < 1e-7));
        assert_eq!(m.ate, m.ite.iter().sum::<f64>() / m.ite.len() as f64);
    }

    #[test]
    fn t_learner_constant_arms() {
        let f = balanced(|_, t| if t == 1.0 { 5.0 } else { 2.0 });
        for base in [LearnerSpec::linear(), LearnerSpec::gbt()] {
            let m = t_learner(&f, &query(), &base).unwrap();
            assert!(m.ite.iter().all(|v| (v - 3.0).abs() < 1e-7), "{:?}", base.kind);
        }
    }

    #[test]
    fn linear_world_recovers_constant_effect() {
        let f = balanced(|x, t| 1.0 + 0.5 * x + 1.5 * t);
        let pm = PropensityModel::fit(&f, "t", &["x".into()], 0.05).unwrap();
        for learner in MetaLearner::ALL {
            let m = fit(learner, &f, &query(), &LearnerSpec::linear(), Some(&pm)).unwrap();
            for v in &m.ite {
                assert!((v - 1.5).abs() < 1e-6, "{learner:?}: {v}");
            }
        }
    }

    #[test]
    fn logistic_base_rejected() {
        let f = balanced(|_, t| t);
        assert!(matches!(
            t_learner(&f, &query(), &LearnerSpec::logistic()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn single_arm_rejected() {
        let f = frame(vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 1.0]);
        assert!(matches!(t_learner(&f, &query(), &LearnerSpec::linear()), Err(Error::SingleClass(_))));
    }

    #[test]
    fn x_learner_half_propensity_is_plain_average() {
        let f = balanced(|x, t| x * x + t * x);
        let pm = PropensityModel::fit(&f, "t", &[], 0.05).unwrap();
        let m = x_learner(&f, &query(), &LearnerSpec::gbt(), &pm).unwrap();
        let Stages::X { tau0, tau1, .. } = &m.stages else { unreachable!() };
        let x = Design::from_frame(&f, &["x"]).unwrap();
        let (a, b) = (tau0.predict(&x).unwrap(), tau1.predict(&x).unwrap());
        for i in 0..m.ite.len() {
            assert!((m.ite[i] - 0.5 * (a[i] + b[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_reproduces_training_effects() {
        let f = balanced(|x, t| (x * 1.3).sin() + t * (1.0 + x));
        let pm = PropensityModel::fit(&f, "t", &["x".into()], 0.05).unwrap();
        for learner in MetaLearner::ALL {
            let m = fit(learner, &f, &query(), &LearnerSpec::gbt(), Some(&pm)).unwrap();
            let again = m.predict(&f).unwrap();
            for (a, b) in again.iter().zip(&m.ite) {
                assert!((a - b).abs() < 1e-12, "{learner:?}");
            }
        }
    }

    #[test]
    fn ite_csv_layout() {
        let f = balanced(|_, t| t);
        let m = t_learner(&f, &query(), &LearnerSpec::linear()).unwrap();
        let mut out = Vec::new();
        m.write_ite_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("row,ite\n0,"));
        assert_eq!(text.lines().count(), 41);
    }
}
