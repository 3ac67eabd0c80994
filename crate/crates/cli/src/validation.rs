use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use causet::estimators::{EffectQuery, PropensityModel, DEFAULT_CLIP};
use causet::evaluation::{self, DEFAULT_BINS};
use causet::metalearners;
use causet::rng::derive_seed;
use causet::synth::{self, MIN_FEATURES};
use causet::{Frame, LearnerKind};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Context, Result};
use crate::query::{to_json, write_file, FORMAT_VERSION};
use crate::spec::{LearnerSettings, MetaSpec};
use crate::table::Table;

pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub n: usize,
    pub features: usize,
    pub repetitions: usize,
    pub sigma: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub clip_epsilon: f64,
    pub learners: LearnerSettings,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            n: 10_000,
            features: MIN_FEATURES,
            repetitions: 10,
            sigma: 1.0,
            seed: 0,
            train_fraction: TRAIN_FRACTION,
            clip_epsilon: DEFAULT_CLIP,
            learners: LearnerSettings::default(),
        }
    }
}

/// Metrics of one learner/base combination in one repetition. Effects are
/// compared with the true per-unit effect; AUUC uses observed outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub repetition: usize,
    pub method: String,
    /// Mean predicted effect on the training rows.
    pub ate: f64,
    /// Mean true effect on the training rows.
    pub ate_true: f64,
    pub ate_error: f64,
    pub mse_train: f64,
    pub mse_validation: f64,
    pub kld_train: f64,
    pub kld_validation: f64,
    pub auuc_train: f64,
    pub auuc_validation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single repetition.
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub metrics: BTreeMap<String, Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub format_version: u32,
    pub config: ValidationConfig,
    pub rows: Vec<ValidationRow>,
    pub aggregate: Vec<Aggregate>,
    /// Sidecar CSV files (first repetition, validation rows).
    pub plot_data: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ValidationRun {
    pub report: ValidationReport,
    plots: Vec<(String, String)>,
}

fn summarize(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Summary { mean, sd }
}

fn column(frame: &Frame, name: &str) -> causet::Result<Vec<f64>> {
    frame.complete(name).map(<[f64]>::to_vec)
}

pub fn run_validation(config: &ValidationConfig) -> Result<ValidationRun> {
    if config.repetitions == 0 {
        return Err(CliError::Argument("repetitions must be at least 1".into()));
    }
    config
        .learners
        .validate()
        .context(|| "validation learner settings".to_string())?;
    let combos = MetaSpec::all();
    let mut rows = Vec::new();
    let mut plots = Vec::new();
    for r in 0..config.repetitions {
        let ctx = |what: &str| format!("validation repetition {r}: {what}");
        let rep_seed = derive_seed(config.seed, r as u64);
        let set = synth::generate(config.n, config.features, config.sigma, rep_seed).context(|| ctx("generate"))?;
        let (train, valid) = set
            .to_frame()
            .split(config.train_fraction, derive_seed(rep_seed, 0))
            .context(|| ctx("split"))?;
        let query = EffectQuery::new("w", "y", set.covariate_names());
        let pm = PropensityModel::fit_with(
            &train,
            "w",
            &query.adjustment,
            config.clip_epsilon,
            &config.learners.spec(LearnerKind::Logistic),
        )
        .context(|| ctx("propensity model"))?;
        let tau_tr = column(&train, "tau_true").context(|| ctx("train truth"))?;
        let tau_va = column(&valid, "tau_true").context(|| ctx("validation truth"))?;
        let (w_tr, y_tr) = (column(&train, "w"), column(&train, "y"));
        let (w_va, y_va) = (column(&valid, "w"), column(&valid, "y"));
        let (w_tr, y_tr, w_va, y_va) = (
            w_tr.context(|| ctx("w"))?,
            y_tr.context(|| ctx("y"))?,
            w_va.context(|| ctx("w"))?,
            y_va.context(|| ctx("y"))?,
        );
        for m in &combos {
            let name = m.to_string();
            let mctx = |what: &str| format!("validation repetition {r}: {name}: {what}");
            let base = config.learners.spec(m.base);
            let model = metalearners::fit(m.learner, &train, &query, &base, Some(&pm)).context(|| mctx("fit"))?;
            let pred_va = model.predict(&valid).context(|| mctx("predict"))?;
            let pred_tr = &model.ite;
            let ate_true = tau_tr.iter().sum::<f64>() / tau_tr.len() as f64;
            let metric = |v: causet::Result<f64>, what: &str| v.context(|| mctx(what));
            let curve_va = evaluation::uplift_curve(&pred_va, &w_va, &y_va).context(|| mctx("uplift"))?;
            rows.push(ValidationRow {
                repetition: r,
                method: name.clone(),
                ate: model.ate,
                ate_true,
                ate_error: model.ate - ate_true,
                mse_train: metric(evaluation::mse(pred_tr, &tau_tr), "mse")?,
                mse_validation: metric(evaluation::mse(&pred_va, &tau_va), "mse")?,
                kld_train: metric(evaluation::kl_divergence(pred_tr, &tau_tr, DEFAULT_BINS), "kld")?,
                kld_validation: metric(evaluation::kl_divergence(&pred_va, &tau_va, DEFAULT_BINS), "kld")?,
                auuc_train: evaluation::uplift_curve(pred_tr, &w_tr, &y_tr).context(|| mctx("uplift"))?.auuc,
                auuc_validation: curve_va.auuc,
            });
            if r == 0 {
                let scatter = evaluation::prediction_scatter(&pred_va, &tau_va).context(|| mctx("scatter"))?;
                let mut buf = Vec::new();
                scatter.write_csv(&mut buf).context(|| mctx("scatter"))?;
                plots.push((format!("scatter_{name}.csv"), String::from_utf8_lossy(&buf).into_owned()));
                let mut buf = Vec::new();
                curve_va.write_csv(&mut buf).context(|| mctx("uplift"))?;
                plots.push((format!("uplift_{name}.csv"), String::from_utf8_lossy(&buf).into_owned()));
            }
        }
    }
    let aggregate = combos
        .iter()
        .map(|m| {
            let name = m.to_string();
            let mine: Vec<&ValidationRow> = rows.iter().filter(|r| r.method == name).collect();
            let pick = |f: fn(&ValidationRow) -> f64| summarize(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            let mut metrics = BTreeMap::new();
            metrics.insert("ate_error".into(), pick(|r| r.ate_error));
            metrics.insert("abs_ate_error".into(), pick(|r| r.ate_error.abs()));
            metrics.insert("mse_train".into(), pick(|r| r.mse_train));
            metrics.insert("mse_validation".into(), pick(|r| r.mse_validation));
            metrics.insert("kld_train".into(), pick(|r| r.kld_train));
            metrics.insert("kld_validation".into(), pick(|r| r.kld_validation));
            metrics.insert("auuc_train".into(), pick(|r| r.auuc_train));
            metrics.insert("auuc_validation".into(), pick(|r| r.auuc_validation));
            Aggregate { method: name, metrics }
        })
        .collect();
    let report = ValidationReport {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        rows,
        aggregate,
        plot_data: plots.iter().map(|(n, _)| n.clone()).collect(),
    };
    Ok(ValidationRun { report, plots })
}

pub const REPORT_FILE: &str = "validation.json";

impl ValidationRun {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, body) in &self.plots {
            write_file(&dir.join(name), body.as_bytes())?;
        }
        let path = dir.join(REPORT_FILE);
        write_file(&path, to_json(&self.report).as_bytes())?;
        Ok(path)
    }
}

impl ValidationReport {
    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "validation n {}  repetitions {}  sigma {}  seed {}\n\n",
            c.n, c.repetitions, c.sigma, c.seed
        );
        let cols = ["abs_ate_error", "mse_train", "mse_validation", "kld_validation", "auuc_validation"];
        let mut header = vec!["method"];
        header.extend(cols);
        let mut t = Table::new(&header);
        for a in &self.aggregate {
            let mut cells = vec![a.method.clone()];
            for k in cols {
                let s = a.metrics[k];
                cells.push(format!("{:.4} ± {:.4}", s.mean, s.sd));
            }
            t.row(cells);
        }
        let _ = write!(out, "{}", t.render());
        out
    }
}
