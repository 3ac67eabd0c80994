//! Query specification files.
//!
//! A spec is a TOML document:
//!
//! ```toml
//! name = "q04"                      # default: file stem
//! context = "EI"                    # free-text usage tag, metadata only
//! data = "households.csv"           # relative to the spec file
//! graph = "q04.dag"                 # relative to the spec file
//! treatment = "insulated"
//! outcome = "high_gas"
//! seed = 7                          # optional; see `resolve_seed`
//! estimators = ["regression_adjustment", "psm", "ipw", "stratification"]
//! metalearners = ["S-linear", "T-gbt"]   # <S|T|X|R>-<linear|gbt>
//! refuters = ["placebo_treatment", "random_common_cause", "data_subset", "unobserved_confounder"]
//!
//! [[label_rules]]
//! source = "gas_kwh"
//! target = "high_gas"
//! comparator = "above_mean"         # or "below_mean"
//!
//! [preprocess]
//! impute_mean = ["floor_area"]      # applied first
//! one_hot = ["dwelling_type"]
//!
//! [options]
//! clip_epsilon = 0.05
//! strata = 5
//! repetitions = 100
//! subset_fraction = 0.8
//! confounder_strength_t = 0.5
//! confounder_strength_y = 0.5
//! max_set_size = 8
//! refute_method = "ipw"             # default: first selected method
//!
//! [learners.linear]
//! ridge = 1e-8
//! [learners.logistic]
//! max_iterations = 100
//! tolerance = 1e-6
//! [learners.gbt]
//! max_iterations = 100
//! learning_rate = 0.1
//! max_depth = 3
//! ```
//!
//! Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use causet::estimators::{DEFAULT_CLIP, DEFAULT_STRATA};
use causet::graph::DEFAULT_MAX_SET_SIZE;
use causet::metalearners::MetaLearner;
use causet::refutation::{Refuter, DEFAULT_REPETITIONS, DEFAULT_SUBSET_FRACTION};
use causet::{LabelRule, LearnerKind, LearnerSpec};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

pub const SEED_ENV: &str = "CAUSET_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    RegressionAdjustment,
    Psm,
    Ipw,
    Stratification,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::RegressionAdjustment,
        EstimatorKind::Psm,
        EstimatorKind::Ipw,
        EstimatorKind::Stratification,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::RegressionAdjustment => "regression_adjustment",
            EstimatorKind::Psm => "psm",
            EstimatorKind::Ipw => "ipw",
            EstimatorKind::Stratification => "stratification",
        }
    }
}

/// A meta-learner over a regression base, written `T-gbt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MetaSpec {
    pub learner: MetaLearner,
    pub base: LearnerKind,
}

impl MetaSpec {
    /// The eight learner/base combinations, S..R by linear then gbt.
    pub fn all() -> Vec<MetaSpec> {
        let mut out = Vec::new();
        for learner in MetaLearner::ALL {
            for base in [LearnerKind::Linear, LearnerKind::Gbt] {
                out.push(MetaSpec { learner, base });
            }
        }
        out
    }
}

impl fmt::Display for MetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.learner.as_str(), self.base.as_str())
    }
}

impl FromStr for MetaSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (l, b) = s
            .split_once('-')
            .ok_or_else(|| format!("meta-learner `{s}` is not of the form <S|T|X|R>-<linear|gbt>"))?;
        let learner = MetaLearner::from_str(l).map_err(|e| e.to_string())?;
        let base = LearnerKind::from_str(b).map_err(|e| e.to_string())?;
        if base == LearnerKind::Logistic {
            return Err(format!("meta-learner `{s}`: base must be linear or gbt"));
        }
        Ok(MetaSpec { learner, base })
    }
}

impl TryFrom<String> for MetaSpec {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<MetaSpec> for String {
    fn from(m: MetaSpec) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    pub impute_mean: Vec<String>,
    pub one_hot: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    pub clip_epsilon: f64,
    pub strata: usize,
    pub repetitions: usize,
    pub subset_fraction: f64,
    pub confounder_strength_t: f64,
    pub confounder_strength_y: f64,
    pub max_set_size: usize,
    pub refute_method: Option<String>,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            clip_epsilon: DEFAULT_CLIP,
            strata: DEFAULT_STRATA,
            repetitions: DEFAULT_REPETITIONS,
            subset_fraction: DEFAULT_SUBSET_FRACTION,
            confounder_strength_t: 0.5,
            confounder_strength_y: 0.5,
            max_set_size: DEFAULT_MAX_SET_SIZE,
            refute_method: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSettings {
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtSettings {
    pub max_iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for LinearSettings {
    fn default() -> Self {
        LinearSettings {
            ridge: LearnerSpec::linear().ridge,
        }
    }
}

impl Default for LogisticSettings {
    fn default() -> Self {
        let d = LearnerSpec::logistic();
        LogisticSettings {
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
        }
    }
}

impl Default for GbtSettings {
    fn default() -> Self {
        let d = LearnerSpec::gbt();
        GbtSettings {
            max_iterations: d.max_iterations,
            learning_rate: d.learning_rate,
            max_depth: d.max_depth,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSettings {
    pub linear: LinearSettings,
    pub logistic: LogisticSettings,
    pub gbt: GbtSettings,
}

impl LearnerSettings {
    pub fn spec(&self, kind: LearnerKind) -> LearnerSpec {
        let mut s = LearnerSpec::new(kind);
        match kind {
            LearnerKind::Linear => s.ridge = self.linear.ridge,
            LearnerKind::Logistic => {
                s.max_iterations = self.logistic.max_iterations;
                s.tolerance = self.logistic.tolerance;
            }
            LearnerKind::Gbt => {
                s.max_iterations = self.gbt.max_iterations;
                s.learning_rate = self.gbt.learning_rate;
                s.max_depth = self.gbt.max_depth;
            }
        }
        s
    }

    pub fn validate(&self) -> causet::Result<()> {
        for kind in [LearnerKind::Linear, LearnerKind::Logistic, LearnerKind::Gbt] {
            self.spec(kind).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub context: Option<String>,
    pub data: PathBuf,
    pub graph: PathBuf,
    pub treatment: String,
    pub outcome: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub metalearners: Vec<MetaSpec>,
    #[serde(default)]
    pub refuters: Vec<Refuter>,
    #[serde(default)]
    pub label_rules: Vec<LabelRule>,
    #[serde(default)]
    pub preprocess: Preprocess,
    #[serde(default)]
    pub options: Options,
    #[serde(default)]
    pub learners: LearnerSettings,
}

impl QuerySpec {
    pub fn parse(text: &str, origin: &str) -> Result<QuerySpec> {
        let spec: QuerySpec = toml::from_str(text).map_err(|e| CliError::Spec {
            path: origin.to_string(),
            message: e.message().to_string(),
        })?;
        spec.check(origin)?;
        Ok(spec)
    }

    /// Read a spec and make its data/graph paths relative to the working
    /// directory; the name defaults to the file stem.
    pub fn load(path: &Path) -> Result<QuerySpec> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut spec = QuerySpec::parse(&text, &path.display().to_string())?;
        let dir = path.parent().unwrap_or(Path::new(""));
        spec.data = dir.join(&spec.data);
        spec.graph = dir.join(&spec.graph);
        if spec.name.is_none() {
            spec.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("query")
    }

    /// Method names in run order: estimators, then meta-learners.
    pub fn method_names(&self) -> Vec<String> {
        self.estimators
            .iter()
            .map(|e| e.as_str().to_string())
            .chain(self.metalearners.iter().map(MetaSpec::to_string))
            .collect()
    }

    fn check(&self, origin: &str) -> Result<()> {
        let bad = |message: String| CliError::Spec {
            path: origin.to_string(),
            message,
        };
        if self.estimators.is_empty() && self.metalearners.is_empty() {
            return Err(bad("select at least one estimator or meta-learner".into()));
        }
        if self.treatment == self.outcome {
            return Err(bad("treatment and outcome must differ".into()));
        }
        let names = self.method_names();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(bad(format!("method `{n}` selected twice")));
            }
        }
        for (i, r) in self.refuters.iter().enumerate() {
            if self.refuters[..i].contains(r) {
                return Err(bad(format!("refuter `{}` selected twice", r.as_str())));
            }
        }
        if let Some(m) = &self.options.refute_method {
            if !names.contains(m) {
                return Err(bad(format!("refute_method `{m}` is not a selected method")));
            }
        }
        let o = &self.options;
        if !(0.0..0.5).contains(&o.clip_epsilon) {
            return Err(bad(format!("clip_epsilon {} outside [0, 0.5)", o.clip_epsilon)));
        }
        if o.strata == 0 {
            return Err(bad("strata must be at least 1".into()));
        }
        if o.repetitions == 0 {
            return Err(bad("repetitions must be at least 1".into()));
        }
        if !(o.subset_fraction > 0.0 && o.subset_fraction <= 1.0) {
            return Err(bad(format!("subset_fraction {} outside (0, 1]", o.subset_fraction)));
        }
        if !(o.confounder_strength_t.is_finite() && o.confounder_strength_y.is_finite()) {
            return Err(bad("confounder strengths must be finite".into()));
        }
        self.learners.validate().map_err(|e| bad(e.to_string()))
    }
}

/// `--seed` beats the spec, which beats `CAUSET_SEED`; the fallback is 0.
pub fn resolve_seed(flag: Option<u64>, spec: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(spec) {
        return Ok(s);
    }
    match env.map(str::trim) {
        None | Some("") => Ok(0),
        Some(v) => v
            .parse()
            .map_err(|_| CliError::Argument(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
    }
}
