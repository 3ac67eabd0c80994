use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use causet::estimators::{self, EffectEstimate, EffectQuery, Estimand, PropensityModel};
use causet::graph::Node;
use causet::metalearners::{self, CateModel};
use causet::refutation::{self, RefutationReport, RefuteOptions};
use causet::{CausalGraph, Error, Frame, LearnerKind, Role};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Context, Result};
use crate::spec::{EstimatorKind, MetaSpec, QuerySpec};
use crate::table::Table;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Estimator(EstimatorKind),
    Meta(MetaSpec),
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Estimator(e) => e.as_str().to_string(),
            Method::Meta(m) => m.to_string(),
        }
    }

    fn needs_propensity(&self) -> bool {
        match self {
            Method::Estimator(e) => *e != EstimatorKind::RegressionAdjustment,
            Method::Meta(m) => m.learner.needs_propensity(),
        }
    }
}

pub fn selected_methods(spec: &QuerySpec) -> Vec<Method> {
    spec.estimators
        .iter()
        .map(|&e| Method::Estimator(e))
        .chain(spec.metalearners.iter().map(|&m| Method::Meta(m)))
        .collect()
}

/// Fits one method on `frame`; meta-learners also return their model.
pub struct MethodRunner<'a> {
    spec: &'a QuerySpec,
}

impl<'a> MethodRunner<'a> {
    pub fn new(spec: &'a QuerySpec) -> Self {
        MethodRunner { spec }
    }

    pub fn propensity(&self, frame: &Frame, query: &EffectQuery) -> causet::Result<PropensityModel> {
        PropensityModel::fit_with(
            frame,
            &query.treatment,
            &query.adjustment,
            self.spec.options.clip_epsilon,
            &self.spec.learners.spec(LearnerKind::Logistic),
        )
    }

    pub fn run(
        &self,
        method: Method,
        frame: &Frame,
        query: &EffectQuery,
        pm: Option<&PropensityModel>,
    ) -> causet::Result<(EffectEstimate, Option<CateModel>)> {
        let owned;
        let pm = match pm {
            Some(p) => Some(p),
            None if method.needs_propensity() => {
                owned = self.propensity(frame, query)?;
                Some(&owned)
            }
            None => None,
        };
        Ok(match method {
            Method::Estimator(kind) => {
                let pm = || pm.expect("propensity fitted above");
                let est = match kind {
                    EstimatorKind::RegressionAdjustment => estimators::regression_adjustment(frame, query)?,
                    EstimatorKind::Psm => estimators::psm_att(frame, query, pm())?,
                    EstimatorKind::Ipw => estimators::ipw_ate(frame, query, pm())?,
                    EstimatorKind::Stratification => {
                        estimators::stratified_ate(frame, query, pm(), self.spec.options.strata)?
                    }
                };
                (est, None)
            }
            Method::Meta(m) => {
                let base = self.spec.learners.spec(m.base);
                let model = metalearners::fit(m.learner, frame, query, &base, pm)?;
                let est = EffectEstimate::for_query(frame, query, &m.to_string(), Estimand::Ate, model.ate)?;
                (est, Some(model))
            }
        })
    }

    /// Scalar effect of `method`, refitting everything on each call.
    pub fn effect(&self, method: Method, frame: &Frame, query: &EffectQuery) -> causet::Result<f64> {
        self.run(method, frame, query, None).map(|(e, _)| e.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub rows: usize,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    /// Every inclusion-minimal backdoor set, smallest first.
    pub adjustment_sets: Vec<Vec<String>>,
    /// The set used, i.e. the first of `adjustment_sets`.
    pub adjustment_set: Vec<String>,
    /// Data columns realizing the set (one-hot nodes expand to their levels).
    pub adjustment_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefutationRow {
    pub method: String,
    #[serde(flatten)]
    pub report: RefutationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub format_version: u32,
    pub query: String,
    pub context: Option<String>,
    pub seed: u64,
    pub spec: QuerySpec,
    pub data: DataSummary,
    pub identification: Identification,
    pub effects: Vec<EffectEstimate>,
    pub refutations: Vec<RefutationRow>,
    /// Sidecar CSV files written next to the report.
    pub plot_data: Vec<String>,
    pub warnings: Vec<String>,
}

/// A finished run: the report plus per-unit effects of each meta-learner.
#[derive(Debug, Clone)]
pub struct QueryRun {
    pub report: QueryReport,
    pub ite: Vec<(String, Vec<f64>)>,
}

/// Ensure `t` and `y` carry the treatment/outcome roles, assigning them when
/// the graph file declares none.
pub fn bind_roles(graph: &CausalGraph, t: &str, y: &str) -> causet::Result<CausalGraph> {
    for (name, role, declared) in [(t, Role::Treatment, graph.treatment()), (y, Role::Outcome, graph.outcome())] {
        graph.node_id(name)?;
        if let Some(d) = declared {
            if d != name {
                return Err(Error::Role(format!(
                    "graph declares `{d}` as {}, query names `{name}`",
                    if role == Role::Treatment { "treatment" } else { "outcome" }
                )));
            }
        }
    }
    if graph.treatment().is_some() && graph.outcome().is_some() {
        return Ok(graph.clone());
    }
    let nodes: Vec<(String, Role)> = graph
        .nodes()
        .iter()
        .map(|Node { name, role }| {
            let role = if name == t {
                Role::Treatment
            } else if name == y {
                Role::Outcome
            } else {
                *role
            };
            (name.clone(), role)
        })
        .collect();
    let edges: Vec<(String, String)> = graph.edges().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    CausalGraph::from_parts(&nodes, &edges)
}

/// Map graph nodes to data columns. A one-hot encoded node maps to its
/// `node=level` columns minus the first level, which is the reference.
pub fn adjustment_columns(frame: &Frame, set: &[String]) -> causet::Result<Vec<String>> {
    let mut out = Vec::new();
    for node in set {
        if frame.has_column(node) {
            out.push(node.clone());
            continue;
        }
        let prefix = format!("{node}=");
        let levels: Vec<String> = frame
            .column_names()
            .filter(|c| c.starts_with(&prefix))
            .map(str::to_string)
            .collect();
        if levels.is_empty() {
            return Err(Error::UnknownColumn(node.clone()));
        }
        out.extend(levels.into_iter().skip(1));
    }
    Ok(out)
}

fn prepare_frame(spec: &QuerySpec, warnings: &mut Vec<String>) -> Result<Frame> {
    let data = spec.data.display().to_string();
    let mut frame = Frame::load_csv(&spec.data, None).context(|| format!("loading data {data}"))?;
    for rule in &spec.label_rules {
        frame = frame
            .derive_binary_label(rule)
            .context(|| format!("label rule {} -> {}", rule.source, rule.target))?;
    }
    for col in &spec.preprocess.impute_mean {
        let imputed = frame.impute_mean(col).context(|| format!("imputing {col}"))?;
        if imputed.all_missing {
            warnings.push(format!("column `{col}` had no observed values; imputed with 0"));
        }
        frame = imputed.frame;
    }
    for col in &spec.preprocess.one_hot {
        frame = frame.one_hot(col).context(|| format!("one-hot encoding {col}"))?;
    }
    Ok(frame)
}

/// Load, identify, estimate with every selected method and, when `refute`
/// is set, run the selected refuters against the refutation target.
pub fn run_query(spec: &QuerySpec, seed: u64, refute: bool) -> Result<QueryRun> {
    let name = spec.name().to_string();
    let mut spec = spec.clone();
    spec.seed = Some(seed);
    let mut warnings = Vec::new();

    let graph_path = spec.graph.display().to_string();
    let text = std::fs::read_to_string(&spec.graph).map_err(io_err(&spec.graph))?;
    let graph = CausalGraph::parse(&text).context(|| format!("query {name}: parsing graph {graph_path}"))?;
    let graph = bind_roles(&graph, &spec.treatment, &spec.outcome)
        .context(|| format!("query {name}: graph roles"))?;
    let sets = graph
        .backdoor_sets_with_cap(&spec.treatment, &spec.outcome, spec.options.max_set_size)
        .context(|| format!("query {name}: identifying {} -> {}", spec.treatment, spec.outcome))?;
    let adjustment_set = sets[0].clone();

    let frame = prepare_frame(&spec, &mut warnings).map_err(|e| with_query(e, &name))?;
    frame
        .binary(&spec.treatment)
        .context(|| format!("query {name}: treatment column"))?;
    frame
        .complete(&spec.outcome)
        .context(|| format!("query {name}: outcome column"))?;
    let columns =
        adjustment_columns(&frame, &adjustment_set).context(|| format!("query {name}: adjustment columns"))?;
    let query = EffectQuery::new(spec.treatment.clone(), spec.outcome.clone(), columns.clone());

    let runner = MethodRunner::new(&spec);
    let methods = selected_methods(&spec);
    let pm = if methods.iter().any(Method::needs_propensity) {
        Some(runner.propensity(&frame, &query).context(|| format!("query {name}: propensity model"))?)
    } else {
        None
    };
    let mut effects = Vec::new();
    let mut ite = Vec::new();
    for &m in &methods {
        let (est, model) = runner
            .run(m, &frame, &query, pm.as_ref())
            .context(|| format!("query {name}: method {}", m.name()))?;
        if let Some(model) = model {
            ite.push((m.name(), model.ite));
        }
        effects.push(est);
    }

    let mut refutations = Vec::new();
    if refute && !spec.refuters.is_empty() {
        let target = match &spec.options.refute_method {
            Some(n) => *methods.iter().find(|m| &m.name() == n).expect("checked at load"),
            None => methods[0],
        };
        let opts = RefuteOptions {
            repetitions: spec.options.repetitions,
            seed,
            subset_fraction: spec.options.subset_fraction,
            strength_t: spec.options.confounder_strength_t,
            strength_y: spec.options.confounder_strength_y,
        };
        let est = |f: &Frame, q: &EffectQuery| runner.effect(target, f, q);
        for &r in &spec.refuters {
            let report = refutation::refute(r, &est, &frame, &query, &opts)
                .context(|| format!("query {name}: refuter {} on {}", r.as_str(), target.name()))?;
            refutations.push(RefutationRow {
                method: target.name(),
                report,
            });
        }
    }

    let mut plot_data = vec![effects_file(&name)];
    plot_data.extend(ite.iter().map(|(m, _)| ite_file(&name, m)));
    let report = QueryReport {
        format_version: FORMAT_VERSION,
        query: name,
        context: spec.context.clone(),
        seed,
        data: DataSummary {
            rows: frame.n_rows(),
            columns: frame.column_names().map(str::to_string).collect(),
        },
        identification: Identification {
            adjustment_sets: sets,
            adjustment_set,
            adjustment_columns: columns,
        },
        spec,
        effects,
        refutations,
        plot_data,
        warnings,
    };
    Ok(QueryRun { report, ite })
}

fn with_query(e: crate::error::CliError, name: &str) -> crate::error::CliError {
    match e {
        crate::error::CliError::Core { context, source } => crate::error::CliError::Core {
            context: format!("query {name}: {context}"),
            source,
        },
        other => other,
    }
}

pub fn report_file(query: &str) -> String {
    format!("{query}.report.json")
}

fn effects_file(query: &str) -> String {
    format!("{query}.effects.csv")
}

fn ite_file(query: &str, method: &str) -> String {
    format!("{query}.ite_{method}.csv")
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl QueryRun {
    /// Write the report and its sidecars into `dir`; returns the report path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let r = &self.report;
        let mut effects = String::from("method,estimand,effect,relative_effect\n");
        for e in &r.effects {
            let estimand = match e.estimand {
                Estimand::Ate => "ATE",
                Estimand::Att => "ATT",
            };
            let _ = writeln!(effects, "{},{},{},{}", e.method, estimand, e.value, opt(e.relative_effect));
        }
        write_file(&dir.join(effects_file(&r.query)), effects.as_bytes())?;
        for (method, ite) in &self.ite {
            let mut buf = String::from("row,ite\n");
            for (i, v) in ite.iter().enumerate() {
                let _ = writeln!(buf, "{i},{v}");
            }
            write_file(&dir.join(ite_file(&r.query, method)), buf.as_bytes())?;
        }
        let path = dir.join(report_file(&r.query));
        write_file(&path, to_json(r).as_bytes())?;
        Ok(path)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

impl QueryReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "query {}  treatment {}  outcome {}  seed {}  rows {}",
            self.query, self.spec.treatment, self.spec.outcome, self.seed, self.data.rows
        );
        if let Some(c) = &self.context {
            let _ = writeln!(out, "context {c}");
        }
        let _ = writeln!(out, "adjustment set {{{}}}", self.identification.adjustment_set.join(", "));
        out.push('\n');
        let mut t = Table::new(&["method", "estimand", "effect", "relative", "treated", "control"]);
        for e in &self.effects {
            t.row(vec![
                e.method.clone(),
                format!("{:?}", e.estimand).to_uppercase(),
                format!("{:.6}", e.value),
                e.relative_effect.map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into()),
                e.n_treated.to_string(),
                e.n_control.to_string(),
            ]);
        }
        out.push_str(&t.render());
        if !self.refutations.is_empty() {
            out.push('\n');
            let mut t = Table::new(&["refuter", "method", "original", "mean_refuted", "rel_change", "p_value", "verdict"]);
            for r in &self.refutations {
                let rep = &r.report;
                t.row(vec![
                    rep.refuter.as_str().to_string(),
                    r.method.clone(),
                    format!("{:.6}", rep.original_effect),
                    format!("{:.6}", rep.mean_refuted),
                    format!("{:.4}", rep.relative_change),
                    rep.p_value.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into()),
                    format!("{:?}", rep.verdict).to_lowercase(),
                ]);
            }
            out.push_str(&t.render());
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}
