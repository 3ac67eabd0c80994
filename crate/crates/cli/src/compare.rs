use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use causet::estimators::Estimand;
use causet::refutation::Verdict;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};
use crate::query::{QueryReport, FORMAT_VERSION};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub query: String,
    pub method: String,
    pub estimand: Estimand,
    pub effect: f64,
    pub relative_effect: Option<f64>,
    /// Verdict per refuter, for the method the refuters targeted.
    pub refutations: BTreeMap<String, Verdict>,
}

/// Query x method effects; `None` where a query lacks the method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub methods: Vec<String>,
    pub queries: Vec<String>,
    pub effects: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub format_version: u32,
    pub rows: Vec<ComparisonRow>,
    pub grid: Grid,
    pub warnings: Vec<String>,
}

/// Parse a report, rejecting any other format version.
pub fn parse_report(text: &str, origin: &str) -> Result<QueryReport> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CliError::SchemaMismatch(format!("{origin}: not a report document ({e})")))?;
    match value.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(CliError::SchemaMismatch(format!(
                "{origin}: format_version {v}, expected {FORMAT_VERSION}"
            )))
        }
        None => return Err(CliError::SchemaMismatch(format!("{origin}: no format_version"))),
    }
    serde_json::from_value(value).map_err(|e| CliError::SchemaMismatch(format!("{origin}: {e}")))
}

pub fn load_report(path: &Path) -> Result<QueryReport> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_report(&text, &path.display().to_string())
}

pub fn compare(reports: &[QueryReport]) -> Result<Comparison> {
    if reports.is_empty() {
        return Err(CliError::Argument("compare needs at least one report".into()));
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let mut queries = Vec::new();
    let mut cells: Vec<BTreeMap<String, f64>> = Vec::new();
    for r in reports {
        if r.effects.is_empty() {
            warnings.push(format!("report for query `{}` has no effect rows; omitted", r.query));
            continue;
        }
        let mut label = r.query.clone();
        let mut k = 2;
        while queries.contains(&label) {
            label = format!("{}#{k}", r.query);
            k += 1;
        }
        let mut cell = BTreeMap::new();
        for e in &r.effects {
            if !methods.contains(&e.method) {
                methods.push(e.method.clone());
            }
            let refutations = r
                .refutations
                .iter()
                .filter(|x| x.method == e.method)
                .map(|x| (x.report.refuter.as_str().to_string(), x.report.verdict))
                .collect();
            rows.push(ComparisonRow {
                query: label.clone(),
                method: e.method.clone(),
                estimand: e.estimand,
                effect: e.value,
                relative_effect: e.relative_effect,
                refutations,
            });
            cell.insert(e.method.clone(), e.value);
        }
        queries.push(label);
        cells.push(cell);
    }
    let effects = cells
        .iter()
        .map(|c| methods.iter().map(|m| c.get(m).copied()).collect())
        .collect();
    Ok(Comparison {
        format_version: FORMAT_VERSION,
        rows,
        grid: Grid {
            methods,
            queries,
            effects,
        },
        warnings,
    })
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Informational => "info",
    }
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let mut t = Table::new(&["query", "method", "estimand", "effect", "relative", "refutations"]);
        for r in &self.rows {
            let refs = r
                .refutations
                .iter()
                .map(|(k, v)| format!("{k}={}", verdict_str(*v)))
                .collect::<Vec<_>>()
                .join(" ");
            t.row(vec![
                r.query.clone(),
                r.method.clone(),
                format!("{:?}", r.estimand).to_uppercase(),
                format!("{:.6}", r.effect),
                r.relative_effect.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into()),
                if refs.is_empty() { "-".into() } else { refs },
            ]);
        }
        let mut out = t.render();
        out.push('\n');
        let mut header = vec!["query"];
        header.extend(self.grid.methods.iter().map(String::as_str));
        let mut g = Table::new(&header);
        for (q, row) in self.grid.queries.iter().zip(&self.grid.effects) {
            let mut cells = vec![q.clone()];
            cells.extend(row.iter().map(|v| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())));
            g.row(cells);
        }
        out.push_str(&g.render());
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}
