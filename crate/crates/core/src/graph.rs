//! Causal DAGs: parsing, d-separation and backdoor adjustment sets.
//!
//! Text format, one statement per line (or separated by `;`):
//!
//! ```text
//! # comment
//! @treatment T
//! @outcome Y
//! @unobserved U1 U2
//! @covariate X
//! Z -> T
//! Z -> Y -> W
//! ```
//!
//! Nodes introduced only through edges are covariates. Names are
//! case-sensitive identifiers `[A-Za-z_][A-Za-z0-9_]*` so they can match CSV
//! headers verbatim.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest adjustment set `backdoor_sets` searches by default.
pub const DEFAULT_MAX_SET_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Covariate,
    Treatment,
    Outcome,
    Unobserved,
}

impl Role {
    fn directive(self) -> &'static str {
        match self {
            Role::Covariate => "@covariate",
            Role::Treatment => "@treatment",
            Role::Outcome => "@outcome",
            Role::Unobserved => "@unobserved",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub name: String,
    pub role: Role,
}

/// An immutable, validated DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl CausalGraph {
    /// Build a graph from declared nodes and edges.
    ///
    /// Edge endpoints must be declared. A graph either declares no
    /// treatment/outcome at all, or exactly one of each.
    pub fn from_parts<S: AsRef<str>>(nodes: &[(S, Role)], edges: &[(S, S)]) -> Result<Self> {
        let mut out = Vec::with_capacity(nodes.len());
        let mut index = HashMap::new();
        for (name, role) in nodes {
            let name = name.as_ref();
            if !is_identifier(name) {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("invalid node name `{name}`"),
                });
            }
            if index.insert(name.to_string(), out.len()).is_some() {
                return Err(Error::Role(format!("node `{name}` declared twice")));
            }
            out.push(Node {
                name: name.to_string(),
                role: *role,
            });
        }
        let mut edge_ids = Vec::with_capacity(edges.len());
        for (from, to) in edges {
            let a = *index
                .get(from.as_ref())
                .ok_or_else(|| Error::UnknownNode(from.as_ref().to_string()))?;
            let b = *index
                .get(to.as_ref())
                .ok_or_else(|| Error::UnknownNode(to.as_ref().to_string()))?;
            if !edge_ids.contains(&(a, b)) {
                edge_ids.push((a, b));
            }
        }
        let n = out.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(a, b) in &edge_ids {
            children[a].push(b);
            parents[b].push(a);
        }
        let graph = CausalGraph {
            nodes: out,
            index,
            edges: edge_ids,
            parents,
            children,
        };
        graph.check_acyclic()?;
        graph.check_roles()?;
        Ok(graph)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut nodes: Vec<(String, Role)> = Vec::new();
        let mut explicit: HashMap<String, Role> = HashMap::new();
        let mut edges: Vec<(String, String)> = Vec::new();

        fn declare(nodes: &mut Vec<(String, Role)>, name: &str) {
            if !nodes.iter().any(|(n, _)| n == name) {
                nodes.push((name.to_string(), Role::Covariate));
            }
        }

        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("");
            for stmt in content.split(';') {
                let stmt = stmt.trim();
                if stmt.is_empty() {
                    continue;
                }
                let parse_err = |message: String| Error::Parse { line, message };
                if let Some(rest) = stmt.strip_prefix('@') {
                    let mut words = rest.split_whitespace();
                    let directive = words.next().unwrap_or("");
                    let role = match directive {
                        "treatment" => Role::Treatment,
                        "outcome" => Role::Outcome,
                        "unobserved" => Role::Unobserved,
                        "covariate" => Role::Covariate,
                        other => return Err(parse_err(format!("unknown directive `@{other}`"))),
                    };
                    let names: Vec<&str> = words.collect();
                    if names.is_empty() {
                        return Err(parse_err(format!("`@{directive}` needs a node name")));
                    }
                    for name in names {
                        if !is_identifier(name) {
                            return Err(parse_err(format!("invalid node name `{name}`")));
                        }
                        if let Some(prev) = explicit.insert(name.to_string(), role) {
                            if prev != role {
                                return Err(Error::Role(format!(
                                    "node `{name}` given roles {prev:?} and {role:?}"
                                )));
                            }
                        }
                        declare(&mut nodes, name);
                    }
                } else {
                    let parts: Vec<&str> = stmt.split("->").map(str::trim).collect();
                    if parts.len() < 2 {
                        return Err(parse_err(format!("expected `A -> B`, found `{stmt}`")));
                    }
                    for name in &parts {
                        if !is_identifier(name) {
                            return Err(parse_err(format!("invalid node name `{name}`")));
                        }
                        declare(&mut nodes, name);
                    }
                    for pair in parts.windows(2) {
                        edges.push((pair[0].to_string(), pair[1].to_string()));
                    }
                }
            }
        }
        for (name, role) in nodes.iter_mut() {
            if let Some(r) = explicit.get(name) {
                *role = *r;
            }
        }
        Self::from_parts(&nodes, &edges)
    }

    fn check_acyclic(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if seen == n {
            Ok(())
        } else {
            let culprit = (0..n).find(|&v| indegree[v] > 0).unwrap();
            Err(Error::Cycle(self.nodes[culprit].name.clone()))
        }
    }

    fn check_roles(&self) -> Result<()> {
        let count = |role| self.nodes.iter().filter(|n| n.role == role).count();
        let (t, y) = (count(Role::Treatment), count(Role::Outcome));
        if (t, y) != (0, 0) && (t, y) != (1, 1) {
            return Err(Error::Role(format!(
                "expected exactly one treatment and one outcome, found {t} and {y}"
            )));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.edges
            .iter()
            .map(|&(a, b)| (self.nodes[a].name.as_str(), self.nodes[b].name.as_str()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn role(&self, name: &str) -> Result<Role> {
        Ok(self.nodes[self.node_id(name)?].role)
    }

    fn with_role(&self, role: Role) -> Option<&str> {
        self.nodes
            .iter()
            .find(|n| n.role == role)
            .map(|n| n.name.as_str())
    }

    pub fn treatment(&self) -> Option<&str> {
        self.with_role(Role::Treatment)
    }

    pub fn outcome(&self) -> Option<&str> {
        self.with_role(Role::Outcome)
    }

    pub fn parents_of(&self, id: usize) -> &[usize] {
        &self.parents[id]
    }

    pub fn children_of(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    /// Strict descendants of `id`.
    pub fn descendants(&self, id: usize) -> Vec<bool> {
        let mut mark = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = self.children[id].clone();
        while let Some(v) = stack.pop() {
            if !mark[v] {
                mark[v] = true;
                stack.extend_from_slice(&self.children[v]);
            }
        }
        mark
    }

    /// Ancestors of the seed set (inclusive), optionally ignoring the
    /// outgoing edges of `cut`.
    fn ancestral_closure(&self, seeds: &[bool], cut: Option<usize>) -> Vec<bool> {
        let mut mark = seeds.to_vec();
        let mut stack: Vec<usize> = (0..mark.len()).filter(|&v| mark[v]).collect();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if Some(p) == cut {
                    continue;
                }
                if !mark[p] {
                    mark[p] = true;
                    stack.push(p);
                }
            }
        }
        mark
    }

    /// d-separation by reachability in the moralized ancestral graph.
    ///
    /// `cut` deletes the outgoing edges of one node before testing.
    pub fn d_separated_ids(&self, a: usize, b: usize, given: &[bool], cut: Option<usize>) -> bool {
        let n = self.nodes.len();
        let mut seeds = given.to_vec();
        seeds[a] = true;
        seeds[b] = true;
        let keep = self.ancestral_closure(&seeds, cut);

        let mut adj = vec![Vec::new(); n];
        for v in (0..n).filter(|&v| keep[v]) {
            let ps: Vec<usize> = self.parents[v]
                .iter()
                .copied()
                .filter(|&p| Some(p) != cut)
                .collect();
            for (i, &p) in ps.iter().enumerate() {
                adj[p].push(v);
                adj[v].push(p);
                for &q in &ps[i + 1..] {
                    adj[p].push(q);
                    adj[q].push(p);
                }
            }
        }

        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([a]);
        seen[a] = true;
        while let Some(v) = queue.pop_front() {
            if v == b {
                return false;
            }
            for &w in &adj[v] {
                if !seen[w] && !given[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        true
    }

    pub fn d_separated(&self, a: &str, b: &str, given: &[&str]) -> Result<bool> {
        let ia = self.node_id(a)?;
        let ib = self.node_id(b)?;
        let mut mask = vec![false; self.nodes.len()];
        for z in given {
            mask[self.node_id(z)?] = true;
        }
        if ia == ib || mask[ia] || mask[ib] {
            return Err(Error::InvalidArgument(
                "d-separation endpoints must be distinct and outside the conditioning set".into(),
            ));
        }
        Ok(self.d_separated_ids(ia, ib, &mask, None))
    }

    /// All inclusion-minimal backdoor adjustment sets for `t -> y`, by
    /// increasing size then lexicographic node order.
    pub fn backdoor_sets(&self, t: &str, y: &str) -> Result<Vec<Vec<String>>> {
        self.backdoor_sets_with_cap(t, y, DEFAULT_MAX_SET_SIZE)
    }

    pub fn backdoor_sets_with_cap(
        &self,
        t: &str,
        y: &str,
        max_size: usize,
    ) -> Result<Vec<Vec<String>>> {
        let it = self.node_id(t)?;
        let iy = self.node_id(y)?;
        if self.nodes[it].role != Role::Treatment {
            return Err(Error::Role(format!("`{t}` is not the treatment node")));
        }
        if self.nodes[iy].role != Role::Outcome {
            return Err(Error::Role(format!("`{y}` is not the outcome node")));
        }
        match self.backdoor_sets_ids(it, iy, max_size) {
            Some(sets) => Ok(sets
                .into_iter()
                .map(|s| s.into_iter().map(|v| self.nodes[v].name.clone()).collect())
                .collect()),
            None => Err(Error::NotIdentifiable {
                unobserved: self.blocking_unobserved(it, iy),
            }),
        }
    }

    /// Role-agnostic core of [`backdoor_sets`](Self::backdoor_sets); `None`
    /// when no observed set of size `<= max_size` blocks every backdoor path.
    pub fn backdoor_sets_ids(&self, t: usize, y: usize, max_size: usize) -> Option<Vec<Vec<usize>>> {
        let n = self.nodes.len();
        let desc = self.descendants(t);
        let candidates: Vec<usize> = (0..n)
            .filter(|&v| v != t && v != y && !desc[v] && self.nodes[v].role != Role::Unobserved)
            .collect();

        let mut found: Vec<Vec<usize>> = Vec::new();
        let mut mask = vec![false; n];
        for size in 0..=max_size.min(candidates.len()) {
            for_each_combination(candidates.len(), size, |combo| {
                let set: Vec<usize> = combo.iter().map(|&i| candidates[i]).collect();
                if found.iter().any(|m| m.iter().all(|v| set.contains(v))) {
                    return;
                }
                for &v in &set {
                    mask[v] = true;
                }
                if self.d_separated_ids(t, y, &mask, Some(t)) {
                    found.push(set.clone());
                }
                for &v in &set {
                    mask[v] = false;
                }
            });
        }
        if found.is_empty() {
            None
        } else {
            Some(found)
        }
    }

    fn blocking_unobserved(&self, t: usize, y: usize) -> Vec<String> {
        let n = self.nodes.len();
        let single = |v: usize| {
            let mut seeds = vec![false; n];
            seeds[v] = true;
            self.ancestral_closure(&seeds, None)
        };
        let (at, ay) = (single(t), single(y));
        let unobserved = |v: &usize| self.nodes[*v].role == Role::Unobserved;
        let mut names: Vec<String> = (0..n)
            .filter(|v| unobserved(v) && at[*v] && ay[*v])
            .map(|v| self.nodes[v].name.clone())
            .collect();
        if names.is_empty() {
            names = (0..n)
                .filter(|v| unobserved(v) && at[*v])
                .map(|v| self.nodes[v].name.clone())
                .collect();
        }
        names
    }
}

/// Visit every `k`-subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

impl fmt::Display for CausalGraph {
    /// Canonical text form; `parse` of the output reproduces the graph.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for node in &self.nodes {
            writeln!(f, "{} {}", node.role.directive(), node.name)?;
        }
        for &(a, b) in &self.edges {
            writeln!(f, "{} -> {}", self.nodes[a].name, self.nodes[b].name)?;
        }
        Ok(())
    }
}
