//! Queries and the subquery plan.
//!
//! A plan is an ordered list of nodes numbered `1..=n`. A node may refer to
//! the answer of an earlier node with a `#k` placeholder; every such
//! reference must also appear in the node's dependency set, and
//! dependencies only ever point to lower indices, which makes ascending
//! index order a valid execution order.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

/// The user's natural-language question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("query text is empty")]
pub struct EmptyQuery;

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, EmptyQuery> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EmptyQuery);
        }
        Ok(Self { id: id.into(), text })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubqueryNode {
    /// 1-based position in the plan.
    pub index: usize,
    pub template: String,
    pub depends_on: BTreeSet<usize>,
}

impl SubqueryNode {
    pub fn new(index: usize, template: impl Into<String>, depends_on: impl IntoIterator<Item = usize>) -> Self {
        Self {
            index,
            template: template.into(),
            depends_on: depends_on.into_iter().collect(),
        }
    }

    /// Indices referenced as `#k` in the template, in order of first appearance.
    pub fn placeholders(&self) -> Vec<usize> {
        placeholder_refs(&self.template)
    }
}

pub(crate) fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"#(\d+)").expect("static regex"))
}

pub(crate) fn placeholder_refs(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    for cap in placeholder_regex().captures_iter(text) {
        // digits that overflow usize can never name a node; map them to 0 so
        // validation reports them as unhoused
        let k = cap[1].parse::<usize>().unwrap_or(0);
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubqueryDag {
    pub nodes: Vec<SubqueryNode>,
}

/// One broken rule in a [`SubqueryDag`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DagViolation {
    /// Node at `position` (1-based) carries the wrong index.
    IndexGap { position: usize, found: usize },
    /// `from` depends on `to` with `to >= from`.
    ForwardDependency { from: usize, to: usize },
    /// `from` depends on a node that does not exist.
    MissingDependency { from: usize, to: usize },
    /// `#k` appears in the template of `node` without `k` in its dependency set.
    UnhousedPlaceholder { node: usize, reference: usize },
    EmptyTemplate { node: usize },
    Empty,
}

impl fmt::Display for DagViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DagViolation::IndexGap { position, found } => {
                write!(f, "index gap: node at position {position} has index {found}")
            }
            DagViolation::ForwardDependency { from, to } => write!(f, "forward dependency {from}→{to}"),
            DagViolation::MissingDependency { from, to } => write!(f, "missing dependency {from}→{to}"),
            DagViolation::UnhousedPlaceholder { reference, .. } => write!(f, "unhoused placeholder #{reference}"),
            DagViolation::EmptyTemplate { node } => write!(f, "empty template at node {node}"),
            DagViolation::Empty => f.write_str("plan has no nodes"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid subquery plan: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct StructuralError(pub Vec<DagViolation>);

impl SubqueryDag {
    pub fn new(nodes: Vec<SubqueryNode>) -> Self {
        Self { nodes }
    }

    /// The no-decomposition plan: the whole question as a single node.
    pub fn single(text: impl Into<String>) -> Self {
        Self::new(vec![SubqueryNode::new(1, text, [])])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, index: usize) -> Option<&SubqueryNode> {
        index.checked_sub(1).and_then(|i| self.nodes.get(i)).filter(|n| n.index == index)
    }

    /// Checks every structural invariant and returns all violations found.
    pub fn validate(&self) -> Result<(), Vec<DagViolation>> {
        let mut violations = Vec::new();
        if self.nodes.is_empty() {
            violations.push(DagViolation::Empty);
        }
        let n = self.nodes.len();
        for (pos, node) in self.nodes.iter().enumerate() {
            if node.index != pos + 1 {
                violations.push(DagViolation::IndexGap {
                    position: pos + 1,
                    found: node.index,
                });
            }
            if node.template.trim().is_empty() {
                violations.push(DagViolation::EmptyTemplate { node: node.index });
            }
            for &dep in &node.depends_on {
                if dep >= node.index {
                    violations.push(DagViolation::ForwardDependency { from: node.index, to: dep });
                } else if dep == 0 || dep > n {
                    violations.push(DagViolation::MissingDependency { from: node.index, to: dep });
                }
            }
            for reference in node.placeholders() {
                if !node.depends_on.contains(&reference) {
                    violations.push(DagViolation::UnhousedPlaceholder {
                        node: node.index,
                        reference,
                    });
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Execution order. Ascending indices are always topological for a valid plan.
    pub fn topological_order(&self) -> Result<Vec<usize>, StructuralError> {
        self.validate().map_err(StructuralError)?;
        Ok((1..=self.nodes.len()).collect())
    }

    /// Renders the plan as the numbered-line text a planner model would emit.
    pub fn render(&self) -> String {
        self.nodes
            .iter()
            .map(|n| format!("{}. {}", n.index, n.template))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Free-function form of [`SubqueryDag::validate`].
pub fn validate_dag(dag: &SubqueryDag) -> Result<(), Vec<DagViolation>> {
    dag.validate()
}

/// Free-function form of [`SubqueryDag::topological_order`].
pub fn topological_order(dag: &SubqueryDag) -> Result<Vec<usize>, StructuralError> {
    dag.topological_order()
}
