//! Typed heterogeneous graph store, validation and the directory format.

mod csr;
mod io;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub use csr::Csr;
pub use io::{load_graph, save_graph};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("overlapping splits: {0}")]
    OverlappingSplits(String),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationType {
    pub name: String,
    pub src: usize,
    pub dst: usize,
    /// Index of the relation this one is declared to be the transpose of.
    pub reverse_of: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, GraphError> {
        if rows * cols != data.len() {
            return Err(GraphError::Invalid(format!(
                "feature matrix {rows}x{cols} with {} values",
                data.len()
            )));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelMode {
    Single,
    Multi,
}

/// Per-target-node labels; `None` marks an unlabeled node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Labels {
    Single(Vec<Option<usize>>),
    Multi(Vec<Option<Vec<bool>>>),
}

impl Labels {
    pub fn mode(&self) -> LabelMode {
        match self {
            Labels::Single(_) => LabelMode::Single,
            Labels::Multi(_) => LabelMode::Multi,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Labels::Single(v) => v.len(),
            Labels::Multi(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_labeled(&self, v: usize) -> bool {
        match self {
            Labels::Single(l) => l[v].is_some(),
            Labels::Multi(l) => l[v].is_some(),
        }
    }

    /// Whether two labeled nodes count as same-label. Multi-label nodes
    /// match when their label sets intersect. Unlabeled nodes match nothing.
    pub fn same(&self, u: usize, v: usize) -> bool {
        match self {
            Labels::Single(l) => matches!((l[u], l[v]), (Some(a), Some(b)) if a == b),
            Labels::Multi(l) => match (&l[u], &l[v]) {
                (Some(a), Some(b)) => a.iter().zip(b).any(|(&x, &y)| x && y),
                _ => false,
            },
        }
    }

    pub fn single(&self) -> Option<&[Option<usize>]> {
        match self {
            Labels::Single(l) => Some(l),
            Labels::Multi(_) => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl Splits {
    pub fn get(&self, s: Split) -> &[usize] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Boolean membership mask over `n` target nodes.
    pub fn mask(&self, s: Split, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in self.get(s) {
            if i < n {
                m[i] = true;
            }
        }
        m
    }
}

/// Raw graph contents, before indexing. Everything [`HetGraph::new`] needs.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphParts {
    pub node_types: Vec<String>,
    pub node_counts: Vec<usize>,
    pub relations: Vec<RelationType>,
    pub edges: Vec<Vec<(usize, usize)>>,
    pub features: Vec<Option<FeatureMatrix>>,
    pub target_type: usize,
    pub num_classes: usize,
    pub labels: Labels,
    pub splits: Splits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    SchemaMismatch,
    IndexOutOfRange,
    OverlappingSplits,
    DuplicateSplitIndex,
    NotHeterogeneous,
    LabelOutOfRange,
    FeatureShape,
    ReverseMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Violation> for GraphError {
    fn from(v: Violation) -> Self {
        match v.kind {
            ViolationKind::SchemaMismatch => GraphError::SchemaMismatch(v.message),
            ViolationKind::IndexOutOfRange => GraphError::IndexOutOfRange(v.message),
            ViolationKind::OverlappingSplits | ViolationKind::DuplicateSplitIndex => {
                GraphError::OverlappingSplits(v.message)
            }
            _ => GraphError::Invalid(v.message),
        }
    }
}

fn violation(kind: ViolationKind, message: String) -> Violation {
    Violation { kind, message }
}

/// Checks every graph invariant; an empty list means the parts are valid.
pub fn validate(p: &GraphParts) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();
    let n_types = p.node_types.len();
    if p.node_counts.len() != n_types || p.features.len() != n_types {
        out.push(violation(
            SchemaMismatch,
            format!(
                "{} node types but {} counts and {} feature slots",
                n_types,
                p.node_counts.len(),
                p.features.len()
            ),
        ));
        return out;
    }
    if n_types + p.relations.len() <= 2 {
        out.push(violation(
            NotHeterogeneous,
            format!(
                "{} node types + {} relations is not heterogeneous (need > 2)",
                n_types,
                p.relations.len()
            ),
        ));
    }
    let mut seen = HashMap::new();
    for (i, name) in p.node_types.iter().enumerate() {
        if seen.insert(name.as_str(), i).is_some() {
            out.push(violation(SchemaMismatch, format!("duplicate node type {name}")));
        }
    }
    if p.target_type >= n_types {
        out.push(violation(
            SchemaMismatch,
            format!("target type index {} out of {n_types}", p.target_type),
        ));
        return out;
    }
    if p.edges.len() != p.relations.len() {
        out.push(violation(
            SchemaMismatch,
            format!("{} relations but {} edge lists", p.relations.len(), p.edges.len()),
        ));
        return out;
    }
    let mut rel_names = HashMap::new();
    for (ri, r) in p.relations.iter().enumerate() {
        if rel_names.insert(r.name.as_str(), ri).is_some() {
            out.push(violation(SchemaMismatch, format!("duplicate relation {}", r.name)));
        }
        if r.src >= n_types || r.dst >= n_types {
            out.push(violation(
                SchemaMismatch,
                format!("relation {} references an unknown node type", r.name),
            ));
            continue;
        }
        let (ns, nd) = (p.node_counts[r.src], p.node_counts[r.dst]);
        for (k, &(s, d)) in p.edges[ri].iter().enumerate() {
            if s >= ns || d >= nd {
                out.push(violation(
                    IndexOutOfRange,
                    format!(
                        "relation {} edge {k} ({s}, {d}) exceeds counts ({ns}, {nd})",
                        r.name
                    ),
                ));
            }
        }
    }
    for (ri, r) in p.relations.iter().enumerate() {
        let Some(fwd) = r.reverse_of else { continue };
        let Some(f) = p.relations.get(fwd) else {
            out.push(violation(
                SchemaMismatch,
                format!("relation {} is the reverse of an unknown relation", r.name),
            ));
            continue;
        };
        if f.src != r.dst || f.dst != r.src {
            out.push(violation(
                ReverseMismatch,
                format!("relation {} does not swap the types of {}", r.name, f.name),
            ));
            continue;
        }
        let mut a: Vec<(usize, usize)> = p.edges[fwd].iter().map(|&(s, d)| (d, s)).collect();
        let mut b = p.edges[ri].clone();
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            out.push(violation(
                ReverseMismatch,
                format!("relation {} is not the exact transpose of {}", r.name, f.name),
            ));
        }
    }
    for (t, feat) in p.features.iter().enumerate() {
        if let Some(f) = feat {
            if f.rows != p.node_counts[t] || f.data.len() != f.rows * f.cols {
                out.push(violation(
                    FeatureShape,
                    format!(
                        "features of {} are {}x{} for {} nodes",
                        p.node_types[t], f.rows, f.cols, p.node_counts[t]
                    ),
                ));
            }
        }
    }
    let n_target = p.node_counts[p.target_type];
    if p.labels.len() != n_target {
        out.push(violation(
            SchemaMismatch,
            format!("{} label slots for {n_target} target nodes", p.labels.len()),
        ));
    } else {
        match &p.labels {
            Labels::Single(l) => {
                for (v, y) in l.iter().enumerate() {
                    if let Some(y) = y {
                        if *y >= p.num_classes {
                            out.push(violation(
                                LabelOutOfRange,
                                format!("node {v} label {y} outside [0, {})", p.num_classes),
                            ));
                        }
                    }
                }
            }
            Labels::Multi(l) => {
                for (v, y) in l.iter().enumerate() {
                    if let Some(y) = y {
                        if y.len() != p.num_classes {
                            out.push(violation(
                                LabelOutOfRange,
                                format!(
                                    "node {v} label vector has {} entries, expected {}",
                                    y.len(),
                                    p.num_classes
                                ),
                            ));
                        }
                    }
                }
            }
        }
    }
    let mut owner: HashMap<usize, Split> = HashMap::new();
    for s in [Split::Train, Split::Val, Split::Test] {
        for &i in p.splits.get(s) {
            if i >= n_target {
                out.push(violation(
                    IndexOutOfRange,
                    format!("{} index {i} is not a target node (count {n_target})", s.name()),
                ));
                continue;
            }
            match owner.insert(i, s) {
                Some(prev) if prev == s => out.push(violation(
                    DuplicateSplitIndex,
                    format!("index {i} appears twice in {}", s.name()),
                )),
                Some(prev) => out.push(violation(
                    OverlappingSplits,
                    format!("index {i} is in both {} and {}", prev.name(), s.name()),
                )),
                None => {}
            }
        }
    }
    out
}

/// Immutable, validated heterogeneous graph with per-relation adjacency.
#[derive(Clone, Debug)]
pub struct HetGraph {
    parts: GraphParts,
    out_adj: Vec<Csr>,
    in_adj: Vec<Csr>,
}

impl HetGraph {
    pub fn new(parts: GraphParts) -> Result<Self, GraphError> {
        if let Some(v) = validate(&parts).into_iter().next() {
            return Err(v.into());
        }
        let mut parts = parts;
        for s in [&mut parts.splits.train, &mut parts.splits.val, &mut parts.splits.test] {
            s.sort_unstable();
        }
        let out_adj = parts
            .relations
            .iter()
            .zip(&parts.edges)
            .map(|(r, e)| Csr::from_edges(parts.node_counts[r.src], e.iter().copied()))
            .collect();
        let in_adj = parts
            .relations
            .iter()
            .zip(&parts.edges)
            .map(|(r, e)| Csr::from_edges(parts.node_counts[r.dst], e.iter().map(|&(s, d)| (d, s))))
            .collect();
        Ok(HetGraph {
            parts,
            out_adj,
            in_adj,
        })
    }

    pub fn parts(&self) -> &GraphParts {
        &self.parts
    }

    pub fn into_parts(self) -> GraphParts {
        self.parts
    }

    /// Always empty for a constructed graph; kept for symmetry with
    /// [`validate`] on raw parts.
    pub fn validate(&self) -> Vec<Violation> {
        validate(&self.parts)
    }

    pub fn node_types(&self) -> &[String] {
        &self.parts.node_types
    }

    pub fn num_types(&self) -> usize {
        self.parts.node_types.len()
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.parts.node_types.iter().position(|t| t == name)
    }

    pub fn node_count(&self, t: usize) -> usize {
        self.parts.node_counts[t]
    }

    pub fn relations(&self) -> &[RelationType] {
        &self.parts.relations
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.parts.relations.iter().position(|r| r.name == name)
    }

    pub fn edges(&self, r: usize) -> &[(usize, usize)] {
        &self.parts.edges[r]
    }

    /// Source-indexed adjacency of relation `r`.
    pub fn out_adj(&self, r: usize) -> &Csr {
        &self.out_adj[r]
    }

    /// Destination-indexed adjacency of relation `r` (row = dst, entries = srcs).
    pub fn in_adj(&self, r: usize) -> &Csr {
        &self.in_adj[r]
    }

    pub fn features(&self, t: usize) -> Option<&FeatureMatrix> {
        self.parts.features[t].as_ref()
    }

    pub fn target_type(&self) -> usize {
        self.parts.target_type
    }

    pub fn num_targets(&self) -> usize {
        self.parts.node_counts[self.parts.target_type]
    }

    pub fn num_classes(&self) -> usize {
        self.parts.num_classes
    }

    pub fn labels(&self) -> &Labels {
        &self.parts.labels
    }

    pub fn label_mode(&self) -> LabelMode {
        self.parts.labels.mode()
    }

    pub fn splits(&self) -> &Splits {
        &self.parts.splits
    }

    /// Same topology and features with replaced labels.
    pub fn with_labels(&self, labels: Labels) -> Result<HetGraph, GraphError> {
        let mut parts = self.parts.clone();
        parts.labels = labels;
        HetGraph::new(parts)
    }
}
