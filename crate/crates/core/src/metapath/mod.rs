//! Symmetric metapaths, their induced graphs and everything derived from
//! instance counts: structural weights, homo/hetero partitions and
//! homophily measurements.

mod counts;
mod homophily;
mod partition;
mod weights;

use thiserror::Error;

use crate::graph::HetGraph;

pub use counts::{build_induced_graph, CountMatrix, InducedGraph};
pub use homophily::{
    average_homophily, bin_by_local_homophily, global_homophily, local_homophily,
    similarity_vs_homophily, LinearFit, MetapathSimilarity, SimilarityReport, HOMOPHILY_BINS,
};
pub use partition::{partition_neighbors, Partition};
pub use weights::{structural_weights, StructuralWeights};

#[derive(Debug, Error, PartialEq)]
pub enum MetapathError {
    #[error("unknown relation {0:?}")]
    UnknownRelation(String),
    #[error("unknown node type {0:?}")]
    UnknownType(String),
    #[error("more than one relation connects {0} to {1}")]
    AmbiguousStep(String, String),
    #[error("metapath does not compose: {0}")]
    NonComposableMetapath(String),
    #[error("metapath is not symmetric over the target type: {0}")]
    NonSymmetricMetapath(String),
    #[error("metapath-induced edge set is empty")]
    EmptyEdgeSet,
    #[error("empty list")]
    EmptyList,
    #[error("target node features are absent")]
    MissingFeatures,
    #[error("induced graphs cover different node counts")]
    TargetMismatch,
}

/// A relation sequence whose implied type sequence starts and ends at the
/// target type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Metapath {
    relations: Vec<usize>,
    types: Vec<usize>,
    name: String,
}

impl Metapath {
    pub fn from_relations(g: &HetGraph, relations: &[usize]) -> Result<Self, MetapathError> {
        let rels = g.relations();
        if relations.is_empty() {
            return Err(MetapathError::NonComposableMetapath("no relations".into()));
        }
        let mut types = vec![rels[relations[0]].src];
        for (k, &r) in relations.iter().enumerate() {
            let rel = &rels[r];
            if rel.src != *types.last().expect("non-empty") {
                return Err(MetapathError::NonComposableMetapath(format!(
                    "relation {} starts at {} but step {k} ends at {}",
                    rel.name,
                    g.node_types()[rel.src],
                    g.node_types()[*types.last().expect("non-empty")]
                )));
            }
            types.push(rel.dst);
        }
        let name: Vec<&str> = types.iter().map(|&t| g.node_types()[t].as_str()).collect();
        let name = name.join("-");
        let target = g.target_type();
        if types[0] != target || *types.last().expect("non-empty") != target {
            return Err(MetapathError::NonSymmetricMetapath(name));
        }
        Ok(Metapath {
            relations: relations.to_vec(),
            types,
            name,
        })
    }

    /// Parses either relation names joined by `,` (`writes,written_by`) or
    /// a type sequence joined by `-` (`A-P-A`). Type tokens match a type
    /// name exactly, else the unique type whose name starts with the token
    /// (case-insensitive).
    pub fn parse(g: &HetGraph, spec: &str) -> Result<Self, MetapathError> {
        let spec = spec.trim();
        let as_relations = spec.contains(',') || g.relation_index(spec).is_some();
        if as_relations {
            let rels = spec
                .split(',')
                .map(|s| {
                    g.relation_index(s.trim())
                        .ok_or_else(|| MetapathError::UnknownRelation(s.trim().to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            return Self::from_relations(g, &rels);
        }
        let types = spec
            .split('-')
            .map(|tok| resolve_type(g, tok.trim()))
            .collect::<Result<Vec<_>, _>>()?;
        if types.len() < 2 {
            return Err(MetapathError::NonComposableMetapath(spec.to_string()));
        }
        let mut rels = Vec::with_capacity(types.len() - 1);
        for w in types.windows(2) {
            let candidates: Vec<usize> = g
                .relations()
                .iter()
                .enumerate()
                .filter(|(_, r)| r.src == w[0] && r.dst == w[1])
                .map(|(i, _)| i)
                .collect();
            match candidates.as_slice() {
                [r] => rels.push(*r),
                [] => {
                    return Err(MetapathError::NonComposableMetapath(format!(
                        "no relation from {} to {}",
                        g.node_types()[w[0]],
                        g.node_types()[w[1]]
                    )))
                }
                _ => {
                    return Err(MetapathError::AmbiguousStep(
                        g.node_types()[w[0]].clone(),
                        g.node_types()[w[1]].clone(),
                    ))
                }
            }
        }
        Self::from_relations(g, &rels)
    }

    pub fn relations(&self) -> &[usize] {
        &self.relations
    }

    pub fn types(&self) -> &[usize] {
        &self.types
    }

    /// Type sequence such as `author-paper-author`.
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}

fn resolve_type(g: &HetGraph, tok: &str) -> Result<usize, MetapathError> {
    if let Some(t) = g.type_index(tok) {
        return Ok(t);
    }
    let lower = tok.to_lowercase();
    let hits: Vec<usize> = g
        .node_types()
        .iter()
        .enumerate()
        .filter(|(_, n)| !lower.is_empty() && n.to_lowercase().starts_with(&lower))
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [t] => Ok(*t),
        _ => Err(MetapathError::UnknownType(tok.to_string())),
    }
}

/// Parses a list of metapath specs separated by `;` or whitespace.
pub fn parse_metapaths(g: &HetGraph, list: &str) -> Result<Vec<Metapath>, MetapathError> {
    let paths = list
        .split(|c: char| c == ';' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| Metapath::parse(g, s))
        .collect::<Result<Vec<_>, _>>()?;
    if paths.is_empty() {
        return Err(MetapathError::EmptyList);
    }
    Ok(paths)
}
