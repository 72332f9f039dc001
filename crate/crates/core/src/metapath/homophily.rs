use crate::graph::{FeatureMatrix, HetGraph, Labels};

use super::{build_induced_graph, InducedGraph, Metapath, MetapathError};

/// Local-homophily bins `(0,0.2], (0.2,0.4], (0.4,0.6], (0.6,0.8], (0.8,1]`,
/// given by their right endpoints.
pub const HOMOPHILY_BINS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

/// Fraction of ordered edges of `E_p` whose endpoints share a label. Edges
/// touching an unlabeled node are left out.
pub fn global_homophily(ig: &InducedGraph, labels: &Labels) -> Result<f64, MetapathError> {
    let (mut same, mut total) = (0usize, 0usize);
    for (u, v, _) in ig.edges() {
        if labels.is_labeled(u) && labels.is_labeled(v) {
            total += 1;
            same += usize::from(labels.same(u, v));
        }
    }
    if total == 0 {
        return Err(MetapathError::EmptyEdgeSet);
    }
    Ok(same as f64 / total as f64)
}

pub fn average_homophily(per_metapath: &[f64]) -> Result<f64, MetapathError> {
    if per_metapath.is_empty() {
        return Err(MetapathError::EmptyList);
    }
    Ok(per_metapath.iter().sum::<f64>() / per_metapath.len() as f64)
}

/// Per node: share of labeled neighbors carrying the node's label. `None`
/// for unlabeled nodes and nodes without labeled neighbors.
pub fn local_homophily(ig: &InducedGraph, labels: &Labels) -> Vec<Option<f64>> {
    (0..ig.num_nodes())
        .map(|v| {
            if !labels.is_labeled(v) {
                return None;
            }
            let (mut same, mut total) = (0usize, 0usize);
            for (u, _) in ig.neighbors(v) {
                if labels.is_labeled(u) {
                    total += 1;
                    same += usize::from(labels.same(u, v));
                }
            }
            (total > 0).then(|| same as f64 / total as f64)
        })
        .collect()
}

/// Node indices per bin of [`HOMOPHILY_BINS`]. Zero joins the first bin.
pub fn bin_by_local_homophily(values: &[Option<f64>]) -> [Vec<usize>; 5] {
    let mut bins: [Vec<usize>; 5] = Default::default();
    for (v, h) in values.iter().enumerate() {
        if let Some(h) = *h {
            let b = HOMOPHILY_BINS
                .iter()
                .position(|&right| h <= right)
                .unwrap_or(HOMOPHILY_BINS.len() - 1);
            bins[b].push(v);
        }
    }
    bins
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetapathSimilarity {
    pub metapath: String,
    pub num_edges: usize,
    pub mean_cosine: f64,
    pub homophily: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl LinearFit {
    /// `None` with fewer than two points or constant `x`.
    pub fn ols(points: &[(f64, f64)]) -> Option<LinearFit> {
        let n = points.len() as f64;
        if points.len() < 2 {
            return None;
        }
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss_res: f64 = points
            .iter()
            .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
            .sum();
        let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
        let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
        Some(LinearFit { slope, intercept, r2 })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityReport {
    pub points: Vec<MetapathSimilarity>,
    pub fit: Option<LinearFit>,
}

/// Mean feature cosine over `E_p` against global homophily, per metapath,
/// with a least-squares line through (homophily, cosine).
pub fn similarity_vs_homophily(
    g: &HetGraph,
    metapaths: &[Metapath],
) -> Result<SimilarityReport, MetapathError> {
    let x = g.features(g.target_type()).ok_or(MetapathError::MissingFeatures)?;
    let norms: Vec<f64> = (0..x.rows).map(|r| norm(x.row(r))).collect();
    let mut points = Vec::with_capacity(metapaths.len());
    for p in metapaths {
        let ig = build_induced_graph(g, p);
        let homophily = global_homophily(&ig, g.labels())?;
        let (mut sum, mut n) = (0.0, 0usize);
        for (u, v, _) in ig.edges() {
            sum += cosine(x, &norms, u, v);
            n += 1;
        }
        points.push(MetapathSimilarity {
            metapath: p.name().to_string(),
            num_edges: n,
            mean_cosine: sum / n as f64,
            homophily,
        });
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.homophily, p.mean_cosine)).collect();
    Ok(SimilarityReport { fit: LinearFit::ols(&xy), points })
}

fn norm(a: &[f32]) -> f64 {
    a.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
}

/// Zero vectors have cosine 0 with everything.
fn cosine(x: &FeatureMatrix, norms: &[f64], u: usize, v: usize) -> f64 {
    if norms[u] == 0.0 || norms[v] == 0.0 {
        return 0.0;
    }
    let dot: f64 = x.row(u).iter().zip(x.row(v)).map(|(&a, &b)| a as f64 * b as f64).sum();
    dot / (norms[u] * norms[v])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_examples() {
        assert_eq!(average_homophily(&[1.0]), Ok(1.0));
        assert_eq!(average_homophily(&[0.0, 1.0]), Ok(0.5));
        assert_eq!(average_homophily(&[0.81]), Ok(0.81));
        assert_eq!(average_homophily(&[]), Err(MetapathError::EmptyList));
    }

    #[test]
    fn bin_edges() {
        let vals = [Some(0.2), Some(0.21), Some(0.0), None, Some(1.0), Some(0.6)];
        let bins = bin_by_local_homophily(&vals);
        assert_eq!(bins[0], vec![0, 2]);
        assert_eq!(bins[1], vec![1]);
        assert_eq!(bins[2], vec![5]);
        assert!(bins[3].is_empty());
        assert_eq!(bins[4], vec![4]);
    }

    #[test]
    fn collinear_fit() {
        let f = LinearFit::ols(&[(0.1, 0.3), (0.5, 0.7), (0.9, 1.1)]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!((f.intercept - 0.2).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(LinearFit::ols(&[(0.1, 0.3)]).is_none());
        assert!(LinearFit::ols(&[(0.1, 0.3), (0.1, 0.5)]).is_none());
    }
}
