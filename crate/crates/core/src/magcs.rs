//! Multi-activation graph construction.
//!
//! Every semantic dimension gets its own graph over the same `C` feature
//! nodes. Only activated features carry edges: each one links to its `k`
//! nearest activated neighbours by scalar feature distance, the directed
//! edges are symmetrised by union, and every edge is weighted by the mean
//! influence of its endpoints.

use crate::error::{Error, Result, TensorError};
use crate::mdfd::{ActivationSet, InfluenceMatrix};
use crate::tensor::Matrix;

/// Lower bound on edge weights so attention modulation never multiplies by zero.
pub const EDGE_WEIGHT_FLOOR: f64 = 1e-6;

/// Mean influence of the two endpoints, floored at [`EDGE_WEIGHT_FLOOR`].
#[inline]
pub fn edge_weight(ci: f64, cj: f64) -> f64 {
    (0.5 * (ci + cj)).max(EDGE_WEIGHT_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Weighted graph for one semantic dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationGraph {
    pub dimension: usize,
    pub node_count: usize,
    /// Sorted activated feature indices.
    pub activated: Vec<usize>,
    /// Both directions of every undirected edge, sorted by `(i, j)`.
    pub edges: Vec<Edge>,
    /// `C x 2` rows `[x_i, C_m(i)]`.
    pub node_features: Matrix,
}

impl ActivationGraph {
    /// Undirected edge count.
    pub fn undirected_len(&self) -> usize {
        self.edges.len() / 2
    }

    /// Dense symmetric weight matrix (zero where no edge).
    pub fn weight_matrix(&self) -> Matrix {
        let mut a = Matrix::zeros(self.node_count, self.node_count);
        for e in &self.edges {
            a.set(e.i, e.j, e.w);
        }
        a
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.i == node).count()
    }
}

/// The `M` activation graphs of one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphStack {
    pub patient_id: String,
    pub graphs: Vec<ActivationGraph>,
}

impl GraphStack {
    pub fn node_count(&self) -> usize {
        self.graphs.first().map_or(0, |g| g.node_count)
    }
}

/// Nearest activated neighbours of `i` by `|x_i - x_j|`, ties toward the lower index.
fn nearest(x: &[f64], activated: &[usize], i: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = activated.iter().copied().filter(|&j| j != i).collect();
    cand.sort_by(|&a, &b| {
        let da = (x[i] - x[a]).abs();
        let db = (x[i] - x[b]).abs();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    cand.truncate(k);
    cand
}

pub fn build_activation_graph(
    x: &[f64],
    activated: &[usize],
    scores_row: &[f64],
    k: usize,
    dimension: usize,
) -> Result<ActivationGraph> {
    let c = x.len();
    if scores_row.len() != c {
        return Err(TensorError::Shape {
            op: "build_activation_graph",
            lhs: (1, c),
            rhs: (1, scores_row.len()),
        }
        .into());
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut act = activated.to_vec();
    act.sort_unstable();
    act.dedup();
    if act.len() < 2 {
        return Err(Error::DegenerateDimension(dimension));
    }
    if let Some(&bad) = act.iter().find(|&&i| i >= c) {
        return Err(TensorError::Index { index: bad, len: c }.into());
    }
    let mut pairs = Vec::new();
    for &i in &act {
        for j in nearest(x, &act, i, k) {
            pairs.push((i, j));
            pairs.push((j, i));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let edges = pairs
        .into_iter()
        .map(|(i, j)| Edge {
            i,
            j,
            w: edge_weight(scores_row[i], scores_row[j]),
        })
        .collect();
    let node_features = Matrix::from_fn(c, 2, |r, col| if col == 0 { x[r] } else { scores_row[r] });
    Ok(ActivationGraph {
        dimension,
        node_count: c,
        activated: act,
        edges,
        node_features,
    })
}

pub fn build_graph_stack(
    x: &[f64],
    patient_id: &str,
    activation: &ActivationSet,
    scores: &InfluenceMatrix,
    k: usize,
) -> Result<GraphStack> {
    if activation.semantic_dim() != scores.semantic_dim() || scores.feature_dim() != x.len() {
        return Err(TensorError::Shape {
            op: "build_graph_stack",
            lhs: (activation.semantic_dim(), x.len()),
            rhs: scores.scores.shape(),
        }
        .into());
    }
    let graphs = activation
        .sets
        .iter()
        .enumerate()
        .map(|(m, set)| build_activation_graph(x, set, scores.scores.row(m), k, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphStack {
        patient_id: patient_id.to_string(),
        graphs,
    })
}
