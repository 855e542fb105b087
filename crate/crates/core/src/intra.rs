//! Intra-sample encoding: attention message passing over each activation
//! graph, mean readout to a 32-wide plane embedding, and lossless fusion of
//! all plane embeddings with the original features.
//!
//! Attention over neighbourhood `N_i` (graph edges plus a self-loop) is
//!
//! ```text
//! e_ij = leaky_relu(a_selfᵀ W h_i + a_neighᵀ W h_j)
//! α_ij = w_ij exp(e_ij) / Σ_{j'∈N_i} w_ij' exp(e_ij')
//! h'_i = σ(Σ_j α_ij W h_j)
//! ```
//!
//! with the self-loop weight fixed to 1. Many graphs are encoded at once by
//! stacking their nodes into one block-diagonal batch.

use std::rc::Rc;

use rand::Rng;

use crate::compression::FeatureVector;
use crate::error::{Error, Result, TensorError};
use crate::magcs::ActivationGraph;
use crate::nn::Dense;
use crate::tensor::{Activation, EdgeIndex, Matrix, ParamId, ParamSet, Tape, Var};

/// Width of every plane embedding.
pub const EMBED_DIM: usize = 32;
/// Width of the initial node features `[x_i, C_m(i)]`.
pub const NODE_INPUT_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    /// Layer widths including the input, e.g. `[2, 32, 32]`.
    pub widths: Vec<usize>,
    /// Node update nonlinearity σ.
    pub activation: Activation,
    /// Negative slope of the attention logit nonlinearity.
    pub attention_slope: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            widths: vec![NODE_INPUT_DIM, EMBED_DIM, EMBED_DIM],
            activation: Activation::Elu(1.0),
            attention_slope: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatLayer {
    /// `out x in`.
    pub weight: ParamId,
    /// `1 x out`, scores the receiving node.
    pub att_self: ParamId,
    /// `1 x out`, scores the neighbour.
    pub att_neigh: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Shared-weight graph encoder plus the linear decoder used by the representation loss.
#[derive(Debug, Clone)]
pub struct PlanarEncoder {
    pub layers: Vec<GatLayer>,
    pub decoder: Dense,
    pub activation: Activation,
    pub attention_slope: f64,
}

/// Many graphs of `node_count` nodes each, laid out block-diagonally.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub edges: Rc<EdgeIndex>,
    pub node_count: usize,
    pub graph_count: usize,
}

impl GraphBatch {
    pub fn total_nodes(&self) -> usize {
        self.node_count * self.graph_count
    }

    /// Stacks graphs in iteration order; every node gets a unit-weight self-loop.
    pub fn new<'a>(graphs: impl IntoIterator<Item = &'a ActivationGraph>) -> Result<Self> {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut weight = Vec::new();
        let mut node_count = None;
        let mut graph_count = 0;
        for (g_idx, g) in graphs.into_iter().enumerate() {
            let c = *node_count.get_or_insert(g.node_count);
            if g.node_count != c {
                return Err(TensorError::Shape {
                    op: "GraphBatch::new",
                    lhs: (c, NODE_INPUT_DIM),
                    rhs: (g.node_count, NODE_INPUT_DIM),
                }
                .into());
            }
            let off = g_idx * c;
            // Self-loops first, then graph edges.
            for i in 0..c {
                src.push(off + i);
                dst.push(off + i);
                weight.push(1.0);
            }
            for e in &g.edges {
                dst.push(off + e.i);
                src.push(off + e.j);
                weight.push(e.w);
            }
            graph_count += 1;
        }
        let node_count = node_count.unwrap_or(0);
        let n = node_count * graph_count;
        Ok(Self {
            edges: Rc::new(EdgeIndex {
                src,
                dst,
                weight,
                n_src: n,
                n_dst: n,
            }),
            node_count,
            graph_count,
        })
    }
}

/// Encoder outputs on one batch.
pub struct EncodedBatch {
    /// Final node states, `(G·C) x 32`.
    pub nodes: Var,
    /// Readout per graph, `G x 32`.
    pub embeddings: Var,
}

impl PlanarEncoder {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, cfg: &EncoderConfig, rng: &mut R) -> Self {
        let layers = cfg
            .widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (i, o) = (w[0], w[1]);
                GatLayer {
                    weight: params.insert(format!("{name}.gat{l}.weight"), Matrix::glorot(o, i, rng)),
                    att_self: params.insert(format!("{name}.gat{l}.att_self"), Matrix::glorot(1, o, rng)),
                    att_neigh: params.insert(format!("{name}.gat{l}.att_neigh"), Matrix::glorot(1, o, rng)),
                    in_dim: i,
                    out_dim: o,
                }
            })
            .collect::<Vec<_>>();
        let out = cfg.widths.last().copied().unwrap_or(EMBED_DIM);
        let input = cfg.widths.first().copied().unwrap_or(NODE_INPUT_DIM);
        let decoder = Dense::new(
            params,
            &format!("{name}.decoder"),
            out,
            input,
            Activation::Identity,
            true,
            rng,
        );
        Self {
            layers,
            decoder,
            activation: cfg.activation,
            attention_slope: cfg.attention_slope,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    /// Projected node states `W h` and attention weights `α` (one per edge) for one layer.
    pub fn attention(
        &self,
        t: &mut Tape,
        params: &ParamSet,
        layer: usize,
        h: Var,
        edges: &Rc<EdgeIndex>,
    ) -> Result<(Var, Var), TensorError> {
        let l = &self.layers[layer];
        let (rows, cols) = t.shape(h);
        if cols != l.in_dim || rows != edges.n_src {
            return Err(TensorError::Shape {
                op: "gat_layer",
                lhs: (rows, cols),
                rhs: (edges.n_src, l.in_dim),
            });
        }
        let w = t.param(params, l.weight);
        let wh = t.matmul_t(h, w)?;
        let a_self = t.param(params, l.att_self);
        let a_neigh = t.param(params, l.att_neigh);
        let s_self = t.matmul_t(wh, a_self)?;
        let s_neigh = t.matmul_t(wh, a_neigh)?;
        let e_self = t.gather_rows(s_self, Rc::new(edges.dst.clone()))?;
        let e_neigh = t.gather_rows(s_neigh, Rc::new(edges.src.clone()))?;
        let e = t.add(e_self, e_neigh)?;
        let e = t.activate(e, Activation::LeakyRelu(self.attention_slope));
        let alpha = t.edge_softmax(e, edges.clone())?;
        Ok((wh, alpha))
    }

    /// One attention layer: `h'_i = σ(Σ_j α_ij W h_j)`.
    pub fn gat_layer(
        &self,
        t: &mut Tape,
        params: &ParamSet,
        layer: usize,
        h: Var,
        edges: &Rc<EdgeIndex>,
    ) -> Result<Var, TensorError> {
        let (wh, alpha) = self.attention(t, params, layer, h, edges)?;
        let agg = t.edge_aggregate(alpha, wh, edges.clone())?;
        Ok(t.activate(agg, self.activation))
    }

    /// All layers followed by the mean readout of every graph in the batch.
    pub fn forward(
        &self,
        t: &mut Tape,
        params: &ParamSet,
        h0: Var,
        batch: &GraphBatch,
    ) -> Result<EncodedBatch, TensorError> {
        let mut h = h0;
        for l in 0..self.layers.len() {
            h = self.gat_layer(t, params, l, h, &batch.edges)?;
        }
        let embeddings = readout(t, h, batch.node_count)?;
        Ok(EncodedBatch { nodes: h, embeddings })
    }

    /// Dense `C x C` attention matrix of one layer on a single graph.
    pub fn attention_coefficients(
        &self,
        params: &ParamSet,
        layer: usize,
        h: &Matrix,
        graph: &ActivationGraph,
    ) -> Result<Matrix> {
        let batch = GraphBatch::new([graph])?;
        let mut t = Tape::new();
        let hv = t.constant(h.clone());
        let (_, alpha) = self.attention(&mut t, params, layer, hv, &batch.edges)?;
        let mut out = Matrix::zeros(graph.node_count, graph.node_count);
        for (e, a) in t.value(alpha).data().iter().enumerate() {
            out.set(batch.edges.dst[e], batch.edges.src[e], *a);
        }
        Ok(out)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight, l.att_self, l.att_neigh])
            .chain(std::iter::once(self.decoder.weight))
            .chain(self.decoder.bias)
            .collect()
    }
}

/// Mean of each graph's `node_count` consecutive node rows.
pub fn readout(t: &mut Tape, h: Var, node_count: usize) -> Result<Var, TensorError> {
    t.block_mean_rows(h, node_count)
}

/// `MSE(H⁰, Decoder(H^L))` averaged over every node of every plane and patient.
///
/// All planes share the same node count, so the global mean equals the mean
/// of per-plane MSEs.
pub fn rep_loss(t: &mut Tape, params: &ParamSet, decoder: &Dense, h0: Var, hl: Var) -> Result<Var, TensorError> {
    let rec = decoder.forward(t, params, hl)?;
    t.mse(h0, rec)
}

/// Graph-level representation of one semantic plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneEmbedding {
    pub dimension: usize,
    pub values: Vec<f64>,
}

/// `[g_1 | … | g_M | x_p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientFusionVector {
    pub patient_id: String,
    pub values: Vec<f64>,
    pub planes: usize,
    pub embed_dim: usize,
}

impl PatientFusionVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn plane(&self, m: usize) -> &[f64] {
        &self.values[m * self.embed_dim..(m + 1) * self.embed_dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.values[self.planes * self.embed_dim..]
    }
}

pub fn fuse_patient(embeddings: &[PlaneEmbedding], x: &FeatureVector, planes: usize) -> Result<PatientFusionVector> {
    if embeddings.len() != planes {
        return Err(Error::IncompleteSample {
            expected: planes,
            got: embeddings.len(),
        });
    }
    let embed_dim = embeddings.first().map_or(EMBED_DIM, |g| g.values.len());
    let mut values = Vec::with_capacity(planes * embed_dim + x.len());
    for (m, g) in embeddings.iter().enumerate() {
        if g.values.len() != embed_dim || g.dimension != m {
            return Err(TensorError::Shape {
                op: "fuse_patient",
                lhs: (m, embed_dim),
                rhs: (g.dimension, g.values.len()),
            }
            .into());
        }
        values.extend_from_slice(&g.values);
    }
    values.extend_from_slice(&x.values);
    Ok(PatientFusionVector {
        patient_id: x.patient_id.clone(),
        values,
        planes,
        embed_dim,
    })
}
