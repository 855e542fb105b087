//! The assembled network and its per-epoch structural state.

use std::rc::Rc;

use rand::Rng;

use crate::compression::{Compressed, FeatureCompressor, ModalitySpec};
use crate::data::Modality;
use crate::error::{Result, TensorError};
use crate::inter::{cohort_adjacency, normalize_adjacency, ClassifierConfig, GcnClassifier};
use crate::intra::{rep_loss, EncoderConfig, GraphBatch, PlanarEncoder, EMBED_DIM};
use crate::magcs::{build_graph_stack, GraphStack};
use crate::mdfd::{influence_scores_batch, sd_loss, select_activated, Discriminator, InfluenceMatrix};
use crate::tensor::{Activation, Matrix, ParamSet, Tape, Var};

use super::config::TrainConfig;

/// Activation graphs and node inputs derived from the current features.
pub struct Structure {
    /// Scores used for node features, one matrix per patient (`planes x C`).
    pub influences: Vec<InfluenceMatrix>,
    pub stacks: Vec<GraphStack>,
    /// One batch with every graph, or one batch per plane.
    pub batches: Vec<GraphBatch>,
    /// Row of `x` (flattened to one column) feeding each node, per batch.
    gather: Vec<Rc<Vec<usize>>>,
    /// Influence score column of each node, per batch.
    node_scores: Vec<Matrix>,
}

#[derive(Clone)]
pub struct Model {
    pub params: ParamSet,
    pub compressor: FeatureCompressor,
    pub discriminator: Discriminator,
    pub encoders: Vec<PlanarEncoder>,
    pub classifier: GcnClassifier,
    pub config: TrainConfig,
    pub feature_dim: usize,
    pub planes: usize,
}

/// Forward values needed for the losses.
pub struct Encoded {
    pub x: Var,
    pub recon: Var,
    pub fusion: Var,
    pub rep: Var,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(
        modalities: &[Modality],
        classes: usize,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let specs = modalities
            .iter()
            .map(|m| ModalitySpec::new(&m.name, m.dim, config.latent_dim.min(m.dim)))
            .collect::<Result<Vec<_>>>()?;
        let compressor = FeatureCompressor::new(&mut params, &specs, Activation::Tanh, rng);
        let c = compressor.width();
        let discriminator = Discriminator::new(&mut params, c, config.semantic_dim, Activation::Tanh, rng);
        let planes = if config.disable_magcs { 1 } else { config.semantic_dim };
        let n_enc = if config.per_plane_encoders { planes } else { 1 };
        let encoders = (0..n_enc)
            .map(|e| PlanarEncoder::new(&mut params, &format!("enc{e}"), &EncoderConfig::default(), rng))
            .collect();
        let clf_cfg = ClassifierConfig {
            gcn_widths: if config.disable_hfdan { vec![] } else { vec![64, 64] },
            classes,
            ..Default::default()
        };
        let classifier = GcnClassifier::new(&mut params, planes * EMBED_DIM + c, &clf_cfg, rng);
        Ok(Self {
            params,
            compressor,
            discriminator,
            encoders,
            classifier,
            config: config.clone(),
            feature_dim: c,
            planes,
        })
    }

    pub fn fusion_dim(&self) -> usize {
        self.planes * EMBED_DIM + self.feature_dim
    }

    pub fn compress(&self, t: &mut Tape, raws: &[Matrix]) -> Result<Compressed> {
        let vars: Vec<Var> = raws.iter().map(|r| t.constant(r.clone())).collect();
        self.compressor.forward(t, &self.params, &vars)
    }

    /// Influence matrices for every row of `x`; all ones when the discriminator is disabled.
    pub fn influences(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let (n, c) = x.shape();
        if self.config.disable_mdfd {
            return Ok(vec![Matrix::filled(self.config.semantic_dim, c, 1.0); n]);
        }
        Ok(influence_scores_batch(
            x,
            &self.discriminator,
            &self.params,
            self.config.perturbation,
        )?)
    }

    /// Builds every patient's graph stack from the current features.
    pub fn structure(&self, x: &Matrix, ids: &[String]) -> Result<Structure> {
        let (n, c) = x.shape();
        let cfg = &self.config;
        let mut influences = Vec::with_capacity(n);
        let mut stacks = Vec::with_capacity(n);
        for (p, scores) in self.influences(x)?.into_iter().enumerate() {
            if !scores.is_finite() {
                return Err(TensorError::NonFinite("influence scoring").into());
            }
            let scores = if cfg.disable_magcs {
                // One plane: mean influence across dimensions, complete graph over its top features.
                let mean = (0..c)
                    .map(|i| (0..scores.rows()).map(|m| scores.get(m, i)).sum::<f64>() / scores.rows() as f64)
                    .collect::<Vec<_>>();
                Matrix::row_vector(&mean)
            } else {
                scores
            };
            let inf = InfluenceMatrix {
                patient_id: ids[p].clone(),
                scores,
            };
            let set = select_activated(&inf, cfg.paf);
            let k = if cfg.disable_magcs {
                set.sets[0].len() - 1
            } else {
                cfg.k
            };
            stacks.push(build_graph_stack(x.row(p), &ids[p], &set, &inf, k)?);
            influences.push(inf);
        }
        let mut batches = Vec::new();
        let mut gather = Vec::new();
        let mut node_scores = Vec::new();
        let mut push_batch = |planes: &[usize]| -> Result<()> {
            let graphs = stacks.iter().flat_map(|s| planes.iter().map(move |&m| &s.graphs[m]));
            batches.push(GraphBatch::new(graphs)?);
            let mut idx = Vec::with_capacity(n * planes.len() * c);
            let mut sc = Vec::with_capacity(idx.capacity());
            for (p, inf) in influences.iter().enumerate() {
                for &m in planes {
                    for i in 0..c {
                        idx.push(p * c + i);
                        sc.push(inf.scores.get(m, i));
                    }
                }
            }
            node_scores.push(Matrix::from_vec(sc.len(), 1, sc)?);
            gather.push(Rc::new(idx));
            Ok(())
        };
        if self.encoders.len() == 1 {
            push_batch(&(0..self.planes).collect::<Vec<_>>())?;
        } else {
            for m in 0..self.planes {
                push_batch(&[m])?;
            }
        }
        Ok(Structure {
            influences,
            stacks,
            batches,
            gather,
            node_scores,
        })
    }

    /// Plane encodings fused with `x` into `N x (32·planes + C)`, plus the representation loss.
    pub fn encode(&self, t: &mut Tape, x: Var, s: &Structure) -> Result<(Var, Var)> {
        let (n, c) = t.shape(x);
        let col = t.reshape(x, n * c, 1)?;
        let mut parts = Vec::with_capacity(s.batches.len() + 1);
        let mut reps = Vec::with_capacity(s.batches.len());
        for (b, batch) in s.batches.iter().enumerate() {
            let enc = &self.encoders[b];
            let xs = t.gather_rows(col, s.gather[b].clone())?;
            let sc = t.constant(s.node_scores[b].clone());
            let h0 = t.concat_cols(&[xs, sc])?;
            let out = enc.forward(t, &self.params, h0, batch)?;
            reps.push(rep_loss(t, &self.params, &enc.decoder, h0, out.nodes)?);
            // Graph rows are patient-major, so each patient's planes end up side by side.
            let per_batch = batch.graph_count / n;
            parts.push(t.reshape(out.embeddings, n, per_batch * EMBED_DIM)?);
        }
        parts.push(x);
        let fusion = t.concat_cols(&parts)?;
        let mut rep = reps[0];
        for &r in &reps[1..] {
            rep = t.add(rep, r)?;
        }
        let rep = t.scale(rep, 1.0 / reps.len() as f64);
        Ok((fusion, rep))
    }

    /// Class logits for the patients in `rows` (all patients when `None`).
    pub fn classify(&self, t: &mut Tape, fusion: Var, rows: Option<&[usize]>) -> Result<Var> {
        let h = match rows {
            Some(r) => t.gather_rows(fusion, Rc::new(r.to_vec()))?,
            None => fusion,
        };
        if !t.value(h).is_finite() {
            return Err(TensorError::NonFinite("fusion").into());
        }
        let a_hat = if self.config.disable_hfdan {
            None
        } else {
            let adj = cohort_adjacency(t.value(h), self.config.k_global)?;
            Some(t.constant(normalize_adjacency(&adj)))
        };
        Ok(self.classifier.forward(t, &self.params, h, a_hat)?)
    }

    /// Discriminator objective on detached features plus the autoencoder reconstruction.
    pub fn sd_loss(&self, t: &mut Tape, x: Var, recon: Var) -> Result<Var> {
        if self.config.disable_mdfd {
            return Ok(recon);
        }
        let target = t.constant(t.value(x).clone());
        let terms = sd_loss(
            t,
            &self.params,
            &self.discriminator,
            x,
            target,
            self.config.sd_weights(),
        )?;
        Ok(t.add(terms.total, recon)?)
    }

    /// Full forward up to the fusion vectors, rebuilding the structure when `structure` is empty.
    pub fn forward(
        &self,
        t: &mut Tape,
        raws: &[Matrix],
        ids: &[String],
        structure: &mut Option<Structure>,
    ) -> Result<Encoded> {
        let comp = self.compress(t, raws)?;
        if !t.value(comp.features).is_finite() {
            return Err(TensorError::NonFinite("feature compression").into());
        }
        if structure.is_none() {
            *structure = Some(self.structure(t.value(comp.features), ids)?);
        }
        let s = structure.as_ref().expect("structure was just built");
        let (fusion, rep) = self.encode(t, comp.features, s)?;
        Ok(Encoded {
            x: comp.features,
            recon: comp.recon_loss,
            fusion,
            rep,
        })
    }
}
