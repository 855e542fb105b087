//! Per-modality autoencoders that compress raw modality vectors and the
//! concatenation of their latents into one patient feature vector.

use rand::Rng;

use crate::error::{Error, Result, TensorError};
use crate::nn::Dense;
use crate::tensor::{Activation, Matrix, ParamId, ParamSet, Tape, Var};

/// One input modality: raw width and compressed width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModalitySpec {
    pub name: String,
    pub raw_dim: usize,
    pub latent_dim: usize,
}

impl ModalitySpec {
    pub fn new(name: impl Into<String>, raw_dim: usize, latent_dim: usize) -> Result<Self> {
        let name = name.into();
        if latent_dim == 0 || latent_dim > raw_dim {
            return Err(Error::Config(format!(
                "modality `{name}`: latent dim {latent_dim} must be in 1..={raw_dim}"
            )));
        }
        Ok(Self {
            name,
            raw_dim,
            latent_dim,
        })
    }

    /// Hidden width of both encoder and decoder.
    pub fn hidden_dim(&self) -> usize {
        self.latent_dim.max(self.raw_dim / 2)
    }
}

/// Concatenated latent features of one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub patient_id: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Total feature width `C`.
pub fn feature_width(specs: &[ModalitySpec]) -> usize {
    specs.iter().map(|s| s.latent_dim).sum()
}

/// Concatenates latents in declaration order.
pub fn assemble_patient_vector(
    specs: &[ModalitySpec],
    latents: &[Vec<f64>],
    patient_id: &str,
) -> Result<FeatureVector> {
    if latents.len() != specs.len() {
        return Err(Error::IncompleteSample {
            expected: specs.len(),
            got: latents.len(),
        });
    }
    let mut values = Vec::with_capacity(feature_width(specs));
    for (spec, l) in specs.iter().zip(latents) {
        if l.len() != spec.latent_dim {
            return Err(TensorError::Shape {
                op: "assemble_patient_vector",
                lhs: (1, l.len()),
                rhs: (1, spec.latent_dim),
            }
            .into());
        }
        values.extend_from_slice(l);
    }
    Ok(FeatureVector {
        patient_id: patient_id.to_string(),
        values,
    })
}

/// Inverse of [`assemble_patient_vector`]: slices by declared latent widths.
pub fn split_patient_vector<'a>(specs: &[ModalitySpec], x: &'a FeatureVector) -> Result<Vec<&'a [f64]>> {
    if x.len() != feature_width(specs) {
        return Err(TensorError::Shape {
            op: "split_patient_vector",
            lhs: (1, x.len()),
            rhs: (1, feature_width(specs)),
        }
        .into());
    }
    let mut out = Vec::with_capacity(specs.len());
    let mut off = 0;
    for s in specs {
        out.push(&x.values[off..off + s.latent_dim]);
        off += s.latent_dim;
    }
    Ok(out)
}

/// raw → hidden → latent → hidden → raw.
#[derive(Debug, Clone)]
pub struct ModalityAutoencoder {
    pub spec: ModalitySpec,
    pub enc_hidden: Dense,
    pub enc_out: Dense,
    pub dec_hidden: Dense,
    pub dec_out: Dense,
}

impl ModalityAutoencoder {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, spec: ModalitySpec, act: Activation, rng: &mut R) -> Self {
        let h = spec.hidden_dim();
        let p = format!("ae.{}", spec.name);
        let enc_hidden = Dense::new(params, &format!("{p}.enc0"), spec.raw_dim, h, act, true, rng);
        let enc_out = Dense::new(
            params,
            &format!("{p}.enc1"),
            h,
            spec.latent_dim,
            Activation::Identity,
            true,
            rng,
        );
        let dec_hidden = Dense::new(params, &format!("{p}.dec0"), spec.latent_dim, h, act, true, rng);
        let dec_out = Dense::new(
            params,
            &format!("{p}.dec1"),
            h,
            spec.raw_dim,
            Activation::Identity,
            true,
            rng,
        );
        Self {
            spec,
            enc_hidden,
            enc_out,
            dec_hidden,
            dec_out,
        }
    }

    fn check(&self, t: &Tape, v: Var, width: usize, op: &'static str) -> Result<(), TensorError> {
        let (r, c) = t.shape(v);
        if c != width {
            return Err(TensorError::Shape {
                op,
                lhs: (r, c),
                rhs: (r, width),
            });
        }
        Ok(())
    }

    /// Rows of `raw` are samples; returns `rows x latent_dim`.
    pub fn encode(&self, t: &mut Tape, params: &ParamSet, raw: Var) -> Result<Var, TensorError> {
        self.check(t, raw, self.spec.raw_dim, "encode_modality")?;
        let h = self.enc_hidden.forward(t, params, raw)?;
        self.enc_out.forward(t, params, h)
    }

    pub fn decode(&self, t: &mut Tape, params: &ParamSet, latent: Var) -> Result<Var, TensorError> {
        self.check(t, latent, self.spec.latent_dim, "decode_modality")?;
        let h = self.dec_hidden.forward(t, params, latent)?;
        self.dec_out.forward(t, params, h)
    }

    pub fn encode_plain(&self, params: &ParamSet, raw: &Matrix) -> Result<Matrix, TensorError> {
        let h = self.enc_hidden.apply(params, raw)?;
        self.enc_out.apply(params, &h)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        [&self.enc_hidden, &self.enc_out, &self.dec_hidden, &self.dec_out]
            .iter()
            .flat_map(|d| std::iter::once(d.weight).chain(d.bias))
            .collect()
    }
}

/// Output of the compression stage on one batch of patients.
pub struct Compressed {
    /// `N x C` concatenated latents.
    pub features: Var,
    /// Mean reconstruction MSE across modalities.
    pub recon_loss: Var,
}

/// All modality autoencoders of a model.
#[derive(Debug, Clone)]
pub struct FeatureCompressor {
    pub modalities: Vec<ModalityAutoencoder>,
}

impl FeatureCompressor {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, specs: &[ModalitySpec], act: Activation, rng: &mut R) -> Self {
        Self {
            modalities: specs
                .iter()
                .map(|s| ModalityAutoencoder::new(params, s.clone(), act, rng))
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.modalities.iter().map(|m| m.spec.latent_dim).sum()
    }

    /// Encodes each modality, concatenates latents and scores reconstructions.
    pub fn forward(&self, t: &mut Tape, params: &ParamSet, raws: &[Var]) -> Result<Compressed> {
        if raws.len() != self.modalities.len() {
            return Err(Error::IncompleteSample {
                expected: self.modalities.len(),
                got: raws.len(),
            });
        }
        let mut latents = Vec::with_capacity(raws.len());
        let mut losses = Vec::with_capacity(raws.len());
        for (ae, &raw) in self.modalities.iter().zip(raws) {
            let z = ae.encode(t, params, raw)?;
            let rec = ae.decode(t, params, z)?;
            losses.push(t.mse(raw, rec)?);
            latents.push(z);
        }
        let features = t.concat_cols(&latents)?;
        let mut recon_loss = losses[0];
        for &l in &losses[1..] {
            recon_loss = t.add(recon_loss, l)?;
        }
        let recon_loss = t.scale(recon_loss, 1.0 / losses.len() as f64);
        Ok(Compressed { features, recon_loss })
    }

    pub fn forward_plain(&self, params: &ParamSet, raws: &[Matrix]) -> Result<Matrix> {
        if raws.len() != self.modalities.len() {
            return Err(Error::IncompleteSample {
                expected: self.modalities.len(),
                got: raws.len(),
            });
        }
        let parts = self
            .modalities
            .iter()
            .zip(raws)
            .map(|(ae, r)| ae.encode_plain(params, r))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&Matrix> = parts.iter().collect();
        Ok(Matrix::hconcat(&refs)?)
    }
}

/// Per-column z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits on the given rows only (the training fold).
    pub fn fit(data: &Matrix, rows: &[usize]) -> Self {
        let d = data.cols();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            for (m, v) in mean.iter_mut().zip(data.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &r in rows {
            for ((s, v), m) in var.iter_mut().zip(data.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, data: &Matrix) -> Matrix {
        let d = data.cols();
        let mut out = data.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i % d;
            *v = (*v - self.mean[c]) / self.std[c];
        }
        out
    }
}
