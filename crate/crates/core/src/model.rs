//! Siamese MLP encoders with un-shared weights, followed by row ℓ2
//! normalization.
//!
//! Both encoders have the same architecture. With `view2 = None` the second
//! view reuses the first encoder's weights, which is how the augmentation
//! ablations tie the two branches together.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, invalid_arg, Result};
use crate::tensor::{matmul, row_l2_normalize_with_norms, DenseMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &DenseMatrix) -> DenseMatrix {
        match self {
            Activation::Linear => z.clone(),
            Activation::Relu => {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
                a
            }
            Activation::Tanh => {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
                a
            }
        }
    }

    /// Multiplies `grad` in place by the derivative at pre-activation `z`
    /// (with `a = act(z)`).
    pub(crate) fn backprop(self, z: &DenseMatrix, a: &DenseMatrix, grad: &mut DenseMatrix) {
        match self {
            Activation::Linear => {}
            Activation::Relu => {
                for (g, zv) in grad.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if *zv <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (g, av) in grad.as_mut_slice().iter_mut().zip(a.as_slice()) {
                    *g *= 1.0 - av * av;
                }
            }
        }
    }
}

/// Encoder architecture shared by both views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    /// Output width of each layer; the last entry is the embedding size.
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub bias: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden_dims: vec![500],
            activation: Activation::Linear,
            bias: false,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(invalid_arg("hidden_dims", "need at least one layer, all widths ≥ 1"));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        *self.hidden_dims.last().unwrap_or(&0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    pub weight: DenseMatrix,
    pub bias: Option<Vec<f64>>,
}

impl LinearLayer {
    fn xavier(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize, bias: bool) -> Self {
        let bound = (6.0 / (d_in + d_out) as f64).sqrt();
        let data = (0..d_in * d_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            weight: DenseMatrix::new(d_in, d_out, data).expect("shape is consistent"),
            bias: bias.then(|| vec![0.0; d_out]),
        }
    }

    fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut z = matmul(x, &self.weight)?;
        if let Some(b) = &self.bias {
            for r in 0..z.rows() {
                for (v, bv) in z.row_mut(r).iter_mut().zip(b) {
                    *v += bv;
                }
            }
        }
        Ok(z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub layers: Vec<LinearLayer>,
}

impl Encoder {
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    fn init(seed: u64, d_in: usize, spec: &ModelSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev = d_in;
        let layers = spec
            .hidden_dims
            .iter()
            .map(|&w| {
                let l = LinearLayer::xavier(&mut rng, prev, w, spec.bias);
                prev = w;
                l
            })
            .collect();
        Self { layers }
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            std::iter::once(l.weight.as_mut_slice()).chain(l.bias.as_deref_mut())
        })
    }
}

/// Parameters of the two encoders.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub view1: Encoder,
    /// `None` ties the second view to `view1`.
    pub view2: Option<Encoder>,
    pub activation: Activation,
}

impl EncoderParams {
    pub fn second(&self) -> &Encoder {
        self.view2.as_ref().unwrap_or(&self.view1)
    }

    pub fn is_shared(&self) -> bool {
        self.view2.is_none()
    }

    /// Drops the second encoder so both views run through `view1`.
    pub fn into_shared(mut self) -> Self {
        self.view2 = None;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.view1.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.view1.output_dim()
    }

    /// Every trainable tensor, in a fixed order matching
    /// [`crate::grad::Gradients::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.view1.tensors_mut().collect();
        if let Some(v2) = self.view2.as_mut() {
            out.extend(v2.tensors_mut());
        }
        out
    }

    pub fn num_parameters(&mut self) -> usize {
        self.tensors_mut().iter().map(|t| t.len()).sum()
    }
}

/// Xavier-uniform initialization. Encoder `k` (0 or 1) draws from sub-seed
/// `2·seed + k`, so the two views start from different weights.
pub fn init_params(seed: u64, d_in: usize, spec: &ModelSpec) -> Result<EncoderParams> {
    spec.validate()?;
    if d_in == 0 {
        return Err(invalid_arg("d_in", "input dimension must be at least 1"));
    }
    let base = seed.wrapping_mul(2);
    Ok(EncoderParams {
        view1: Encoder::init(base, d_in, spec),
        view2: Some(Encoder::init(base.wrapping_add(1), d_in, spec)),
        activation: spec.activation,
    })
}

/// Intermediate values of one encoder pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Pre-activation of each layer.
    pub pre_activations: Vec<DenseMatrix>,
    /// Post-activation of each layer; the last one is the un-normalized embedding.
    pub activations: Vec<DenseMatrix>,
    /// ℓ2 norm of each un-normalized embedding row.
    pub row_norms: Vec<f64>,
}

impl ForwardTrace {
    pub fn unnormalized(&self) -> &DenseMatrix {
        self.activations.last().expect("encoder has at least one layer")
    }
}

/// Row-normalized embeddings of both views.
#[derive(Clone, Debug)]
pub struct ViewPair {
    pub e1: DenseMatrix,
    pub e2: DenseMatrix,
    pub trace1: ForwardTrace,
    pub trace2: ForwardTrace,
}

fn encode(enc: &Encoder, act: Activation, x: &DenseMatrix) -> Result<(DenseMatrix, ForwardTrace)> {
    if x.cols() != enc.input_dim() {
        return Err(dim_mismatch(
            "forward",
            format!("input has {} columns, encoder expects {}", x.cols(), enc.input_dim()),
        ));
    }
    let mut pre_activations = Vec::with_capacity(enc.layers.len());
    let mut activations: Vec<DenseMatrix> = Vec::with_capacity(enc.layers.len());
    for layer in &enc.layers {
        let input = activations.last().unwrap_or(x);
        let z = layer.apply(input)?;
        activations.push(act.apply(&z));
        pre_activations.push(z);
    }
    let (e, row_norms) = row_l2_normalize_with_norms(activations.last().expect("nonempty"));
    Ok((
        e,
        ForwardTrace {
            pre_activations,
            activations,
            row_norms,
        },
    ))
}

/// Encodes `x1` with the first encoder and `x2` with the second.
pub fn forward_views(p: &EncoderParams, x1: &DenseMatrix, x2: &DenseMatrix) -> Result<ViewPair> {
    if x1.rows() != x2.rows() {
        return Err(dim_mismatch(
            "forward",
            format!("view inputs have {} and {} rows", x1.rows(), x2.rows()),
        ));
    }
    let (e1, trace1) = encode(&p.view1, p.activation, x1)?;
    let (e2, trace2) = encode(p.second(), p.activation, x2)?;
    Ok(ViewPair {
        e1,
        e2,
        trace1,
        trace2,
    })
}

/// Both encoders applied to the same smoothed features.
pub fn forward(p: &EncoderParams, x_smooth: &DenseMatrix) -> Result<ViewPair> {
    forward_views(p, x_smooth, x_smooth)
}
