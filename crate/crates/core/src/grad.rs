//! Reverse-mode gradients of the total loss with respect to the encoder
//! weights, written out by hand for the fixed pipeline
//! `linear → activation → row-normalize → (blocks, centers) → losses`.
//!
//! Pseudo-labels, the high-confidence set and block membership are constants
//! within a step. Gradients do flow through the block means (centers) unless
//! `detach_centers` is set.

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterState, ContrastBatch};
use crate::error::{dim_mismatch, invalid_arg, Result};
use crate::losses::{
    negative_loss, node_pair_negative_loss, positive_loss_with, total_loss, LossBreakdown,
    NegativeMode, PairMode,
};
use crate::model::{forward_views, Activation, Encoder, EncoderParams, ForwardTrace, ViewPair};
use crate::tensor::{dot, matmul_nt, matmul_tn, norm, DenseMatrix};

/// Everything about the loss that is not parameters or data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub alpha: f64,
    pub pair_mode: PairMode,
    pub negatives: NegativeMode,
    /// Treat the high-confidence centers as constants.
    pub detach_centers: bool,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            pair_mode: PairMode::Eq9,
            negatives: NegativeMode::Centers,
            detach_centers: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrads {
    pub weight: DenseMatrix,
    pub bias: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderGrads {
    pub layers: Vec<LinearGrads>,
}

impl EncoderGrads {
    fn add_assign(&mut self, other: &EncoderGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight
                .as_mut_slice()
                .iter_mut()
                .zip(b.weight.as_slice())
                .for_each(|(x, y)| *x += y);
            if let (Some(ab), Some(bb)) = (a.bias.as_mut(), b.bias.as_ref()) {
                ab.iter_mut().zip(bb).for_each(|(x, y)| *x += y);
            }
        }
    }

    fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::once(l.weight.as_slice()).chain(l.bias.as_deref()))
    }
}

/// Gradients shaped like [`EncoderParams`]; `view2` is `None` for tied
/// encoders, whose two branches are accumulated into `view1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub view1: EncoderGrads,
    pub view2: Option<EncoderGrads>,
}

impl Gradients {
    /// Same order as [`EncoderParams::tensors_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.view1.tensors().collect();
        if let Some(v2) = &self.view2 {
            out.extend(v2.tensors());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise difference to another gradient of the same shape.
    pub fn max_abs_diff(&self, other: &Gradients) -> f64 {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Loss of one forward pass against a frozen cluster state. Shared by
/// [`backward`] and the finite-difference checker.
pub fn evaluate(
    views: &ViewPair,
    st: &ClusterState,
    obj: &Objective,
) -> Result<(LossBreakdown, ContrastBatch)> {
    let batch = ContrastBatch::from_embeddings(&views.e1, &views.e2, st)?;
    let l_pos = positive_loss_with(&batch, obj.pair_mode)?;
    let l_neg = match obj.negatives {
        NegativeMode::Centers => negative_loss(&batch)?,
        NegativeMode::NodePairs => node_pair_negative_loss(&views.e1, &views.e2)?,
    };
    Ok((total_loss(l_pos, l_neg, obj.alpha)?, batch))
}

pub fn loss_at(
    p: &EncoderParams,
    x1: &DenseMatrix,
    x2: &DenseMatrix,
    st: &ClusterState,
    obj: &Objective,
) -> Result<LossBreakdown> {
    let views = forward_views(p, x1, x2)?;
    Ok(evaluate(&views, st, obj)?.0)
}

/// `(∂cos/∂u, ∂cos/∂v)`, zero when either vector is zero.
fn cosine_grad(u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return (vec![0.0; u.len()], vec![0.0; v.len()]);
    }
    let c = dot(u, v) / (nu * nv);
    let gu = u
        .iter()
        .zip(v)
        .map(|(a, b)| b / (nu * nv) - c * a / (nu * nu))
        .collect();
    let gv = u
        .iter()
        .zip(v)
        .map(|(a, b)| a / (nu * nv) - c * b / (nv * nv))
        .collect();
    (gu, gv)
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    dst.iter_mut().zip(x).for_each(|(d, v)| *d += a * v);
}

/// `∂L/∂E¹` and `∂L/∂E²` for the normalized embeddings.
fn embedding_grads(
    views: &ViewPair,
    batch: &ContrastBatch,
    obj: &Objective,
) -> (DenseMatrix, DenseMatrix) {
    let (e1, e2) = (&views.e1, &views.e2);
    let mut g1 = DenseMatrix::zeros(e1.rows(), e1.cols());
    let mut g2 = DenseMatrix::zeros(e2.rows(), e2.cols());
    let k = batch.k() as f64;

    match obj.pair_mode {
        PairMode::Eq9 => {
            for members in &batch.members {
                for &i in members {
                    let diff: Vec<f64> = e1.row(i).iter().zip(e2.row(i)).map(|(a, b)| a - b).collect();
                    axpy(g1.row_mut(i), 2.0 / k, &diff);
                    axpy(g2.row_mut(i), -2.0 / k, &diff);
                }
            }
        }
        PairMode::FullIntraCluster => {
            // ∂/∂aᵢ = (2/K)(aᵢ − b̄), ∂/∂bⱼ = (2/K)(bⱼ − ā)
            for (p, members) in batch.members.iter().enumerate() {
                for &i in members {
                    let d1: Vec<f64> = e1.row(i).iter().zip(batch.centers2.row(p)).map(|(a, c)| a - c).collect();
                    let d2: Vec<f64> = e2.row(i).iter().zip(batch.centers1.row(p)).map(|(a, c)| a - c).collect();
                    axpy(g1.row_mut(i), 2.0 / k, &d1);
                    axpy(g2.row_mut(i), 2.0 / k, &d2);
                }
            }
        }
    }

    if obj.detach_centers || obj.alpha == 0.0 {
        return (g1, g2);
    }
    match obj.negatives {
        NegativeMode::Centers => {
            let kk = batch.k();
            let scale = obj.alpha / (kk * kk - kk) as f64;
            let d = e1.cols();
            let mut gc1 = DenseMatrix::zeros(kk, d);
            let mut gc2 = DenseMatrix::zeros(kk, d);
            for p in 0..kk {
                for q in 0..kk {
                    if p == q {
                        continue;
                    }
                    let (gu, gv) = cosine_grad(batch.centers1.row(p), batch.centers2.row(q));
                    axpy(gc1.row_mut(p), scale, &gu);
                    axpy(gc2.row_mut(q), scale, &gv);
                }
            }
            for (p, members) in batch.members.iter().enumerate() {
                let inv = 1.0 / members.len() as f64;
                for &i in members {
                    axpy(g1.row_mut(i), inv, gc1.row(p));
                    axpy(g2.row_mut(i), inv, gc2.row(p));
                }
            }
        }
        NegativeMode::NodePairs => {
            // Rows are already unit or zero, so the loss's own re-normalization
            // only adds a tangent projection, which the row-norm backward
            // applies anyway.
            let n = e1.rows() as f64;
            let scale = obj.alpha / (n * n - n);
            let s1: Vec<f64> = e1.column_means().iter().map(|v| v * n).collect();
            let s2: Vec<f64> = e2.column_means().iter().map(|v| v * n).collect();
            for i in 0..e1.rows() {
                let r1: Vec<f64> = s2.iter().zip(e2.row(i)).map(|(s, v)| s - v).collect();
                let r2: Vec<f64> = s1.iter().zip(e1.row(i)).map(|(s, v)| s - v).collect();
                axpy(g1.row_mut(i), scale, &r1);
                axpy(g2.row_mut(i), scale, &r2);
            }
        }
    }
    (g1, g2)
}

/// Back-propagates `∂L/∂E` through normalization, activations and layers.
fn encoder_backward(
    enc: &Encoder,
    act: Activation,
    x: &DenseMatrix,
    e: &DenseMatrix,
    trace: &ForwardTrace,
    grad_e: &DenseMatrix,
) -> Result<EncoderGrads> {
    // row-normalization Jacobian: (I − êêᵀ)/‖v‖; zero rows get zero gradient
    let mut grad = DenseMatrix::zeros(grad_e.rows(), grad_e.cols());
    for (i, &nv) in trace.row_norms.iter().enumerate() {
        if nv == 0.0 {
            continue;
        }
        let ei = e.row(i);
        let gi = grad_e.row(i);
        let proj = dot(ei, gi);
        for ((o, g), ev) in grad.row_mut(i).iter_mut().zip(gi).zip(ei) {
            *o = (g - ev * proj) / nv;
        }
    }

    let mut layers = Vec::with_capacity(enc.layers.len());
    for l in (0..enc.layers.len()).rev() {
        act.backprop(&trace.pre_activations[l], &trace.activations[l], &mut grad);
        let input = if l == 0 { x } else { &trace.activations[l - 1] };
        let weight = matmul_tn(input, &grad)?;
        let bias = enc.layers[l].bias.as_ref().map(|_| {
            let mut b = vec![0.0; grad.cols()];
            for r in grad.row_iter() {
                b.iter_mut().zip(r).for_each(|(s, v)| *s += v);
            }
            b
        });
        if l > 0 {
            grad = matmul_nt(&grad, &enc.layers[l].weight)?;
        }
        layers.push(LinearGrads { weight, bias });
    }
    layers.reverse();
    Ok(EncoderGrads { layers })
}

/// Loss and exact gradients for one step against a frozen cluster state.
/// `x1`/`x2` are the inputs of the two views (the same smoothed features
/// for the standard model).
pub fn backward(
    p: &EncoderParams,
    x1: &DenseMatrix,
    x2: &DenseMatrix,
    st: &ClusterState,
    obj: &Objective,
) -> Result<(LossBreakdown, Gradients)> {
    let views = forward_views(p, x1, x2)?;
    backward_from_views(p, x1, x2, &views, st, obj)
}

/// [`backward`] reusing an existing forward pass.
pub fn backward_from_views(
    p: &EncoderParams,
    x1: &DenseMatrix,
    x2: &DenseMatrix,
    views: &ViewPair,
    st: &ClusterState,
    obj: &Objective,
) -> Result<(LossBreakdown, Gradients)> {
    if views.e1.rows() != x1.rows() {
        return Err(dim_mismatch(
            "backward",
            format!("views over {} nodes, inputs over {}", views.e1.rows(), x1.rows()),
        ));
    }
    let (loss, batch) = evaluate(views, st, obj)?;
    let (g1, g2) = embedding_grads(views, &batch, obj);
    let mut view1 = encoder_backward(&p.view1, p.activation, x1, &views.e1, &views.trace1, &g1)?;
    let second = encoder_backward(p.second(), p.activation, x2, &views.e2, &views.trace2, &g2)?;
    let view2 = if p.is_shared() {
        view1.add_assign(&second);
        None
    } else {
        Some(second)
    };
    Ok((loss, Gradients { view1, view2 }))
}

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheck {
    pub entries: usize,
    /// `max |a − n| / max(|a|, |n|, floor)` over all entries.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub max_abs_gradient: f64,
}

/// Entries whose analytic and numeric magnitudes are both below this are
/// compared absolutely rather than relatively.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Central finite differences on every parameter entry.
pub fn numeric_gradients(
    p: &EncoderParams,
    x1: &DenseMatrix,
    x2: &DenseMatrix,
    st: &ClusterState,
    obj: &Objective,
    epsilon: f64,
) -> Result<Vec<Vec<f64>>> {
    if !(epsilon > 0.0) {
        return Err(invalid_arg("epsilon", "must be positive"));
    }
    let mut work = p.clone();
    let shapes: Vec<usize> = work.tensors_mut().iter().map(|t| t.len()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (t, &len) in shapes.iter().enumerate() {
        let mut g = Vec::with_capacity(len);
        for j in 0..len {
            let orig = work.tensors_mut()[t][j];
            work.tensors_mut()[t][j] = orig + epsilon;
            let plus = loss_at(&work, x1, x2, st, obj)?.total;
            work.tensors_mut()[t][j] = orig - epsilon;
            let minus = loss_at(&work, x1, x2, st, obj)?.total;
            work.tensors_mut()[t][j] = orig;
            g.push((plus - minus) / (2.0 * epsilon));
        }
        out.push(g);
    }
    Ok(out)
}

/// Compares [`backward`] with central differences on the same frozen
/// cluster state.
pub fn finite_diff_check(
    p: &EncoderParams,
    x1: &DenseMatrix,
    x2: &DenseMatrix,
    st: &ClusterState,
    obj: &Objective,
    epsilon: f64,
) -> Result<GradCheck> {
    if obj.detach_centers {
        return Err(invalid_arg(
            "detach_centers",
            "detached centers are not the derivative of the loss; check with them attached",
        ));
    }
    let (_, analytic) = backward(p, x1, x2, st, obj)?;
    let numeric = numeric_gradients(p, x1, x2, st, obj, epsilon)?;
    let mut check = GradCheck {
        entries: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        max_abs_gradient: analytic.max_abs(),
    };
    for (a, n) in analytic.tensors().iter().zip(&numeric) {
        for (&av, &nv) in a.iter().zip(n) {
            let abs = (av - nv).abs();
            let rel = abs / av.abs().max(nv.abs()).max(REL_ERROR_FLOOR);
            check.entries += 1;
            check.max_abs_error = check.max_abs_error.max(abs);
            check.max_rel_error = check.max_rel_error.max(rel);
        }
    }
    Ok(check)
}
