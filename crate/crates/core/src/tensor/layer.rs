use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{self, Nonlinearity, PoolKind};
use super::Tensor;
use crate::{Error, Result};

/// A layer's computation with every shape it needs resolved.
///
/// Inputs arrive as a temporal window (oldest first) whose entries each hold
/// one tensor per source. Sources are concatenated on the channel axis,
/// after bilinear resizing when the layer declares an input size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Conv {
        in_channels: usize,
        out_channels: usize,
        extent: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        activation: Option<Nonlinearity>,
    },
    Pool {
        kind: PoolKind,
        kernel: (usize, usize),
        stride: (usize, usize),
    },
    Concat,
    Upsample {
        size: (usize, usize),
    },
    /// Fully connected over the flattened window.
    Linear {
        in_features: usize,
        out_features: usize,
        activation: Option<Nonlinearity>,
    },
    Activation(Nonlinearity),
    /// Global average pooling followed by a linear map to class logits.
    Classifier {
        in_channels: usize,
        classes: usize,
    },
}

impl Op {
    /// Weight shape and bias length, for ops that carry parameters.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, usize)> {
        match *self {
            Op::Conv {
                in_channels,
                out_channels,
                extent,
                kernel,
                ..
            } => Some((
                vec![out_channels, in_channels, extent, kernel.0, kernel.1],
                out_channels,
            )),
            Op::Linear {
                in_features,
                out_features,
                ..
            } => Some((vec![out_features, in_features], out_features)),
            Op::Classifier {
                in_channels,
                classes,
            } => Some((vec![classes, in_channels], classes)),
            _ => None,
        }
    }

    fn activation(&self) -> Option<Nonlinearity> {
        match *self {
            Op::Conv { activation, .. } | Op::Linear { activation, .. } => activation,
            Op::Activation(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

pub type LayerGrads = LayerParams;

impl LayerParams {
    pub fn zeros_like(&self) -> Self {
        LayerParams {
            weight: Tensor::zeros(self.weight.shape()),
            bias: Tensor::zeros(self.bias.shape()),
        }
    }
}

/// Parameters for every node of a network, indexed by depth (head last).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<Option<LayerParams>>,
}

impl ModelParams {
    /// Uniform init with variance `1 / fan_in`; biases start at zero.
    pub fn init(ops: &[Op], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = ops
            .iter()
            .map(|op| {
                op.param_shapes().map(|(wshape, blen)| {
                    let fan_in: usize = wshape[1..].iter().product();
                    let a = (3.0 / fan_in as f64).sqrt();
                    LayerParams {
                        weight: Tensor::from_fn(&wshape, |_| rng.gen_range(-a..a)),
                        bias: Tensor::zeros(&[blen]),
                    }
                })
            })
            .collect();
        ModelParams { layers }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| l.as_ref().map(LayerParams::zeros_like))
                .collect(),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|p| [&p.weight, &p.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flatten()
            .flat_map(|p| [&mut p.weight, &mut p.bias])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    fn check_compatible(&self, other: &ModelParams) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self.tensors().count() == other.tensors().count()
            && self
                .tensors()
                .zip(other.tensors())
                .all(|(a, b)| a.shape() == b.shape());
        if same {
            Ok(())
        } else {
            Err(Error::shape("parameter bundles have different layouts"))
        }
    }

    /// `self += k · other`.
    pub fn axpy(&mut self, k: f64, other: &ModelParams) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            a.axpy(k, b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v *= k;
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().map(Tensor::squared_norm).sum()
    }

    pub fn bitwise_eq(&self, other: &ModelParams) -> bool {
        self.tensors().count() == other.tensors().count()
            && self.tensors().zip(other.tensors()).all(|(a, b)| a.bitwise_eq(b))
    }
}

fn assemble(window: &[Vec<&Tensor>], resize_to: Option<(usize, usize)>) -> Result<Vec<Tensor>> {
    if window.is_empty() {
        return Err(Error::shape("layer received an empty input window"));
    }
    window
        .iter()
        .map(|sources| {
            let resized: Vec<Tensor> = sources
                .iter()
                .map(|&t| match resize_to {
                    Some(size) => ops::resize_bilinear(t, size),
                    None => Ok(t.clone()),
                })
                .collect::<Result<_>>()?;
            if resized.len() == 1 {
                Ok(resized.into_iter().next().unwrap())
            } else {
                ops::concat_channels(&resized.iter().collect::<Vec<_>>())
            }
        })
        .collect()
}

fn params_of<'a>(op: &Op, params: Option<&'a LayerParams>) -> Result<&'a LayerParams> {
    let p = params.ok_or_else(|| Error::shape(format!("{op:?} needs parameters")))?;
    if let Some((wshape, blen)) = op.param_shapes() {
        if p.weight.shape() != wshape.as_slice() || p.bias.shape() != [blen] {
            return Err(Error::shape(format!(
                "parameters {:?}/{:?} do not fit {:?}",
                p.weight.shape(),
                p.bias.shape(),
                wshape
            )));
        }
    }
    Ok(p)
}

fn last(assembled: &[Tensor]) -> &Tensor {
    assembled.last().expect("window checked nonempty")
}

/// Forward pass of one layer instance.
pub fn apply_layer(
    op: &Op,
    resize_to: Option<(usize, usize)>,
    window: &[Vec<&Tensor>],
    params: Option<&LayerParams>,
) -> Result<Tensor> {
    let x = assemble(window, resize_to)?;
    let pre = match op {
        Op::Conv { stride, .. } => {
            let p = params_of(op, params)?;
            ops::conv(&x, &p.weight, Some(&p.bias), *stride)?
        }
        Op::Pool {
            kind,
            kernel,
            stride,
        } => ops::pool(&x, *kind, *kernel, *stride)?,
        Op::Concat | Op::Activation(_) => last(&x).clone(),
        Op::Upsample { size } => ops::resize_bilinear(last(&x), *size)?,
        Op::Linear { .. } => {
            let p = params_of(op, params)?;
            ops::linear(&x, &p.weight, Some(&p.bias))?
        }
        Op::Classifier { .. } => {
            let p = params_of(op, params)?;
            let g = ops::global_avg_pool(last(&x))?;
            ops::linear(&[g], &p.weight, Some(&p.bias))?
        }
    };
    Ok(match op.activation() {
        Some(a) => pre.map(|v| a.apply(v)),
        None => pre,
    })
}

pub struct LayerBackward {
    /// Gradients shaped like the window: one tensor per (position, source).
    pub inputs: Vec<Vec<Tensor>>,
    pub params: Option<LayerGrads>,
}

/// Vector-Jacobian product of [`apply_layer`]. `output` must be the value
/// the forward pass produced for the same window.
pub fn layer_backward(
    op: &Op,
    resize_to: Option<(usize, usize)>,
    window: &[Vec<&Tensor>],
    params: Option<&LayerParams>,
    output: &Tensor,
    grad_out: &Tensor,
) -> Result<LayerBackward> {
    let x = assemble(window, resize_to)?;
    let g = match op.activation() {
        Some(a) => {
            let mut g = grad_out.clone();
            for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
                *gv *= a.derivative_from_output(y);
            }
            g
        }
        None => grad_out.clone(),
    };
    let zero_prefix = |n: usize, tail: Tensor| -> Vec<Tensor> {
        let mut v: Vec<Tensor> = x[..n].iter().map(|t| Tensor::zeros(t.shape())).collect();
        v.push(tail);
        v
    };
    let (gx, gp) = match op {
        Op::Conv { stride, .. } => {
            let p = params_of(op, params)?;
            let cg = ops::conv_backward(&x, &p.weight, *stride, &g)?;
            (
                cg.window,
                Some(LayerParams {
                    weight: cg.weight,
                    bias: cg.bias,
                }),
            )
        }
        Op::Pool {
            kind,
            kernel,
            stride,
        } => (ops::pool_backward(&x, *kind, *kernel, *stride, &g)?, None),
        Op::Concat | Op::Activation(_) => (zero_prefix(x.len() - 1, g), None),
        Op::Upsample { .. } => {
            let t = ops::resize_bilinear_backward(last(&x).chw()?, &g)?;
            (zero_prefix(x.len() - 1, t), None)
        }
        Op::Linear { .. } => {
            let p = params_of(op, params)?;
            let (gw_in, gw, gb) = ops::linear_backward(&x, &p.weight, &g)?;
            (
                gw_in,
                Some(LayerParams {
                    weight: gw,
                    bias: gb,
                }),
            )
        }
        Op::Classifier { .. } => {
            let p = params_of(op, params)?;
            let pooled = ops::global_avg_pool(last(&x))?;
            let (gpool, gw, gb) = ops::linear_backward(&[pooled], &p.weight, &g)?;
            let t = ops::global_avg_pool_backward(last(&x).chw()?, &gpool[0]);
            (
                zero_prefix(x.len() - 1, t),
                Some(LayerParams {
                    weight: gw,
                    bias: gb,
                }),
            )
        }
    };
    let inputs = window
        .iter()
        .zip(gx)
        .map(|(sources, gpos)| split_sources(sources, resize_to, &gpos))
        .collect::<Result<_>>()?;
    Ok(LayerBackward {
        inputs,
        params: gp,
    })
}

fn split_sources(
    sources: &[&Tensor],
    resize_to: Option<(usize, usize)>,
    grad: &Tensor,
) -> Result<Vec<Tensor>> {
    let channels: Vec<usize> = sources.iter().map(|t| t.shape()[0]).collect();
    let parts = if sources.len() == 1 {
        vec![grad.clone()]
    } else {
        ops::split_channels(grad, &channels)?
    };
    sources
        .iter()
        .zip(parts)
        .map(|(src, gpart)| match resize_to {
            Some(_) => ops::resize_bilinear_backward(src.chw()?, &gpart),
            None => Ok(gpart),
        })
        .collect()
}
