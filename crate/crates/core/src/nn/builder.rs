//! Post-training quantization of float layer stacks into validated graphs.
//!
//! Weights are quantized symmetrically per tensor. Activation ranges are
//! calibrated by running the float layers over sample inputs.

use super::model::{Activation, LayerDesc, LayerKind, ModelGraph, Padding};
use super::reference::layer_forward_f64;
use super::NnError;
use crate::quant::{QuantMultiplier, QuantParams};
use crate::tensor::{QuantTensor, Shape};

/// Largest multiplier the builder will emit before widening the output range.
const MAX_MULTIPLIER: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct FloatLayer {
    pub kind: LayerKind,
    pub stride: (u8, u8),
    pub padding: Padding,
    pub activation: Activation,
    /// Weight dims and values (layouts as in [`LayerDesc`]).
    pub weights: Option<(Vec<usize>, Vec<f64>)>,
    pub bias: Vec<f64>,
    /// Fixed output quantization instead of calibrating one.
    pub output: Option<QuantParams>,
}

impl FloatLayer {
    fn new(kind: LayerKind) -> Self {
        Self {
            kind,
            stride: (1, 1),
            padding: Padding::Same,
            activation: Activation::None,
            weights: None,
            bias: Vec::new(),
            output: None,
        }
    }

    /// Weights `[out_c, kh, kw, in_c]`.
    pub fn conv(dims: [usize; 4], weights: Vec<f64>, bias: Vec<f64>) -> Self {
        Self {
            weights: Some((dims.to_vec(), weights)),
            bias,
            ..Self::new(LayerKind::Conv2D)
        }
    }

    /// Weights `[1, kh, kw, c]`.
    pub fn depthwise(dims: [usize; 4], weights: Vec<f64>, bias: Vec<f64>) -> Self {
        Self {
            weights: Some((dims.to_vec(), weights)),
            bias,
            ..Self::new(LayerKind::DepthwiseConv2D)
        }
    }

    /// Weights `[out, in]`.
    pub fn fully_connected(dims: [usize; 2], weights: Vec<f64>, bias: Vec<f64>) -> Self {
        Self {
            weights: Some((dims.to_vec(), weights)),
            bias,
            ..Self::new(LayerKind::FullyConnected)
        }
    }

    pub fn global_avg_pool() -> Self {
        Self {
            padding: Padding::Valid,
            ..Self::new(LayerKind::AvgPool2D)
        }
    }

    pub fn avg_pool(kh: usize, kw: usize, stride: (u8, u8), padding: Padding) -> Self {
        Self {
            weights: Some((vec![kh, kw], vec![1.0; kh * kw])),
            stride,
            padding,
            ..Self::new(LayerKind::AvgPool2D)
        }
    }

    pub fn reshape() -> Self {
        Self {
            padding: Padding::Valid,
            ..Self::new(LayerKind::Reshape)
        }
    }

    pub fn softmax() -> Self {
        Self {
            padding: Padding::Valid,
            ..Self::new(LayerKind::Softmax)
        }
    }

    pub fn stride(mut self, h: u8, w: u8) -> Self {
        self.stride = (h, w);
        self
    }

    pub fn padding(mut self, p: Padding) -> Self {
        self.padding = p;
        self
    }

    pub fn activation(mut self, a: Activation) -> Self {
        self.activation = a;
        self
    }

    pub fn output(mut self, p: QuantParams) -> Self {
        self.output = Some(p);
        self
    }
}

fn symmetric_params(values: &[f64]) -> QuantParams {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max > 0.0 { max / 127.0 } else { 1.0 };
    QuantParams::new(scale as f32, 0).expect("positive scale")
}

/// Asymmetric parameters covering `[min, max]` (always including zero).
pub fn range_params(min: f64, max: f64) -> QuantParams {
    let (min, max) = (min.min(0.0), max.max(0.0));
    let scale = if max > min { (max - min) / 255.0 } else { 1e-3 };
    params_with_scale(scale as f32, min)
}

fn params_with_scale(scale: f32, min: f64) -> QuantParams {
    let zp = (-128.0 - min.min(0.0) / scale as f64)
        .round()
        .clamp(-128.0, 127.0) as i8;
    QuantParams::new(scale, zp).expect("positive scale")
}

/// Quantizes `layers` into a graph, calibrating activation ranges on
/// `calibration` (each sample flattened to the input shape).
pub fn quantize_graph(
    name: &str,
    input_shape: Shape,
    input_params: QuantParams,
    layers: &[FloatLayer],
    calibration: &[Vec<f64>],
) -> Result<ModelGraph, NnError> {
    let mut samples: Vec<Vec<f64>> = calibration.to_vec();
    let mut shape = input_shape.clone();
    let mut in_params = input_params;
    let mut out_layers = Vec::with_capacity(layers.len());

    for (index, fl) in layers.iter().enumerate() {
        let invalid = |reason: String| NnError::InvalidLayer { index, reason };
        let weights = match &fl.weights {
            Some((dims, values)) => {
                let params = if fl.kind == LayerKind::AvgPool2D {
                    QuantParams::new(1.0, 0).expect("unit scale")
                } else {
                    symmetric_params(values)
                };
                let data = values.iter().map(|&v| params.quantize(v)).collect();
                Some(
                    QuantTensor::new(Shape(dims.clone()), data, params)
                        .ok_or_else(|| invalid("weight count does not match dims".into()))?,
                )
            }
            None => None,
        };
        let bias_scale =
            in_params.scale_f64() * weights.as_ref().map_or(1.0, |w| w.params.scale_f64());
        let bias: Vec<i32> = fl
            .bias
            .iter()
            .map(|&b| {
                (b / bias_scale)
                    .round()
                    .clamp(i32::MIN as f64, i32::MAX as f64) as i32
            })
            .collect();
        let mut layer = LayerDesc {
            kind: fl.kind,
            stride: fl.stride,
            padding: fl.padding,
            activation: fl.activation,
            output: in_params,
            multiplier: QuantMultiplier {
                mantissa: 0,
                shift: 0,
            },
            weights,
            bias,
        };
        let out_shape = layer.output_shape(&shape).map_err(invalid)?;
        let outputs: Vec<Vec<f64>> = samples
            .iter()
            .map(|x| layer_forward_f64(&layer, &shape, in_params.scale_f64(), &out_shape, x))
            .collect();

        layer.output = match fl.kind {
            LayerKind::Softmax => QuantParams::SOFTMAX,
            LayerKind::AvgPool2D | LayerKind::Reshape => in_params,
            _ => {
                let (min, max) = outputs
                    .iter()
                    .flatten()
                    .fold((0.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                let mut p = fl.output.unwrap_or_else(|| range_params(min, max));
                let w_scale = layer
                    .weights
                    .as_ref()
                    .expect("weighted layer")
                    .params
                    .scale_f64();
                let needed = in_params.scale_f64() * w_scale / MAX_MULTIPLIER;
                if (p.scale as f64) < needed {
                    p = params_with_scale(needed as f32 * 1.0001, min);
                }
                let m = in_params.scale_f64() * w_scale / p.scale_f64();
                layer.multiplier = QuantMultiplier::from_real(m)
                    .ok_or_else(|| invalid(format!("multiplier {m:e} not representable")))?;
                p
            }
        };
        in_params = layer.output;
        shape = out_shape;
        samples = outputs;
        out_layers.push(layer);
    }
    ModelGraph::new(name, input_shape, input_params, out_layers)
}
