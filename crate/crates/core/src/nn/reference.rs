//! Float64 interpreter over dequantized weights, used as an oracle for the
//! int8 path. Activations stay in floating point between layers.

use super::model::{out_dim, LayerDesc, LayerKind, ModelGraph, Padding};
use super::NnError;
use crate::tensor::Shape;

/// Real-valued output scores of `graph` for a real-valued input.
pub fn reference_invoke_float(graph: &ModelGraph, input: &[f64]) -> Result<Vec<f64>, NnError> {
    Ok(reference_trace_float(graph, input)?
        .pop()
        .expect("trace holds the input"))
}

/// Every intermediate tensor: the input followed by each layer's output.
pub fn reference_trace_float(graph: &ModelGraph, input: &[f64]) -> Result<Vec<Vec<f64>>, NnError> {
    if input.len() != graph.input_shape().num_elements() {
        return Err(NnError::ShapeMismatch(format!(
            "input has {} values, graph expects {}",
            input.len(),
            graph.input_shape()
        )));
    }
    let mut trace = vec![input.to_vec()];
    for (i, layer) in graph.layers().iter().enumerate() {
        let y = layer_forward_f64(
            layer,
            graph.tensor_shape(i),
            graph.layer_input_params(i).scale_f64(),
            graph.tensor_shape(i + 1),
            &trace[i],
        );
        trace.push(y);
    }
    Ok(trace)
}

/// One layer in float. `in_scale` is the scale of the layer's quantized
/// input, needed to interpret the int32 bias.
pub fn layer_forward_f64(
    layer: &LayerDesc,
    in_shape: &Shape,
    in_scale: f64,
    out_shape: &Shape,
    x: &[f64],
) -> Vec<f64> {
    match layer.kind {
        LayerKind::Conv2D | LayerKind::DepthwiseConv2D => {
            let w = layer.weights.as_ref().expect("validated");
            let wr = w.dequantize();
            let bias: Vec<f64> = layer
                .bias
                .iter()
                .map(|&b| b as f64 * in_scale * w.params.scale_f64())
                .collect();
            conv_f64(
                x,
                in_shape,
                &wr,
                w.shape.dims(),
                &bias,
                layer.stride,
                layer.padding,
                out_shape,
                layer.kind == LayerKind::DepthwiseConv2D,
            )
            .into_iter()
            .map(|v| layer.activation.apply_f64(v))
            .collect()
        }
        LayerKind::FullyConnected => {
            let w = layer.weights.as_ref().expect("validated");
            let wr = w.dequantize();
            let (outs, features) = (w.shape.dims()[0], w.shape.dims()[1]);
            let n = in_shape.dims()[0];
            let mut y = Vec::with_capacity(n * outs);
            for b in 0..n {
                let xb = &x[b * features..(b + 1) * features];
                for o in 0..outs {
                    let dot: f64 = xb
                        .iter()
                        .zip(&wr[o * features..(o + 1) * features])
                        .map(|(a, b)| a * b)
                        .sum();
                    let bias = layer.bias[o] as f64 * in_scale * w.params.scale_f64();
                    y.push(layer.activation.apply_f64(dot + bias));
                }
            }
            y
        }
        LayerKind::AvgPool2D => pool_f64(x, in_shape, layer, out_shape),
        LayerKind::Softmax => {
            let depth = in_shape.last().max(1);
            x.chunks(depth).flat_map(softmax_f64).collect()
        }
        LayerKind::Reshape => x.to_vec(),
    }
}

pub fn softmax_f64(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[allow(clippy::too_many_arguments)]
fn conv_f64(
    x: &[f64],
    in_shape: &Shape,
    w: &[f64],
    wdims: &[usize],
    bias: &[f64],
    stride: (u8, u8),
    padding: Padding,
    out_shape: &Shape,
    depthwise: bool,
) -> Vec<f64> {
    let (n, h, wd, c) = in_shape.nhwc().expect("validated");
    let (_, oh, ow, oc) = out_shape.nhwc().expect("validated");
    let (kh, kw, wc) = (wdims[1], wdims[2], wdims[3]);
    let (sh, sw) = (stride.0 as usize, stride.1 as usize);
    let pt = out_dim(h, kh, sh, padding).expect("validated").1 as isize;
    let pl = out_dim(wd, kw, sw, padding).expect("validated").1 as isize;
    let mut y = vec![0.0; n * oh * ow * oc];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..oc {
                    let mut acc = bias[o];
                    for ky in 0..kh {
                        let iy = (oy * sh + ky) as isize - pt;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * sw + kx) as isize - pl;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            let base = ((b * h + iy as usize) * wd + ix as usize) * c;
                            if depthwise {
                                acc += x[base + o] * w[(ky * kw + kx) * wc + o];
                            } else {
                                let wb = ((o * kh + ky) * kw + kx) * wc;
                                for ic in 0..c {
                                    acc += x[base + ic] * w[wb + ic];
                                }
                            }
                        }
                    }
                    y[((b * oh + oy) * ow + ox) * oc + o] = acc;
                }
            }
        }
    }
    y
}

fn pool_f64(x: &[f64], in_shape: &Shape, layer: &LayerDesc, out_shape: &Shape) -> Vec<f64> {
    let (n, h, w, c) = in_shape.nhwc().expect("validated");
    let (_, oh, ow, _) = out_shape.nhwc().expect("validated");
    let (kh, kw, sh, sw, pt, pl) = match &layer.weights {
        None => (h, w, h, w, 0, 0),
        Some(m) => {
            let (kh, kw) = (m.shape.dims()[0], m.shape.dims()[1]);
            let (sh, sw) = (layer.stride.0 as usize, layer.stride.1 as usize);
            (
                kh,
                kw,
                sh,
                sw,
                out_dim(h, kh, sh, layer.padding).expect("validated").1,
                out_dim(w, kw, sw, layer.padding).expect("validated").1,
            )
        }
    };
    let mut y = vec![0.0; n * oh * ow * c];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let (mut sum, mut count) = (0.0, 0usize);
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * sh + ky) as isize - pt as isize;
                            let ix = (ox * sw + kx) as isize - pl as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                sum += x[((b * h + iy as usize) * w + ix as usize) * c + ch];
                                count += 1;
                            }
                        }
                    }
                    y[((b * oh + oy) * ow + ox) * c + ch] = sum / count.max(1) as f64;
                }
            }
        }
    }
    y
}
