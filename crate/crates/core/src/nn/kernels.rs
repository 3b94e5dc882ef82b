//! Int8 operator kernels.
//!
//! Each kernel has a slice form used by the arena executor and a
//! `QuantTensor` form for direct use. Accumulation happens in 64 bits and
//! saturates to int32 before requantization.

use super::model::{out_dim, LayerDesc, LayerKind};
use super::NnError;
use crate::quant::{div_round, QuantParams};
use crate::tensor::{QuantTensor, Shape};

fn saturate_i32(acc: i64) -> i32 {
    acc.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

fn check_kind(layer: &LayerDesc, kind: LayerKind) -> Result<(), NnError> {
    if layer.kind != kind {
        return Err(NnError::ShapeMismatch(format!(
            "expected a {kind} layer, got {}",
            layer.kind
        )));
    }
    Ok(())
}

/// Runs any layer on a standalone tensor.
pub fn run_layer(input: &QuantTensor, layer: &LayerDesc) -> Result<QuantTensor, NnError> {
    let out_shape = layer
        .output_shape(&input.shape)
        .map_err(NnError::ShapeMismatch)?;
    let mut out = vec![0i8; out_shape.num_elements()];
    execute(
        &input.data,
        &input.shape,
        input.params,
        layer,
        &out_shape,
        &mut out,
    );
    Ok(QuantTensor {
        shape: out_shape,
        data: out,
        params: layer.output,
    })
}

pub fn conv2d(input: &QuantTensor, layer: &LayerDesc) -> Result<QuantTensor, NnError> {
    check_kind(layer, LayerKind::Conv2D)?;
    run_layer(input, layer)
}

pub fn depthwise_conv2d(input: &QuantTensor, layer: &LayerDesc) -> Result<QuantTensor, NnError> {
    check_kind(layer, LayerKind::DepthwiseConv2D)?;
    run_layer(input, layer)
}

pub fn fully_connected(input: &QuantTensor, layer: &LayerDesc) -> Result<QuantTensor, NnError> {
    check_kind(layer, LayerKind::FullyConnected)?;
    run_layer(input, layer)
}

pub fn avg_pool2d(input: &QuantTensor, layer: &LayerDesc) -> Result<QuantTensor, NnError> {
    check_kind(layer, LayerKind::AvgPool2D)?;
    run_layer(input, layer)
}

pub fn softmax_int8(input: &QuantTensor, layer: &LayerDesc) -> Result<QuantTensor, NnError> {
    check_kind(layer, LayerKind::Softmax)?;
    run_layer(input, layer)
}

pub fn reshape(input: &QuantTensor, layer: &LayerDesc) -> Result<QuantTensor, NnError> {
    check_kind(layer, LayerKind::Reshape)?;
    run_layer(input, layer)
}

/// Slice-level dispatch. Shapes must already be validated.
pub(crate) fn execute(
    input: &[i8],
    in_shape: &Shape,
    in_params: QuantParams,
    layer: &LayerDesc,
    out_shape: &Shape,
    out: &mut [i8],
) {
    match layer.kind {
        LayerKind::Conv2D => conv_into(input, in_shape, in_params, layer, out_shape, out, false),
        LayerKind::DepthwiseConv2D => {
            conv_into(input, in_shape, in_params, layer, out_shape, out, true)
        }
        LayerKind::FullyConnected => fc_into(input, in_shape, in_params, layer, out),
        LayerKind::AvgPool2D => pool_into(input, in_shape, layer, out_shape, out),
        LayerKind::Softmax => softmax_into(input, in_shape, in_params, out),
        LayerKind::Reshape => out.copy_from_slice(input),
    }
}

fn conv_into(
    input: &[i8],
    in_shape: &Shape,
    in_params: QuantParams,
    layer: &LayerDesc,
    out_shape: &Shape,
    out: &mut [i8],
    depthwise: bool,
) {
    let (n, h, w, c) = in_shape.nhwc().expect("validated rank 4");
    let (_, oh, ow, oc) = out_shape.nhwc().expect("validated rank 4");
    let weights = layer.weights.as_ref().expect("validated weights");
    let [_, kh, kw, wc] = weights.shape.dims()[..] else {
        unreachable!("validated rank 4 weights")
    };
    let (sh, sw) = (layer.stride.0 as usize, layer.stride.1 as usize);
    let (_, pad_top) = out_dim(h, kh, sh, layer.padding).expect("validated");
    let (_, pad_left) = out_dim(w, kw, sw, layer.padding).expect("validated");
    let in_zp = in_params.zero_point as i64;
    let w_zp = weights.params.zero_point as i64;
    let (lo, hi) = layer.activation.range(layer.output);
    let wdata = &weights.data;

    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..oc {
                    let mut acc = layer.bias[o] as i64;
                    for ky in 0..kh {
                        let iy = (oy * sh + ky) as isize - pad_top as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * sw + kx) as isize - pad_left as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let base = ((b * h + iy as usize) * w + ix as usize) * c;
                            if depthwise {
                                let x = input[base + o] as i64 - in_zp;
                                let wv = wdata[(ky * kw + kx) * wc + o] as i64 - w_zp;
                                acc += x * wv;
                            } else {
                                let wbase = ((o * kh + ky) * kw + kx) * wc;
                                for ic in 0..c {
                                    let x = input[base + ic] as i64 - in_zp;
                                    let wv = wdata[wbase + ic] as i64 - w_zp;
                                    acc += x * wv;
                                }
                            }
                        }
                    }
                    let q = layer
                        .multiplier
                        .apply(saturate_i32(acc), layer.output.zero_point);
                    out[((b * oh + oy) * ow + ox) * oc + o] = q.clamp(lo, hi);
                }
            }
        }
    }
}

fn fc_into(
    input: &[i8],
    in_shape: &Shape,
    in_params: QuantParams,
    layer: &LayerDesc,
    out: &mut [i8],
) {
    let n = in_shape.dims()[0];
    let weights = layer.weights.as_ref().expect("validated weights");
    let [outs, features] = weights.shape.dims()[..] else {
        unreachable!("validated rank 2 weights")
    };
    let in_zp = in_params.zero_point as i64;
    let w_zp = weights.params.zero_point as i64;
    let (lo, hi) = layer.activation.range(layer.output);
    for b in 0..n {
        let x = &input[b * features..(b + 1) * features];
        for o in 0..outs {
            let row = &weights.data[o * features..(o + 1) * features];
            let acc = layer.bias[o] as i64
                + x.iter()
                    .zip(row)
                    .map(|(&xi, &wi)| (xi as i64 - in_zp) * (wi as i64 - w_zp))
                    .sum::<i64>();
            let q = layer
                .multiplier
                .apply(saturate_i32(acc), layer.output.zero_point);
            out[b * outs + o] = q.clamp(lo, hi);
        }
    }
}

fn pool_into(input: &[i8], in_shape: &Shape, layer: &LayerDesc, out_shape: &Shape, out: &mut [i8]) {
    let (n, h, w, c) = in_shape.nhwc().expect("validated rank 4");
    let (_, oh, ow, _) = out_shape.nhwc().expect("validated rank 4");
    let (kh, kw, sh, sw, pad_top, pad_left) = match &layer.weights {
        None => (h, w, h, w, 0, 0),
        Some(mask) => {
            let (kh, kw) = (mask.shape.dims()[0], mask.shape.dims()[1]);
            let (sh, sw) = (layer.stride.0 as usize, layer.stride.1 as usize);
            let (_, pt) = out_dim(h, kh, sh, layer.padding).expect("validated");
            let (_, pl) = out_dim(w, kw, sw, layer.padding).expect("validated");
            (kh, kw, sh, sw, pt, pl)
        }
    };
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut sum = 0i64;
                    let mut count = 0i64;
                    for ky in 0..kh {
                        let iy = (oy * sh + ky) as isize - pad_top as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * sw + kx) as isize - pad_left as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            sum += input[((b * h + iy as usize) * w + ix as usize) * c + ch] as i64;
                            count += 1;
                        }
                    }
                    out[((b * oh + oy) * ow + ox) * c + ch] =
                        div_round(sum, count.max(1)).clamp(-128, 127) as i8;
                }
            }
        }
    }
}

/// Fraction bits of the exponential lookup table.
const EXP_BITS: u32 = 20;

/// Lookup-table softmax over the last axis. Scores are emitted on the
/// 1/256 grid with zero point -128 and clamped to -127..=127.
fn softmax_into(input: &[i8], in_shape: &Shape, in_params: QuantParams, out: &mut [i8]) {
    let scale = in_params.scale_f64();
    let table: Vec<u64> = (0..256)
        .map(|d| ((-(d as f64) * scale).exp() * (1u64 << EXP_BITS) as f64).round() as u64)
        .collect();
    let depth = in_shape.last().max(1);
    for (row_in, row_out) in input.chunks(depth).zip(out.chunks_mut(depth)) {
        let max = row_in.iter().copied().max().unwrap_or(0) as i32;
        let exps: Vec<u64> = row_in
            .iter()
            .map(|&q| table[(max - q as i32) as usize])
            .collect();
        let sum: u64 = exps.iter().sum();
        for (o, &e) in row_out.iter_mut().zip(&exps) {
            let p = div_round((e * 256) as i64, sum as i64);
            *o = (p - 128).clamp(-127, 127) as i8;
        }
    }
}
