//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use liftml::controller::{
    step, Action, ControllerConfig, ControllerState, Event, Floor, KeywordScores, Light, Mode,
    Scores,
};
use liftml::nn::builder::{quantize_graph, FloatLayer};
use liftml::nn::{reference_trace_float, Activation, LayerDesc, LayerKind, ModelGraph, Padding};
use liftml::{QuantParams, QuantTensor, Shape};

// ---- requantization ------------------------------------------------------

/// `acc * mantissa / 2^(31 + shift)` in exact rational arithmetic, rounded
/// half away from zero, offset and saturated.
pub fn requant_oracle(acc: i32, mantissa: i32, shift: u8, zero_point: i8) -> i8 {
    let num = BigInt::from(acc) * BigInt::from(mantissa);
    let den = BigInt::one() << (31 + shift as usize);
    let rounded = BigRational::new(num, den).round().to_integer() + BigInt::from(zero_point);
    rounded
        .clamp(BigInt::from(-128), BigInt::from(127))
        .to_i8()
        .expect("clamped")
}

// ---- integer kernels -----------------------------------------------------

fn act_bounds(layer: &LayerDesc) -> (i8, i8) {
    let zp = layer.output.zero_point;
    match layer.activation {
        Activation::None => (-128, 127),
        Activation::Relu => (zp, 127),
        Activation::Relu6 => {
            let six = (6.0 / layer.output.scale as f64).round() + zp as f64;
            (zp, six.clamp(-128.0, 127.0) as i8)
        }
    }
}

fn finish(acc: i128, layer: &LayerDesc) -> i8 {
    let acc = acc.clamp(i32::MIN as i128, i32::MAX as i128) as i32;
    let q = requant_oracle(
        acc,
        layer.multiplier.mantissa,
        layer.multiplier.shift,
        layer.output.zero_point,
    );
    let (lo, hi) = act_bounds(layer);
    q.clamp(lo, hi)
}

/// (out, pad_before, pad_after) for one axis.
fn axis(input: usize, k: usize, s: usize, padding: Padding) -> (usize, usize, usize) {
    match padding {
        Padding::Valid => ((input - k) / s + 1, 0, 0),
        Padding::Same => {
            let out = input.div_ceil(s);
            let need = ((out - 1) * s + k) as isize - input as isize;
            let total = need.max(0) as usize;
            (out, total / 2, total - total / 2)
        }
    }
}

/// Input padded with its zero point so that padding contributes nothing.
struct Padded {
    w: usize,
    c: usize,
    data: Vec<i128>,
}

fn pad(x: &QuantTensor, pt: usize, pb: usize, pl: usize, pr: usize) -> Padded {
    let d = x.shape.dims();
    let (h, w, c) = (d[1], d[2], d[3]);
    let (ph, pw) = (h + pt + pb, w + pl + pr);
    let mut data = vec![0i128; ph * pw * c];
    let zp = x.params.zero_point as i128;
    for y in 0..h {
        for xx in 0..w {
            for ch in 0..c {
                data[((y + pt) * pw + xx + pl) * c + ch] =
                    x.data[(y * w + xx) * c + ch] as i128 - zp;
            }
        }
    }
    Padded { w: pw, c, data }
}

fn conv_like(x: &QuantTensor, layer: &LayerDesc, depthwise: bool) -> (Shape, Vec<i8>) {
    assert_eq!(x.shape.dims()[0], 1, "oracle handles batch 1");
    let wt = layer.weights.as_ref().unwrap();
    let wd = wt.shape.dims();
    let (kh, kw) = (wd[1], wd[2]);
    let (sh, sw) = (layer.stride.0 as usize, layer.stride.1 as usize);
    let (oh, pt, pb) = axis(x.shape.dims()[1], kh, sh, layer.padding);
    let (ow, pl, pr) = axis(x.shape.dims()[2], kw, sw, layer.padding);
    let p = pad(x, pt, pb, pl, pr);
    let oc = if depthwise { p.c } else { wd[0] };
    let wzp = wt.params.zero_point as i128;
    let wv = |i: usize| wt.data[i] as i128 - wzp;
    let mut out = Vec::with_capacity(oh * ow * oc);
    for oy in 0..oh {
        for ox in 0..ow {
            for o in 0..oc {
                let mut acc = layer.bias[o] as i128;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let (y, xx) = (oy * sh + ky, ox * sw + kx);
                        if depthwise {
                            acc += p.data[(y * p.w + xx) * p.c + o] * wv((ky * kw + kx) * p.c + o);
                        } else {
                            for i in 0..p.c {
                                acc += p.data[(y * p.w + xx) * p.c + i]
                                    * wv(((o * kh + ky) * kw + kx) * p.c + i);
                            }
                        }
                    }
                }
                out.push(finish(acc, layer));
            }
        }
    }
    (Shape::new([1, oh, ow, oc]), out)
}

pub fn conv_oracle(x: &QuantTensor, layer: &LayerDesc) -> (Shape, Vec<i8>) {
    conv_like(x, layer, false)
}

pub fn depthwise_oracle(x: &QuantTensor, layer: &LayerDesc) -> (Shape, Vec<i8>) {
    conv_like(x, layer, true)
}

pub fn fc_oracle(x: &QuantTensor, layer: &LayerDesc) -> (Shape, Vec<i8>) {
    let wt = layer.weights.as_ref().unwrap();
    let (outs, feats) = (wt.shape.dims()[0], wt.shape.dims()[1]);
    let n = x.shape.dims()[0];
    let xzp = x.params.zero_point as i128;
    let wzp = wt.params.zero_point as i128;
    let mut out = Vec::new();
    for b in 0..n {
        for o in 0..outs {
            let mut acc = layer.bias[o] as i128;
            for f in 0..feats {
                acc +=
                    (x.data[b * feats + f] as i128 - xzp) * (wt.data[o * feats + f] as i128 - wzp);
            }
            out.push(finish(acc, layer));
        }
    }
    (Shape::new([n, outs]), out)
}

// ---- random graphs -------------------------------------------------------

pub struct RandomGraph {
    pub graph: ModelGraph,
    pub input: QuantTensor,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

fn random_padding(rng: &mut ChaCha8Rng, h: usize, w: usize, kh: usize, kw: usize) -> Padding {
    if h >= kh && w >= kw && rng.gen_bool(0.5) {
        Padding::Valid
    } else {
        Padding::Same
    }
}

fn random_activation(rng: &mut ChaCha8Rng) -> Activation {
    match rng.gen_range(0..3) {
        0 => Activation::None,
        1 => Activation::Relu,
        _ => Activation::Relu6,
    }
}

/// At most four layers (body, dense head, softmax), spatial dims and
/// channels at most 16, logits kept within about +-1.
pub fn random_graph(rng: &mut ChaCha8Rng) -> RandomGraph {
    let (h, w, c) = (
        rng.gen_range(1..=16),
        rng.gen_range(1..=16),
        rng.gen_range(1..=4),
    );
    let in_params = QuantParams::new(rng.gen_range(0.005..0.02), rng.gen_range(-20..=20)).unwrap();
    let input_shape = Shape::new([1, h, w, c]);
    let n = h * w * c;

    let mut body = Vec::new();
    let mut shape = (h, w, c);
    for _ in 0..rng.gen_range(0..=2) {
        let (kh, kw) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (sh, sw) = (rng.gen_range(1..=2u8), rng.gen_range(1..=2u8));
        let padding = random_padding(rng, shape.0, shape.1, kh, kw);
        let layer = match rng.gen_range(0..3) {
            0 => {
                let oc = rng.gen_range(1..=4);
                let fan = (kh * kw * shape.2) as f64;
                FloatLayer::conv(
                    [oc, kh, kw, shape.2],
                    uniform(rng, oc * kh * kw * shape.2, (3.0 / fan).sqrt()),
                    uniform(rng, oc, 0.1),
                )
                .activation(random_activation(rng))
            }
            1 => FloatLayer::depthwise(
                [1, kh, kw, shape.2],
                uniform(rng, kh * kw * shape.2, (3.0 / (kh * kw) as f64).sqrt()),
                uniform(rng, shape.2, 0.1),
            )
            .activation(random_activation(rng)),
            _ => FloatLayer::avg_pool(kh, kw, (sh, sw), padding),
        }
        .stride(sh, sw)
        .padding(padding);
        let out_c = match &layer.weights {
            Some((d, _)) if layer.kind == LayerKind::Conv2D => d[0],
            _ => shape.2,
        };
        let oh = match padding {
            Padding::Same => shape.0.div_ceil(sh as usize),
            Padding::Valid => (shape.0 - kh) / sh as usize + 1,
        };
        let ow = match padding {
            Padding::Same => shape.1.div_ceil(sw as usize),
            Padding::Valid => (shape.1 - kw) / sw as usize + 1,
        };
        shape = (oh, ow, out_c);
        body.push(layer);
    }
    let features = shape.0 * shape.1 * shape.2;
    let classes = rng.gen_range(2..=6);
    let head_w = uniform(rng, classes * features, 1.0);
    let head_b = uniform(rng, classes, 0.2);

    let input_data: Vec<i8> = (0..n).map(|_| rng.gen()).collect();
    let input = QuantTensor::new(input_shape.clone(), input_data, in_params).unwrap();
    let calibration = vec![input.dequantize()];

    let build = |w: &[f64], b: &[f64]| {
        let mut layers = body.clone();
        layers.push(FloatLayer::fully_connected(
            [classes, features],
            w.to_vec(),
            b.to_vec(),
        ));
        layers.push(FloatLayer::softmax());
        quantize_graph(
            "random",
            input_shape.clone(),
            in_params,
            &layers,
            &calibration,
        )
        .unwrap()
    };
    let first = build(&head_w, &head_b);
    let trace = reference_trace_float(&first, &calibration[0]).unwrap();
    let logits = &trace[trace.len() - 2];
    let peak = logits.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
    let k = 1.0 / peak;
    let head_w: Vec<f64> = head_w.iter().map(|v| v * k).collect();
    let head_b: Vec<f64> = head_b.iter().map(|v| v * k).collect();
    RandomGraph {
        graph: build(&head_w, &head_b),
        input,
    }
}

// ---- engine trials -------------------------------------------------------

pub struct Trial {
    /// Weighted layers whose engine output differed from the oracle.
    pub kernel_mismatches: usize,
    pub weighted_layers: usize,
    /// Largest |engine - float reference| over the dequantized outputs.
    pub e2e_error: f64,
    pub output_scale: f64,
    /// Arena execution reproduced the layer-by-layer kernels exactly.
    pub arena_matches_kernels: bool,
}

pub fn engine_trial(rg: &RandomGraph) -> Trial {
    use liftml::nn::{reference_invoke_float, run_layer, Arena};
    let g = &rg.graph;
    let mut x = rg.input.clone();
    let (mut mismatches, mut weighted) = (0, 0);
    for layer in g.layers() {
        let y = run_layer(&x, layer).unwrap();
        let oracle = match layer.kind {
            LayerKind::Conv2D => Some(conv_oracle(&x, layer)),
            LayerKind::DepthwiseConv2D => Some(depthwise_oracle(&x, layer)),
            LayerKind::FullyConnected => Some(fc_oracle(&x, layer)),
            _ => None,
        };
        if let Some((shape, data)) = oracle {
            weighted += 1;
            if shape != y.shape || data != y.data {
                mismatches += 1;
            }
        }
        x = y;
    }
    let mut arena = Arena::default();
    let token = arena.activate_tenant(g).unwrap();
    let out = arena.invoke(token, g, &rg.input).unwrap();
    let reference = reference_invoke_float(g, &rg.input.dequantize()).unwrap();
    let e2e_error = out
        .dequantize()
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Trial {
        kernel_mismatches: mismatches,
        weighted_layers: weighted,
        e2e_error,
        output_scale: g.output_params().scale_f64(),
        arena_matches_kernels: out.data == x.data,
    }
}

/// Byte ranges of every tensor that must coexist at some step overlap
/// nowhere; tensors joined by a reshape are the same bytes. Returns the
/// offending pair, if any.
pub fn arena_conflict(g: &ModelGraph, plan: &liftml::nn::ArenaPlan) -> Option<(usize, usize)> {
    let shapes = g.tensor_shapes();
    // alias group: follow reshapes back to the tensor that owns the bytes
    let mut owner: Vec<usize> = (0..shapes.len()).collect();
    for (i, l) in g.layers().iter().enumerate() {
        if l.kind == LayerKind::Reshape {
            owner[i + 1] = owner[i];
        }
    }
    let range = |t: usize| {
        let off = plan.tensor_offset(t);
        off..off + shapes[t].num_elements()
    };
    for step in 0..g.layers().len() {
        // at step s the input (s) and output (s + 1) must both exist
        let (a, b) = (step, step + 1);
        if owner[a] == owner[b] {
            continue;
        }
        let (ra, rb) = (range(a), range(b));
        if ra.start < rb.end && rb.start < ra.end {
            return Some((a, b));
        }
    }
    None
}

// ---- controller ----------------------------------------------------------

/// Scores at or above this map to at least 59%.
pub const THRESHOLD_SCORE: i8 = 23;

/// CRC-8/0x07 computed bit by bit.
pub fn crc8_oracle(bytes: &[u8]) -> u8 {
    let mut crc = 0u8;
    for &b in bytes {
        crc ^= b;
        for _ in 0..8 {
            crc = if crc & 0x80 != 0 {
                (crc << 1) ^ 0x07
            } else {
                crc << 1
            };
        }
    }
    crc
}

fn dummy_tensor() -> QuantTensor {
    QuantTensor::zeros(Shape::new([1, 1]), QuantParams::new(1.0, 0).unwrap())
}

fn random_score(rng: &mut ChaCha8Rng) -> i8 {
    match rng.gen_range(0..4) {
        0 => rng.gen(),
        1 => rng.gen_range(THRESHOLD_SCORE - 2..=THRESHOLD_SCORE + 2),
        2 => 127,
        _ => -128,
    }
}

pub fn random_event(rng: &mut ChaCha8Rng) -> Event {
    match rng.gen_range(0..10) {
        0 | 1 => Event::CameraFrame(dummy_tensor()),
        2 | 3 => Event::SpectrogramReady(dummy_tensor()),
        4 | 5 => Event::InferenceDone(Scores::Person(random_score(rng))),
        6 | 7 => {
            let mut s = [0i8; 6];
            for v in &mut s {
                *v = if rng.gen_bool(0.5) { -128 } else { rng.gen() };
            }
            if rng.gen_bool(0.6) {
                s[rng.gen_range(0..6)] = random_score(rng);
            }
            Event::InferenceDone(Scores::Keyword(KeywordScores(s)))
        }
        _ => Event::Tick,
    }
}

/// Random timed event sequence; gaps are mostly short with the odd long one.
pub fn random_sequence(rng: &mut ChaCha8Rng) -> Vec<(u64, Event)> {
    let mut t = 0;
    (0..rng.gen_range(1..60))
        .map(|_| {
            t += match rng.gen_range(0..10) {
                0 => rng.gen_range(4000..7000),
                1 => 0,
                _ => rng.gen_range(1..800),
            };
            (t, random_event(rng))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepRecord {
    Ok(ControllerState, Vec<Action>),
    Rejected,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct WalkCounts {
    pub detections: usize,
    pub dispatches: usize,
    pub timeouts: usize,
    pub rejected: usize,
}

fn first_max(s: &[i8; 6]) -> usize {
    let m = *s.iter().max().unwrap();
    s.iter().position(|&v| v == m).unwrap()
}

/// Replays `seq` from Idle, checking every transition against the rules a
/// floor unit must obey. Returns the step trace for determinism checks.
pub fn walk_controller(
    seq: &[(u64, Event)],
    counts: &mut WalkCounts,
) -> Result<Vec<StepRecord>, String> {
    let cfg = ControllerConfig::default();
    let mut state = ControllerState::default();
    let mut trace = Vec::with_capacity(seq.len());
    for (i, (now, ev)) in seq.iter().enumerate() {
        let now = *now;
        let fail = |msg: &str| {
            Err(format!(
                "step {i} t={now} {} in {}: {msg}",
                ev.name(),
                state.mode
            ))
        };
        let expired = matches!(state.mode, Mode::Listening { deadline } if now >= deadline);
        match step(&state, ev, now, &cfg) {
            Err(_) => {
                let legal = expired
                    || matches!(
                        (&state.mode, ev),
                        (Mode::Idle, Event::CameraFrame(_))
                            | (Mode::Idle, Event::InferenceDone(Scores::Person(_)))
                            | (_, Event::Tick)
                            | (Mode::Listening { .. }, Event::SpectrogramReady(_))
                            | (
                                Mode::Listening { .. },
                                Event::InferenceDone(Scores::Keyword(_))
                            )
                    );
                if legal {
                    return fail("legal event rejected");
                }
                counts.rejected += 1;
                trace.push(StepRecord::Rejected);
            }
            Ok((next, actions)) => {
                if !next.is_consistent() {
                    return fail("light does not match mode");
                }
                let emitted: Vec<Floor> = actions
                    .iter()
                    .filter_map(|a| match a {
                        Action::EmitFrame(f) => Some(*f),
                        _ => None,
                    })
                    .collect();
                if expired {
                    if next.mode != Mode::Idle || next.light != Light::Red || !emitted.is_empty() {
                        return fail("expired listening window must time out to Idle");
                    }
                    counts.timeouts += 1;
                }
                match (&state.mode, &next.mode) {
                    (Mode::Idle, Mode::Listening { deadline }) => {
                        let Event::InferenceDone(Scores::Person(s)) = ev else {
                            return fail("listening without a person result");
                        };
                        if *s < THRESHOLD_SCORE || *deadline != now + 5000 {
                            return fail(
                                "listening entered below threshold or with wrong deadline",
                            );
                        }
                        counts.detections += 1;
                    }
                    (Mode::Idle, m) if *m != Mode::Idle => {
                        return fail("Idle may only lead to Listening")
                    }
                    (Mode::Dispatching { .. }, m) if *m != Mode::Idle => {
                        return fail("Dispatching must return to Idle")
                    }
                    _ => {}
                }
                if let Mode::Dispatching { floor } = next.mode {
                    let Event::InferenceDone(Scores::Keyword(k)) = ev else {
                        return fail("dispatch without keyword result");
                    };
                    let top = first_max(&k.0);
                    let ok = matches!(state.mode, Mode::Listening { .. })
                        && !expired
                        && top < 4
                        && floor as usize == top + 1
                        && k.0[top] >= THRESHOLD_SCORE
                        && emitted == vec![floor];
                    if !ok {
                        return fail("dispatch without a confident keyword while listening");
                    }
                    counts.dispatches += 1;
                } else if !emitted.is_empty() {
                    return fail("frame emitted outside Dispatching");
                }
                state = next.clone();
                trace.push(StepRecord::Ok(next, actions));
            }
        }
    }
    Ok(trace)
}
