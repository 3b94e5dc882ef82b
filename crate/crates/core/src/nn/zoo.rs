//! Reference model configurations with seeded random weights, plus the
//! deterministic stub models used by scenario tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::builder::{quantize_graph, FloatLayer};
use super::model::{Activation, ModelGraph, Padding};
use super::NnError;
use crate::dsp::{MelFilterbank, NUM_CHANNELS, NUM_SLICES};
use crate::quant::QuantParams;
use crate::tensor::Shape;
use crate::vision::{IMAGE_PARAMS, MODEL_SIDE};

/// Quantization of log-mel features at the keyword model input; covers
/// roughly -13.8 (the silence floor) to +6.5.
pub const KWS_INPUT_PARAMS: QuantParams = QuantParams {
    scale: 0.08,
    zero_point: 45,
};

/// Depth multiplier of the reference person detector.
pub const PERSON_DEPTH_MULTIPLIER: f64 = 0.25;

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

fn he_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

fn conv(rng: &mut ChaCha8Rng, out_c: usize, k: usize, in_c: usize) -> FloatLayer {
    let w = uniform(rng, out_c * k * k * in_c, he_bound(k * k * in_c));
    let b = uniform(rng, out_c, 0.1);
    FloatLayer::conv([out_c, k, k, in_c], w, b)
}

fn depthwise(rng: &mut ChaCha8Rng, kh: usize, kw: usize, c: usize) -> FloatLayer {
    let w = uniform(rng, kh * kw * c, he_bound(kh * kw));
    let b = uniform(rng, c, 0.1);
    FloatLayer::depthwise([1, kh, kw, c], w, b)
}

fn dense(rng: &mut ChaCha8Rng, out: usize, inp: usize) -> FloatLayer {
    let w = uniform(rng, out * inp, he_bound(inp));
    let b = uniform(rng, out, 0.1);
    FloatLayer::fully_connected([out, inp], w, b)
}

/// MobileNetV1 on a 96x96x1 input with a two-class head
/// (index 0 = no person, 1 = person).
pub fn mobilenet_v1(depth_multiplier: f64, seed: u64) -> Result<ModelGraph, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = |c: usize| ((c as f64 * depth_multiplier).round() as usize).max(8);
    // (pointwise output channels, depthwise stride)
    let blocks = [
        (64, 1),
        (128, 2),
        (128, 1),
        (256, 2),
        (256, 1),
        (512, 2),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (1024, 2),
        (1024, 1),
    ];
    let mut layers = vec![conv(&mut rng, ch(32), 3, 1)
        .stride(2, 2)
        .activation(Activation::Relu6)];
    let mut c = ch(32);
    for (out, s) in blocks {
        layers.push(
            depthwise(&mut rng, 3, 3, c)
                .stride(s, s)
                .activation(Activation::Relu6),
        );
        layers.push(conv(&mut rng, ch(out), 1, c).activation(Activation::Relu6));
        c = ch(out);
    }
    layers.push(FloatLayer::global_avg_pool());
    layers.push(FloatLayer::reshape());
    layers.push(dense(&mut rng, 2, c));
    layers.push(FloatLayer::softmax());

    let n = MODEL_SIDE * MODEL_SIDE;
    let calibration: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    quantize_graph(
        "person_mobilenet_v1",
        Shape::new([1, MODEL_SIDE, MODEL_SIDE, 1]),
        IMAGE_PARAMS,
        &layers,
        &calibration,
    )
}

/// Keyword model over the 49x43 feature map: one depthwise-separable block
/// (10x8 depthwise, stride 2, then pointwise to 8 channels), a dense layer
/// to six logits and softmax.
pub fn tiny_conv(seed: u64) -> Result<ModelGraph, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        depthwise(&mut rng, 10, 8, 1)
            .stride(2, 2)
            .activation(Activation::Relu),
        conv(&mut rng, 8, 1, 1).activation(Activation::Relu),
        dense(&mut rng, 6, 25 * 22 * 8),
        FloatLayer::softmax(),
    ];
    let n = NUM_SLICES * NUM_CHANNELS;
    let calibration: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..n).map(|_| rng.gen_range(-13.8..6.0)).collect())
        .collect();
    quantize_graph(
        "kws_tiny_conv",
        Shape::new([1, NUM_SLICES, NUM_CHANNELS, 1]),
        KWS_INPUT_PARAMS,
        &layers,
        &calibration,
    )
}

/// Tone frequencies standing in for the spoken words "one".."four" in
/// stub scenarios. All sit exactly on transform bins.
pub const WORD_TONES_HZ: [f64; 4] = [500.0, 1000.0, 2000.0, 3000.0];

/// Mel channel responding most strongly to `hz`.
pub fn channel_for(hz: f64) -> usize {
    let bank = MelFilterbank::standard();
    let bin = (hz / (crate::dsp::SAMPLE_RATE as f64 / crate::dsp::FFT_LEN as f64)).round() as usize;
    (0..bank.channels())
        .max_by(|&a, &b| bank.weight(a, bin).total_cmp(&bank.weight(b, bin)))
        .expect("nonempty filterbank")
}

/// Person detector stub: mean brightness above one half reads as a person.
pub fn stub_person() -> Result<ModelGraph, NnError> {
    let gain = 40.0;
    let layers = [
        FloatLayer::global_avg_pool(),
        FloatLayer::fully_connected([2, 1], vec![-gain, gain], vec![gain / 2.0, -gain / 2.0])
            .output(QuantParams::new(0.16, 0).expect("positive")),
        FloatLayer::softmax(),
    ];
    quantize_graph(
        "stub_person",
        Shape::new([1, MODEL_SIDE, MODEL_SIDE, 1]),
        IMAGE_PARAMS,
        &layers,
        &[
            vec![0.0; MODEL_SIDE * MODEL_SIDE],
            vec![0.99; MODEL_SIDE * MODEL_SIDE],
        ],
    )
}

/// Keyword stub: averages each mel channel over time and votes for the
/// word whose tone channel stands out against the other three. Silence
/// wins when no tone channel does; "unknown" never wins.
pub fn stub_keyword() -> Result<ModelGraph, NnError> {
    let channels: Vec<usize> = WORD_TONES_HZ.iter().map(|&hz| channel_for(hz)).collect();
    let (gain, threshold) = (24.0, 8.0);
    let mut weights = vec![0.0; 6 * NUM_CHANNELS];
    for (word, &own) in channels.iter().enumerate() {
        for &other in &channels {
            weights[word * NUM_CHANNELS + other] = if other == own { gain } else { -gain / 3.0 };
        }
    }
    let bias = vec![-threshold, -threshold, -threshold, -threshold, -16.0, 0.0];
    let layers = [
        FloatLayer::avg_pool(NUM_SLICES, 1, (1, 1), Padding::Valid),
        FloatLayer::reshape(),
        FloatLayer::fully_connected([6, NUM_CHANNELS], weights, bias)
            .output(QuantParams::new(0.5, 0).expect("positive")),
        FloatLayer::softmax(),
    ];
    quantize_graph(
        "stub_keyword",
        Shape::new([1, NUM_SLICES, NUM_CHANNELS, 1]),
        KWS_INPUT_PARAMS,
        &layers,
        &[vec![-13.8; NUM_SLICES * NUM_CHANNELS]],
    )
}
