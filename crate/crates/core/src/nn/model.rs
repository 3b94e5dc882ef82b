//! Layer descriptors, graph validation and the TMLF container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "TMLF" | version u16 = 1 | name: u8 len + bytes
//! input: rank u8, dims u32 * rank, scale f32, zero_point i8
//! layer count u16, then per layer:
//!   kind u8 | stride_h u8 | stride_w u8 | padding u8 | activation u8
//!   output scale f32, zero_point i8
//!   requant mantissa i32, shift u8
//!   weights: rank u8 (0 = none), dims u32 * rank, scale f32, zero_point i8, data i8 * prod(dims)
//!   bias: count u32, i32 * count
//! ```

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};

use super::NnError;
use crate::quant::{QuantMultiplier, QuantParams};
use crate::tensor::{QuantTensor, Shape};

pub const MAGIC: &[u8; 4] = b"TMLF";
pub const FORMAT_VERSION: u16 = 1;
/// 250 KiB of flash for a model image.
pub const FLASH_BUDGET: usize = 250 * 1024;

/// Relative tolerance between a stored requant multiplier and the one
/// implied by the tensor scales.
const MULTIPLIER_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2D,
    DepthwiseConv2D,
    FullyConnected,
    AvgPool2D,
    Softmax,
    Reshape,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::Conv2D => 0,
            LayerKind::DepthwiseConv2D => 1,
            LayerKind::FullyConnected => 2,
            LayerKind::AvgPool2D => 3,
            LayerKind::Softmax => 4,
            LayerKind::Reshape => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => LayerKind::Conv2D,
            1 => LayerKind::DepthwiseConv2D,
            2 => LayerKind::FullyConnected,
            3 => LayerKind::AvgPool2D,
            4 => LayerKind::Softmax,
            5 => LayerKind::Reshape,
            _ => return None,
        })
    }

    /// Kinds that accumulate into int32 and requantize.
    pub fn uses_multiplier(self) -> bool {
        matches!(
            self,
            LayerKind::Conv2D | LayerKind::DepthwiseConv2D | LayerKind::FullyConnected
        )
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Conv2D => "Conv2D",
            LayerKind::DepthwiseConv2D => "DepthwiseConv2D",
            LayerKind::FullyConnected => "FullyConnected",
            LayerKind::AvgPool2D => "AvgPool2D",
            LayerKind::Softmax => "Softmax",
            LayerKind::Reshape => "Reshape",
        };
        f.pad(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Padding {
    #[default]
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    #[default]
    None,
    Relu,
    Relu6,
}

impl Activation {
    pub fn apply_f64(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
            Activation::Relu6 => x.clamp(0.0, 6.0),
        }
    }

    /// Quantized clamp range for this activation under `out`.
    pub fn range(self, out: QuantParams) -> (i8, i8) {
        match self {
            Activation::None => (-128, 127),
            Activation::Relu => (out.zero_point, 127),
            Activation::Relu6 => (out.zero_point, out.quantize(6.0)),
        }
    }
}

/// One operator with its parameters.
///
/// Conv weights are `[out_c, kh, kw, in_c]`, depthwise `[1, kh, kw, c]`,
/// fully-connected `[out, in]`. Average pooling is global when it carries no
/// weights; otherwise its weights are a `[kh, kw]` mask of ones. Reshape
/// flattens to `[n, features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDesc {
    pub kind: LayerKind,
    pub stride: (u8, u8),
    pub padding: Padding,
    pub activation: Activation,
    pub output: QuantParams,
    pub multiplier: QuantMultiplier,
    pub weights: Option<QuantTensor>,
    pub bias: Vec<i32>,
}

impl LayerDesc {
    /// A layer without weights (pool, softmax, reshape).
    pub fn plain(kind: LayerKind, output: QuantParams) -> Self {
        Self {
            kind,
            stride: (1, 1),
            padding: Padding::Valid,
            activation: Activation::None,
            output,
            multiplier: QuantMultiplier {
                mantissa: 0,
                shift: 0,
            },
            weights: None,
            bias: Vec::new(),
        }
    }

    pub fn softmax() -> Self {
        Self::plain(LayerKind::Softmax, QuantParams::SOFTMAX)
    }

    fn weight_dims(&self) -> Option<&[usize]> {
        self.weights.as_ref().map(|w| w.shape.dims())
    }

    /// Output shape for an input of `input`, validating everything that can
    /// be checked without the input scale.
    pub fn output_shape(&self, input: &Shape) -> Result<Shape, String> {
        let (sh, sw) = (self.stride.0 as usize, self.stride.1 as usize);
        let needs_act_none = !self.kind.uses_multiplier();
        if needs_act_none && self.activation != Activation::None {
            return Err(format!("{} cannot carry an activation", self.kind));
        }
        match self.kind {
            LayerKind::Conv2D | LayerKind::DepthwiseConv2D => {
                let (n, h, w, c) = input
                    .nhwc()
                    .ok_or_else(|| format!("{} needs a rank-4 input, got {input}", self.kind))?;
                if sh == 0 || sw == 0 {
                    return Err("stride must be positive".into());
                }
                let dims = self.weight_dims().ok_or("missing weights")?;
                let [o, kh, kw, i] = dims[..] else {
                    return Err(format!("weights must be rank 4, got {}", dims.len()));
                };
                let out_c = if self.kind == LayerKind::Conv2D {
                    if i != c {
                        return Err(format!("weights expect {i} input channels, input has {c}"));
                    }
                    o
                } else {
                    if o != 1 || i != c {
                        return Err(format!(
                            "depthwise weights must be [1, kh, kw, {c}], got {:?}",
                            dims
                        ));
                    }
                    c
                };
                if kh == 0 || kw == 0 || out_c == 0 {
                    return Err("empty kernel".into());
                }
                if self.bias.len() != out_c {
                    return Err(format!(
                        "bias has {} entries, expected {out_c}",
                        self.bias.len()
                    ));
                }
                let (oh, _) = out_dim(h, kh, sh, self.padding)?;
                let (ow, _) = out_dim(w, kw, sw, self.padding)?;
                Ok(Shape::new([n, oh, ow, out_c]))
            }
            LayerKind::FullyConnected => {
                if input.rank() < 2 {
                    return Err("fully connected input needs a batch axis".into());
                }
                let n = input.dims()[0];
                let features = input.num_elements() / n.max(1);
                let dims = self.weight_dims().ok_or("missing weights")?;
                let [out, inp] = dims[..] else {
                    return Err(format!("weights must be rank 2, got {}", dims.len()));
                };
                if inp != features {
                    return Err(format!(
                        "weights expect {inp} features, input has {features}"
                    ));
                }
                if self.bias.len() != out {
                    return Err(format!(
                        "bias has {} entries, expected {out}",
                        self.bias.len()
                    ));
                }
                Ok(Shape::new([n, out]))
            }
            LayerKind::AvgPool2D => {
                let (n, h, w, c) = input
                    .nhwc()
                    .ok_or_else(|| format!("AvgPool2D needs a rank-4 input, got {input}"))?;
                if !self.bias.is_empty() {
                    return Err("pooling takes no bias".into());
                }
                match &self.weights {
                    None => Ok(Shape::new([n, 1, 1, c])),
                    Some(mask) => {
                        let [kh, kw] = mask.shape.dims()[..] else {
                            return Err("pool window must be rank 2".into());
                        };
                        if mask.data.iter().any(|&v| v != 1) {
                            return Err("pool window mask must be all ones".into());
                        }
                        if sh == 0 || sw == 0 || kh == 0 || kw == 0 {
                            return Err("pool window and stride must be positive".into());
                        }
                        let (oh, _) = out_dim(h, kh, sh, self.padding)?;
                        let (ow, _) = out_dim(w, kw, sw, self.padding)?;
                        Ok(Shape::new([n, oh, ow, c]))
                    }
                }
            }
            LayerKind::Softmax => {
                if self.weights.is_some() || !self.bias.is_empty() {
                    return Err("softmax takes no weights".into());
                }
                if input.rank() == 0 {
                    return Err("softmax needs at least one axis".into());
                }
                Ok(input.clone())
            }
            LayerKind::Reshape => {
                if self.weights.is_some() || !self.bias.is_empty() {
                    return Err("reshape takes no weights".into());
                }
                let n = input.dims().first().copied().unwrap_or(1);
                Ok(Shape::new([n, input.num_elements() / n.max(1)]))
            }
        }
    }

    /// Checks quantization parameters given the input quantization.
    fn check_quant(&self, input: QuantParams) -> Result<(), String> {
        if self.kind.uses_multiplier() {
            let w = self.weights.as_ref().ok_or("missing weights")?;
            if !self.multiplier.is_normalized() {
                return Err(format!(
                    "requant mantissa {} outside [2^30, 2^31)",
                    self.multiplier.mantissa
                ));
            }
            let implied = input.scale_f64() * w.params.scale_f64() / self.output.scale_f64();
            let stored = self.multiplier.to_real();
            if ((stored - implied) / implied).abs() > MULTIPLIER_RTOL {
                return Err(format!(
                    "requant multiplier {stored:e} disagrees with scales ({implied:e})"
                ));
            }
        } else {
            if self.multiplier.mantissa != 0 || self.multiplier.shift != 0 {
                return Err(format!("{} carries a requant multiplier", self.kind));
            }
            let expected = match self.kind {
                LayerKind::Softmax => QuantParams::SOFTMAX,
                _ => input,
            };
            if self.output != expected {
                return Err(format!(
                    "{} output quantization must be {expected}, got {}",
                    self.kind, self.output
                ));
            }
        }
        Ok(())
    }
}

/// Output extent and leading pad for one spatial axis.
pub fn out_dim(
    input: usize,
    k: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize), String> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(input);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if input < k {
                return Err(format!(
                    "kernel {k} larger than input {input} with valid padding"
                ));
            }
            Ok(((input - k) / stride + 1, 0))
        }
    }
}

/// Stable identifier of a model image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelId(pub u64);

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// A validated, immutable model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    name: String,
    input_shape: Shape,
    input_params: QuantParams,
    layers: Vec<LayerDesc>,
    /// Input shape followed by every layer's output shape.
    shapes: Vec<Shape>,
    flash_size: usize,
    id: ModelId,
}

impl ModelGraph {
    pub fn new(
        name: impl Into<String>,
        input_shape: Shape,
        input_params: QuantParams,
        layers: Vec<LayerDesc>,
    ) -> Result<Self, NnError> {
        let name = name.into();
        if name.len() > u8::MAX as usize {
            return Err(NnError::InvalidGraph("name longer than 255 bytes".into()));
        }
        if !matches!(input_shape.rank(), 2 | 4) || input_shape.dims().contains(&0) {
            return Err(NnError::InvalidGraph(format!(
                "input shape {input_shape} must be rank 2 or 4 with nonzero dims"
            )));
        }
        if layers.is_empty() || layers.len() > u16::MAX as usize {
            return Err(NnError::InvalidGraph("graph needs 1..=65535 layers".into()));
        }
        if layers.last().map(|l| l.kind) != Some(LayerKind::Softmax) {
            return Err(NnError::InvalidGraph("output layer must be Softmax".into()));
        }
        let mut shapes = vec![input_shape.clone()];
        let mut params = input_params;
        for (index, layer) in layers.iter().enumerate() {
            let invalid = |reason: String| NnError::InvalidLayer { index, reason };
            if layer.kind == LayerKind::Softmax && index + 1 != layers.len() {
                return Err(invalid(
                    "softmax is only supported as the output layer".into(),
                ));
            }
            let out = layer.output_shape(&shapes[index]).map_err(invalid)?;
            layer.check_quant(params).map_err(invalid)?;
            params = layer.output;
            shapes.push(out);
        }
        let mut graph = Self {
            name,
            input_shape,
            input_params,
            layers,
            shapes,
            flash_size: 0,
            id: ModelId(0),
        };
        let bytes = graph.to_bytes();
        if bytes.len() > FLASH_BUDGET {
            return Err(NnError::FlashBudgetExceeded {
                size: bytes.len(),
                budget: FLASH_BUDGET,
            });
        }
        graph.flash_size = bytes.len();
        graph.id = model_id(&bytes);
        Ok(graph)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn id(&self) -> ModelId {
        self.id
    }

    pub fn input_shape(&self) -> &Shape {
        &self.input_shape
    }

    pub fn input_params(&self) -> QuantParams {
        self.input_params
    }

    pub fn layers(&self) -> &[LayerDesc] {
        &self.layers
    }

    /// Shape of tensor `i`: 0 is the input, `i > 0` the output of layer `i - 1`.
    pub fn tensor_shape(&self, i: usize) -> &Shape {
        &self.shapes[i]
    }

    pub fn tensor_shapes(&self) -> &[Shape] {
        &self.shapes
    }

    /// Quantization of the tensor feeding layer `i`.
    pub fn layer_input_params(&self, i: usize) -> QuantParams {
        if i == 0 {
            self.input_params
        } else {
            self.layers[i - 1].output
        }
    }

    pub fn output_shape(&self) -> &Shape {
        self.shapes.last().expect("at least one layer")
    }

    pub fn output_params(&self) -> QuantParams {
        self.layers.last().expect("at least one layer").output
    }

    /// Size of the serialized image in bytes.
    pub fn flash_size(&self) -> usize {
        self.flash_size
    }

    pub fn weight_bytes(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_ref().map_or(0, |w| w.data.len()) + 4 * l.bias.len())
            .sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.name.len() as u8);
        out.extend_from_slice(self.name.as_bytes());
        write_dims(&mut out, self.input_shape.dims());
        write_params(&mut out, self.input_params);
        out.extend_from_slice(&(self.layers.len() as u16).to_le_bytes());
        for l in &self.layers {
            out.push(l.kind.code());
            out.push(l.stride.0);
            out.push(l.stride.1);
            out.push(match l.padding {
                Padding::Same => 0,
                Padding::Valid => 1,
            });
            out.push(match l.activation {
                Activation::None => 0,
                Activation::Relu => 1,
                Activation::Relu6 => 2,
            });
            write_params(&mut out, l.output);
            out.extend_from_slice(&l.multiplier.mantissa.to_le_bytes());
            out.push(l.multiplier.shift);
            match &l.weights {
                None => out.push(0),
                Some(w) => {
                    write_dims(&mut out, w.shape.dims());
                    write_params(&mut out, w.params);
                    out.extend(w.data.iter().map(|&v| v as u8));
                }
            }
            out.extend_from_slice(&(l.bias.len() as u32).to_le_bytes());
            for b in &l.bias {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        out
    }
}

fn model_id(bytes: &[u8]) -> ModelId {
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    ModelId(h.finish())
}

fn write_dims(out: &mut Vec<u8>, dims: &[usize]) {
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

fn write_params(out: &mut Vec<u8>, p: QuantParams) {
    out.extend_from_slice(&p.scale.to_le_bytes());
    out.push(p.zero_point as u8);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(NnError::TruncatedStream { offset: self.pos })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32, NnError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, NnError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn dims(&mut self, rank: u8) -> Result<Vec<usize>, NnError> {
        (0..rank).map(|_| self.u32().map(|d| d as usize)).collect()
    }

    fn params(&mut self, what: impl Fn(String) -> NnError) -> Result<QuantParams, NnError> {
        let offset = self.pos;
        let scale = self.f32()?;
        let zp = self.u8()? as i8;
        QuantParams::new(scale, zp)
            .ok_or_else(|| what(format!("non-positive scale {scale} at byte {offset}")))
    }
}

/// Parses and validates a TMLF image. Fails closed on any malformed field.
pub fn parse_model(bytes: &[u8]) -> Result<ModelGraph, NnError> {
    if bytes.len() > FLASH_BUDGET {
        return Err(NnError::FlashBudgetExceeded {
            size: bytes.len(),
            budget: FLASH_BUDGET,
        });
    }
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let name_len = r.u8()? as usize;
    let name = std::str::from_utf8(r.take(name_len)?)
        .map_err(|_| NnError::InvalidGraph("model name is not UTF-8".into()))?
        .to_string();
    let rank = r.u8()?;
    let input_shape = Shape(r.dims(rank)?);
    let input_params = r.params(NnError::InvalidGraph)?;
    let count = r.u16()? as usize;
    let mut layers = Vec::with_capacity(count);
    for index in 0..count {
        let invalid = |reason: String| NnError::InvalidLayer { index, reason };
        let code = r.u8()?;
        let kind =
            LayerKind::from_code(code).ok_or_else(|| invalid(format!("unknown kind {code}")))?;
        let stride = (r.u8()?, r.u8()?);
        let padding = match r.u8()? {
            0 => Padding::Same,
            1 => Padding::Valid,
            p => return Err(invalid(format!("unknown padding {p}"))),
        };
        let activation = match r.u8()? {
            0 => Activation::None,
            1 => Activation::Relu,
            2 => Activation::Relu6,
            a => return Err(invalid(format!("unknown activation {a}"))),
        };
        let output = r.params(invalid)?;
        let mantissa = r.i32()?;
        let shift = r.u8()?;
        let wrank = r.u8()?;
        let weights = if wrank == 0 {
            None
        } else {
            let dims = r.dims(wrank)?;
            let params = r.params(invalid)?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n <= bytes.len())
                .ok_or(NnError::TruncatedStream { offset: r.pos })?;
            let data = r.take(n)?.iter().map(|&b| b as i8).collect();
            Some(QuantTensor {
                shape: Shape(dims),
                data,
                params,
            })
        };
        let nbias = r.u32()? as usize;
        if nbias > bytes.len() / 4 {
            return Err(NnError::TruncatedStream { offset: r.pos });
        }
        let bias = (0..nbias).map(|_| r.i32()).collect::<Result<Vec<_>, _>>()?;
        layers.push(LayerDesc {
            kind,
            stride,
            padding,
            activation,
            output,
            multiplier: QuantMultiplier { mantissa, shift },
            weights,
            bias,
        });
    }
    if r.pos != bytes.len() {
        return Err(NnError::TrailingBytes(bytes.len() - r.pos));
    }
    let graph = ModelGraph::new(name, input_shape, input_params, layers)?;
    debug_assert_eq!(graph.flash_size(), bytes.len());
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fc_graph() -> ModelGraph {
        let in_q = QuantParams::new(0.05, 0).unwrap();
        let w_q = QuantParams::new(0.01, 0).unwrap();
        let out_q = QuantParams::new(0.02, 3).unwrap();
        let m = QuantMultiplier::from_real(0.05 * 0.01 / 0.02).unwrap();
        let fc = LayerDesc {
            kind: LayerKind::FullyConnected,
            stride: (1, 1),
            padding: Padding::Valid,
            activation: Activation::None,
            output: out_q,
            multiplier: m,
            weights: QuantTensor::new(Shape::new([2, 4]), vec![1, -2, 3, -4, 5, 6, 7, 8], w_q),
            bias: vec![10, -10],
        };
        ModelGraph::new(
            "fc",
            Shape::new([1, 4]),
            in_q,
            vec![fc, LayerDesc::softmax()],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_minimal_graph() {
        let g = fc_graph();
        let bytes = g.to_bytes();
        let parsed = parse_model(&bytes).unwrap();
        assert_eq!(parsed, g);
        assert_eq!(parsed.layers().len(), 2);
        assert_eq!(parsed.flash_size(), bytes.len());
        assert_eq!(parsed.output_shape(), &Shape::new([1, 2]));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = fc_graph().to_bytes();
        bytes[0] = b'X';
        assert_eq!(parse_model(&bytes), Err(NnError::BadMagic));
        let mut bytes = fc_graph().to_bytes();
        bytes[4] = 2;
        assert_eq!(parse_model(&bytes), Err(NnError::UnsupportedVersion(2)));
    }

    #[test]
    fn every_truncation_fails_closed() {
        let bytes = fc_graph().to_bytes();
        for cut in 0..bytes.len() {
            let err = parse_model(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, NnError::TruncatedStream { .. } | NnError::BadMagic),
                "cut {cut}: {err:?}"
            );
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = fc_graph().to_bytes();
        bytes.push(0);
        assert_eq!(parse_model(&bytes), Err(NnError::TrailingBytes(1)));
    }

    #[test]
    fn oversize_stream_is_over_budget() {
        let mut bytes = fc_graph().to_bytes();
        bytes.resize(FLASH_BUDGET + 1, 0);
        assert!(matches!(
            parse_model(&bytes),
            Err(NnError::FlashBudgetExceeded { size, budget: 256_000 }) if size == 256_001
        ));
    }

    #[test]
    fn corrupt_fields_are_invalid_layers() {
        let g = fc_graph();
        let base = g.to_bytes();
        // first layer starts after magic, version, name, input dims, params, count
        let layer0 = 4 + 2 + 1 + 2 + 1 + 8 + 5 + 2;
        let mut bad_kind = base.clone();
        bad_kind[layer0] = 9;
        assert!(matches!(
            parse_model(&bad_kind),
            Err(NnError::InvalidLayer { index: 0, .. })
        ));
        let mut bad_pad = base.clone();
        bad_pad[layer0 + 3] = 7;
        assert!(matches!(
            parse_model(&bad_pad),
            Err(NnError::InvalidLayer { index: 0, .. })
        ));
        let mut bad_mult = base.clone();
        bad_mult[layer0 + 10..layer0 + 14].copy_from_slice(&5i32.to_le_bytes());
        assert!(matches!(
            parse_model(&bad_mult),
            Err(NnError::InvalidLayer { index: 0, .. })
        ));
    }

    #[test]
    fn graph_must_end_in_softmax() {
        let g = fc_graph();
        let err = ModelGraph::new(
            "x",
            g.input_shape().clone(),
            g.input_params(),
            vec![g.layers()[0].clone()],
        )
        .unwrap_err();
        assert!(matches!(err, NnError::InvalidGraph(_)));
    }

    #[test]
    fn same_and_valid_arithmetic() {
        assert_eq!(out_dim(5, 3, 2, Padding::Same).unwrap(), (3, 1));
        assert_eq!(out_dim(96, 3, 2, Padding::Same).unwrap(), (48, 0));
        assert_eq!(out_dim(49, 10, 2, Padding::Same).unwrap(), (25, 4));
        assert_eq!(out_dim(5, 3, 2, Padding::Valid).unwrap(), (2, 0));
        assert!(out_dim(2, 3, 1, Padding::Valid).is_err());
    }
}
