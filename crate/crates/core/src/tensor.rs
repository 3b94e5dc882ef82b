//! Shaped int8 buffers.

use std::fmt;

use crate::quant::QuantParams;

/// Dimension list in N,H,W,C order (or N,features for rank 2).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(pub Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        Shape(dims.into())
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn num_elements(&self) -> usize {
        self.0.iter().product()
    }

    /// `(n, h, w, c)` for rank-4 shapes.
    pub fn nhwc(&self) -> Option<(usize, usize, usize, usize)> {
        match self.0[..] {
            [n, h, w, c] => Some((n, h, w, c)),
            _ => None,
        }
    }

    pub fn last(&self) -> usize {
        self.0.last().copied().unwrap_or(1)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", parts.join("x"))
    }
}

impl From<&[usize]> for Shape {
    fn from(d: &[usize]) -> Self {
        Shape(d.to_vec())
    }
}

/// An int8 tensor with per-tensor affine quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor {
    pub shape: Shape,
    pub data: Vec<i8>,
    pub params: QuantParams,
}

impl QuantTensor {
    /// Returns `None` when `data.len()` does not match the shape.
    pub fn new(shape: Shape, data: Vec<i8>, params: QuantParams) -> Option<Self> {
        (shape.num_elements() == data.len()).then_some(Self {
            shape,
            data,
            params,
        })
    }

    pub fn zeros(shape: Shape, params: QuantParams) -> Self {
        let n = shape.num_elements();
        Self {
            shape,
            data: vec![params.zero_point; n],
            params,
        }
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|&q| self.params.dequantize(q))
            .collect()
    }

    pub fn from_real(shape: Shape, values: &[f64], params: QuantParams) -> Option<Self> {
        let data = values.iter().map(|&x| params.quantize(x)).collect();
        Self::new(shape, data, params)
    }

    /// Index of the largest element; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        argmax(&self.data)
    }
}

/// First index holding the maximum value.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        let better = match best {
            None => true,
            Some((_, b)) => v > b,
        };
        if better {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}
