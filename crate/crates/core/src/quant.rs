//! Affine int8 quantization and fixed-point requantization.

use std::fmt;

/// Per-tensor affine quantization: `real = (q - zero_point) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub scale: f32,
    pub zero_point: i8,
}

impl QuantParams {
    /// Returns `None` unless `scale` is finite and strictly positive.
    pub fn new(scale: f32, zero_point: i8) -> Option<Self> {
        (scale.is_finite() && scale > 0.0).then_some(Self { scale, zero_point })
    }

    /// Parameters carried by every softmax output: probabilities on a 1/256 grid.
    pub const SOFTMAX: QuantParams = QuantParams {
        scale: 1.0 / 256.0,
        zero_point: -128,
    };

    pub fn scale_f64(&self) -> f64 {
        self.scale as f64
    }

    pub fn dequantize(&self, q: i8) -> f64 {
        (q as i32 - self.zero_point as i32) as f64 * self.scale_f64()
    }

    /// `clamp(round(x / scale) + zero_point, -128, 127)`, rounding half away from zero.
    pub fn quantize(&self, x: f64) -> i8 {
        let q = (x / self.scale_f64()).round() + self.zero_point as f64;
        q.clamp(-128.0, 127.0) as i8
    }
}

impl fmt::Display for QuantParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scale={:e} zp={}", self.scale, self.zero_point)
    }
}

/// Fixed-point multiplier `mantissa * 2^(-31 - shift)` with the mantissa
/// normalized into `[2^30, 2^31)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantMultiplier {
    pub mantissa: i32,
    pub shift: u8,
}

pub const MANTISSA_MIN: i32 = 1 << 30;

impl QuantMultiplier {
    /// Approximates a real multiplier in `(0, 1)`. Values at or above one
    /// would need a negative shift and are rejected.
    pub fn from_real(m: f64) -> Option<Self> {
        if !(m.is_finite() && m > 0.0 && m < 1.0) {
            return None;
        }
        let mut frac = m;
        let mut exp: i32 = 0;
        while frac < 0.5 {
            frac *= 2.0;
            exp -= 1;
        }
        let mut mantissa = (frac * 2f64.powi(31)).round() as i64;
        let mut shift = -exp;
        if mantissa == 1i64 << 31 {
            mantissa >>= 1;
            shift -= 1;
        }
        if shift < 0 || shift > u8::MAX as i32 {
            return None;
        }
        Some(Self {
            mantissa: mantissa as i32,
            shift: shift as u8,
        })
    }

    pub fn is_normalized(&self) -> bool {
        self.mantissa >= MANTISSA_MIN
    }

    pub fn to_real(&self) -> f64 {
        self.mantissa as f64 * 2f64.powi(-31 - self.shift as i32)
    }

    pub fn apply(&self, acc: i32, zero_point: i8) -> i8 {
        requantize(acc, self.mantissa, self.shift, zero_point)
    }
}

/// Scales an int32 accumulator by `mantissa * 2^(-31 - shift)`, rounds half
/// away from zero, adds `zero_point` and saturates to int8.
pub fn requantize(acc: i32, mantissa: i32, shift: u8, zero_point: i8) -> i8 {
    let scaled = rounding_shift(acc as i64 * mantissa as i64, 31 + shift as u32);
    (scaled + zero_point as i64).clamp(-128, 127) as i8
}

/// `round(value / 2^shift)` with ties away from zero.
fn rounding_shift(value: i64, shift: u32) -> i64 {
    // |value| < 2^62, so anything shifted by 64 or more rounds to zero.
    if shift >= 64 {
        return 0;
    }
    let magnitude = value.unsigned_abs() as u128;
    let rounded = ((magnitude + (1u128 << (shift - 1))) >> shift) as i64;
    if value < 0 {
        -rounded
    } else {
        rounded
    }
}

/// Integer division rounding half away from zero. `den` must be positive.
pub fn div_round(num: i64, den: i64) -> i64 {
    debug_assert!(den > 0);
    let q = (num.abs() * 2 + den) / (den * 2);
    if num < 0 {
        -q
    } else {
        q
    }
}
