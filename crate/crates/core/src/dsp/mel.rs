use std::sync::OnceLock;

use super::{
    DspError, FeatureSlice, FFT_LEN, MEL_HIGH_HZ, MEL_LOW_HZ, NUM_BINS, NUM_CHANNELS, SAMPLE_RATE,
};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
struct Band {
    first_bin: usize,
    weights: Vec<f64>,
}

/// Triangular filters equally spaced on the mel scale. Adjacent triangles
/// overlap by half, so any bin feeds at most two channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    bands: Vec<Band>,
}

impl MelFilterbank {
    pub fn new(channels: usize, low_hz: f64, high_hz: f64) -> Self {
        let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
        let edges: Vec<f64> = (0..channels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (channels + 1) as f64))
            .collect();
        let bin_hz = SAMPLE_RATE as f64 / FFT_LEN as f64;
        let bands = edges
            .windows(3)
            .map(|e| {
                let (left, center, right) = (e[0], e[1], e[2]);
                let mut first_bin = None;
                let mut weights = Vec::new();
                for k in 0..NUM_BINS {
                    let f = k as f64 * bin_hz;
                    let w = if f <= left || f >= right {
                        0.0
                    } else if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    };
                    if w > 0.0 {
                        first_bin.get_or_insert(k);
                        weights.push(w);
                    } else if first_bin.is_some() {
                        break;
                    }
                }
                Band {
                    first_bin: first_bin.unwrap_or(0),
                    weights,
                }
            })
            .collect();
        Self { bands }
    }

    /// 43 channels over 125..7500 Hz.
    pub fn standard() -> Self {
        Self::new(NUM_CHANNELS, MEL_LOW_HZ, MEL_HIGH_HZ)
    }

    pub fn channels(&self) -> usize {
        self.bands.len()
    }

    pub fn weight(&self, channel: usize, bin: usize) -> f64 {
        let band = &self.bands[channel];
        bin.checked_sub(band.first_bin)
            .and_then(|i| band.weights.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    /// Bin range with nonzero weight for `channel`.
    pub fn support(&self, channel: usize) -> std::ops::Range<usize> {
        let b = &self.bands[channel];
        b.first_bin..b.first_bin + b.weights.len()
    }

    pub fn apply(&self, mags: &[f64]) -> Result<Vec<f64>, DspError> {
        if mags.len() != NUM_BINS {
            return Err(DspError::WrongBinCount {
                len: mags.len(),
                expected: NUM_BINS,
            });
        }
        if let Some((index, &value)) = mags
            .iter()
            .enumerate()
            .find(|(_, &m)| m.is_nan() || m < 0.0)
        {
            return Err(DspError::NegativeMagnitude { index, value });
        }
        Ok(self
            .bands
            .iter()
            .map(|b| {
                b.weights
                    .iter()
                    .zip(&mags[b.first_bin..])
                    .map(|(w, m)| w * m)
                    .sum()
            })
            .collect())
    }
}

/// Pools 256 magnitudes into 43 mel band energies.
pub fn mel_filterbank(mags: &[f64]) -> Result<Vec<f64>, DspError> {
    static BANK: OnceLock<MelFilterbank> = OnceLock::new();
    BANK.get_or_init(MelFilterbank::standard).apply(mags)
}

/// `ln(max(e, eps_floor))` per channel.
pub fn log_scale(energies: &[f64], eps_floor: f64) -> FeatureSlice {
    let mut out = [eps_floor.ln(); NUM_CHANNELS];
    for (o, &e) in out.iter_mut().zip(energies) {
        *o = e.max(eps_floor).ln();
    }
    FeatureSlice(out)
}

/// First `n_coeffs` terms of the orthonormal DCT-II of the slice.
pub fn dct_mfcc(slice: &FeatureSlice, n_coeffs: usize) -> Vec<f64> {
    let x = &slice.0;
    let n = x.len() as f64;
    (0..n_coeffs.min(x.len()))
        .map(|k| {
            let norm = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            let sum: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (std::f64::consts::PI / n * (i as f64 + 0.5) * k as f64).cos())
                .sum();
            norm * sum
        })
        .collect()
}
