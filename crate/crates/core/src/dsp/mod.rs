//! Audio frontend: 16 kHz PCM to the 49x43 log-mel feature spectrogram fed
//! to the keyword model.
//!
//! Each 30 ms window (480 samples) is zero-padded to 512 points and
//! transformed; the first 256 magnitudes are pooled by 43 mel-spaced
//! triangular filters and log-compressed. Windows advance by 20 ms, so one
//! second of audio yields 49 slices.

mod fft;
mod mel;

use thiserror::Error;

use crate::quant::QuantParams;
use crate::tensor::{QuantTensor, Shape};

pub use fft::fft_magnitude;
pub use mel::{dct_mfcc, hz_to_mel, log_scale, mel_filterbank, mel_to_hz, MelFilterbank};

pub const SAMPLE_RATE: u32 = 16_000;
/// 30 ms at 16 kHz.
pub const WINDOW_LEN: usize = 480;
/// 20 ms at 16 kHz.
pub const STRIDE: usize = 320;
pub const FFT_LEN: usize = 512;
pub const NUM_BINS: usize = 256;
pub const NUM_CHANNELS: usize = 43;
pub const NUM_SLICES: usize = 49;
/// One second of audio.
pub const SPECTROGRAM_SAMPLES: usize = 16_000;
pub const DEFAULT_EPS_FLOOR: f64 = 1e-6;
pub const MEL_LOW_HZ: f64 = 125.0;
pub const MEL_HIGH_HZ: f64 = 7500.0;
pub const DEFAULT_MFCC_COEFFS: usize = 13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("audio buffer too short: {len} samples, need at least {needed}")]
    BufferTooShort { len: usize, needed: usize },
    #[error("frame has {len} samples, expected {expected}")]
    WrongFrameLength { len: usize, expected: usize },
    #[error("expected {expected} magnitudes, got {len}")]
    WrongBinCount { len: usize, expected: usize },
    #[error("negative magnitude {value} at bin {index}")]
    NegativeMagnitude { index: usize, value: f64 },
    #[error("unsupported sample rate {0} Hz (only 16000 is accepted)")]
    UnsupportedSampleRate(u32),
    #[error("stride must be positive")]
    ZeroStride,
}

/// Signed 16-bit mono PCM at 16 kHz.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioBuffer {
    samples: Vec<i16>,
}

impl AudioBuffer {
    pub fn new(samples: Vec<i16>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate != SAMPLE_RATE {
            return Err(DspError::UnsupportedSampleRate(sample_rate));
        }
        Ok(Self { samples })
    }

    pub fn from_samples(samples: Vec<i16>) -> Self {
        Self { samples }
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The most recent `n` samples, or all of them if fewer.
    pub fn tail(&self, n: usize) -> &[i16] {
        &self.samples[self.samples.len().saturating_sub(n)..]
    }
}

/// Window applied to each frame before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    #[default]
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontendConfig {
    pub window: WindowKind,
    pub eps_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            window: WindowKind::Rectangular,
            eps_floor: DEFAULT_EPS_FLOOR,
        }
    }
}

/// 43 log-mel band energies for one 30 ms frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSlice(pub [f64; NUM_CHANNELS]);

impl FeatureSlice {
    pub fn energies(&self) -> &[f64; NUM_CHANNELS] {
        &self.0
    }
}

/// Int8 form of a spectrogram together with its quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFeatures {
    pub data: Vec<i8>,
    pub params: QuantParams,
}

/// 49 time-major slices covering one second of audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub slices: Vec<FeatureSlice>,
    pub quantized: Option<QuantizedFeatures>,
}

impl Spectrogram {
    pub fn rows(&self) -> usize {
        self.slices.len()
    }

    pub fn row(&self, i: usize) -> &[f64; NUM_CHANNELS] {
        &self.slices[i].0
    }

    /// Row-major values, 49 * 43.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices.iter().flat_map(|s| s.0).collect()
    }

    /// Quantizes into the stored form and returns it as a model input
    /// tensor of shape (1, 49, 43, 1).
    pub fn quantize(&mut self, params: QuantParams) -> QuantTensor {
        let tensor = quantize_features(self, params);
        self.quantized = Some(QuantizedFeatures {
            data: tensor.data.clone(),
            params,
        });
        tensor
    }

    /// CSV dump: one row per slice, 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for slice in &self.slices {
            let cells: Vec<String> = slice.0.iter().map(|v| format!("{v:.8e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Slides a `window_len` window over the buffer with the given stride.
pub fn frame_audio(
    samples: &[i16],
    window_len: usize,
    stride: usize,
) -> Result<Vec<&[i16]>, DspError> {
    if stride == 0 {
        return Err(DspError::ZeroStride);
    }
    if samples.len() < window_len || window_len == 0 {
        return Err(DspError::BufferTooShort {
            len: samples.len(),
            needed: window_len.max(1),
        });
    }
    let count = (samples.len() - window_len) / stride + 1;
    Ok((0..count)
        .map(|i| &samples[i * stride..i * stride + window_len])
        .collect())
}

/// Stateless pipeline with its filterbank and window precomputed.
#[derive(Debug, Clone)]
pub struct AudioFrontend {
    config: FrontendConfig,
    filterbank: MelFilterbank,
    window: Vec<f64>,
}

impl Default for AudioFrontend {
    fn default() -> Self {
        Self::new(FrontendConfig::default())
    }
}

impl AudioFrontend {
    pub fn new(config: FrontendConfig) -> Self {
        let window = match config.window {
            WindowKind::Rectangular => vec![1.0; WINDOW_LEN],
            WindowKind::Hann => (0..WINDOW_LEN)
                .map(|n| {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / WINDOW_LEN as f64).cos()
                })
                .collect(),
        };
        Self {
            config,
            filterbank: MelFilterbank::standard(),
            window,
        }
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Features for a single 480-sample frame.
    pub fn slice(&self, frame: &[i16]) -> Result<FeatureSlice, DspError> {
        if frame.len() != WINDOW_LEN {
            return Err(DspError::WrongFrameLength {
                len: frame.len(),
                expected: WINDOW_LEN,
            });
        }
        let windowed: Vec<f64> = frame
            .iter()
            .zip(&self.window)
            .map(|(&s, &w)| s as f64 / 32768.0 * w)
            .collect();
        let mags = fft_magnitude(&windowed)?;
        let energies = self.filterbank.apply(&mags)?;
        Ok(log_scale(&energies, self.config.eps_floor))
    }

    /// Spectrogram over the most recent second of `buf`.
    pub fn spectrogram(&self, buf: &AudioBuffer) -> Result<Spectrogram, DspError> {
        if buf.len() < SPECTROGRAM_SAMPLES {
            return Err(DspError::BufferTooShort {
                len: buf.len(),
                needed: SPECTROGRAM_SAMPLES,
            });
        }
        let frames = frame_audio(buf.tail(SPECTROGRAM_SAMPLES), WINDOW_LEN, STRIDE)?;
        let slices = frames
            .into_iter()
            .map(|f| self.slice(f))
            .collect::<Result<Vec<_>, _>>()?;
        debug_assert_eq!(slices.len(), NUM_SLICES);
        Ok(Spectrogram {
            slices,
            quantized: None,
        })
    }
}

/// Spectrogram of the most recent 16000 samples with the default frontend.
pub fn build_spectrogram(buf: &AudioBuffer) -> Result<Spectrogram, DspError> {
    AudioFrontend::default().spectrogram(buf)
}

/// Quantizes the spectrogram into a (1, 49, 43, 1) int8 tensor.
pub fn quantize_features(spec: &Spectrogram, params: QuantParams) -> QuantTensor {
    let data = spec
        .slices
        .iter()
        .flat_map(|s| s.0.iter().map(|&x| params.quantize(x)))
        .collect();
    QuantTensor {
        shape: Shape::new([1, spec.rows(), NUM_CHANNELS, 1]),
        data,
        params,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, amp: f64, len: usize) -> Vec<i16> {
        (0..len)
            .map(|n| {
                let t = n as f64 / SAMPLE_RATE as f64;
                (amp * 32767.0 * (2.0 * std::f64::consts::PI * freq * t).sin()).round() as i16
            })
            .collect()
    }

    #[test]
    fn frame_count_for_one_second() {
        let zeros = vec![0i16; 16_000];
        let frames = frame_audio(&zeros, WINDOW_LEN, STRIDE).unwrap();
        assert_eq!(frames.len(), 49);
        assert!(frames
            .iter()
            .all(|f| f.len() == 480 && f.iter().all(|&s| s == 0)));
    }

    #[test]
    fn frame_count_matches_sliding_loop() {
        for len in [480usize, 481, 799, 800, 801, 1234, 16_000, 16_320] {
            let buf = vec![0i16; len];
            let mut start = 0;
            let mut slid = 0;
            while start + WINDOW_LEN <= len {
                slid += 1;
                start += STRIDE;
            }
            assert_eq!(frame_audio(&buf, WINDOW_LEN, STRIDE).unwrap().len(), slid);
            assert_eq!(slid, (len - 480) / 320 + 1);
        }
    }

    #[test]
    fn short_buffer_is_rejected() {
        let err = frame_audio(&[0i16; 400], WINDOW_LEN, STRIDE).unwrap_err();
        assert!(matches!(err, DspError::BufferTooShort { len: 400, .. }));
        let short = AudioBuffer::from_samples(vec![0; 15_999]);
        assert!(matches!(
            build_spectrogram(&short),
            Err(DspError::BufferTooShort { .. })
        ));
    }

    #[test]
    fn sample_rate_must_be_16k() {
        assert_eq!(
            AudioBuffer::new(vec![], 44_100),
            Err(DspError::UnsupportedSampleRate(44_100))
        );
    }

    #[test]
    fn silence_gives_floor_slices() {
        let spec = build_spectrogram(&AudioBuffer::from_samples(vec![0; 16_000])).unwrap();
        assert_eq!(spec.rows(), NUM_SLICES);
        let floor = DEFAULT_EPS_FLOOR.ln();
        for s in &spec.slices {
            assert!(s.0.iter().all(|&v| v == floor));
        }
    }

    #[test]
    fn uses_most_recent_second() {
        let mut samples = tone(1000.0, 0.5, 4000);
        samples.extend(vec![0; 16_000]);
        let spec = build_spectrogram(&AudioBuffer::from_samples(samples)).unwrap();
        let floor = DEFAULT_EPS_FLOOR.ln();
        assert!(spec.slices.iter().all(|s| s.0.iter().all(|&v| v == floor)));
    }

    #[test]
    fn silence_then_tone_transition_is_monotone() {
        let mut samples = vec![0i16; 8000];
        samples.extend(tone(1000.0, 0.5, 8000));
        let spec = build_spectrogram(&AudioBuffer::from_samples(samples)).unwrap();
        let floor = DEFAULT_EPS_FLOOR.ln();
        let bank = MelFilterbank::standard();
        let ch = (0..NUM_CHANNELS)
            .max_by(|&a, &b| bank.weight(a, 32).total_cmp(&bank.weight(b, 32)))
            .unwrap();
        let tone_energy: Vec<f64> = spec.slices.iter().map(|s| s.0[ch]).collect();
        // frames 0..=23 end before sample 8000
        for (i, s) in spec.slices.iter().enumerate() {
            let end = i * STRIDE + WINDOW_LEN;
            if end <= 8000 {
                assert!(s.0.iter().all(|&v| v == floor), "slice {i}");
            }
        }
        for w in tone_energy.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{w:?}");
        }
        assert!(tone_energy[48] > tone_energy[0]);
    }

    #[test]
    fn hann_window_changes_features() {
        let buf = AudioBuffer::from_samples(tone(1000.0, 0.5, 16_000));
        let rect = AudioFrontend::default().spectrogram(&buf).unwrap();
        let hann = AudioFrontend::new(FrontendConfig {
            window: WindowKind::Hann,
            ..Default::default()
        })
        .spectrogram(&buf)
        .unwrap();
        assert_ne!(rect.slices[0], hann.slices[0]);
    }

    #[test]
    fn quantize_examples() {
        let mut spec = Spectrogram {
            slices: vec![FeatureSlice([0.0; NUM_CHANNELS]); NUM_SLICES],
            quantized: None,
        };
        let p = QuantParams::new(0.25, -128).unwrap();
        let t = quantize_features(&spec, p);
        assert_eq!(t.shape, Shape::new([1, 49, 43, 1]));
        assert!(t.data.iter().all(|&q| q == -128));

        spec.slices[0].0[0] = 2.5;
        let p = QuantParams::new(0.25, 0).unwrap();
        let t = spec.quantize(p);
        assert_eq!(t.data[0], 10);
        assert_eq!(spec.quantized.as_ref().unwrap().data[0], 10);
    }

    #[test]
    fn csv_has_49_rows_of_43() {
        let spec = build_spectrogram(&AudioBuffer::from_samples(vec![0; 16_000])).unwrap();
        let csv = spec.to_csv();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 49);
        assert!(rows.iter().all(|r| r.split(',').count() == 43));
        assert!(rows[0].starts_with("-1.38155106e1,"));
    }
}
