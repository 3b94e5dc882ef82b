use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{DspError, FFT_LEN, NUM_BINS, WINDOW_LEN};

fn plan() -> &'static Arc<dyn Fft<f64>> {
    static PLAN: OnceLock<Arc<dyn Fft<f64>>> = OnceLock::new();
    PLAN.get_or_init(|| FftPlanner::new().plan_fft_forward(FFT_LEN))
}

/// Magnitudes of bins 0..256 of the 512-point transform of the zero-padded
/// 480-sample frame. The Nyquist bin is dropped.
pub fn fft_magnitude(frame: &[f64]) -> Result<Vec<f64>, DspError> {
    if frame.len() != WINDOW_LEN {
        return Err(DspError::WrongFrameLength {
            len: frame.len(),
            expected: WINDOW_LEN,
        });
    }
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
    for (slot, &x) in buf.iter_mut().zip(frame) {
        slot.re = x;
    }
    plan().process(&mut buf);
    Ok(buf[..NUM_BINS].iter().map(|c| c.norm()).collect())
}
