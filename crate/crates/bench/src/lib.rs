//! Inputs shared by the criterion benches.

use liftml::dsp::AudioBuffer;

/// One second of a 1 kHz tone at half scale.
pub fn tone_second() -> AudioBuffer {
    let samples = (0..16_000)
        .map(|n| {
            let t = n as f64 / 16_000.0;
            (0.5 * 32767.0 * (2.0 * std::f64::consts::PI * 1000.0 * t).sin()).round() as i16
        })
        .collect();
    AudioBuffer::from_samples(samples)
}
