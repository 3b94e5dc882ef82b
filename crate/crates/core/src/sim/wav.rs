//! Minimal RIFF/WAVE reader and writer for 16 kHz mono 16-bit PCM.

use thiserror::Error;

use crate::dsp::{AudioBuffer, SAMPLE_RATE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WavError {
    #[error("not a RIFF/WAVE file")]
    NotRiff,
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("wav file truncated")]
    Truncated,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a WAV file. Anything other than PCM, mono, 16-bit, 16 kHz is
/// rejected rather than converted.
pub fn read_wav(bytes: &[u8]) -> Result<AudioBuffer, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotRiff);
    }
    let mut pos = 12;
    let mut format_seen = false;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(len).ok_or(WavError::Truncated)?;
        match id {
            b"fmt " => {
                if len < 16 || end > bytes.len() {
                    return Err(WavError::Truncated);
                }
                let format = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let rate = u32_at(bytes, body + 4);
                let bits = u16_at(bytes, body + 14);
                if format != 1 || channels != 1 || bits != 16 || rate != SAMPLE_RATE {
                    return Err(WavError::UnsupportedEncoding(format!(
                        "format {format}, {channels} channel(s), {bits} bit, {rate} Hz"
                    )));
                }
                format_seen = true;
            }
            b"data" => {
                if !format_seen {
                    return Err(WavError::UnsupportedEncoding(
                        "data before fmt chunk".into(),
                    ));
                }
                let data = bytes.get(body..end).ok_or(WavError::Truncated)?;
                let samples = data
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect();
                return Ok(AudioBuffer::from_samples(samples));
            }
            _ => {}
        }
        // chunks are word aligned
        pos = end + (len & 1);
    }
    Err(WavError::Truncated)
}

/// Encodes samples as a canonical 44-byte-header WAV file.
pub fn write_wav(samples: &[i16]) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}
