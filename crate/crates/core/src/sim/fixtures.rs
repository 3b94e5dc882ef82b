//! Synthetic sensor media, stub models and scenarios for tests and demos.
//!
//! Spoken floor numbers are stood in for by pure tones (see
//! [`WORD_TONES_HZ`]) which the stub keyword model recognises; the stub
//! person detector fires on bright frames.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::wav::write_wav;
use crate::controller::Floor;
use crate::dsp::SAMPLE_RATE;
use crate::nn::zoo::{stub_keyword, stub_person, WORD_TONES_HZ};
use crate::vision::{write_pgm, GrayImage};

/// Peak amplitude of synthetic words, as a fraction of full scale.
pub const WORD_AMPLITUDE: f64 = 0.3;
pub const WORD_MS: u64 = 600;
const RAMP_MS: u64 = 5;

pub fn person_image() -> GrayImage {
    GrayImage::from_fn(160, 120, |x, y| 200 + ((x + 2 * y) % 48) as u8)
}

pub fn empty_image() -> GrayImage {
    GrayImage::from_fn(160, 120, |x, y| 10 + ((x * y) % 32) as u8)
}

/// A tone burst standing in for the spoken `floor`, with short linear
/// fades at both ends.
pub fn word_samples(floor: Floor, duration_ms: u64) -> Vec<i16> {
    let hz = WORD_TONES_HZ[(floor as usize).clamp(1, 4) - 1];
    let n = (duration_ms * SAMPLE_RATE as u64 / 1000) as usize;
    let ramp = (RAMP_MS * SAMPLE_RATE as u64 / 1000) as usize;
    (0..n)
        .map(|i| {
            let fade = (i.min(n - 1 - i) as f64 / ramp as f64).min(1.0);
            let phase = 2.0 * std::f64::consts::PI * hz * i as f64 / SAMPLE_RATE as f64;
            (WORD_AMPLITUDE * fade * phase.sin() * 32767.0).round() as i16
        })
        .collect()
}

pub fn silence_samples(duration_ms: u64) -> Vec<i16> {
    vec![0; (duration_ms * SAMPLE_RATE as u64 / 1000) as usize]
}

pub const WORD_FILES: [&str; 4] = ["one.wav", "two.wav", "three.wav", "four.wav"];

/// Person at t=0, "three" spoken at 1.5 s.
pub const HAPPY_SCENARIO: &str = "\
# person steps up to the unit and asks for floor three
0 camera person.pgm
1500 audio three.wav
1500 expect_dispatch 3 5000
5000 expect_idle 5000
";

/// Person at t=0, then five seconds of silence.
pub const SILENCE_SCENARIO: &str = "\
# person detected but nothing is said
0 camera person.pgm
740 audio silence.wav
740 expect_idle 6000
";

/// Empty landing sampled for two seconds.
pub const NOBODY_SCENARIO: &str = "\
0 camera empty.pgm
200 camera empty.pgm
400 camera empty.pgm
1000 camera empty.pgm
2000 camera empty.pgm
2000 expect_idle 3000
";

/// Two units served at once.
pub const TWO_UNITS_SCENARIO: &str = "\
0 camera person.pgm unit=0
100 camera person.pgm unit=1
1200 audio one.wav unit=0
1300 audio four.wav unit=1
1300 expect_dispatch 1 5000 unit=0
1300 expect_dispatch 4 5000 unit=1
";

#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub dir: PathBuf,
    pub person_model: PathBuf,
    pub keyword_model: PathBuf,
    pub happy: PathBuf,
    pub silence: PathBuf,
    pub nobody: PathBuf,
    pub two_units: PathBuf,
    pub config: PathBuf,
}

/// Writes models, media, scenarios and a default config into `dir`.
pub fn write_fixtures(dir: &Path) -> io::Result<FixtureSet> {
    fs::create_dir_all(dir)?;
    let other = |e: crate::nn::NnError| io::Error::other(e.to_string());
    let put = |name: &str, bytes: &[u8]| -> io::Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, bytes)?;
        Ok(p)
    };
    let person_model = put(
        "stub_person.tmlf",
        &stub_person().map_err(other)?.to_bytes(),
    )?;
    let keyword_model = put(
        "stub_keyword.tmlf",
        &stub_keyword().map_err(other)?.to_bytes(),
    )?;
    put("person.pgm", &write_pgm(&person_image()))?;
    put("empty.pgm", &write_pgm(&empty_image()))?;
    for (i, name) in WORD_FILES.iter().enumerate() {
        put(name, &write_wav(&word_samples(i as Floor + 1, WORD_MS)))?;
    }
    put("silence.wav", &write_wav(&silence_samples(5000)))?;
    Ok(FixtureSet {
        dir: dir.to_path_buf(),
        person_model,
        keyword_model,
        happy: put("happy.scn", HAPPY_SCENARIO.as_bytes())?,
        silence: put("silence.scn", SILENCE_SCENARIO.as_bytes())?,
        nobody: put("nobody.scn", NOBODY_SCENARIO.as_bytes())?,
        two_units: put("two_units.scn", TWO_UNITS_SCENARIO.as_bytes())?,
        config: put(
            "default.cfg",
            super::SimConfig::default().to_text().as_bytes(),
        )?,
    })
}
