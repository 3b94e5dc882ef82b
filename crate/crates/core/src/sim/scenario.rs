//! Scenario files: one timed sensor event or expectation per line.
//!
//! ```text
//! # t_ms kind args...            [unit=N]
//! 0      camera  person.pgm
//! 1500   audio   three.wav 0
//! 1500   expect_dispatch 3 5000
//! 0      expect_idle 6000        unit=1
//! ```
//!
//! Media paths are relative to the scenario file.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::wav::read_wav;
use crate::controller::Floor;
use crate::dsp::AudioBuffer;
use crate::vision::{read_pgm, GrayImage};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("scenario line {line}: missing file {}", path.display())]
    MissingFile { line: usize, path: PathBuf },
    #[error("scenario line {line}: time {t_ms} ms is earlier than the previous {previous} ms")]
    NonMonotoneTime {
        line: usize,
        t_ms: u64,
        previous: u64,
    },
    #[error("scenario line {line}: cannot decode {}: {reason}", path.display())]
    BadMedia {
        line: usize,
        path: PathBuf,
        reason: String,
    },
    #[error("cannot read scenario {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Camera {
        file: String,
        image: GrayImage,
    },
    /// Clip starts playing at the event time, `offset_ms` into the file.
    Audio {
        file: String,
        audio: AudioBuffer,
        offset_ms: u64,
    },
    ExpectDispatch {
        floor: Floor,
        by_ms: u64,
    },
    ExpectIdle {
        at_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub t_ms: u64,
    pub unit: u8,
    /// 1-based source line.
    pub line: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    /// Units referenced by any event; unit 0 when there are none.
    pub fn units(&self) -> BTreeSet<u8> {
        let mut units: BTreeSet<u8> = self.events.iter().map(|e| e.unit).collect();
        if units.is_empty() {
            units.insert(0);
        }
        units
    }

    pub fn last_time(&self) -> u64 {
        self.events.last().map_or(0, |e| e.t_ms)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parses scenario text, loading media relative to `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let mut events = Vec::new();
    let mut previous = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parse_err = |reason: String| ScenarioError::ParseError { line, reason };
        let mut unit = 0u8;
        let mut tokens = Vec::new();
        for tok in content.split_whitespace() {
            match tok.strip_prefix("unit=") {
                Some(u) => {
                    unit = u
                        .parse()
                        .map_err(|_| parse_err(format!("bad unit id {u:?}")))?
                }
                None => tokens.push(tok),
            }
        }
        let num = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|_| parse_err(format!("{what}: {s:?} is not a non-negative integer")))
        };
        let first = *tokens
            .first()
            .ok_or_else(|| parse_err("missing event time".into()))?;
        let t_ms = num(first, "time")?;
        if t_ms < previous {
            return Err(ScenarioError::NonMonotoneTime {
                line,
                t_ms,
                previous,
            });
        }
        previous = t_ms;
        let kind = *tokens
            .get(1)
            .ok_or_else(|| parse_err("missing event kind".into()))?;
        let args = &tokens[2..];
        let arity = |lo: usize, hi: usize| {
            if args.len() < lo || args.len() > hi {
                Err(parse_err(format!(
                    "{kind} takes {lo}..={hi} arguments, got {}",
                    args.len()
                )))
            } else {
                Ok(())
            }
        };
        let media = |file: &str| -> Result<(PathBuf, Vec<u8>), ScenarioError> {
            let path = base_dir.join(file);
            match fs::read(&path) {
                Ok(bytes) => Ok((path, bytes)),
                Err(_) => Err(ScenarioError::MissingFile { line, path }),
            }
        };
        let bad_media =
            |path: PathBuf, reason: String| ScenarioError::BadMedia { line, path, reason };
        let kind = match kind {
            "camera" => {
                arity(1, 1)?;
                let (path, bytes) = media(args[0])?;
                let image = read_pgm(&bytes).map_err(|e| bad_media(path, e.to_string()))?;
                EventKind::Camera {
                    file: args[0].to_string(),
                    image,
                }
            }
            "audio" => {
                arity(1, 2)?;
                let offset_ms = match args.get(1) {
                    Some(s) => num(s, "offset")?,
                    None => 0,
                };
                let (path, bytes) = media(args[0])?;
                let audio = read_wav(&bytes).map_err(|e| bad_media(path, e.to_string()))?;
                EventKind::Audio {
                    file: args[0].to_string(),
                    audio,
                    offset_ms,
                }
            }
            "expect_dispatch" => {
                arity(2, 2)?;
                let floor = args[0]
                    .parse::<Floor>()
                    .map_err(|_| parse_err(format!("bad floor {:?}", args[0])))?;
                EventKind::ExpectDispatch {
                    floor,
                    by_ms: num(args[1], "by_ms")?,
                }
            }
            "expect_idle" => {
                arity(1, 1)?;
                EventKind::ExpectIdle {
                    at_ms: num(args[0], "at_ms")?,
                }
            }
            other => return Err(parse_err(format!("unknown event kind {other:?}"))),
        };
        events.push(ScenarioEvent {
            t_ms,
            unit,
            line,
            kind,
        });
    }
    Ok(Scenario { events })
}
