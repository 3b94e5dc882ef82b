//! `key=value` run configuration.

use std::fmt::Write as _;

use thiserror::Error;

use crate::controller::ControllerConfig;
use crate::nn::DEFAULT_ARENA_BYTES;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub controller: ControllerConfig,
    /// Per-unit arena size.
    pub arena_bytes: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            controller: ControllerConfig::default(),
            arena_bytes: DEFAULT_ARENA_BYTES,
        }
    }
}

impl SimConfig {
    /// Parses `key=value` lines over the defaults. Blank lines and `#`
    /// comments are ignored; values may be quoted.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |reason: String| ConfigError::Parse { line, reason };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim().trim_matches('"'));
            let int = || -> Result<u64, ConfigError> {
                value
                    .parse::<u64>()
                    .map_err(|_| err(format!("{key}: {value:?} is not a non-negative integer")))
            };
            let pct = || -> Result<u8, ConfigError> {
                u8::try_from(int()?).map_err(|_| err(format!("{key}: {value} out of range")))
            };
            let c = &mut cfg.controller;
            match key {
                "detect_threshold_pct" => c.detect_threshold_pct = pct()?,
                "kws_threshold_pct" => c.kws_threshold_pct = pct()?,
                "listen_timeout_ms" => c.listen_timeout_ms = int()?,
                "camera_period_ms" => c.camera_period_ms = int()?,
                "pd_latency_ms" => c.pd_latency_ms = int()?,
                "kws_latency_ms" => c.kws_latency_ms = int()?,
                "audio_window_ms" => c.audio_window_ms = int()?,
                "arena_bytes" => cfg.arena_bytes = int()? as usize,
                "floors" => {
                    c.floors = value
                        .trim_matches(|ch| ch == '[' || ch == ']' || ch == '{' || ch == '}')
                        .split(',')
                        .map(|f| f.trim().parse::<u8>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err(format!("floors: {value:?} is not a list of floors")))?;
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        cfg.controller
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if cfg.controller.audio_window_ms != 1000 {
            return Err(ConfigError::Invalid(
                "audio_window_ms must be 1000 (the keyword model sees one second)".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let c = &self.controller;
        let mut out = String::new();
        let _ = writeln!(out, "detect_threshold_pct={}", c.detect_threshold_pct);
        let _ = writeln!(out, "kws_threshold_pct={}", c.kws_threshold_pct);
        let _ = writeln!(out, "listen_timeout_ms={}", c.listen_timeout_ms);
        let _ = writeln!(out, "camera_period_ms={}", c.camera_period_ms);
        let _ = writeln!(out, "pd_latency_ms={}", c.pd_latency_ms);
        let _ = writeln!(out, "kws_latency_ms={}", c.kws_latency_ms);
        let _ = writeln!(out, "audio_window_ms={}", c.audio_window_ms);
        let floors: Vec<String> = c.floors.iter().map(u8::to_string).collect();
        let _ = writeln!(out, "floors={}", floors.join(","));
        let _ = writeln!(out, "arena_bytes={}", self.arena_bytes);
        out
    }
}
