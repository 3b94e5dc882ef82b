//! Floor-unit state machine: person detection, keyword listening and
//! dispatch, with the status light tied to the mode.
//!
//! [`step`] is a pure transition function. The caller owns the clock, the
//! arena and the frame encoder and carries out the returned actions.

use std::fmt;

use thiserror::Error;

use crate::tensor::{argmax, QuantTensor};

pub type Floor = u8;

/// Base CAN identifier; a unit transmits on `CAN_BASE_ID + unit_id`.
pub const CAN_BASE_ID: u16 = 0x2E0;
pub const PROTOCOL_VERSION: u8 = 1;

/// Index of the "person" class in the detector output.
pub const PERSON_CLASS: usize = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControllerError {
    #[error("floor {floor} is not served (floors {floors:?})")]
    InvalidFloor { floor: Floor, floors: Vec<Floor> },
    #[error("illegal event {event} in mode {mode}")]
    IllegalEvent { mode: Mode, event: &'static str },
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerConfig {
    pub detect_threshold_pct: u8,
    pub kws_threshold_pct: u8,
    pub listen_timeout_ms: u64,
    pub camera_period_ms: u64,
    pub pd_latency_ms: u64,
    pub kws_latency_ms: u64,
    pub audio_window_ms: u64,
    pub floors: Vec<Floor>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            detect_threshold_pct: 59,
            kws_threshold_pct: 59,
            listen_timeout_ms: 5000,
            camera_period_ms: 200,
            pd_latency_ms: 740,
            kws_latency_ms: 30,
            audio_window_ms: 1000,
            floors: vec![1, 2, 3, 4],
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError::InvalidConfig(m.to_string()));
        if self.detect_threshold_pct > 100 || self.kws_threshold_pct > 100 {
            return bad("thresholds must be within 0..=100");
        }
        if [
            self.listen_timeout_ms,
            self.camera_period_ms,
            self.pd_latency_ms,
            self.kws_latency_ms,
            self.audio_window_ms,
        ]
        .contains(&0)
        {
            return bad("all periods and latencies must be positive");
        }
        if self.floors.is_empty() {
            return bad("at least one floor is required");
        }
        if self.floors.iter().any(|&f| f == 0 || f > 4) {
            return bad("floors must be drawn from 1..=4");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Light {
    Red,
    Green,
    Blue,
}

impl fmt::Display for Light {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Light::Red => "red",
            Light::Green => "green",
            Light::Blue => "blue",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Idle,
    Listening { deadline: u64 },
    Dispatching { floor: Floor },
}

impl Mode {
    /// The light this mode must show.
    pub fn light(&self) -> Light {
        match self {
            Mode::Idle => Light::Red,
            Mode::Listening { .. } => Light::Green,
            Mode::Dispatching { .. } => Light::Blue,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Idle => f.write_str("idle"),
            Mode::Listening { deadline } => write!(f, "listening(deadline={deadline})"),
            Mode::Dispatching { floor } => write!(f, "dispatching(floor={floor})"),
        }
    }
}

/// The six keyword class scores, in model output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeywordScores(pub [i8; 6]);

impl KeywordScores {
    pub const CLASSES: [&'static str; 6] = ["one", "two", "three", "four", "unknown", "silence"];

    /// Reads scores from a six-element model output.
    pub fn from_output(t: &QuantTensor) -> Option<Self> {
        let arr: [i8; 6] = t.data.as_slice().try_into().ok()?;
        Some(Self(arr))
    }

    /// Winning class, ties to the lowest index.
    pub fn top(&self) -> usize {
        argmax(&self.0).expect("six scores")
    }
}

/// Most recent scores seen by the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scores {
    Person(i8),
    Keyword(KeywordScores),
}

impl Scores {
    /// Person score from a detector output (`[no person, person]`).
    pub fn person_from_output(t: &QuantTensor) -> Option<Self> {
        (t.data.len() == 2).then(|| Scores::Person(t.data[PERSON_CLASS]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerState {
    pub mode: Mode,
    pub light: Light,
    pub last_inference: Option<Scores>,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            mode: Mode::Idle,
            light: Light::Red,
            last_inference: None,
        }
    }
}

impl ControllerState {
    pub fn is_consistent(&self) -> bool {
        self.mode.light() == self.light
    }

    fn enter(&self, mode: Mode) -> Self {
        Self {
            mode,
            light: mode.light(),
            last_inference: self.last_inference,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    CameraFrame(QuantTensor),
    SpectrogramReady(QuantTensor),
    InferenceDone(Scores),
    Tick,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::CameraFrame(_) => "camera_frame",
            Event::SpectrogramReady(_) => "spectrogram_ready",
            Event::InferenceDone(Scores::Person(_)) => "person_inference_done",
            Event::InferenceDone(Scores::Keyword(_)) => "keyword_inference_done",
            Event::Tick => "tick",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    RunPersonInference(QuantTensor),
    RunKeywordInference(QuantTensor),
    ActivateKeywordTenant,
    ActivatePersonTenant,
    SetLight(Light),
    EmitFrame(Floor),
}

/// Maps an int8 score onto 0..=100. The map is floored so that 59%
/// is first reached at score 23.
pub fn score_to_percent(score: i8) -> u8 {
    let s = (score as i32).max(-127);
    ((s + 127) * 100 / 254) as u8
}

pub fn decide_person(person_score: i8, cfg: &ControllerConfig) -> bool {
    score_to_percent(person_score) >= cfg.detect_threshold_pct
}

pub fn decide_keyword(scores: &KeywordScores, cfg: &ControllerConfig) -> Option<Floor> {
    let c = scores.top();
    let floor = c as Floor + 1;
    (c < 4 && cfg.floors.contains(&floor) && score_to_percent(scores.0[c]) >= cfg.kws_threshold_pct)
        .then_some(floor)
}

fn timeout(state: &ControllerState) -> (ControllerState, Vec<Action>) {
    (
        state.enter(Mode::Idle),
        vec![Action::SetLight(Light::Red), Action::ActivatePersonTenant],
    )
}

/// One transition. On error the caller keeps `state` unchanged.
pub fn step(
    state: &ControllerState,
    event: &Event,
    now: u64,
    cfg: &ControllerConfig,
) -> Result<(ControllerState, Vec<Action>), ControllerError> {
    let illegal = || ControllerError::IllegalEvent {
        mode: state.mode,
        event: event.name(),
    };
    match (state.mode, event) {
        (Mode::Listening { deadline }, _) if now >= deadline => {
            let (idle, mut actions) = timeout(state);
            // A camera frame arriving with the timeout still counts.
            if let Event::CameraFrame(t) = event {
                actions.push(Action::RunPersonInference(t.clone()));
            }
            Ok((idle, actions))
        }
        (Mode::Idle, Event::CameraFrame(t)) => {
            Ok((state.clone(), vec![Action::RunPersonInference(t.clone())]))
        }
        (Mode::Idle, Event::InferenceDone(s @ Scores::Person(score))) => {
            let mut next = state.clone();
            next.last_inference = Some(*s);
            if !decide_person(*score, cfg) {
                return Ok((next, Vec::new()));
            }
            let next = next.enter(Mode::Listening {
                deadline: now + cfg.listen_timeout_ms,
            });
            Ok((
                next,
                vec![
                    Action::SetLight(Light::Green),
                    Action::ActivateKeywordTenant,
                ],
            ))
        }
        (Mode::Idle, Event::Tick) | (Mode::Listening { .. }, Event::Tick) => {
            Ok((state.clone(), Vec::new()))
        }
        (Mode::Listening { .. }, Event::SpectrogramReady(t)) => {
            Ok((state.clone(), vec![Action::RunKeywordInference(t.clone())]))
        }
        (Mode::Listening { .. }, Event::InferenceDone(s @ Scores::Keyword(k))) => {
            let mut next = state.clone();
            next.last_inference = Some(*s);
            match decide_keyword(k, cfg) {
                None => Ok((next, Vec::new())),
                Some(floor) => Ok((
                    next.enter(Mode::Dispatching { floor }),
                    vec![Action::SetLight(Light::Blue), Action::EmitFrame(floor)],
                )),
            }
        }
        (Mode::Dispatching { .. }, Event::Tick) => Ok(timeout(state)),
        _ => Err(illegal()),
    }
}

/// Eight-byte dispatch message on the elevator bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DispatchFrame {
    pub can_id: u16,
    pub data: [u8; 8],
}

impl DispatchFrame {
    pub fn unit_id(&self) -> u8 {
        self.data[1]
    }

    pub fn floor(&self) -> Floor {
        self.data[2]
    }

    pub fn seq(&self) -> u8 {
        self.data[3]
    }

    /// Low 24 bits of the emission timestamp.
    pub fn timestamp(&self) -> u32 {
        u32::from_be_bytes([0, self.data[4], self.data[5], self.data[6]])
    }

    pub fn crc_ok(&self) -> bool {
        crc8(&self.data[..7]) == self.data[7]
    }
}

impl fmt::Display for DispatchFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "can id=0x{:03X} data=", self.can_id)?;
        for b in self.data {
            write!(f, "{b:02X}")?;
        }
        Ok(())
    }
}

const CRC8_TABLE: [u8; 256] = {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u8;
        let mut k = 0;
        while k < 8 {
            c = if c & 0x80 != 0 {
                (c << 1) ^ 0x07
            } else {
                c << 1
            };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
};

/// CRC-8, polynomial 0x07, init 0, no reflection, no final xor.
pub fn crc8(bytes: &[u8]) -> u8 {
    bytes
        .iter()
        .fold(0u8, |crc, &b| CRC8_TABLE[(crc ^ b) as usize])
}

pub fn emit_frame(
    floor: Floor,
    unit_id: u8,
    seq: u8,
    now: u64,
    cfg: &ControllerConfig,
) -> Result<DispatchFrame, ControllerError> {
    if !cfg.floors.contains(&floor) {
        return Err(ControllerError::InvalidFloor {
            floor,
            floors: cfg.floors.clone(),
        });
    }
    let ts = (now as u32).to_be_bytes();
    let mut data = [
        PROTOCOL_VERSION,
        unit_id,
        floor,
        seq,
        ts[1],
        ts[2],
        ts[3],
        0,
    ];
    data[7] = crc8(&data[..7]);
    Ok(DispatchFrame {
        can_id: CAN_BASE_ID + unit_id as u16,
        data,
    })
}

/// Per-unit frame sequencing.
#[derive(Debug, Clone, Default)]
pub struct FrameEncoder {
    unit_id: u8,
    next_seq: u8,
}

impl FrameEncoder {
    pub fn new(unit_id: u8) -> Self {
        Self {
            unit_id,
            next_seq: 0,
        }
    }

    pub fn encode(
        &mut self,
        floor: Floor,
        now: u64,
        cfg: &ControllerConfig,
    ) -> Result<DispatchFrame, ControllerError> {
        let frame = emit_frame(floor, self.unit_id, self.next_seq, now, cfg)?;
        self.next_seq = self.next_seq.wrapping_add(1);
        Ok(frame)
    }
}
