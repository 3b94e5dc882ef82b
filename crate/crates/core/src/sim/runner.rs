//! Discrete-event replay of a scenario against one or more floor units.
//!
//! Time only moves when the next scheduled job is popped. Jobs at the same
//! millisecond run in a fixed priority order (scenario input, listening
//! deadlines, inference completions, periodic sampling, expectations) and
//! then in scheduling order, so a run is a pure function of its inputs.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::config::SimConfig;
use super::scenario::{EventKind, Scenario};
use crate::controller::{
    score_to_percent, step, Action, ControllerError, ControllerState, DispatchFrame, Event, Floor,
    FrameEncoder, KeywordScores, Mode, Scores,
};
use crate::dsp::{build_spectrogram, quantize_features, AudioBuffer, NUM_CHANNELS, NUM_SLICES};
use crate::nn::{Arena, ModelGraph, NnError, PendingInference, TenantToken};
use crate::tensor::Shape;
use crate::vision::{preprocess, GrayImage, ResizeMethod, IMAGE_PARAMS, MODEL_SIDE};

const SAMPLES_PER_MS: i64 = 16;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("model rejected: {0}")]
    Model(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("expectation failed: {expectation}; actual: {actual}")]
    AssertionFailed { expectation: String, actual: String },
}

/// Ordered log lines of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    lines: Vec<String>,
}

impl Transcript {
    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    fn push(&mut self, t: u64, unit: u8, kind: &str, msg: impl fmt::Display) {
        self.lines.push(format!("t={t} unit={unit} {kind} {msg}"));
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchRecord {
    pub t_ms: u64,
    pub unit: u8,
    pub floor: Floor,
    pub frame: DispatchFrame,
    /// When the unit started listening.
    pub listen_start_ms: u64,
    /// Arrival of the camera frame that triggered detection.
    pub frame_arrival_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectationOutcome {
    pub line: usize,
    pub unit: u8,
    pub t_ms: u64,
    pub expectation: String,
    pub actual: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub person_inference_ms: Vec<u64>,
    pub keyword_inference_ms: Vec<u64>,
    /// Camera frame arrival to dispatch.
    pub end_to_end_ms: Vec<u64>,
    /// Length of every listening episode, dispatched or timed out.
    pub listening_ms: Vec<u64>,
    pub dispatches: Vec<DispatchRecord>,
    pub timeouts: usize,
    pub illegal_events: usize,
    pub arena_peak_bytes: usize,
    pub arena_capacity: usize,
    pub end_ms: u64,
    pub expectations: Vec<ExpectationOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub transcript: Transcript,
    pub stats: RunStats,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.stats.expectations.iter().all(|e| e.passed)
    }

    pub fn first_failure(&self) -> Option<&ExpectationOutcome> {
        self.stats.expectations.iter().find(|e| !e.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Job {
    Scenario(usize),
    Deadline { unit: u8, generation: u64 },
    PersonDone { unit: u8 },
    KeywordDone { unit: u8 },
    CameraTick { unit: u8 },
    KeywordEval { unit: u8, generation: u64 },
    Expect(usize),
}

impl Job {
    fn priority(&self) -> u8 {
        match self {
            Job::Scenario(_) => 0,
            Job::Deadline { .. } => 1,
            Job::PersonDone { .. } | Job::KeywordDone { .. } => 2,
            Job::CameraTick { .. } | Job::KeywordEval { .. } => 3,
            Job::Expect(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Person,
    Keyword,
}

struct Clip<'a> {
    start_ms: u64,
    offset_ms: u64,
    audio: &'a AudioBuffer,
}

struct InFlight {
    pending: PendingInference,
    phase: Phase,
    started: u64,
}

struct Unit<'a> {
    state: ControllerState,
    arena: Arena,
    token: Option<TenantToken>,
    encoder: FrameEncoder,
    in_flight: Option<InFlight>,
    /// Latest camera frame not yet sampled, with its arrival time.
    frame: Option<(&'a GrayImage, u64)>,
    camera_tick_scheduled: bool,
    /// Arrival time of the frame under (or last through) person inference.
    inference_frame_ms: u64,
    trigger_frame_ms: u64,
    clips: Vec<Clip<'a>>,
    generation: u64,
    listen_start: u64,
    dispatches: Vec<(u64, Floor)>,
}

impl Unit<'_> {
    /// One second of mixed audio ending (exclusive) at `end_ms`.
    fn window(&self, end_ms: u64, window_ms: u64) -> AudioBuffer {
        let n = (window_ms as i64 * SAMPLES_PER_MS) as usize;
        let first = (end_ms as i64 - window_ms as i64) * SAMPLES_PER_MS;
        let mut mix = vec![0i32; n];
        for clip in &self.clips {
            let shift = (clip.offset_ms as i64 - clip.start_ms as i64) * SAMPLES_PER_MS;
            let samples = clip.audio.samples();
            for (k, m) in mix.iter_mut().enumerate() {
                let idx = first + k as i64 + shift;
                if idx >= 0 && (idx as usize) < samples.len() {
                    *m += samples[idx as usize] as i32;
                }
            }
        }
        AudioBuffer::from_samples(
            mix.into_iter()
                .map(|v| v.clamp(i16::MIN as i32, i16::MAX as i32) as i16)
                .collect(),
        )
    }
}

struct Sim<'a> {
    scenario: &'a Scenario,
    person: &'a ModelGraph,
    kws: &'a ModelGraph,
    cfg: &'a SimConfig,
    queue: BTreeMap<(u64, u8, u64), Job>,
    seq: u64,
    units: BTreeMap<u8, Unit<'a>>,
    log: Transcript,
    stats: RunStats,
}

fn check_models(person: &ModelGraph, kws: &ModelGraph) -> Result<(), SimError> {
    let image_shape = Shape::new([1, MODEL_SIDE, MODEL_SIDE, 1]);
    if person.input_shape() != &image_shape || person.input_params() != IMAGE_PARAMS {
        return Err(SimError::Model(format!(
            "person model input must be {image_shape} {IMAGE_PARAMS}, got {} {}",
            person.input_shape(),
            person.input_params()
        )));
    }
    if person.output_shape().num_elements() != 2 {
        return Err(SimError::Model("person model must output 2 scores".into()));
    }
    let feature_shape = Shape::new([1, NUM_SLICES, NUM_CHANNELS, 1]);
    if kws.input_shape() != &feature_shape {
        return Err(SimError::Model(format!(
            "keyword model input must be {feature_shape}, got {}",
            kws.input_shape()
        )));
    }
    if kws.output_shape().num_elements() != 6 {
        return Err(SimError::Model("keyword model must output 6 scores".into()));
    }
    Ok(())
}

fn next_grid(t: u64, period: u64) -> u64 {
    t.div_ceil(period) * period
}

impl<'a> Sim<'a> {
    fn schedule(&mut self, t: u64, job: Job) {
        self.seq += 1;
        self.queue.insert((t, job.priority(), self.seq), job);
    }

    fn graph(&self, phase: Phase) -> &'a ModelGraph {
        match phase {
            Phase::Person => self.person,
            Phase::Keyword => self.kws,
        }
    }

    fn unit(&mut self, id: u8) -> &mut Unit<'a> {
        self.units.get_mut(&id).expect("units created up front")
    }

    fn activate(&mut self, now: u64, id: u8, phase: Phase) -> Result<(), SimError> {
        let graph = self.graph(phase);
        let u = self.units.get_mut(&id).expect("unit");
        if let Some(stale) = u.in_flight.take() {
            let _ = u.arena.complete(stale.pending);
            self.log.push(now, id, "ACTION", "discard_inference");
        }
        u.token = Some(u.arena.activate_tenant(graph)?);
        self.log.push(
            now,
            id,
            "ACTION",
            format_args!("activate_tenant {}", graph.name()),
        );
        Ok(())
    }

    fn run_inference(
        &mut self,
        now: u64,
        id: u8,
        phase: Phase,
        input: &crate::QuantTensor,
    ) -> Result<(), SimError> {
        let graph = self.graph(phase);
        let latency = match phase {
            Phase::Person => self.cfg.controller.pd_latency_ms,
            Phase::Keyword => self.cfg.controller.kws_latency_ms,
        };
        let u = self.units.get_mut(&id).expect("unit");
        let token = u.token.ok_or(NnError::TenantNotActive(graph.id()))?;
        let pending = u.arena.begin_inference(token, graph, input)?;
        u.in_flight = Some(InFlight {
            pending,
            phase,
            started: now,
        });
        self.log.push(
            now,
            id,
            "ACTION",
            format_args!("run_inference {}", graph.name()),
        );
        let done = match phase {
            Phase::Person => Job::PersonDone { unit: id },
            Phase::Keyword => Job::KeywordDone { unit: id },
        };
        self.schedule(now + latency, done);
        Ok(())
    }

    /// Feeds one event to a unit's controller and carries out the actions.
    fn deliver(&mut self, now: u64, id: u8, event: Event) -> Result<(), SimError> {
        let cfg = &self.cfg.controller;
        let before = self.unit(id).state.mode;
        let (next, actions) = match step(&self.unit(id).state, &event, now, cfg) {
            Ok(r) => r,
            Err(e @ ControllerError::IllegalEvent { .. }) => {
                self.stats.illegal_events += 1;
                self.log
                    .push(now, id, "EVENT", format_args!("dropped: {e}"));
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        };
        self.unit(id).state = next;
        let after = self.unit(id).state.mode;

        if let Mode::Listening { deadline } = after {
            if !matches!(before, Mode::Listening { .. }) {
                let u = self.unit(id);
                u.generation += 1;
                u.listen_start = now;
                u.trigger_frame_ms = u.inference_frame_ms;
                u.frame = None;
                let generation = u.generation;
                self.schedule(
                    deadline,
                    Job::Deadline {
                        unit: id,
                        generation,
                    },
                );
                self.schedule(
                    now + self.cfg.controller.camera_period_ms,
                    Job::KeywordEval {
                        unit: id,
                        generation,
                    },
                );
            }
        } else if matches!(before, Mode::Listening { .. }) {
            let u = self.unit(id);
            u.generation += 1;
            let episode = now - u.listen_start;
            self.stats.listening_ms.push(episode);
            if after == Mode::Idle {
                self.stats.timeouts += 1;
            }
        }

        for action in actions {
            match action {
                Action::SetLight(light) => {
                    self.log
                        .push(now, id, "ACTION", format_args!("light {light}"))
                }
                Action::ActivateKeywordTenant => self.activate(now, id, Phase::Keyword)?,
                Action::ActivatePersonTenant => self.activate(now, id, Phase::Person)?,
                Action::RunPersonInference(t) => self.run_inference(now, id, Phase::Person, &t)?,
                Action::RunKeywordInference(t) => {
                    self.run_inference(now, id, Phase::Keyword, &t)?
                }
                Action::EmitFrame(floor) => {
                    let u = self.units.get_mut(&id).expect("unit");
                    let frame = u.encoder.encode(floor, now, &self.cfg.controller)?;
                    u.dispatches.push((now, floor));
                    let record = DispatchRecord {
                        t_ms: now,
                        unit: id,
                        floor,
                        frame,
                        listen_start_ms: u.listen_start,
                        frame_arrival_ms: u.trigger_frame_ms,
                    };
                    self.stats.end_to_end_ms.push(now - record.frame_arrival_ms);
                    self.stats.dispatches.push(record);
                    self.log.push(
                        now,
                        id,
                        "ACTION",
                        format_args!("dispatch floor={floor} {frame}"),
                    );
                }
            }
        }
        if let Mode::Dispatching { .. } = self.unit(id).state.mode {
            self.log.push(now, id, "EVENT", "tick");
            self.deliver(now, id, Event::Tick)?;
        }
        if self.unit(id).state.mode == Mode::Idle {
            self.arm_camera(now, id);
        }
        Ok(())
    }

    fn arm_camera(&mut self, now: u64, id: u8) {
        let period = self.cfg.controller.camera_period_ms;
        let u = self.unit(id);
        if u.frame.is_some() && !u.camera_tick_scheduled && u.in_flight.is_none() {
            u.camera_tick_scheduled = true;
            self.schedule(next_grid(now, period), Job::CameraTick { unit: id });
        }
    }

    fn finish_inference(&mut self, now: u64, id: u8, phase: Phase) -> Result<(), SimError> {
        let u = self.unit(id);
        let Some(flight) = u.in_flight.take_if(|f| f.phase == phase) else {
            return Ok(()); // discarded when the tenant changed
        };
        let output = u.arena.complete(flight.pending);
        let elapsed = now - flight.started;
        let scores = match phase {
            Phase::Person => {
                self.stats.person_inference_ms.push(elapsed);
                let s = Scores::person_from_output(&output).expect("checked output shape");
                if let Scores::Person(p) = s {
                    self.log.push(
                        now,
                        id,
                        "EVENT",
                        format_args!("person_score score={p} pct={}", score_to_percent(p)),
                    );
                }
                s
            }
            Phase::Keyword => {
                self.stats.keyword_inference_ms.push(elapsed);
                let k = KeywordScores::from_output(&output).expect("checked output shape");
                let top = k.top();
                let list: Vec<String> = k.0.iter().map(i8::to_string).collect();
                self.log.push(
                    now,
                    id,
                    "EVENT",
                    format_args!(
                        "keyword_scores [{}] top={} pct={}",
                        list.join(","),
                        KeywordScores::CLASSES[top],
                        score_to_percent(k.0[top])
                    ),
                );
                Scores::Keyword(k)
            }
        };
        self.deliver(now, id, Event::InferenceDone(scores))?;
        if self.unit(id).state.mode == Mode::Idle {
            self.arm_camera(now, id);
        }
        Ok(())
    }

    fn evaluate(&mut self, now: u64, index: usize) {
        let ev = &self.scenario.events[index];
        let u = self.units.get(&ev.unit).expect("unit");
        let (expectation, actual, passed) = match ev.kind {
            EventKind::ExpectDispatch { floor, by_ms } => {
                let hit = u
                    .dispatches
                    .iter()
                    .find(|&&(t, f)| f == floor && t <= by_ms);
                let actual = match hit {
                    Some((t, _)) => format!("dispatched at {t}"),
                    None if u.dispatches.is_empty() => "no dispatch".to_string(),
                    None => {
                        let seen: Vec<String> = u
                            .dispatches
                            .iter()
                            .map(|(t, f)| format!("floor {f} at {t}"))
                            .collect();
                        seen.join(", ")
                    }
                };
                (
                    format!("dispatch floor={floor} by={by_ms}"),
                    actual,
                    hit.is_some(),
                )
            }
            EventKind::ExpectIdle { at_ms } => (
                format!("idle at={at_ms}"),
                format!("mode {}", u.state.mode),
                u.state.mode == Mode::Idle,
            ),
            _ => unreachable!("only expectations are evaluated"),
        };
        self.log.push(
            now,
            ev.unit,
            "EXPECT",
            format_args!(
                "{expectation} {} ({actual})",
                if passed { "PASS" } else { "FAIL" }
            ),
        );
        self.stats.expectations.push(ExpectationOutcome {
            line: ev.line,
            unit: ev.unit,
            t_ms: now,
            expectation,
            actual,
            passed,
        });
    }

    fn scenario_event(&mut self, now: u64, index: usize) -> Result<(), SimError> {
        let ev = &self.scenario.events[index];
        let id = ev.unit;
        match &ev.kind {
            EventKind::Camera { file, image } => {
                let idle = self.unit(id).state.mode == Mode::Idle;
                if idle {
                    self.log
                        .push(now, id, "EVENT", format_args!("camera {file}"));
                    self.unit(id).frame = Some((image, now));
                    self.arm_camera(now, id);
                } else {
                    let mode = self.unit(id).state.mode;
                    self.log.push(
                        now,
                        id,
                        "EVENT",
                        format_args!("camera {file} ignored in {mode}"),
                    );
                }
            }
            EventKind::Audio {
                file,
                audio,
                offset_ms,
            } => {
                self.log.push(
                    now,
                    id,
                    "EVENT",
                    format_args!("audio {file} offset={offset_ms}"),
                );
                self.unit(id).clips.push(Clip {
                    start_ms: now,
                    offset_ms: *offset_ms,
                    audio,
                });
            }
            EventKind::ExpectDispatch { by_ms: at, .. } | EventKind::ExpectIdle { at_ms: at } => {
                self.schedule((*at).max(now), Job::Expect(index));
            }
        }
        Ok(())
    }

    fn run_job(&mut self, now: u64, job: Job) -> Result<(), SimError> {
        match job {
            Job::Scenario(i) => self.scenario_event(now, i)?,
            Job::Expect(i) => self.evaluate(now, i),
            Job::Deadline { unit, generation } => {
                let u = self.unit(unit);
                if u.generation == generation && matches!(u.state.mode, Mode::Listening { .. }) {
                    self.log.push(now, unit, "EVENT", "listen_timeout");
                    self.deliver(now, unit, Event::Tick)?;
                }
            }
            Job::PersonDone { unit } => self.finish_inference(now, unit, Phase::Person)?,
            Job::KeywordDone { unit } => self.finish_inference(now, unit, Phase::Keyword)?,
            Job::CameraTick { unit } => {
                let u = self.unit(unit);
                u.camera_tick_scheduled = false;
                if u.state.mode != Mode::Idle || u.in_flight.is_some() {
                    return Ok(());
                }
                if let Some((image, arrived)) = u.frame.take() {
                    u.inference_frame_ms = arrived;
                    let input = preprocess(image, ResizeMethod::Bilinear);
                    self.log.push(now, unit, "EVENT", "camera_frame");
                    self.deliver(now, unit, Event::CameraFrame(input))?;
                }
            }
            Job::KeywordEval { unit, generation } => {
                let period = self.cfg.controller.camera_period_ms;
                let window_ms = self.cfg.controller.audio_window_ms;
                let u = self.unit(unit);
                if u.generation != generation || !matches!(u.state.mode, Mode::Listening { .. }) {
                    return Ok(());
                }
                self.schedule(now + period, Job::KeywordEval { unit, generation });
                if self.unit(unit).in_flight.is_some() {
                    return Ok(());
                }
                let window = self.unit(unit).window(now, window_ms);
                let spec = build_spectrogram(&window).expect("one second window");
                let features = quantize_features(&spec, self.kws.input_params());
                self.log.push(
                    now,
                    unit,
                    "EVENT",
                    format_args!(
                        "spectrogram window={}..{now}",
                        now as i64 - window_ms as i64
                    ),
                );
                self.deliver(now, unit, Event::SpectrogramReady(features))?;
            }
        }
        Ok(())
    }
}

/// Replays `scenario` and records every expectation outcome. Failed
/// expectations do not make this an error; see [`run_scenario`].
pub fn simulate(
    scenario: &Scenario,
    person: &ModelGraph,
    kws: &ModelGraph,
    cfg: &SimConfig,
) -> Result<RunOutcome, SimError> {
    check_models(person, kws)?;
    cfg.controller.validate()?;
    let mut sim = Sim {
        scenario,
        person,
        kws,
        cfg,
        queue: BTreeMap::new(),
        seq: 0,
        units: BTreeMap::new(),
        log: Transcript::default(),
        stats: RunStats {
            arena_capacity: cfg.arena_bytes,
            ..RunStats::default()
        },
    };
    for id in scenario.units() {
        sim.units.insert(
            id,
            Unit {
                state: ControllerState::default(),
                arena: Arena::new(cfg.arena_bytes),
                token: None,
                encoder: FrameEncoder::new(id),
                in_flight: None,
                frame: None,
                camera_tick_scheduled: false,
                inference_frame_ms: 0,
                trigger_frame_ms: 0,
                clips: Vec::new(),
                generation: 0,
                listen_start: 0,
                dispatches: Vec::new(),
            },
        );
        sim.log.push(
            0,
            id,
            "ACTION",
            format_args!("light {}", sim.units[&id].state.light),
        );
        sim.activate(0, id, Phase::Person)?;
    }
    for (i, ev) in scenario.events.iter().enumerate() {
        sim.schedule(ev.t_ms, Job::Scenario(i));
    }
    while let Some(((now, _, _), job)) = sim.queue.pop_first() {
        sim.stats.end_ms = now;
        sim.run_job(now, job)?;
    }
    sim.stats.arena_peak_bytes = sim
        .units
        .values()
        .map(|u| u.arena.peak_usage())
        .max()
        .unwrap_or(0);
    Ok(RunOutcome {
        transcript: sim.log,
        stats: sim.stats,
    })
}

/// Like [`simulate`], but any failed expectation is an error.
pub fn run_scenario(
    scenario: &Scenario,
    person: &ModelGraph,
    kws: &ModelGraph,
    cfg: &SimConfig,
) -> Result<RunOutcome, SimError> {
    let outcome = simulate(scenario, person, kws, cfg)?;
    if let Some(f) = outcome.first_failure() {
        return Err(SimError::AssertionFailed {
            expectation: format!("line {}: {}", f.line, f.expectation),
            actual: f.actual.clone(),
        });
    }
    Ok(outcome)
}
