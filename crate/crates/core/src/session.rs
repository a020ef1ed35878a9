//! One Study-2 interaction: deliveries, the pre-designed failure, clip
//! capture and the emotion-to-apology chain, recorded as an event log.
//!
//! ```text
//! idle -set_delivered-> delivering(1) -message_started-> message_playing(1)
//!   -message_finished-> (finished) -set_delivered-> delivering(2)
//!   -message_started-> message_playing(2) -message_finished->
//!       success:      done
//!       control, ea:  (finished) -failure_detected-> observing
//! observing -message_finished is already recorded; clip_ready->
//!       ea:      inferring -er_done|er_failed-> apologizing
//!       control: apologizing
//! apologizing -apology_ready-> redelivering -redelivered-> done
//! ```
//!
//! Every transition is appended to the log with a strictly increasing
//! timestamp, so replaying the transitions through a fresh machine
//! reproduces the final state.

use chrono::{DateTime, Duration as ChronoDuration, SecondsFormat, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

pub use crate::corpus::Condition;
use crate::ermodels::{Media, ModelRunner};

/// The fixed control-condition apology.
pub const BASE_APOLOGY: &str = "Apologies for the delay; here are your items.";
/// Observation time recorded after the delivery message ends.
pub const CLIP_TAIL_S: f64 = 5.0;
/// Prompt for the emotion-recognition step.
pub const ER_PROMPT: &str = "er_study2";
/// Prompt for the apology step.
pub const APOLOGY_PROMPT: &str = "apology_adapt";
/// Minimum spacing between consecutive log records.
const MIN_STEP_S: f64 = 0.001;

/// Session failure. All variants except `Io` indicate a broken contract.
#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("illegal event {event} in state {state}")]
    IllegalTransition { state: String, event: String },
    #[error("timestamp {t} does not follow {last}")]
    NonMonotonic { t: f64, last: f64 },
    #[error("session {0} already started")]
    Duplicate(String),
    #[error("session not finished (state {0})")]
    NotDone(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("inverted clip window: message ends at {end} before it starts at {start}")]
    InvertedWindow { start: f64, end: f64 },
    #[error("session log {path}: {msg}")]
    Log { path: String, msg: String },
    #[error("I/O on {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Machine state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum State {
    Idle,
    Delivering { set: u8 },
    MessagePlaying { set: u8, finished: bool },
    Observing,
    Inferring,
    Apologizing,
    Redelivering,
    Done,
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Idle => write!(f, "idle"),
            State::Delivering { set } => write!(f, "delivering({set})"),
            State::MessagePlaying {
                set,
                finished: false,
            } => write!(f, "message_playing({set})"),
            State::MessagePlaying {
                set,
                finished: true,
            } => write!(f, "message_playing({set}, finished)"),
            State::Observing => write!(f, "observing"),
            State::Inferring => write!(f, "inferring"),
            State::Apologizing => write!(f, "apologizing"),
            State::Redelivering => write!(f, "redelivering"),
            State::Done => write!(f, "done"),
        }
    }
}

/// Inputs to the machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SetDelivered,
    MessageStarted,
    MessageFinished,
    FailureDetected,
    ClipReady,
    ErDone {
        text: String,
    },
    /// Emotion inference failed; the session falls back to the fixed apology.
    ErFailed {
        reason: String,
    },
    ApologyReady {
        text: String,
        fallback: bool,
    },
    Redelivered,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::SetDelivered => "set_delivered",
            Event::MessageStarted => "message_started",
            Event::MessageFinished => "message_finished",
            Event::FailureDetected => "failure_detected",
            Event::ClipReady => "clip_ready",
            Event::ErDone { .. } => "er_done",
            Event::ErFailed { .. } => "er_failed",
            Event::ApologyReady { .. } => "apology_ready",
            Event::Redelivered => "redelivered",
        }
    }

    fn is_transition_kind(kind: &str) -> bool {
        matches!(
            kind,
            "set_delivered"
                | "message_started"
                | "message_finished"
                | "failure_detected"
                | "clip_ready"
                | "er_done"
                | "er_failed"
                | "apology_ready"
                | "redelivered"
        )
    }
}

/// Where the recorded clip starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipStart {
    /// From the start of the delivery message.
    #[default]
    MessageStart,
    /// From the end of the delivery message.
    MessageEnd,
}

/// Time window of the reaction clip, in session seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub start_ts: f64,
    pub end_ts: f64,
    pub source: String,
}

impl ClipSpec {
    pub fn length_s(&self) -> f64 {
        self.end_ts - self.start_ts
    }
}

/// `[message_start, message_end + 5 s]`.
pub fn compute_clip_window(
    message_start_ts: f64,
    message_end_ts: f64,
) -> Result<ClipSpec, SessionError> {
    compute_clip_window_from(message_start_ts, message_end_ts, ClipStart::MessageStart)
}

/// Clip window with a choice of start point.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn compute_clip_window_from(
    start: f64,
    end: f64,
    from: ClipStart,
) -> Result<ClipSpec, SessionError> {
    if !(end >= start) || !start.is_finite() || !end.is_finite() {
        return Err(SessionError::InvertedWindow { start, end });
    }
    Ok(ClipSpec {
        start_ts: match from {
            ClipStart::MessageStart => start,
            ClipStart::MessageEnd => end,
        },
        end_ts: end + CLIP_TAIL_S,
        source: "camera0".into(),
    })
}

/// What the robot says after the failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApologyPlan {
    pub base_text: String,
    /// Emotion description fed to the apology prompt; empty for control.
    pub er_context: String,
    pub generated_text: String,
    /// The fixed text was used because a model step failed.
    #[serde(default)]
    pub fallback: bool,
}

/// Frames actually captured for a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipCapture {
    pub fps: f64,
    pub first_frame: i64,
    pub last_frame: i64,
    pub media_digest: String,
}

impl ClipCapture {
    /// Captured duration, first to last frame.
    pub fn length_s(&self) -> f64 {
        (self.last_frame - self.first_frame) as f64 / self.fps
    }
}

/// One log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    /// Seconds since session start.
    pub t: f64,
    /// ISO-8601 wall time.
    pub timestamp: String,
    pub kind: String,
    pub payload: Value,
}

/// Finalized record of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub participant_id: String,
    pub condition: Condition,
    pub started_at: String,
    pub events: Vec<LogEvent>,
    pub clip: Option<ClipSpec>,
    pub clip_capture: Option<ClipCapture>,
    pub er_output: Option<String>,
    /// Emotion inference failed and was replaced by the fallback.
    pub er_fallback: bool,
    pub apology: Option<ApologyPlan>,
    pub model_latencies: Vec<f64>,
    pub failure_events: usize,
    pub final_state: State,
}

impl SessionLog {
    pub fn model_calls(&self) -> usize {
        self.model_latencies.len()
    }

    /// Whether a model step fell back to the fixed apology.
    pub fn is_fallback(&self) -> bool {
        self.er_fallback || self.apology.as_ref().is_some_and(|a| a.fallback)
    }

    /// Duration of the Set-2 delivery message, from the logged events.
    pub fn message2_duration(&self) -> Option<f64> {
        let times = |kind: &str| {
            self.events
                .iter()
                .filter(|e| e.kind == kind)
                .map(|e| e.t)
                .collect::<Vec<_>>()
        };
        let starts = times("message_started");
        let ends = times("message_finished");
        Some(ends.get(1)? - starts.get(1)?)
    }

    /// Checks the per-condition contracts.
    pub fn check_invariants(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::Invariant(m));
        for w in self.events.windows(2) {
            if w[1].t <= w[0].t {
                return bad(format!(
                    "event {} at {} does not follow {}",
                    w[1].kind, w[1].t, w[0].t
                ));
            }
        }
        if self.events.first().map(|e| e.kind.as_str()) != Some("session_started") {
            return bad("log does not open with session_started".into());
        }
        let calls = self.model_calls();
        match self.condition {
            Condition::Success => {
                if self.failure_events != 0 || calls != 0 || self.clip.is_some() {
                    return bad(format!(
                        "success session has {} failure(s), {calls} model call(s)",
                        self.failure_events
                    ));
                }
            }
            Condition::Control => {
                if self.failure_events != 1 || calls != 0 {
                    return bad(format!(
                        "control session has {} failure(s), {calls} model call(s)",
                        self.failure_events
                    ));
                }
                match &self.apology {
                    Some(a) if a.generated_text == BASE_APOLOGY && a.er_context.is_empty() => {}
                    _ => return bad("control apology differs from the fixed text".into()),
                }
            }
            Condition::Ea => {
                if self.failure_events != 1 {
                    return bad(format!("ea session has {} failure(s)", self.failure_events));
                }
                let ok_calls = if self.is_fallback() {
                    (1..=2).contains(&calls)
                } else {
                    calls == 2
                };
                if !ok_calls {
                    return bad(format!("ea session made {calls} model call(s)"));
                }
                match &self.apology {
                    Some(a) if a.fallback || !a.er_context.is_empty() => {}
                    _ => return bad("ea apology has no emotion context".into()),
                }
            }
        }
        if self.final_state != State::Done {
            return bad(format!("final state is {}", self.final_state));
        }
        Ok(())
    }
}

/// Tracks started sessions so each (participant, condition) runs once.
#[derive(Debug, Default)]
pub struct SessionRegistry {
    started: Mutex<HashSet<(String, Condition)>>,
}

impl SessionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens a session handle; a second start for the same handle fails.
    pub fn start_session(
        &self,
        condition: Condition,
        participant_id: &str,
        started_at: DateTime<Utc>,
    ) -> Result<SessionMachine, SessionError> {
        let key = (participant_id.to_string(), condition);
        if !self.started.lock().expect("registry lock").insert(key) {
            return Err(SessionError::Duplicate(format!(
                "{participant_id}/{condition}"
            )));
        }
        Ok(SessionMachine::new(condition, participant_id, started_at))
    }
}

/// The session state machine and its log.
#[derive(Debug, Clone)]
pub struct SessionMachine {
    participant_id: String,
    condition: Condition,
    state: State,
    started_at: DateTime<Utc>,
    events: Vec<LogEvent>,
    clip_start: ClipStart,
    message2: (Option<f64>, Option<f64>),
    clip: Option<ClipSpec>,
    clip_capture: Option<ClipCapture>,
    er_output: Option<String>,
    er_fallback: bool,
    apology: Option<ApologyPlan>,
    latencies: Vec<f64>,
    failures: usize,
}

fn iso(at: DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Micros, true)
}

impl SessionMachine {
    /// A machine in `idle` whose log opens with `session_started`.
    pub fn new(condition: Condition, participant_id: &str, started_at: DateTime<Utc>) -> Self {
        let mut m = Self {
            participant_id: participant_id.to_string(),
            condition,
            state: State::Idle,
            started_at,
            events: Vec::new(),
            clip_start: ClipStart::default(),
            message2: (None, None),
            clip: None,
            clip_capture: None,
            er_output: None,
            er_fallback: false,
            apology: None,
            latencies: Vec::new(),
            failures: 0,
        };
        m.events.push(LogEvent {
            t: 0.0,
            timestamp: iso(started_at),
            kind: "session_started".into(),
            payload: json!({
                "participant_id": participant_id,
                "condition": condition,
                "clip_start": ClipStart::default(),
            }),
        });
        m
    }

    pub fn with_clip_start(mut self, from: ClipStart) -> Self {
        self.clip_start = from;
        self.events[0].payload["clip_start"] = json!(from);
        self
    }

    pub fn state(&self) -> State {
        self.state
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn clip(&self) -> Option<&ClipSpec> {
        self.clip.as_ref()
    }

    pub fn last_t(&self) -> f64 {
        self.events.last().map(|e| e.t).unwrap_or(0.0)
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn push(&mut self, t: f64, kind: &str, payload: Value) -> Result<(), SessionError> {
        let last = self.last_t();
        if !(t > last) {
            return Err(SessionError::NonMonotonic { t, last });
        }
        let at = self.started_at + ChronoDuration::microseconds((t * 1e6).round() as i64);
        self.events.push(LogEvent {
            t,
            timestamp: iso(at),
            kind: kind.to_string(),
            payload,
        });
        Ok(())
    }

    /// Appends a non-transition record (model call, capture details, ...).
    pub fn note(&mut self, t: f64, kind: &str, payload: Value) -> Result<(), SessionError> {
        if Event::is_transition_kind(kind) || kind == "session_started" {
            return Err(SessionError::Invariant(format!(
                "{kind:?} is reserved for transitions"
            )));
        }
        self.push(t, kind, payload)
    }

    /// Records one model call and its latency.
    pub fn record_model_call(
        &mut self,
        t: f64,
        step: &str,
        latency_s: f64,
        ok: bool,
    ) -> Result<(), SessionError> {
        self.push(
            t,
            "model_call",
            json!({ "step": step, "latency_s": latency_s, "ok": ok }),
        )?;
        self.latencies.push(latency_s);
        Ok(())
    }

    /// Records the frames captured for the clip.
    pub fn record_capture(&mut self, t: f64, capture: ClipCapture) -> Result<(), SessionError> {
        self.note(
            t,
            "clip_captured",
            serde_json::to_value(&capture).expect("capture serializes"),
        )?;
        self.clip_capture = Some(capture);
        Ok(())
    }

    fn illegal(&self, ev: &Event) -> SessionError {
        SessionError::IllegalTransition {
            state: self.state.to_string(),
            event: ev.name().to_string(),
        }
    }

    /// Applies `event` at session time `t`.
    pub fn advance(&mut self, event: Event, t: f64) -> Result<State, SessionError> {
        use State::*;
        let c = self.condition;
        let next = match (&self.state, &event) {
            (Idle, Event::SetDelivered) => Delivering { set: 1 },
            (
                MessagePlaying {
                    set: 1,
                    finished: true,
                },
                Event::SetDelivered,
            ) => Delivering { set: 2 },
            (Delivering { set }, Event::MessageStarted) => MessagePlaying {
                set: *set,
                finished: false,
            },
            (
                MessagePlaying {
                    set: 1,
                    finished: false,
                },
                Event::MessageFinished,
            ) => MessagePlaying {
                set: 1,
                finished: true,
            },
            (
                MessagePlaying {
                    set: 2,
                    finished: false,
                },
                Event::MessageFinished,
            ) => match c {
                Condition::Success => Done,
                _ => MessagePlaying {
                    set: 2,
                    finished: true,
                },
            },
            (
                MessagePlaying {
                    set: 2,
                    finished: true,
                },
                Event::FailureDetected,
            ) if c != Condition::Success => Observing,
            (Observing, Event::ClipReady) => match c {
                Condition::Ea => Inferring,
                _ => Apologizing,
            },
            (Inferring, Event::ErDone { text }) if !text.trim().is_empty() => Apologizing,
            (Inferring, Event::ErFailed { .. }) => Apologizing,
            (Apologizing, Event::ApologyReady { text, fallback }) => {
                if c == Condition::Control && (text != BASE_APOLOGY || *fallback) {
                    return Err(SessionError::Invariant(
                        "control apology must be the fixed text".into(),
                    ));
                }
                if *fallback && text != BASE_APOLOGY {
                    return Err(SessionError::Invariant(
                        "fallback apology must be the fixed text".into(),
                    ));
                }
                Redelivering
            }
            (Redelivering, Event::Redelivered) => Done,
            _ => return Err(self.illegal(&event)),
        };

        // Validate event-specific data before logging anything.
        let clip = match (&self.state, &event) {
            (Observing, Event::ClipReady) => {
                let (Some(s), Some(e)) = self.message2 else {
                    return Err(SessionError::Invariant(
                        "clip_ready before the Set-2 message was timed".into(),
                    ));
                };
                let clip = compute_clip_window_from(s, e, self.clip_start)?;
                if t < clip.end_ts {
                    return Err(SessionError::Invariant(format!(
                        "clip_ready at {t} before the clip ends at {}",
                        clip.end_ts
                    )));
                }
                Some(clip)
            }
            _ => None,
        };

        let payload = serde_json::to_value(&event).expect("event serializes");
        self.push(t, event.name(), payload)?;
        match (&self.state, &event) {
            (Delivering { set: 2 }, Event::MessageStarted) => self.message2.0 = Some(t),
            (MessagePlaying { set: 2, .. }, Event::MessageFinished) => self.message2.1 = Some(t),
            _ => {}
        }
        match event {
            Event::FailureDetected => self.failures += 1,
            Event::ErDone { text } => self.er_output = Some(text),
            Event::ErFailed { .. } => self.er_fallback = true,
            Event::ApologyReady { text, fallback } => {
                self.apology = Some(ApologyPlan {
                    base_text: BASE_APOLOGY.to_string(),
                    er_context: self.er_output.clone().unwrap_or_default(),
                    generated_text: text,
                    fallback,
                })
            }
            _ => {}
        }
        if let Some(clip) = clip {
            self.clip = Some(clip);
        }
        self.state = next;
        Ok(next)
    }

    /// Closes the session and checks its invariants.
    pub fn finalize(self) -> Result<SessionLog, SessionError> {
        if self.state != State::Done {
            return Err(SessionError::NotDone(self.state.to_string()));
        }
        let log = SessionLog {
            participant_id: self.participant_id,
            condition: self.condition,
            started_at: iso(self.started_at),
            events: self.events,
            clip: self.clip,
            clip_capture: self.clip_capture,
            er_output: self.er_output,
            er_fallback: self.er_fallback,
            apology: self.apology,
            model_latencies: self.latencies,
            failure_events: self.failures,
            final_state: State::Done,
        };
        log.check_invariants()?;
        Ok(log)
    }
}

/// Replays a log's transitions through a fresh machine and returns the
/// resulting state.
pub fn replay_log(log: &SessionLog) -> Result<State, SessionError> {
    let started = DateTime::parse_from_rfc3339(&log.started_at)
        .map_err(|e| SessionError::Invariant(format!("bad started_at: {e}")))?
        .with_timezone(&Utc);
    let clip_start = log
        .events
        .first()
        .and_then(|e| e.payload.get("clip_start"))
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default();
    let mut m = SessionMachine::new(log.condition, &log.participant_id, started)
        .with_clip_start(clip_start);
    for e in &log.events {
        if Event::is_transition_kind(&e.kind) {
            let ev: Event = serde_json::from_value(e.payload.clone()).map_err(|err| {
                SessionError::Invariant(format!("unreadable {} event: {err}", e.kind))
            })?;
            m.advance(ev, e.t)?;
        }
    }
    Ok(m.state)
}

/// Robot platform seen by the orchestrator. Durations are seconds.
pub trait Device {
    /// Drives to the participant with delivery `set`.
    fn travel(&mut self, set: u8) -> f64;
    /// Plays "here are your items"; returns the audio duration.
    fn play_message(&mut self, set: u8) -> f64;
    /// Returns the clip covering `spec`.
    fn capture(&mut self, spec: &ClipSpec) -> (ClipCapture, Media);
    /// Drives back in after the apology.
    fn redeliver(&mut self) -> f64;
}

/// Scripted timings drawn from a seeded generator, synthetic video frames.
#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    rng: ChaCha8Rng,
    fps: f64,
}

impl SimulatedDevice {
    pub fn new(seed: u64, fps: f64) -> Self {
        assert!(fps > 0.0, "frame rate must be positive");
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            fps,
        }
    }
}

impl Device for SimulatedDevice {
    fn travel(&mut self, _set: u8) -> f64 {
        self.rng.gen_range(6.0..12.0)
    }

    fn play_message(&mut self, _set: u8) -> f64 {
        self.rng.gen_range(1.5..2.5)
    }

    fn capture(&mut self, spec: &ClipSpec) -> (ClipCapture, Media) {
        let first = (spec.start_ts * self.fps).round() as i64;
        let last = (spec.end_ts * self.fps).round() as i64;
        let mut data = Vec::with_capacity(((last - first + 1) * 8) as usize + 16);
        data.extend_from_slice(b"SIMCLIP1");
        for frame in first..=last {
            data.extend_from_slice(&frame.to_le_bytes());
        }
        let media = Media::from_bytes(&spec.source, data, "video/mp4");
        let capture = ClipCapture {
            fps: self.fps,
            first_frame: first,
            last_frame: last,
            media_digest: media.digest.clone(),
        };
        (capture, media)
    }

    fn redeliver(&mut self) -> f64 {
        self.rng.gen_range(4.0..8.0)
    }
}

/// Emotion description of the reaction clip plus call latency.
pub fn run_emotion_inference(
    clip: &Media,
    subject: &str,
    runner: &ModelRunner,
) -> Result<(String, f64), crate::ermodels::ModelError> {
    let c = runner.complete(ER_PROMPT, &BTreeMap::new(), subject, Some(clip))?;
    Ok((c.raw_text.trim().to_string(), c.latency_s))
}

/// Apology for the redelivery and the latency of the model call, if one
/// was made. Control always yields the fixed text; an ea model failure
/// falls back to it with the flag set.
pub fn generate_apology(
    er_context: &str,
    condition: Condition,
    subject: &str,
    runner: Option<&ModelRunner>,
) -> (ApologyPlan, Option<f64>) {
    let fixed = |fallback: bool| ApologyPlan {
        base_text: BASE_APOLOGY.into(),
        er_context: er_context.into(),
        generated_text: BASE_APOLOGY.into(),
        fallback,
    };
    match (condition, runner) {
        (Condition::Ea, Some(r)) if !er_context.trim().is_empty() => {
            let t0 = std::time::Instant::now();
            match r.complete(
                APOLOGY_PROMPT,
                &BTreeMap::from([("er_output", er_context)]),
                subject,
                None,
            ) {
                Ok(c) => (
                    ApologyPlan {
                        base_text: BASE_APOLOGY.into(),
                        er_context: er_context.into(),
                        generated_text: c.raw_text.trim().to_string(),
                        fallback: false,
                    },
                    Some(c.latency_s),
                ),
                Err(e) => {
                    log::warn!(
                        "{subject}: apology generation failed ({e}); using the fixed apology"
                    );
                    (fixed(true), Some(t0.elapsed().as_secs_f64()))
                }
            }
        }
        (Condition::Ea, _) => (fixed(true), None),
        _ => (fixed(false), None),
    }
}

/// Session-simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub fps: f64,
    pub clip_start: ClipStart,
    /// Wall time assigned to session start in simulations.
    pub epoch: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            clip_start: ClipStart::MessageStart,
            epoch: "2025-01-01T09:00:00Z".into(),
        }
    }
}

/// Drives one session to completion on `device`.
///
/// `runner` serves both model steps of the ea condition; it is not used for
/// success and control.
pub fn run_session(
    machine: SessionMachine,
    device: &mut dyn Device,
    runner: Option<&ModelRunner>,
) -> Result<SessionLog, SessionError> {
    let mut m = machine;
    let t = std::cell::Cell::new(m.last_t());
    let tick = |dt: f64| {
        t.set(t.get() + dt.max(MIN_STEP_S));
        t.get()
    };
    let cond = m.condition;
    let subject = m.participant_id.clone();

    for set in [1u8, 2] {
        m.advance(Event::SetDelivered, tick(device.travel(set)))?;
        m.advance(Event::MessageStarted, tick(0.0))?;
        let dur = device.play_message(set);
        m.advance(Event::MessageFinished, tick(dur))?;
    }
    if cond == Condition::Success {
        return m.finalize();
    }

    m.advance(Event::FailureDetected, tick(0.0))?;
    let clip_end = m.message2.1.expect("message timed") + CLIP_TAIL_S;
    let ready_at = tick((clip_end - t.get()).max(0.0));
    m.advance(Event::ClipReady, ready_at)?;
    let spec = m.clip.clone().expect("clip computed at clip_ready");
    let (capture, media) = device.capture(&spec);
    m.record_capture(tick(0.0), capture)?;

    let mut context = String::new();
    if cond == Condition::Ea {
        match runner {
            Some(r) => {
                let t0 = std::time::Instant::now();
                match run_emotion_inference(&media, &subject, r) {
                    Ok((text, latency)) if !text.is_empty() => {
                        m.record_model_call(tick(latency), "emotion", latency, true)?;
                        m.advance(Event::ErDone { text: text.clone() }, tick(0.0))?;
                        context = text;
                    }
                    other => {
                        let latency = t0.elapsed().as_secs_f64();
                        let reason = match other {
                            Err(e) => e.to_string(),
                            _ => "empty emotion description".to_string(),
                        };
                        log::warn!("{subject}: emotion inference failed ({reason}); falling back");
                        m.record_model_call(tick(latency), "emotion", latency, false)?;
                        m.advance(Event::ErFailed { reason }, tick(0.0))?;
                    }
                }
            }
            None => {
                m.advance(
                    Event::ErFailed {
                        reason: "no model backend configured".into(),
                    },
                    tick(0.0),
                )?;
            }
        }
    }

    let (plan, latency) = generate_apology(&context, cond, &subject, runner);
    if let Some(l) = latency {
        m.record_model_call(tick(l), "apology", l, !plan.fallback)?;
    }
    m.advance(
        Event::ApologyReady {
            text: plan.generated_text,
            fallback: plan.fallback,
        },
        tick(0.0),
    )?;
    m.advance(Event::Redelivered, tick(device.redeliver()))?;
    m.finalize()
}

/// Seed for one simulated session, stable across runs.
pub fn session_seed(seed: u64, participant_id: &str, condition: Condition) -> u64 {
    let h = crate::cache::sha256_fields(&[&seed.to_string(), participant_id, condition.as_str()]);
    u64::from_str_radix(&h[..16], 16).expect("hex digest")
}

/// Runs one simulated session with a device seeded from `seed`.
pub fn simulate_session(
    registry: &SessionRegistry,
    condition: Condition,
    participant_id: &str,
    seed: u64,
    cfg: &SessionConfig,
    runner: Option<&ModelRunner>,
) -> Result<SessionLog, SessionError> {
    let epoch = DateTime::parse_from_rfc3339(&cfg.epoch)
        .map_err(|e| SessionError::Invariant(format!("bad epoch {:?}: {e}", cfg.epoch)))?
        .with_timezone(&Utc);
    let machine = registry
        .start_session(condition, participant_id, epoch)?
        .with_clip_start(cfg.clip_start);
    let mut device = SimulatedDevice::new(session_seed(seed, participant_id, condition), cfg.fps);
    run_session(machine, &mut device, runner)
}

/// Path of a session's log under `sessions_dir`.
pub fn log_path(sessions_dir: &Path, participant_id: &str, condition: Condition) -> PathBuf {
    sessions_dir
        .join(crate::cache::backend_dir(participant_id))
        .join(format!("{condition}.jsonl"))
}

/// Writes events one per line, then the summary line.
pub fn write_log(log: &SessionLog, sessions_dir: &Path) -> Result<PathBuf, SessionError> {
    let path = log_path(sessions_dir, &log.participant_id, log.condition);
    let io = |e: std::io::Error| SessionError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let dir = path.parent().expect("log path has a parent");
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut buf = Vec::new();
    for e in &log.events {
        serde_json::to_writer(&mut buf, e).expect("event serializes");
        buf.push(b'\n');
    }
    serde_json::to_writer(&mut buf, &json!({ "kind": "summary", "log": log }))
        .expect("log serializes");
    buf.push(b'\n');
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(&buf).map_err(io)?;
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(path)
}

/// Reads the summary line of a session log file.
pub fn read_log(path: &Path) -> Result<SessionLog, SessionError> {
    let err = |msg: String| SessionError::Log {
        path: path.display().to_string(),
        msg,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let last = text
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| err("empty file".into()))?;
    #[derive(Deserialize)]
    struct Summary {
        kind: String,
        log: SessionLog,
    }
    let s: Summary =
        serde_json::from_str(last).map_err(|e| err(format!("last line is not a summary: {e}")))?;
    if s.kind != "summary" {
        return Err(err(format!("last line kind is {:?}", s.kind)));
    }
    Ok(s.log)
}

/// All session logs under `sessions_dir`, sorted by participant then
/// condition.
pub fn load_session_logs(sessions_dir: &Path) -> Result<Vec<SessionLog>, SessionError> {
    let io = |p: &Path, e: std::io::Error| SessionError::Io {
        path: p.display().to_string(),
        msg: e.to_string(),
    };
    let mut out = Vec::new();
    if !sessions_dir.is_dir() {
        return Ok(out);
    }
    for d in std::fs::read_dir(sessions_dir).map_err(|e| io(sessions_dir, e))? {
        let d = d.map_err(|e| io(sessions_dir, e))?.path();
        if !d.is_dir() {
            continue;
        }
        for f in std::fs::read_dir(&d).map_err(|e| io(&d, e))? {
            let f = f.map_err(|e| io(&d, e))?.path();
            if f.extension().is_some_and(|x| x == "jsonl") {
                out.push(read_log(&f)?);
            }
        }
    }
    out.sort_by(|a, b| (&a.participant_id, a.condition).cmp(&(&b.participant_id, b.condition)));
    Ok(out)
}

/// Condition order per participant: success first, then control and ea in
/// an order balanced across participants. Half (rounded up) of a seeded
/// shuffle get control first. Output follows input order.
pub fn counterbalance(participants: &[String], seed: u64) -> Vec<(String, [Condition; 3])> {
    let mut shuffled: Vec<&String> = participants.iter().collect();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = shuffled.len().div_ceil(2);
    let control_first: HashSet<&String> = shuffled[..half].iter().copied().collect();
    participants
        .iter()
        .map(|p| {
            let order = if control_first.contains(p) {
                [Condition::Success, Condition::Control, Condition::Ea]
            } else {
                [Condition::Success, Condition::Ea, Condition::Control]
            };
            (p.clone(), order)
        })
        .collect()
}
