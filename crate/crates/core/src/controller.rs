//! Native-HD / Degraded hysteresis controller.
//!
//! The controller degrades when uplink throughput stays under
//! `degrade_threshold_mbps` (or BLER stays above `bler_threshold`) for
//! `degrade_sustain`, and restores when throughput stays above
//! `restore_threshold_mbps` for `restore_sustain`. Either transition also
//! needs `min_dwell` in the current mode. Restoring, and enabling super
//! resolution, additionally need every sample in the window to be within the
//! GPU utilisation ceiling and above the thermal headroom floor.
//!
//! Samples are treated as piecewise constant: a condition is sustained for
//! `d` at `now` when the sample in effect at `now - d` and every later one up
//! to `now` satisfy it.

use std::collections::VecDeque;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("invalid KPM sample: {0}")]
    InvalidSample(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("sample at {got} is older than the newest buffered sample at {newest}")]
    OutOfOrder { got: Timestamp, newest: Timestamp },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpmSample {
    pub t: Timestamp,
    pub ul_throughput_mbps: f64,
    pub prb_utilization: f64,
    pub cqi: u8,
    pub bler: f64,
    pub gpu_utilization: f64,
    pub thermal_headroom_c: f64,
}

impl KpmSample {
    /// A healthy sample with the given throughput.
    pub fn nominal(t: Timestamp, ul_throughput_mbps: f64) -> Self {
        KpmSample {
            t,
            ul_throughput_mbps,
            prb_utilization: 0.5,
            cqi: 12,
            bler: 0.01,
            gpu_utilization: 0.4,
            thermal_headroom_c: 25.0,
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.ul_throughput_mbps.is_finite() && self.ul_throughput_mbps >= 0.0) {
            return Err(ControllerError::InvalidSample(format!("throughput {}", self.ul_throughput_mbps)));
        }
        if !unit(self.prb_utilization) || !unit(self.bler) || !unit(self.gpu_utilization) {
            return Err(ControllerError::InvalidSample("ratio outside [0, 1]".into()));
        }
        if self.cqi > 15 {
            return Err(ControllerError::InvalidSample(format!("cqi {}", self.cqi)));
        }
        if !self.thermal_headroom_c.is_finite() {
            return Err(ControllerError::InvalidSample("thermal headroom".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    NativeHd,
    Degraded,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::NativeHd => "NativeHd",
            Mode::Degraded => "Degraded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeState {
    pub mode: Mode,
    pub entered_at: Timestamp,
    pub last_transition_cause: String,
    /// Whether super resolution is currently enabled at the receiver.
    pub sr_active: bool,
}

impl ModeState {
    pub fn initial(mode: Mode, at: Timestamp) -> Self {
        ModeState { mode, entered_at: at, last_transition_cause: "initial".into(), sr_active: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderProfile {
    /// 1080p at 30 fps.
    P1080Fps30,
    /// 480p at 15 fps.
    P480Fps15,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Directive {
    SetEncoder(EncoderProfile),
    EnableSr,
    DisableSr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct HysteresisPolicy {
    pub degrade_threshold_mbps: f64,
    pub restore_threshold_mbps: f64,
    pub degrade_sustain: Duration,
    pub restore_sustain: Duration,
    pub min_dwell: Duration,
    pub gpu_util_ceiling: f64,
    pub thermal_floor_c: f64,
    /// Secondary degrade trigger.
    pub bler_threshold: f64,
}

impl Default for HysteresisPolicy {
    fn default() -> Self {
        HysteresisPolicy {
            degrade_threshold_mbps: 3.0,
            restore_threshold_mbps: 6.0,
            degrade_sustain: Duration::from_secs(5),
            restore_sustain: Duration::from_secs(10),
            min_dwell: Duration::from_secs(10),
            gpu_util_ceiling: 0.85,
            thermal_floor_c: 10.0,
            bler_threshold: 0.10,
        }
    }
}

impl HysteresisPolicy {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError::InvalidPolicy(m.into()));
        if !(self.degrade_threshold_mbps.is_finite() && self.degrade_threshold_mbps >= 0.0) {
            return bad("degrade threshold");
        }
        if !(self.restore_threshold_mbps.is_finite() && self.restore_threshold_mbps > self.degrade_threshold_mbps) {
            return bad("restore threshold must exceed degrade threshold");
        }
        if self.degrade_sustain.is_zero() || self.restore_sustain.is_zero() || self.min_dwell.is_zero() {
            return bad("durations must be positive");
        }
        if !(0.0..=1.0).contains(&self.gpu_util_ceiling) || !(0.0..=1.0).contains(&self.bler_threshold) {
            return bad("ratio outside [0, 1]");
        }
        if !self.thermal_floor_c.is_finite() {
            return bad("thermal floor");
        }
        Ok(())
    }

    fn guards_pass(&self, s: &KpmSample) -> bool {
        s.gpu_utilization <= self.gpu_util_ceiling && s.thermal_headroom_c >= self.thermal_floor_c
    }

    /// Longest look-back any rule needs.
    pub fn lookback(&self) -> Duration {
        self.degrade_sustain.max(self.restore_sustain)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    degrade_threshold_mbps: f64,
    restore_threshold_mbps: f64,
    degrade_sustain_s: f64,
    restore_sustain_s: f64,
    min_dwell_s: f64,
    gpu_util_ceiling: f64,
    thermal_floor_c: f64,
    #[serde(default = "default_bler")]
    bler_threshold: f64,
}

fn default_bler() -> f64 {
    HysteresisPolicy::default().bler_threshold
}

fn secs(s: f64, what: &str) -> Result<Duration, ControllerError> {
    Duration::try_from_secs_f64(s).map_err(|_| ControllerError::InvalidPolicy(format!("{what} = {s}")))
}

impl TryFrom<RawPolicy> for HysteresisPolicy {
    type Error = ControllerError;

    fn try_from(r: RawPolicy) -> Result<Self, ControllerError> {
        let p = HysteresisPolicy {
            degrade_threshold_mbps: r.degrade_threshold_mbps,
            restore_threshold_mbps: r.restore_threshold_mbps,
            degrade_sustain: secs(r.degrade_sustain_s, "degrade_sustain_s")?,
            restore_sustain: secs(r.restore_sustain_s, "restore_sustain_s")?,
            min_dwell: secs(r.min_dwell_s, "min_dwell_s")?,
            gpu_util_ceiling: r.gpu_util_ceiling,
            thermal_floor_c: r.thermal_floor_c,
            bler_threshold: r.bler_threshold,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<HysteresisPolicy> for RawPolicy {
    fn from(p: HysteresisPolicy) -> Self {
        RawPolicy {
            degrade_threshold_mbps: p.degrade_threshold_mbps,
            restore_threshold_mbps: p.restore_threshold_mbps,
            degrade_sustain_s: p.degrade_sustain.as_secs_f64(),
            restore_sustain_s: p.restore_sustain.as_secs_f64(),
            min_dwell_s: p.min_dwell.as_secs_f64(),
            gpu_util_ceiling: p.gpu_util_ceiling,
            thermal_floor_c: p.thermal_floor_c,
            bler_threshold: p.bler_threshold,
        }
    }
}

/// Samples from the one in effect at `now - d` up to `now`, or `None` if the
/// window does not reach back that far.
fn span(window: &[KpmSample], now: Timestamp, d: Duration) -> Option<&[KpmSample]> {
    let from = now.as_millis().checked_sub(d.as_millis() as u64)?;
    let end = window.partition_point(|s| s.t <= now);
    let start = window[..end].partition_point(|s| s.t.as_millis() <= from).checked_sub(1)?;
    Some(&window[start..end])
}

fn sustained(window: &[KpmSample], now: Timestamp, d: Duration, cond: impl Fn(&KpmSample) -> bool) -> bool {
    span(window, now, d).is_some_and(|s| s.iter().all(cond))
}

fn encoder_for(mode: Mode) -> Directive {
    Directive::SetEncoder(match mode {
        Mode::NativeHd => EncoderProfile::P1080Fps30,
        Mode::Degraded => EncoderProfile::P480Fps15,
    })
}

/// One controller decision. Pure in its arguments; `window` must be time-ordered.
pub fn step(state: &ModeState, policy: &HysteresisPolicy, window: &[KpmSample], now: Timestamp) -> (ModeState, Vec<Directive>) {
    let window = &window[..window.partition_point(|s| s.t <= now)];
    let dwell_ok = now.since(state.entered_at) >= policy.min_dwell;
    let guards_ok = !window.is_empty() && window.iter().all(|s| policy.guards_pass(s));
    let mut next = state.clone();
    let mut out = Vec::new();
    match state.mode {
        Mode::NativeHd => {
            let low_tp = sustained(window, now, policy.degrade_sustain, |s| s.ul_throughput_mbps < policy.degrade_threshold_mbps);
            let high_bler = sustained(window, now, policy.degrade_sustain, |s| s.bler > policy.bler_threshold);
            if dwell_ok && (low_tp || high_bler) {
                next.mode = Mode::Degraded;
                next.entered_at = now;
                next.last_transition_cause = if low_tp { "uplink throughput below degrade threshold" } else { "BLER above threshold" }.into();
                out.push(encoder_for(Mode::Degraded));
                next.sr_active = guards_ok;
                out.push(if guards_ok { Directive::EnableSr } else { Directive::DisableSr });
            }
        }
        Mode::Degraded => {
            let high_tp = sustained(window, now, policy.restore_sustain, |s| s.ul_throughput_mbps > policy.restore_threshold_mbps);
            if dwell_ok && high_tp && guards_ok {
                next.mode = Mode::NativeHd;
                next.entered_at = now;
                next.last_transition_cause = "uplink throughput above restore threshold".into();
                next.sr_active = false;
                out.push(encoder_for(Mode::NativeHd));
                out.push(Directive::DisableSr);
            } else if !state.sr_active && guards_ok {
                next.sr_active = true;
                out.push(Directive::EnableSr);
            } else if state.sr_active && window.last().is_some_and(|s| !policy.guards_pass(s)) {
                next.sr_active = false;
                out.push(Directive::DisableSr);
            }
        }
    }
    (next, out)
}

/// The full directive set for the current state, for late-joining consumers.
pub fn directives_idempotent(state: &ModeState) -> Vec<Directive> {
    let sr = match state.mode {
        Mode::NativeHd => Directive::DisableSr,
        Mode::Degraded if state.sr_active => Directive::EnableSr,
        Mode::Degraded => Directive::DisableSr,
    };
    vec![encoder_for(state.mode), sr]
}

/// What a directive consumer (encoder plus receiver) ends up configured as.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConsumerState {
    pub encoder: Option<EncoderProfile>,
    pub sr_enabled: bool,
}

impl ConsumerState {
    pub fn apply(&mut self, directives: &[Directive]) {
        for d in directives {
            match *d {
                Directive::SetEncoder(p) => self.encoder = Some(p),
                Directive::EnableSr => self.sr_enabled = true,
                Directive::DisableSr => self.sr_enabled = false,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub at: Timestamp,
    pub from: Mode,
    pub to: Mode,
    pub cause: String,
}

/// Stateful driver: buffers KPM samples and steps on demand.
#[derive(Debug, Clone)]
pub struct ModeController {
    policy: HysteresisPolicy,
    state: ModeState,
    buffer: VecDeque<KpmSample>,
    transitions: Vec<TransitionEvent>,
}

impl ModeController {
    pub fn new(policy: HysteresisPolicy, initial: ModeState) -> Result<Self, ControllerError> {
        policy.validate()?;
        Ok(ModeController { policy, state: initial, buffer: VecDeque::new(), transitions: Vec::new() })
    }

    pub fn state(&self) -> &ModeState {
        &self.state
    }

    pub fn policy(&self) -> &HysteresisPolicy {
        &self.policy
    }

    pub fn transitions(&self) -> &[TransitionEvent] {
        &self.transitions
    }

    pub fn ingest(&mut self, sample: KpmSample) -> Result<(), ControllerError> {
        sample.validate()?;
        if let Some(newest) = self.buffer.back() {
            if sample.t < newest.t {
                return Err(ControllerError::OutOfOrder { got: sample.t, newest: newest.t });
            }
        }
        self.buffer.push_back(sample);
        Ok(())
    }

    pub fn tick(&mut self, now: Timestamp) -> Vec<Directive> {
        // keep the sample in effect at the start of the look-back
        let horizon = now.as_millis().saturating_sub(self.policy.lookback().as_millis() as u64);
        while self.buffer.len() >= 2 && self.buffer[1].t.as_millis() <= horizon {
            self.buffer.pop_front();
        }
        let window = self.buffer.make_contiguous();
        let (next, directives) = step(&self.state, &self.policy, window, now);
        if next.mode != self.state.mode {
            self.transitions.push(TransitionEvent {
                at: now,
                from: self.state.mode,
                to: next.mode,
                cause: next.last_transition_cause.clone(),
            });
        }
        self.state = next;
        directives
    }
}
