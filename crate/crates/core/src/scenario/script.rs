//! Declarative scenario scripts (TOML).
//!
//! ```toml
//! [scenario]
//! name = "example"
//! duration_s = 600
//! epoch_s = 1.0
//! seed = 7
//!
//! [plan]
//! band_start_hz = 470000000
//! band_end_hz = 542000000
//! channel_width_hz = 6000000
//!
//! [sensing]
//! classifier = "trained"      # or "oracle"
//!
//! [[truth]]
//! channel = 0
//! class = "TvBroadcast"
//! snr_db = 30
//! start_s = 0
//! end_s = 600
//!
//! [[truth]]                   # SNR from a link budget instead
//! channel = 4
//! class = "TvBroadcast"
//! start_s = 0
//! end_s = 600
//! link = { p_t_dbm = 60, g_t_dbi = 10, g_r_dbi = 2, fade_margin_db = 10, h_t = 150, h_r = 5, distance_m = 60000 }
//!
//! [wsdb]
//! available = [1, 3]
//! reserved = [{ channel = 2, class = "WirelessMic" }]
//! grant_lifetime_s = 60
//! deadline_ms = 10
//!
//! [[wsdb_events]]
//! at_s = 200
//! kind = "OutageStart"        # OutageEnd, SetAvailability, SetLatency, SetNullRuleset
//!
//! [waiver]
//! waiver_id = "EW-1"
//! max_duration_s = 3600
//! max_eirp_dbm = 30
//!
//! [[waiver_events]]
//! at_s = 0
//! kind = "Activate"           # or "Expire"
//!
//! [[kpm]]
//! start_s = 0
//! end_s = 600
//! ul_throughput_mbps = 20
//!
//! [[vessel_track]]
//! at_s = 0
//! lat = 18.4655
//! lon = -66.1057
//!
//! [twin]
//! priors = [{ channel = 9, alpha = 20, beta = 1 }]
//!
//! [policy]                    # optional, controller defaults otherwise
//! ```

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::compliance::EmergencyWaiver;
use crate::controller::{HysteresisPolicy, KpmSample};
use crate::paws::{GeoLocation, WsdbConfig, WsdbState};
use crate::propagation::{
    received_power_with_model, LinkBudgetParams, LinkGeometry, PathLossModel, DEFAULT_NOISE_FLOOR_DBM,
};
use crate::sensing::{validate_theta, TrainingRecipe, THETA_SENSE};
use crate::spectrum::{ChannelId, ChannelPlan, GroundTruthOccupancy, OccupancyEntry, SignalClass};
use crate::synth::DEFAULT_SAMPLE_RATE_HZ;
use crate::time::Timestamp;
use crate::twin::{DigitalTwin, TwinDoc};

use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Trained,
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WsdbEventKind {
    OutageStart,
    OutageEnd,
    SetAvailability { channel: ChannelId, available: bool },
    SetLatency(Duration),
    SetNullRuleset(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WsdbEvent {
    pub at: Timestamp,
    pub kind: WsdbEventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaiverEventKind {
    Activate,
    Expire,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaiverEvent {
    pub at: Timestamp,
    pub kind: WaiverEventKind,
}

/// Waiver parameters; activation time comes from the waiver events.
#[derive(Debug, Clone, PartialEq)]
pub struct WaiverTemplate {
    pub waiver_id: String,
    pub max_duration: Duration,
    pub min_confidence: f64,
    pub max_eirp_dbm: f64,
}

impl WaiverTemplate {
    pub fn activate(&self, at: Timestamp) -> EmergencyWaiver {
        EmergencyWaiver {
            waiver_id: self.waiver_id.clone(),
            activated_at: at,
            max_duration: self.max_duration,
            min_confidence: self.min_confidence,
            max_eirp_dbm: self.max_eirp_dbm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingSetup {
    pub classifier: ClassifierKind,
    pub theta: f64,
    pub capture_samples: usize,
    pub sample_rate_hz: f64,
    pub training: TrainingRecipe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackPoint {
    pub at: Timestamp,
    pub location: GeoLocation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub name: String,
    pub duration_s: f64,
    pub epoch_s: f64,
    pub seed: u64,
    pub plan: ChannelPlan,
    pub truth: GroundTruthOccupancy,
    pub sensing: SensingSetup,
    pub wsdb: WsdbState,
    pub wsdb_deadline: Duration,
    pub wsdb_events: Vec<WsdbEvent>,
    pub waiver: Option<WaiverTemplate>,
    pub waiver_events: Vec<WaiverEvent>,
    pub kpm_trace: Vec<KpmSegment>,
    pub vessel_track: Vec<TrackPoint>,
    pub twin: DigitalTwin,
    pub policy: HysteresisPolicy,
    pub device_id: String,
    pub antenna_height_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpmSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub ul_throughput_mbps: f64,
    #[serde(default = "half")]
    pub prb_utilization: f64,
    #[serde(default = "default_cqi")]
    pub cqi: u8,
    #[serde(default = "default_bler")]
    pub bler: f64,
    #[serde(default = "default_gpu")]
    pub gpu_utilization: f64,
    #[serde(default = "default_thermal")]
    pub thermal_headroom_c: f64,
}

fn half() -> f64 {
    0.5
}
fn default_cqi() -> u8 {
    12
}
fn default_bler() -> f64 {
    0.01
}
fn default_gpu() -> f64 {
    0.4
}
fn default_thermal() -> f64 {
    25.0
}

impl KpmSegment {
    pub fn sample(&self, t: Timestamp) -> KpmSample {
        KpmSample {
            t,
            ul_throughput_mbps: self.ul_throughput_mbps,
            prb_utilization: self.prb_utilization,
            cqi: self.cqi,
            bler: self.bler,
            gpu_utilization: self.gpu_utilization,
            thermal_headroom_c: self.thermal_headroom_c,
        }
    }
}

/// Default gateway position when no vessel track is given.
pub const DEFAULT_LOCATION: GeoLocation = GeoLocation { lat: 18.4655, lon: -66.1057 };
/// Uplink throughput assumed outside every KPM segment.
pub const DEFAULT_THROUGHPUT_MBPS: f64 = 20.0;

impl ScenarioScript {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let doc: ScriptDoc = toml::from_str(text).map_err(|e| ScenarioError::ScriptInvalid(e.to_string()))?;
        doc.try_into()
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::ScriptInvalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn epoch(&self) -> Duration {
        Duration::from_secs_f64(self.epoch_s)
    }

    pub fn epoch_count(&self) -> u64 {
        (self.duration_s / self.epoch_s + 1e-9).floor() as u64
    }

    pub fn epoch_time(&self, k: u64) -> Timestamp {
        Timestamp::from_secs_f64(k as f64 * self.epoch_s)
    }

    pub fn kpm_at(&self, t: Timestamp) -> KpmSample {
        let s = t.as_secs_f64();
        self.kpm_trace
            .iter()
            .rev()
            .find(|seg| seg.start_s <= s && s < seg.end_s)
            .map_or_else(|| KpmSample::nominal(t, DEFAULT_THROUGHPUT_MBPS), |seg| seg.sample(t))
    }

    /// Linear interpolation along the track, clamped at both ends.
    pub fn location_at(&self, t: Timestamp) -> GeoLocation {
        let track = &self.vessel_track;
        let Some(first) = track.first() else { return DEFAULT_LOCATION };
        if t <= first.at {
            return first.location;
        }
        for w in track.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if t < b.at {
                let f = (t.as_millis() - a.at.as_millis()) as f64 / (b.at.as_millis() - a.at.as_millis()) as f64;
                return GeoLocation {
                    lat: a.location.lat + f * (b.location.lat - a.location.lat),
                    lon: a.location.lon + f * (b.location.lon - a.location.lon),
                };
            }
        }
        track.last().map(|p| p.location).unwrap_or(DEFAULT_LOCATION)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptDoc {
    scenario: ScenarioSection,
    plan: ChannelPlan,
    #[serde(default)]
    sensing: SensingSection,
    #[serde(default)]
    truth: Vec<TruthEntry>,
    #[serde(default)]
    wsdb: WsdbSection,
    #[serde(default)]
    wsdb_events: Vec<WsdbEventDoc>,
    waiver: Option<WaiverSection>,
    #[serde(default)]
    waiver_events: Vec<WaiverEventDoc>,
    #[serde(default)]
    kpm: Vec<KpmSegment>,
    #[serde(default)]
    vessel_track: Vec<TrackDoc>,
    #[serde(default)]
    twin: TwinDoc,
    policy: Option<HysteresisPolicy>,
    #[serde(default)]
    device: DeviceSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    name: String,
    duration_s: f64,
    #[serde(default = "one")]
    epoch_s: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    #[allow(dead_code)]
    description: Option<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SensingSection {
    classifier: ClassifierKind,
    theta: f64,
    capture_samples: usize,
    sample_rate_hz: f64,
    training_examples_per_class: usize,
    training_snr_db: (f64, f64),
    training_seed: Option<u64>,
    training_augment: bool,
}

impl Default for SensingSection {
    fn default() -> Self {
        let r = TrainingRecipe::default();
        SensingSection {
            classifier: ClassifierKind::Trained,
            theta: THETA_SENSE,
            capture_samples: r.capture_samples,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            training_examples_per_class: r.examples_per_class,
            training_snr_db: r.snr_db,
            training_seed: None,
            training_augment: r.augment,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthEntry {
    channel: u32,
    class: SignalClass,
    snr_db: Option<f64>,
    link: Option<LinkDoc>,
    start_s: f64,
    end_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    p_t_dbm: f64,
    g_t_dbi: f64,
    g_r_dbi: f64,
    #[serde(default)]
    fade_margin_db: f64,
    h_t: f64,
    h_r: f64,
    distance_m: f64,
    #[serde(default)]
    path_loss: PathLossModel,
    #[serde(default = "noise_floor")]
    noise_floor_dbm: f64,
}

fn noise_floor() -> f64 {
    DEFAULT_NOISE_FLOOR_DBM
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct WsdbSection {
    ruleset_id: String,
    available: Vec<u32>,
    reserved: Vec<crate::paws::ReservedEntry>,
    outage: bool,
    latency_ms: u64,
    null_ruleset: bool,
    grant_lifetime_s: f64,
    max_eirp_dbm: f64,
    deadline_ms: u64,
}

impl Default for WsdbSection {
    fn default() -> Self {
        let c = WsdbConfig::default();
        WsdbSection {
            ruleset_id: c.ruleset_id,
            available: c.available,
            reserved: c.reserved,
            outage: c.outage,
            latency_ms: c.latency_ms,
            null_ruleset: c.null_ruleset,
            grant_lifetime_s: c.grant_lifetime_s,
            max_eirp_dbm: c.max_eirp_dbm,
            deadline_ms: 1000,
        }
    }
}

#[derive(Debug, Deserialize)]
struct WsdbEventDoc {
    at_s: f64,
    #[serde(flatten)]
    kind: WsdbEventKindDoc,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind")]
enum WsdbEventKindDoc {
    OutageStart,
    OutageEnd,
    SetAvailability { channel: u32, available: bool },
    SetLatency { latency_ms: u64 },
    SetNullRuleset { null_ruleset: bool },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaiverSection {
    waiver_id: String,
    max_duration_s: f64,
    #[serde(default = "theta")]
    min_confidence: f64,
    max_eirp_dbm: f64,
}

fn theta() -> f64 {
    THETA_SENSE
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaiverEventDoc {
    at_s: f64,
    kind: WaiverEventKind,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackDoc {
    at_s: f64,
    lat: f64,
    lon: f64,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DeviceSection {
    device_id: String,
    antenna_height_m: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection { device_id: "sidsense-gw-01".into(), antenna_height_m: 5.0 }
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::ScriptInvalid(msg.into())
}

impl TryFrom<ScriptDoc> for ScenarioScript {
    type Error = ScenarioError;

    fn try_from(doc: ScriptDoc) -> Result<Self, ScenarioError> {
        let sc = doc.scenario;
        if !(sc.duration_s.is_finite() && sc.duration_s >= 0.0) {
            return Err(invalid(format!("duration_s must be finite and non-negative, got {}", sc.duration_s)));
        }
        if !(sc.epoch_s.is_finite() && sc.epoch_s >= 0.001) {
            return Err(invalid(format!("epoch_s must be at least 1 ms, got {}", sc.epoch_s)));
        }
        let plan = doc.plan;
        let in_time = |s: f64, what: &str| -> Result<Timestamp, ScenarioError> {
            if s.is_finite() && (0.0..=sc.duration_s).contains(&s) {
                Ok(Timestamp::from_secs_f64(s))
            } else {
                Err(invalid(format!("{what} time {s} outside [0, {}]", sc.duration_s)))
            }
        };
        let in_plan = |ch: u32, what: &str| -> Result<ChannelId, ScenarioError> {
            let id = ChannelId(ch);
            if plan.contains(id) {
                Ok(id)
            } else {
                Err(invalid(format!("{what} channel {ch} not in plan of {} channels", plan.channel_count())))
            }
        };

        let mut truth = GroundTruthOccupancy::new();
        for e in doc.truth {
            let channel = in_plan(e.channel, "truth")?;
            let snr_db = match (e.snr_db, e.link) {
                (Some(s), None) if s.is_finite() => s,
                (None, Some(l)) => {
                    let geom = LinkGeometry {
                        h_t: l.h_t,
                        h_r: l.h_r,
                        distance_m: l.distance_m,
                        center_freq_hz: plan.channel_center_hz(channel).map_err(|e| invalid(e.to_string()))?,
                    };
                    let params =
                        LinkBudgetParams { p_t_dbm: l.p_t_dbm, g_t_dbi: l.g_t_dbi, g_r_dbi: l.g_r_dbi, fade_margin_db: l.fade_margin_db };
                    received_power_with_model(&l.path_loss, &params, &geom).map_err(|e| invalid(e.to_string()))?
                        - l.noise_floor_dbm
                }
                (None, None) if e.class == SignalClass::Vacant => 0.0,
                _ => return Err(invalid(format!("truth on channel {} needs exactly one of snr_db and link", e.channel))),
            };
            let entry = OccupancyEntry {
                channel,
                class: e.class,
                snr_db,
                start: in_time(e.start_s, "truth start")?,
                end: in_time(e.end_s, "truth end")?,
            };
            truth.push(entry).map_err(|e| invalid(e.to_string()))?;
        }

        let s = doc.sensing;
        let theta = validate_theta(s.theta).map_err(|e| invalid(e.to_string()))?;
        if s.capture_samples < crate::sensing::FFT_SIZE || !(s.sample_rate_hz.is_finite() && s.sample_rate_hz > 0.0) {
            return Err(invalid("capture_samples must be at least one FFT frame and sample_rate_hz positive"));
        }
        let sensing = SensingSetup {
            classifier: s.classifier,
            theta,
            capture_samples: s.capture_samples,
            sample_rate_hz: s.sample_rate_hz,
            training: TrainingRecipe {
                examples_per_class: s.training_examples_per_class,
                snr_db: s.training_snr_db,
                capture_samples: s.capture_samples,
                sample_rate_hz: s.sample_rate_hz,
                channel_width_hz: plan.channel_width_hz() as f64,
                seed: s.training_seed.unwrap_or(sc.seed ^ 0x51D5),
                augment: s.training_augment,
            },
        };

        let w = doc.wsdb;
        for ch in w.available.iter().chain(w.reserved.iter().map(|r| &r.channel)) {
            in_plan(*ch, "wsdb")?;
        }
        let wsdb = WsdbState::try_from(WsdbConfig {
            ruleset_id: w.ruleset_id,
            available: w.available,
            reserved: w.reserved,
            outage: w.outage,
            latency_ms: w.latency_ms,
            null_ruleset: w.null_ruleset,
            grant_lifetime_s: w.grant_lifetime_s,
            max_eirp_dbm: w.max_eirp_dbm,
        })
        .map_err(invalid)?;
        if w.deadline_ms == 0 {
            return Err(invalid("wsdb deadline_ms must be positive"));
        }

        let mut wsdb_events = Vec::with_capacity(doc.wsdb_events.len());
        for e in doc.wsdb_events {
            let kind = match e.kind {
                WsdbEventKindDoc::OutageStart => WsdbEventKind::OutageStart,
                WsdbEventKindDoc::OutageEnd => WsdbEventKind::OutageEnd,
                WsdbEventKindDoc::SetAvailability { channel, available } => {
                    WsdbEventKind::SetAvailability { channel: in_plan(channel, "wsdb event")?, available }
                }
                WsdbEventKindDoc::SetLatency { latency_ms } => WsdbEventKind::SetLatency(Duration::from_millis(latency_ms)),
                WsdbEventKindDoc::SetNullRuleset { null_ruleset } => WsdbEventKind::SetNullRuleset(null_ruleset),
            };
            wsdb_events.push(WsdbEvent { at: in_time(e.at_s, "wsdb event")?, kind });
        }
        wsdb_events.sort_by_key(|e| e.at);

        let waiver = match doc.waiver {
            Some(ws) => {
                let max_duration = Duration::try_from_secs_f64(ws.max_duration_s)
                    .map_err(|_| invalid(format!("max_duration_s {}", ws.max_duration_s)))?;
                // validates the parameters once, at an arbitrary activation time
                EmergencyWaiver::new(ws.waiver_id.clone(), Timestamp::ZERO, max_duration, ws.min_confidence, ws.max_eirp_dbm)
                    .map_err(|e| invalid(e.to_string()))?;
                Some(WaiverTemplate {
                    waiver_id: ws.waiver_id,
                    max_duration,
                    min_confidence: ws.min_confidence,
                    max_eirp_dbm: ws.max_eirp_dbm,
                })
            }
            None => None,
        };
        if waiver.is_none() && !doc.waiver_events.is_empty() {
            return Err(invalid("waiver_events need a [waiver] section"));
        }
        let mut waiver_events = Vec::with_capacity(doc.waiver_events.len());
        for e in doc.waiver_events {
            waiver_events.push(WaiverEvent { at: in_time(e.at_s, "waiver event")?, kind: e.kind });
        }
        waiver_events.sort_by_key(|e| e.at);

        for seg in &doc.kpm {
            if !(seg.start_s <= seg.end_s) {
                return Err(invalid(format!("kpm segment [{}, {}) is inverted", seg.start_s, seg.end_s)));
            }
            in_time(seg.start_s, "kpm start")?;
            in_time(seg.end_s, "kpm end")?;
            seg.sample(Timestamp::ZERO).validate().map_err(|e| invalid(e.to_string()))?;
        }

        let mut vessel_track = Vec::with_capacity(doc.vessel_track.len());
        for p in doc.vessel_track {
            let location = GeoLocation::new(p.lat, p.lon).map_err(|e| invalid(e.to_string()))?;
            vessel_track.push(TrackPoint { at: in_time(p.at_s, "vessel track")?, location });
        }
        if vessel_track.windows(2).any(|w| w[1].at <= w[0].at) {
            return Err(invalid("vessel track times must strictly increase"));
        }

        for p in &doc.twin.priors {
            in_plan(p.channel, "twin prior")?;
        }
        let twin = DigitalTwin::try_from(doc.twin).map_err(|e| invalid(e.to_string()))?;

        if !(doc.device.antenna_height_m.is_finite() && doc.device.antenna_height_m >= 0.0) {
            return Err(invalid("antenna_height_m must be non-negative"));
        }

        Ok(ScenarioScript {
            name: sc.name,
            duration_s: sc.duration_s,
            epoch_s: sc.epoch_s,
            seed: sc.seed,
            plan,
            truth,
            sensing,
            wsdb,
            wsdb_deadline: Duration::from_millis(w.deadline_ms),
            wsdb_events,
            waiver,
            waiver_events,
            kpm_trace: doc.kpm,
            vessel_track,
            twin,
            policy: doc.policy.unwrap_or_default(),
            device_id: doc.device.device_id,
            antenna_height_m: doc.device.antenna_height_m,
        })
    }
}
