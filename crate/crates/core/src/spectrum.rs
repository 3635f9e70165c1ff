//! TVWS band plans, channel identifiers and scripted ground-truth occupancy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

pub const MHZ: u64 = 1_000_000;

/// Lower edge of the UHF TV white space allocation.
pub const TVWS_BAND_START_HZ: u64 = 470 * MHZ;
/// Upper edge of the UHF TV white space allocation.
pub const TVWS_BAND_END_HZ: u64 = 698 * MHZ;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("channel width {0} Hz is not one of 6, 7 or 8 MHz")]
    InvalidWidth(u64),
    #[error("band [{start}, {end}) Hz holds no complete channel")]
    EmptyBand { start: u64, end: u64 },
    #[error("channel {index} out of range for a plan with {count} channels")]
    ChannelOutOfRange { index: u32, count: u32 },
}

/// Index of a channel within a [`ChannelPlan`], 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(pub u32);

impl ChannelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ch{}", self.0)
    }
}

/// A band cut into equal-width channels. Leftover bandwidth narrower than
/// one channel at the top edge is not used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan", into = "RawPlan")]
pub struct ChannelPlan {
    band_start_hz: u64,
    band_end_hz: u64,
    channel_width_hz: u64,
    count: u32,
}

#[derive(Serialize, Deserialize)]
struct RawPlan {
    band_start_hz: u64,
    band_end_hz: u64,
    channel_width_hz: u64,
}

impl TryFrom<RawPlan> for ChannelPlan {
    type Error = PlanError;

    fn try_from(raw: RawPlan) -> Result<Self, PlanError> {
        build_plan(raw.band_start_hz, raw.band_end_hz, raw.channel_width_hz)
    }
}

impl From<ChannelPlan> for RawPlan {
    fn from(p: ChannelPlan) -> Self {
        RawPlan {
            band_start_hz: p.band_start_hz,
            band_end_hz: p.band_end_hz,
            channel_width_hz: p.channel_width_hz,
        }
    }
}

/// Builds a plan over `[band_start_hz, band_end_hz)` with floor-division
/// channel count.
pub fn build_plan(band_start_hz: u64, band_end_hz: u64, channel_width_hz: u64) -> Result<ChannelPlan, PlanError> {
    if ![6 * MHZ, 7 * MHZ, 8 * MHZ].contains(&channel_width_hz) {
        return Err(PlanError::InvalidWidth(channel_width_hz));
    }
    let empty = PlanError::EmptyBand { start: band_start_hz, end: band_end_hz };
    if band_start_hz >= band_end_hz {
        return Err(empty);
    }
    let count = (band_end_hz - band_start_hz) / channel_width_hz;
    if count == 0 {
        return Err(empty);
    }
    Ok(ChannelPlan { band_start_hz, band_end_hz, channel_width_hz, count: count as u32 })
}

impl ChannelPlan {
    /// 470–698 MHz in 6 MHz channels.
    pub fn tvws_default() -> Self {
        build_plan(TVWS_BAND_START_HZ, TVWS_BAND_END_HZ, 6 * MHZ).expect("default plan is valid")
    }

    pub fn band_start_hz(&self) -> u64 {
        self.band_start_hz
    }

    pub fn band_end_hz(&self) -> u64 {
        self.band_end_hz
    }

    pub fn channel_width_hz(&self) -> u64 {
        self.channel_width_hz
    }

    pub fn channel_count(&self) -> u32 {
        self.count
    }

    pub fn channel(&self, index: u32) -> Result<ChannelId, PlanError> {
        if index < self.count {
            Ok(ChannelId(index))
        } else {
            Err(PlanError::ChannelOutOfRange { index, count: self.count })
        }
    }

    pub fn contains(&self, ch: ChannelId) -> bool {
        ch.0 < self.count
    }

    pub fn channels(&self) -> impl Iterator<Item = ChannelId> {
        (0..self.count).map(ChannelId)
    }

    /// `[low, high)` edges of a channel in Hz.
    pub fn channel_edges_hz(&self, ch: ChannelId) -> Result<(u64, u64), PlanError> {
        self.channel(ch.0)?;
        let low = self.band_start_hz + u64::from(ch.0) * self.channel_width_hz;
        Ok((low, low + self.channel_width_hz))
    }

    pub fn channel_center_hz(&self, ch: ChannelId) -> Result<f64, PlanError> {
        channel_center_hz(self, ch)
    }
}

pub fn channel_center_hz(plan: &ChannelPlan, ch: ChannelId) -> Result<f64, PlanError> {
    let (low, _) = plan.channel_edges_hz(ch)?;
    Ok(low as f64 + plan.channel_width_hz as f64 / 2.0)
}

/// The four-way channel taxonomy. `Vacant` is hypothesis H0, every other
/// class is H1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SignalClass {
    TvBroadcast,
    WirelessMic,
    OtherTvws,
    Vacant,
}

impl SignalClass {
    pub const ALL: [SignalClass; 4] =
        [SignalClass::TvBroadcast, SignalClass::WirelessMic, SignalClass::OtherTvws, SignalClass::Vacant];

    pub fn index(self) -> usize {
        match self {
            SignalClass::TvBroadcast => 0,
            SignalClass::WirelessMic => 1,
            SignalClass::OtherTvws => 2,
            SignalClass::Vacant => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<SignalClass> {
        Self::ALL.get(i).copied()
    }

    /// True under H1 (something is transmitting).
    pub fn is_occupied(self) -> bool {
        self != SignalClass::Vacant
    }

    pub fn name(self) -> &'static str {
        match self {
            SignalClass::TvBroadcast => "TvBroadcast",
            SignalClass::WirelessMic => "WirelessMic",
            SignalClass::OtherTvws => "OtherTvws",
            SignalClass::Vacant => "Vacant",
        }
    }
}

impl fmt::Display for SignalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown signal class {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("occupancy interval for {channel} ends ({end}) before it starts ({start})")]
pub struct IntervalError {
    pub channel: ChannelId,
    pub start: Timestamp,
    pub end: Timestamp,
}

/// One scripted transmission: `class` is active on `channel` over
/// `[start, end)` at `snr_db`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyEntry {
    pub channel: ChannelId,
    pub class: SignalClass,
    pub snr_db: f64,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl OccupancyEntry {
    pub fn covers(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }
}

/// Scripted per-channel activity. Where intervals on one channel overlap,
/// the entry added last wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthOccupancy {
    entries: Vec<OccupancyEntry>,
}

impl GroundTruthOccupancy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<OccupancyEntry>) -> Result<Self, IntervalError> {
        let mut truth = Self::new();
        for e in entries {
            truth.push(e)?;
        }
        Ok(truth)
    }

    pub fn push(&mut self, entry: OccupancyEntry) -> Result<(), IntervalError> {
        if entry.end < entry.start {
            return Err(IntervalError { channel: entry.channel, start: entry.start, end: entry.end });
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[OccupancyEntry] {
        &self.entries
    }

    /// The entry in force on `ch` at `t`, if any.
    pub fn active_entry(&self, ch: ChannelId, t: Timestamp) -> Option<&OccupancyEntry> {
        self.entries.iter().rev().find(|e| e.channel == ch && e.covers(t))
    }
}

pub fn occupancy_at(truth: &GroundTruthOccupancy, ch: ChannelId, t: Timestamp) -> SignalClass {
    truth.active_entry(ch, t).map_or(SignalClass::Vacant, |e| e.class)
}
