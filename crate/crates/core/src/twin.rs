//! Occupancy priors and transmitter protection zones.
//!
//! Each channel carries a Beta(alpha, beta) belief over its occupancy
//! probability, updated one sensing verdict at a time. Protection zones are
//! circles around known transmitters. The twin is advisory: its numbers are
//! recorded and used for tie-breaking, never to veto a gate decision.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paws::GeoLocation;
use crate::spectrum::ChannelId;

/// Mean Earth radius (IUGG), metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TwinError {
    #[error("Beta parameters must be finite and positive, got ({alpha}, {beta})")]
    InvalidPrior { alpha: f64, beta: f64 },
    #[error("protection radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("invalid zone centre ({lat}, {lon})")]
    InvalidLocation { lat: f64, lon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPrior {
    pub const UNIFORM: BetaPrior = BetaPrior { alpha: 1.0, beta: 1.0 };

    pub fn new(alpha: f64, beta: f64) -> Result<Self, TwinError> {
        if alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0 {
            Ok(BetaPrior { alpha, beta })
        } else {
            Err(TwinError::InvalidPrior { alpha, beta })
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Per-channel Beta priors; unseen channels are uniform.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OccupancyPrior {
    channels: BTreeMap<ChannelId, BetaPrior>,
}

impl OccupancyPrior {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, ch: ChannelId) -> BetaPrior {
        self.channels.get(&ch).copied().unwrap_or(BetaPrior::UNIFORM)
    }

    pub fn set(&mut self, ch: ChannelId, prior: BetaPrior) {
        self.channels.insert(ch, prior);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ChannelId, BetaPrior)> + '_ {
        self.channels.iter().map(|(&c, &p)| (c, p))
    }

    pub fn observe(&mut self, ch: ChannelId, occupied: bool) {
        let p = self.channels.entry(ch).or_insert(BetaPrior::UNIFORM);
        if occupied {
            p.alpha += 1.0;
        } else {
            p.beta += 1.0;
        }
    }
}

/// Conjugate update: occupied adds one to alpha, vacant one to beta.
pub fn update_prior(prior: &OccupancyPrior, ch: ChannelId, observed_occupied: bool) -> OccupancyPrior {
    let mut next = prior.clone();
    next.observe(ch, observed_occupied);
    next
}

/// Posterior mean occupancy.
pub fn prior_occupancy(prior: &OccupancyPrior, ch: ChannelId) -> f64 {
    prior.get(ch).mean()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtectionZone {
    pub center: GeoLocation,
    pub channel: ChannelId,
    pub radius_m: f64,
}

impl ProtectionZone {
    pub fn new(center: GeoLocation, channel: ChannelId, radius_m: f64) -> Result<Self, TwinError> {
        if !center.is_valid() {
            return Err(TwinError::InvalidLocation { lat: center.lat, lon: center.lon });
        }
        if !(radius_m.is_finite() && radius_m > 0.0) {
            return Err(TwinError::InvalidRadius(radius_m));
        }
        Ok(ProtectionZone { center, channel, radius_m })
    }
}

/// Haversine great-circle distance on a spherical Earth.
pub fn great_circle_m(a: GeoLocation, b: GeoLocation) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// True iff `location` is strictly inside some zone on `ch`.
pub fn in_protection_zone(zones: &[ProtectionZone], location: GeoLocation, ch: ChannelId) -> bool {
    zones.iter().any(|z| z.channel == ch && great_circle_m(z.center, location) < z.radius_m)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DigitalTwin {
    pub prior: OccupancyPrior,
    pub zones: Vec<ProtectionZone>,
}

impl DigitalTwin {
    pub fn observe(&mut self, ch: ChannelId, occupied: bool) {
        self.prior.observe(ch, occupied);
    }

    pub fn occupancy(&self, ch: ChannelId) -> f64 {
        prior_occupancy(&self.prior, ch)
    }

    pub fn protected(&self, location: GeoLocation, ch: ChannelId) -> bool {
        in_protection_zone(&self.zones, location, ch)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&TwinDoc::from(self)).expect("twin state always serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let doc: TwinDoc = toml::from_str(text).map_err(|e| e.to_string())?;
        DigitalTwin::try_from(doc).map_err(|e| e.to_string())
    }
}

/// Warm-start document.
///
/// ```toml
/// [[priors]]
/// channel = 3
/// alpha = 20.0
/// beta = 1.0
///
/// [[zones]]
/// lat = 18.47
/// lon = -66.11
/// channel = 5
/// radius_m = 30000.0
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinDoc {
    pub priors: Vec<PriorEntry>,
    pub zones: Vec<ZoneEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorEntry {
    pub channel: u32,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneEntry {
    pub lat: f64,
    pub lon: f64,
    pub channel: u32,
    pub radius_m: f64,
}

impl From<&DigitalTwin> for TwinDoc {
    fn from(t: &DigitalTwin) -> Self {
        TwinDoc {
            priors: t.prior.iter().map(|(c, p)| PriorEntry { channel: c.0, alpha: p.alpha, beta: p.beta }).collect(),
            zones: t
                .zones
                .iter()
                .map(|z| ZoneEntry { lat: z.center.lat, lon: z.center.lon, channel: z.channel.0, radius_m: z.radius_m })
                .collect(),
        }
    }
}

impl TryFrom<TwinDoc> for DigitalTwin {
    type Error = TwinError;

    fn try_from(doc: TwinDoc) -> Result<Self, TwinError> {
        let mut twin = DigitalTwin::default();
        for p in doc.priors {
            twin.prior.set(ChannelId(p.channel), BetaPrior::new(p.alpha, p.beta)?);
        }
        for z in doc.zones {
            twin.zones.push(ProtectionZone::new(GeoLocation { lat: z.lat, lon: z.lon }, ChannelId(z.channel), z.radius_m)?);
        }
        Ok(twin)
    }
}
