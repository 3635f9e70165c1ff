//! PAWS (RFC 7545 subset) client and an embeddable mock whitespace database.
//!
//! Only `INIT` and `AVAIL_SPECTRUM` are implemented. Device registration,
//! spectrum-use notification and batch queries are not. Messages travel as
//! JSON-RPC 2.0 envelopes, one per line; see [`wire`] for the schema.
//!
//! The client never retries on its own. A failed query surfaces as
//! [`PawsError::Unavailable`] and the caller decides when to ask again.

mod client;
mod server;
pub mod wire;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::{ChannelId, SignalClass};
use crate::time::Timestamp;

pub use client::{admin_request, InProcessTransport, PawsClient, TcpTransport, Transport};
pub use server::{serve_wsdb, MockWsdb, ReservedEntry, ServerClock, WsdbConfig, WsdbServer, WsdbState};
pub use wire::{AdminCommand, PawsResponse, Reply, RpcCall, RpcError, SpectrumReply};

/// Default EIRP cap written into every grant.
pub const DEFAULT_MAX_EIRP_DBM: f64 = 36.0;

/// Default grant lifetime (12 h).
pub const DEFAULT_GRANT_LIFETIME: std::time::Duration = std::time::Duration::from_secs(12 * 3600);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PawsError {
    #[error("whitespace database unavailable: {0}")]
    Unavailable(UnavailableCause),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("client not initialised")]
    NotInitialized,
    #[error("invalid location ({lat}, {lon})")]
    InvalidLocation { lat: f64, lon: f64 },
    #[error("cannot bind {endpoint}: {reason}")]
    BindFailure { endpoint: String, reason: String },
    #[error("server rejected request: {code} {message}")]
    Rejected { code: i64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnavailableCause {
    Timeout,
    ConnectionRefused,
    NullRuleset,
}

impl fmt::Display for UnavailableCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            UnavailableCause::Timeout => "timeout",
            UnavailableCause::ConnectionRefused => "connection refused",
            UnavailableCause::NullRuleset => "no ruleset for location",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoLocation {
    pub lat: f64,
    pub lon: f64,
}

impl GeoLocation {
    pub fn new(lat: f64, lon: f64) -> Result<Self, PawsError> {
        let loc = GeoLocation { lat, lon };
        if loc.is_valid() {
            Ok(loc)
        } else {
            Err(PawsError::InvalidLocation { lat, lon })
        }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PawsMethod {
    Init,
    GetSpectrum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PawsRequest {
    pub method: PawsMethod,
    pub device_id: String,
    pub location: GeoLocation,
    pub antenna_height_m: f64,
    pub request_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PawsGrant {
    pub channel: ChannelId,
    pub max_eirp_dbm: f64,
    pub granted_at: Timestamp,
    pub expires_at: Timestamp,
    pub ruleset_id: String,
}

/// A channel the database withholds, with the incumbent it protects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reservation {
    pub channel: ChannelId,
    pub incumbent: SignalClass,
}

/// True iff the grant is for `ch` and `now` lies in `[granted_at, expires_at)`.
pub fn grant_valid(grant: &PawsGrant, now: Timestamp, ch: ChannelId) -> bool {
    grant.channel == ch && grant.granted_at <= now && now < grant.expires_at
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grant(ch: u32, from: u64, to: u64) -> PawsGrant {
        PawsGrant {
            channel: ChannelId(ch),
            max_eirp_dbm: 36.0,
            granted_at: Timestamp(from),
            expires_at: Timestamp(to),
            ruleset_id: "T".into(),
        }
    }

    #[test]
    fn grant_window_is_half_open() {
        let g = grant(7, 1_000, 5_000);
        assert!(grant_valid(&g, Timestamp(1_000), ChannelId(7)));
        assert!(grant_valid(&g, Timestamp(4_999), ChannelId(7)));
        assert!(!grant_valid(&g, Timestamp(5_000), ChannelId(7)));
        assert!(!grant_valid(&g, Timestamp(999), ChannelId(7)));
        assert!(!grant_valid(&g, Timestamp(2_000), ChannelId(3)));
    }

    #[test]
    fn location_bounds() {
        assert!(GeoLocation::new(90.0, -180.0).is_ok());
        assert!(GeoLocation::new(90.1, 0.0).is_err());
        assert!(GeoLocation::new(0.0, 180.5).is_err());
        assert!(GeoLocation::new(f64::NAN, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn expiry_is_monotone(from in 0u64..10_000, life in 1u64..10_000, t1 in 0u64..30_000, dt in 1u64..30_000) {
            let g = grant(1, from, from + life);
            let t1 = Timestamp(t1);
            if !grant_valid(&g, t1, ChannelId(1)) && t1 >= g.expires_at {
                prop_assert!(!grant_valid(&g, Timestamp(t1.0 + dt), ChannelId(1)));
            }
        }
    }
}
