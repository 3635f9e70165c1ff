//! JSON-RPC 2.0 envelope for the PAWS subset.
//!
//! Every message is a compact JSON object on a single line. Field order is
//! fixed, so encoding a decoded message reproduces the original bytes.
//!
//! Methods:
//!
//! | method                     | params                                                     |
//! |----------------------------|------------------------------------------------------------|
//! | `spectrum.paws.init`       | `type` `INIT_REQ`, `version`, `deviceDesc`, `location`, `antenna` |
//! | `spectrum.paws.getSpectrum`| same, with `type` `AVAIL_SPECTRUM_REQ`                     |
//! | `admin.setOutage`          | `{"outage": bool}`                                         |
//! | `admin.setLatency`         | `{"latencyMs": u64}`                                       |
//! | `admin.setAvailability`    | `{"channel": u32, "available": bool}`                      |
//! | `admin.setNullRuleset`     | `{"nullRuleset": bool}`                                    |
//!
//! Results carry a `type` tag: `INIT_RESP`, `AVAIL_SPECTRUM_RESP` or
//! `ADMIN_ACK`. `AVAIL_SPECTRUM_RESP` lists one `spectrumSchedules` entry per
//! granted channel and a non-standard `reservations` list naming the incumbent
//! behind each withheld channel. Times are milliseconds on the server clock.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{GeoLocation, PawsError, PawsGrant, PawsMethod, PawsRequest, Reservation};
use crate::spectrum::{ChannelId, SignalClass};
use crate::time::Timestamp;

pub const JSONRPC_VERSION: &str = "2.0";
pub const PAWS_VERSION: &str = "1.0";

pub const METHOD_INIT: &str = "spectrum.paws.init";
pub const METHOD_GET_SPECTRUM: &str = "spectrum.paws.getSpectrum";
pub const METHOD_SET_OUTAGE: &str = "admin.setOutage";
pub const METHOD_SET_LATENCY: &str = "admin.setLatency";
pub const METHOD_SET_AVAILABILITY: &str = "admin.setAvailability";
pub const METHOD_SET_NULL_RULESET: &str = "admin.setNullRuleset";

// RFC 7545 section 5.17 codes plus the JSON-RPC generic ones.
pub const ERR_OUTSIDE_COVERAGE: i64 = -104;
pub const ERR_INVALID_VALUE: i64 = -302;
pub const ERR_PARSE: i64 = -32700;
pub const ERR_METHOD_NOT_FOUND: i64 = -32601;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdminCommand {
    SetOutage(bool),
    SetLatency(Duration),
    SetAvailability { channel: ChannelId, available: bool },
    SetNullRuleset(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RpcCall {
    Paws(PawsRequest),
    Admin { id: u64, command: AdminCommand },
}

impl RpcCall {
    pub fn id(&self) -> u64 {
        match self {
            RpcCall::Paws(r) => r.request_id,
            RpcCall::Admin { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReply {
    pub timestamp: Timestamp,
    pub ruleset_id: String,
    pub grants: Vec<PawsGrant>,
    pub reservations: Vec<Reservation>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Init { ruleset_ids: Vec<String> },
    Spectrum(SpectrumReply),
    AdminAck,
    Error(RpcError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PawsResponse {
    pub id: u64,
    pub reply: Reply,
}

#[derive(Serialize)]
struct OutEnvelope<'a, P: Serialize> {
    jsonrpc: &'a str,
    method: &'a str,
    params: P,
    id: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InEnvelope {
    jsonrpc: String,
    method: String,
    params: serde_json::Value,
    id: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PawsParams {
    #[serde(rename = "type")]
    kind: String,
    version: String,
    device_desc: DeviceDesc,
    location: WireLocation,
    antenna: Antenna,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct DeviceDesc {
    serial_number: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireLocation {
    point: Point,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Point {
    center: Center,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Center {
    latitude: f64,
    longitude: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Antenna {
    height: f64,
    height_type: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutageParams {
    outage: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct LatencyParams {
    latency_ms: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AvailabilityParams {
    channel: u32,
    available: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NullRulesetParams {
    null_ruleset: bool,
}

#[derive(Serialize, Deserialize)]
struct ResponseEnvelope {
    jsonrpc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    result: Option<ResultBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<RpcError>,
    id: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type")]
enum ResultBody {
    #[serde(rename = "INIT_RESP", rename_all = "camelCase")]
    Init { version: String, ruleset_infos: Vec<RulesetInfo> },
    #[serde(rename = "AVAIL_SPECTRUM_RESP", rename_all = "camelCase")]
    Spectrum {
        version: String,
        timestamp: u64,
        ruleset_info: RulesetInfo,
        spectrum_schedules: Vec<Schedule>,
        reservations: Vec<WireReservation>,
    },
    #[serde(rename = "ADMIN_ACK")]
    AdminAck {},
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RulesetInfo {
    ruleset_id: String,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Schedule {
    channel: u32,
    start_time_ms: u64,
    stop_time_ms: u64,
    max_eirp_dbm: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireReservation {
    channel: u32,
    incumbent: String,
}

fn to_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("wire types always serialise")
}

fn rpc_error(code: i64, message: impl Into<String>) -> RpcError {
    RpcError { code, message: message.into() }
}

pub fn encode_call(call: &RpcCall) -> Vec<u8> {
    match call {
        RpcCall::Paws(req) => encode_request(req),
        RpcCall::Admin { id, command } => {
            let id = *id;
            match *command {
                AdminCommand::SetOutage(outage) => to_bytes(&OutEnvelope {
                    jsonrpc: JSONRPC_VERSION,
                    method: METHOD_SET_OUTAGE,
                    params: OutageParams { outage },
                    id,
                }),
                AdminCommand::SetLatency(latency) => to_bytes(&OutEnvelope {
                    jsonrpc: JSONRPC_VERSION,
                    method: METHOD_SET_LATENCY,
                    params: LatencyParams { latency_ms: latency.as_millis() as u64 },
                    id,
                }),
                AdminCommand::SetAvailability { channel, available } => to_bytes(&OutEnvelope {
                    jsonrpc: JSONRPC_VERSION,
                    method: METHOD_SET_AVAILABILITY,
                    params: AvailabilityParams { channel: channel.0, available },
                    id,
                }),
                AdminCommand::SetNullRuleset(null_ruleset) => to_bytes(&OutEnvelope {
                    jsonrpc: JSONRPC_VERSION,
                    method: METHOD_SET_NULL_RULESET,
                    params: NullRulesetParams { null_ruleset },
                    id,
                }),
            }
        }
    }
}

pub fn encode_request(req: &PawsRequest) -> Vec<u8> {
    let (method, kind) = match req.method {
        PawsMethod::Init => (METHOD_INIT, "INIT_REQ"),
        PawsMethod::GetSpectrum => (METHOD_GET_SPECTRUM, "AVAIL_SPECTRUM_REQ"),
    };
    to_bytes(&OutEnvelope {
        jsonrpc: JSONRPC_VERSION,
        method,
        params: PawsParams {
            kind: kind.to_string(),
            version: PAWS_VERSION.to_string(),
            device_desc: DeviceDesc { serial_number: req.device_id.clone() },
            location: WireLocation {
                point: Point { center: Center { latitude: req.location.lat, longitude: req.location.lon } },
            },
            antenna: Antenna { height: req.antenna_height_m, height_type: "AGL".to_string() },
        },
        id: req.request_id,
    })
}

fn params<T: for<'de> Deserialize<'de>>(v: serde_json::Value) -> Result<T, RpcError> {
    serde_json::from_value(v).map_err(|e| rpc_error(ERR_INVALID_VALUE, e.to_string()))
}

/// Parses one request line. The error carries the code a server should answer with.
pub fn decode_call(bytes: &[u8]) -> Result<RpcCall, RpcError> {
    let env: InEnvelope = serde_json::from_slice(bytes).map_err(|e| rpc_error(ERR_PARSE, e.to_string()))?;
    if env.jsonrpc != JSONRPC_VERSION {
        return Err(rpc_error(ERR_INVALID_VALUE, format!("jsonrpc {}", env.jsonrpc)));
    }
    let id = env.id;
    let admin = |command| Ok(RpcCall::Admin { id, command });
    match env.method.as_str() {
        METHOD_INIT | METHOD_GET_SPECTRUM => {
            let p: PawsParams = params(env.params)?;
            let (method, kind) = if env.method == METHOD_INIT {
                (PawsMethod::Init, "INIT_REQ")
            } else {
                (PawsMethod::GetSpectrum, "AVAIL_SPECTRUM_REQ")
            };
            if p.kind != kind || p.version != PAWS_VERSION || p.antenna.height_type != "AGL" {
                return Err(rpc_error(ERR_INVALID_VALUE, format!("unexpected {} / {} / {}", p.kind, p.version, p.antenna.height_type)));
            }
            Ok(RpcCall::Paws(PawsRequest {
                method,
                device_id: p.device_desc.serial_number,
                location: GeoLocation { lat: p.location.point.center.latitude, lon: p.location.point.center.longitude },
                antenna_height_m: p.antenna.height,
                request_id: id,
            }))
        }
        METHOD_SET_OUTAGE => admin(AdminCommand::SetOutage(params::<OutageParams>(env.params)?.outage)),
        METHOD_SET_LATENCY => {
            admin(AdminCommand::SetLatency(Duration::from_millis(params::<LatencyParams>(env.params)?.latency_ms)))
        }
        METHOD_SET_AVAILABILITY => {
            let p: AvailabilityParams = params(env.params)?;
            admin(AdminCommand::SetAvailability { channel: ChannelId(p.channel), available: p.available })
        }
        METHOD_SET_NULL_RULESET => {
            admin(AdminCommand::SetNullRuleset(params::<NullRulesetParams>(env.params)?.null_ruleset))
        }
        other => Err(rpc_error(ERR_METHOD_NOT_FOUND, format!("unknown method {other}"))),
    }
}

pub fn encode_response(resp: &PawsResponse) -> Vec<u8> {
    let (result, error) = match &resp.reply {
        Reply::Init { ruleset_ids } => (
            Some(ResultBody::Init {
                version: PAWS_VERSION.to_string(),
                ruleset_infos: ruleset_ids.iter().map(|r| RulesetInfo { ruleset_id: r.clone() }).collect(),
            }),
            None,
        ),
        Reply::Spectrum(s) => (
            Some(ResultBody::Spectrum {
                version: PAWS_VERSION.to_string(),
                timestamp: s.timestamp.as_millis(),
                ruleset_info: RulesetInfo { ruleset_id: s.ruleset_id.clone() },
                spectrum_schedules: s
                    .grants
                    .iter()
                    .map(|g| Schedule {
                        channel: g.channel.0,
                        start_time_ms: g.granted_at.as_millis(),
                        stop_time_ms: g.expires_at.as_millis(),
                        max_eirp_dbm: g.max_eirp_dbm,
                    })
                    .collect(),
                reservations: s
                    .reservations
                    .iter()
                    .map(|r| WireReservation { channel: r.channel.0, incumbent: r.incumbent.name().to_string() })
                    .collect(),
            }),
            None,
        ),
        Reply::AdminAck => (Some(ResultBody::AdminAck {}), None),
        Reply::Error(e) => (None, Some(e.clone())),
    };
    to_bytes(&ResponseEnvelope { jsonrpc: JSONRPC_VERSION.to_string(), result, error, id: resp.id })
}

pub fn decode_response(bytes: &[u8]) -> Result<PawsResponse, PawsError> {
    let proto = |m: String| PawsError::Protocol(m);
    let env: ResponseEnvelope = serde_json::from_slice(bytes).map_err(|e| proto(e.to_string()))?;
    if env.jsonrpc != JSONRPC_VERSION {
        return Err(proto(format!("jsonrpc {}", env.jsonrpc)));
    }
    let reply = match (env.result, env.error) {
        (Some(_), Some(_)) | (None, None) => return Err(proto("need exactly one of result and error".into())),
        (None, Some(e)) => Reply::Error(e),
        (Some(ResultBody::AdminAck {}), None) => Reply::AdminAck,
        (Some(ResultBody::Init { version, ruleset_infos }), None) => {
            check_version(&version)?;
            Reply::Init { ruleset_ids: ruleset_infos.into_iter().map(|r| r.ruleset_id).collect() }
        }
        (Some(ResultBody::Spectrum { version, timestamp, ruleset_info, spectrum_schedules, reservations }), None) => {
            check_version(&version)?;
            let mut grants = Vec::with_capacity(spectrum_schedules.len());
            for s in spectrum_schedules {
                if s.stop_time_ms <= s.start_time_ms {
                    return Err(proto(format!("schedule for channel {} ends before it starts", s.channel)));
                }
                if !s.max_eirp_dbm.is_finite() {
                    return Err(proto(format!("non-finite EIRP for channel {}", s.channel)));
                }
                grants.push(PawsGrant {
                    channel: ChannelId(s.channel),
                    max_eirp_dbm: s.max_eirp_dbm,
                    granted_at: Timestamp(s.start_time_ms),
                    expires_at: Timestamp(s.stop_time_ms),
                    ruleset_id: ruleset_info.ruleset_id.clone(),
                });
            }
            let reservations = reservations
                .into_iter()
                .map(|r| {
                    let incumbent: SignalClass = r.incumbent.parse().map_err(|_| proto(format!("unknown incumbent {}", r.incumbent)))?;
                    Ok(Reservation { channel: ChannelId(r.channel), incumbent })
                })
                .collect::<Result<Vec<_>, PawsError>>()?;
            Reply::Spectrum(SpectrumReply {
                timestamp: Timestamp(timestamp),
                ruleset_id: ruleset_info.ruleset_id,
                grants,
                reservations,
            })
        }
    };
    Ok(PawsResponse { id: env.id, reply })
}

fn check_version(v: &str) -> Result<(), PawsError> {
    if v == PAWS_VERSION {
        Ok(())
    } else {
        Err(PawsError::Protocol(format!("unsupported PAWS version {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn request(method: PawsMethod) -> PawsRequest {
        PawsRequest {
            method,
            device_id: "uav-gw-01".into(),
            location: GeoLocation { lat: 18.4655, lon: -66.1057 },
            antenna_height_m: 5.0,
            request_id: 3,
        }
    }

    #[test]
    fn request_layout() {
        let bytes = encode_request(&request(PawsMethod::GetSpectrum));
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            r#"{"jsonrpc":"2.0","method":"spectrum.paws.getSpectrum","params":{"type":"AVAIL_SPECTRUM_REQ","version":"1.0","deviceDesc":{"serialNumber":"uav-gw-01"},"location":{"point":{"center":{"latitude":18.4655,"longitude":-66.1057}}},"antenna":{"height":5.0,"heightType":"AGL"}},"id":3}"#
        );
    }

    #[test]
    fn mismatched_type_rejected() {
        let bytes = String::from_utf8(encode_request(&request(PawsMethod::Init))).unwrap().replace("INIT_REQ", "AVAIL_SPECTRUM_REQ");
        assert_eq!(decode_call(bytes.as_bytes()).unwrap_err().code, ERR_INVALID_VALUE);
        assert_eq!(decode_call(b"{nope").unwrap_err().code, ERR_PARSE);
        let unknown = br#"{"jsonrpc":"2.0","method":"spectrum.paws.register","params":{},"id":1}"#;
        assert_eq!(decode_call(unknown).unwrap_err().code, ERR_METHOD_NOT_FOUND);
    }

    #[test]
    fn malformed_responses() {
        for bad in [
            r#"{"jsonrpc":"2.0","id":1}"#,
            r#"{"jsonrpc":"1.0","result":{"type":"ADMIN_ACK"},"id":1}"#,
            r#"{"jsonrpc":"2.0","result":{"type":"AVAIL_SPECTRUM_RESP","version":"1.0","timestamp":0,"rulesetInfo":{"rulesetId":"x"},"spectrumSchedules":[{"channel":1,"startTimeMs":5,"stopTimeMs":5,"maxEirpDbm":36.0}],"reservations":[]},"id":1}"#,
            r#"{"jsonrpc":"2.0","result":{"type":"AVAIL_SPECTRUM_RESP","version":"1.0","timestamp":0,"rulesetInfo":{"rulesetId":"x"},"spectrumSchedules":[],"reservations":[{"channel":1,"incumbent":"Radar"}]},"id":1}"#,
            r#"{"jsonrpc":"2.0","result":{"type":"INIT_RESP","version":"2.0","rulesetInfos":[]},"id":1}"#,
        ] {
            assert!(matches!(decode_response(bad.as_bytes()), Err(PawsError::Protocol(_))), "{bad}");
        }
    }

    fn class() -> impl Strategy<Value = SignalClass> {
        (0usize..4).prop_map(|i| SignalClass::from_index(i).unwrap())
    }

    proptest! {
        #[test]
        fn call_round_trip(
            lat in -90.0f64..=90.0, lon in -180.0f64..=180.0, h in 0.0f64..500.0,
            id in any::<u64>(), dev in "[a-z0-9-]{1,16}", init in any::<bool>(),
            admin in 0u8..5, flag in any::<bool>(), ms in 0u64..100_000, ch in 0u32..64,
        ) {
            let call = match admin {
                0 => RpcCall::Paws(PawsRequest {
                    method: if init { PawsMethod::Init } else { PawsMethod::GetSpectrum },
                    device_id: dev, location: GeoLocation { lat, lon }, antenna_height_m: h, request_id: id,
                }),
                1 => RpcCall::Admin { id, command: AdminCommand::SetOutage(flag) },
                2 => RpcCall::Admin { id, command: AdminCommand::SetLatency(Duration::from_millis(ms)) },
                3 => RpcCall::Admin { id, command: AdminCommand::SetAvailability { channel: ChannelId(ch), available: flag } },
                _ => RpcCall::Admin { id, command: AdminCommand::SetNullRuleset(flag) },
            };
            let bytes = encode_call(&call);
            let back = decode_call(&bytes).unwrap();
            prop_assert_eq!(&back, &call);
            prop_assert_eq!(encode_call(&back), bytes);
        }

        #[test]
        fn spectrum_round_trip(
            t in 0u64..1 << 40, life in 1u64..1 << 30, eirp in -10.0f64..36.0,
            chans in proptest::collection::btree_set(0u32..40, 0..8),
            res in proptest::collection::vec((0u32..40, class()), 0..4), id in any::<u64>(),
        ) {
            let resp = PawsResponse {
                id,
                reply: Reply::Spectrum(SpectrumReply {
                    timestamp: Timestamp(t),
                    ruleset_id: "MOCK-1".into(),
                    grants: chans.iter().map(|&c| PawsGrant {
                        channel: ChannelId(c), max_eirp_dbm: eirp, granted_at: Timestamp(t),
                        expires_at: Timestamp(t + life), ruleset_id: "MOCK-1".into(),
                    }).collect(),
                    reservations: res.iter().map(|&(c, k)| Reservation { channel: ChannelId(c), incumbent: k }).collect(),
                }),
            };
            let bytes = encode_response(&resp);
            let back = decode_response(&bytes).unwrap();
            prop_assert_eq!(&back, &resp);
            prop_assert_eq!(encode_response(&back), bytes);
        }
    }
}
