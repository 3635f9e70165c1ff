use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::wire::{self, AdminCommand, PawsResponse, Reply, RpcCall, RpcError, SpectrumReply};
use super::{PawsError, PawsGrant, PawsMethod, PawsRequest, Reservation, DEFAULT_GRANT_LIFETIME, DEFAULT_MAX_EIRP_DBM};
use crate::spectrum::{ChannelId, SignalClass};
use crate::time::Timestamp;

const SESSION_POLL: Duration = Duration::from_millis(25);

#[derive(Debug, Clone, PartialEq)]
pub struct WsdbState {
    pub ruleset_id: String,
    pub available: BTreeSet<ChannelId>,
    /// Withheld channels and the incumbent each one protects.
    pub reserved: BTreeMap<ChannelId, SignalClass>,
    pub outage: bool,
    pub injected_latency: Duration,
    /// Models a jurisdiction with no registered ruleset.
    pub null_ruleset: bool,
    pub grant_lifetime: Duration,
    pub max_eirp_dbm: f64,
}

impl Default for WsdbState {
    fn default() -> Self {
        WsdbState {
            ruleset_id: "MOCK-TVWS-1".to_string(),
            available: BTreeSet::new(),
            reserved: BTreeMap::new(),
            outage: false,
            injected_latency: Duration::ZERO,
            null_ruleset: false,
            grant_lifetime: DEFAULT_GRANT_LIFETIME,
            max_eirp_dbm: DEFAULT_MAX_EIRP_DBM,
        }
    }
}

impl WsdbState {
    pub fn with_available(channels: impl IntoIterator<Item = ChannelId>) -> Self {
        WsdbState { available: channels.into_iter().collect(), ..Default::default() }
    }

    pub fn set_availability(&mut self, ch: ChannelId, available: bool) {
        if available {
            self.available.insert(ch);
            self.reserved.remove(&ch);
        } else {
            self.available.remove(&ch);
        }
    }

    pub fn apply(&mut self, cmd: AdminCommand) {
        match cmd {
            AdminCommand::SetOutage(on) => self.outage = on,
            AdminCommand::SetLatency(d) => self.injected_latency = d,
            AdminCommand::SetAvailability { channel, available } => self.set_availability(channel, available),
            AdminCommand::SetNullRuleset(on) => self.null_ruleset = on,
        }
    }
}

/// On-disk form of [`WsdbState`] (TOML).
///
/// ```toml
/// ruleset_id = "MOCK-TVWS-1"
/// available = [3, 7]
/// grant_lifetime_s = 43200
/// latency_ms = 0
///
/// [[reserved]]
/// channel = 5
/// class = "WirelessMic"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WsdbConfig {
    pub ruleset_id: String,
    pub available: Vec<u32>,
    pub reserved: Vec<ReservedEntry>,
    pub outage: bool,
    pub latency_ms: u64,
    pub null_ruleset: bool,
    pub grant_lifetime_s: f64,
    pub max_eirp_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservedEntry {
    pub channel: u32,
    pub class: SignalClass,
}

impl Default for WsdbConfig {
    fn default() -> Self {
        WsdbState::default().into()
    }
}

impl From<WsdbState> for WsdbConfig {
    fn from(s: WsdbState) -> Self {
        WsdbConfig {
            ruleset_id: s.ruleset_id,
            available: s.available.iter().map(|c| c.0).collect(),
            reserved: s.reserved.iter().map(|(c, k)| ReservedEntry { channel: c.0, class: *k }).collect(),
            outage: s.outage,
            latency_ms: s.injected_latency.as_millis() as u64,
            null_ruleset: s.null_ruleset,
            grant_lifetime_s: s.grant_lifetime.as_secs_f64(),
            max_eirp_dbm: s.max_eirp_dbm,
        }
    }
}

impl TryFrom<WsdbConfig> for WsdbState {
    type Error = String;

    fn try_from(c: WsdbConfig) -> Result<Self, String> {
        if !(c.grant_lifetime_s.is_finite() && c.grant_lifetime_s >= 0.001) {
            return Err(format!("grant_lifetime_s must be at least 1 ms, got {}", c.grant_lifetime_s));
        }
        if !c.max_eirp_dbm.is_finite() {
            return Err("max_eirp_dbm must be finite".into());
        }
        let mut state = WsdbState {
            ruleset_id: c.ruleset_id,
            available: BTreeSet::new(),
            reserved: c.reserved.iter().map(|r| (ChannelId(r.channel), r.class)).collect(),
            outage: c.outage,
            injected_latency: Duration::from_millis(c.latency_ms),
            null_ruleset: c.null_ruleset,
            grant_lifetime: Duration::from_secs_f64(c.grant_lifetime_s),
            max_eirp_dbm: c.max_eirp_dbm,
        };
        for ch in c.available {
            if state.reserved.contains_key(&ChannelId(ch)) {
                return Err(format!("channel {ch} is both available and reserved"));
            }
            state.available.insert(ChannelId(ch));
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerClock {
    /// Set explicitly with [`MockWsdb::set_time`]; used by simulations.
    Manual(Timestamp),
    /// Milliseconds since the Unix epoch.
    Wall,
}

impl ServerClock {
    fn now(&self) -> Timestamp {
        match *self {
            ServerClock::Manual(t) => t,
            ServerClock::Wall => {
                Timestamp(SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0))
            }
        }
    }
}

#[derive(Debug)]
struct Inner {
    state: WsdbState,
    clock: ServerClock,
}

/// Outcome of handing one request to the database.
#[derive(Debug, Clone, PartialEq)]
pub struct Served {
    /// `None` when the database is in outage and stays silent.
    pub reply: Option<PawsResponse>,
    /// How long the reply is held back.
    pub latency: Duration,
}

/// The mock database core. Clones share state; every mutation goes through one lock.
#[derive(Debug, Clone)]
pub struct MockWsdb {
    inner: Arc<Mutex<Inner>>,
}

impl MockWsdb {
    pub fn new(state: WsdbState) -> Self {
        Self::with_clock(state, ServerClock::Manual(Timestamp::ZERO))
    }

    pub fn with_clock(state: WsdbState, clock: ServerClock) -> Self {
        MockWsdb { inner: Arc::new(Mutex::new(Inner { state, clock })) }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn state(&self) -> WsdbState {
        self.lock().state.clone()
    }

    pub fn set_time(&self, now: Timestamp) {
        self.lock().clock = ServerClock::Manual(now);
    }

    pub fn apply(&self, cmd: AdminCommand) {
        self.lock().state.apply(cmd);
    }

    pub fn set_outage(&self, on: bool) {
        self.apply(AdminCommand::SetOutage(on));
    }

    pub fn set_latency(&self, latency: Duration) {
        self.apply(AdminCommand::SetLatency(latency));
    }

    pub fn set_availability(&self, ch: ChannelId, available: bool) {
        self.apply(AdminCommand::SetAvailability { channel: ch, available });
    }

    pub fn set_null_ruleset(&self, on: bool) {
        self.apply(AdminCommand::SetNullRuleset(on));
    }

    pub fn set_reservation(&self, ch: ChannelId, incumbent: Option<SignalClass>) {
        let mut g = self.lock();
        match incumbent {
            Some(k) => {
                g.state.available.remove(&ch);
                g.state.reserved.insert(ch, k);
            }
            None => {
                g.state.reserved.remove(&ch);
            }
        }
    }

    pub fn set_grant_lifetime(&self, lifetime: Duration) {
        self.lock().state.grant_lifetime = lifetime;
    }

    pub fn handle(&self, call: &RpcCall) -> Served {
        let mut g = self.lock();
        match call {
            RpcCall::Admin { id, command } => {
                // admin traffic bypasses fault injection
                g.state.apply(*command);
                Served { reply: Some(PawsResponse { id: *id, reply: Reply::AdminAck }), latency: Duration::ZERO }
            }
            RpcCall::Paws(req) => {
                if g.state.outage {
                    return Served { reply: None, latency: Duration::ZERO };
                }
                let reply = answer(&g.state, g.clock.now(), req);
                Served { reply: Some(PawsResponse { id: req.request_id, reply }), latency: g.state.injected_latency }
            }
        }
    }

    /// Decodes, handles and encodes one request line.
    pub fn handle_bytes(&self, bytes: &[u8]) -> (Option<Vec<u8>>, Duration) {
        match wire::decode_call(bytes) {
            Ok(call) => {
                let served = self.handle(&call);
                (served.reply.map(|r| wire::encode_response(&r)), served.latency)
            }
            Err(e) => {
                if self.lock().state.outage {
                    return (None, Duration::ZERO);
                }
                (Some(wire::encode_response(&PawsResponse { id: 0, reply: Reply::Error(e) })), Duration::ZERO)
            }
        }
    }
}

fn answer(state: &WsdbState, now: Timestamp, req: &PawsRequest) -> Reply {
    if !req.location.is_valid() || !(req.antenna_height_m.is_finite() && req.antenna_height_m >= 0.0) {
        return Reply::Error(RpcError { code: wire::ERR_INVALID_VALUE, message: "invalid location or antenna".into() });
    }
    match req.method {
        PawsMethod::Init => Reply::Init {
            ruleset_ids: if state.null_ruleset { Vec::new() } else { vec![state.ruleset_id.clone()] },
        },
        PawsMethod::GetSpectrum if state.null_ruleset => Reply::Error(RpcError {
            code: wire::ERR_OUTSIDE_COVERAGE,
            message: "no registered ruleset for this location".into(),
        }),
        PawsMethod::GetSpectrum => {
            let expires_at = now + state.grant_lifetime;
            Reply::Spectrum(SpectrumReply {
                timestamp: now,
                ruleset_id: state.ruleset_id.clone(),
                grants: state
                    .available
                    .iter()
                    .map(|&channel| PawsGrant {
                        channel,
                        max_eirp_dbm: state.max_eirp_dbm,
                        granted_at: now,
                        expires_at,
                        ruleset_id: state.ruleset_id.clone(),
                    })
                    .collect(),
                reservations: state.reserved.iter().map(|(&channel, &incumbent)| Reservation { channel, incumbent }).collect(),
            })
        }
    }
}

/// A running TCP endpoint in front of a [`MockWsdb`]. Newline-delimited
/// requests; one connection may carry many.
#[derive(Debug)]
pub struct WsdbServer {
    wsdb: MockWsdb,
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    active: Arc<AtomicUsize>,
    accept: Option<JoinHandle<()>>,
    sessions: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

/// Starts a wall-clock mock database on `endpoint`.
pub fn serve_wsdb(state: WsdbState, endpoint: impl ToSocketAddrs) -> Result<WsdbServer, PawsError> {
    WsdbServer::start(MockWsdb::with_clock(state, ServerClock::Wall), endpoint)
}

impl WsdbServer {
    pub fn start(wsdb: MockWsdb, endpoint: impl ToSocketAddrs) -> Result<Self, PawsError> {
        let addrs: Vec<SocketAddr> = endpoint.to_socket_addrs().map(|a| a.collect()).unwrap_or_default();
        let shown = addrs.first().map(|a| a.to_string()).unwrap_or_else(|| "<unresolved>".into());
        let bind_err = |reason: String| PawsError::BindFailure { endpoint: shown.clone(), reason };
        let listener = TcpListener::bind(&addrs[..]).map_err(|e| bind_err(e.to_string()))?;
        let addr = listener.local_addr().map_err(|e| bind_err(e.to_string()))?;
        let stop = Arc::new(AtomicBool::new(false));
        let active = Arc::new(AtomicUsize::new(0));
        let sessions: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();

        let accept = {
            let (wsdb, stop, active, sessions) = (wsdb.clone(), stop.clone(), active.clone(), sessions.clone());
            thread::Builder::new()
                .name("wsdb-accept".into())
                .spawn(move || {
                    for conn in listener.incoming() {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let Ok(stream) = conn else { continue };
                        let (wsdb, stop, active) = (wsdb.clone(), stop.clone(), active.clone());
                        active.fetch_add(1, Ordering::SeqCst);
                        let handle = thread::spawn(move || {
                            session(stream, &wsdb, &stop);
                            active.fetch_sub(1, Ordering::SeqCst);
                        });
                        let mut list = sessions.lock().unwrap_or_else(|e| e.into_inner());
                        list.retain(|h| !h.is_finished());
                        list.push(handle);
                    }
                })
                .map_err(|e| bind_err(e.to_string()))?
        };
        Ok(WsdbServer { wsdb, addr, stop, active, accept: Some(accept), sessions })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// In-process admin handle onto the served state.
    pub fn wsdb(&self) -> &MockWsdb {
        &self.wsdb
    }

    pub fn active_sessions(&self) -> usize {
        self.active.load(Ordering::SeqCst)
    }

    /// Stops accepting, closes every session and waits for them.
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        let Some(accept) = self.accept.take() else { return };
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        let _ = accept.join();
        let handles: Vec<_> = self.sessions.lock().unwrap_or_else(|e| e.into_inner()).drain(..).collect();
        for h in handles {
            let _ = h.join();
        }
    }
}

impl Drop for WsdbServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn session(stream: TcpStream, wsdb: &MockWsdb, stop: &AtomicBool) {
    if stream.set_read_timeout(Some(SESSION_POLL)).is_err() {
        return;
    }
    let Ok(mut writer) = stream.try_clone() else { return };
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match reader.read_until(b'\n', &mut line) {
            Ok(0) => return,
            Ok(_) if line.last() != Some(&b'\n') => return,
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => continue,
            Err(_) => return,
        }
        line.pop();
        let (reply, latency) = wsdb.handle_bytes(&line);
        line.clear();
        let Some(mut bytes) = reply else { continue };
        let until = Instant::now() + latency;
        while Instant::now() < until {
            if stop.load(Ordering::SeqCst) {
                return;
            }
            thread::sleep(SESSION_POLL.min(until - Instant::now()));
        }
        bytes.push(b'\n');
        if writer.write_all(&bytes).is_err() {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paws::GeoLocation;

    fn get(id: u64) -> RpcCall {
        RpcCall::Paws(PawsRequest {
            method: PawsMethod::GetSpectrum,
            device_id: "d".into(),
            location: GeoLocation { lat: 18.0, lon: -66.0 },
            antenna_height_m: 5.0,
            request_id: id,
        })
    }

    #[test]
    fn grants_follow_state_and_clock() {
        let db = MockWsdb::new(WsdbState::with_available([ChannelId(3), ChannelId(7)]));
        db.set_time(Timestamp(10_000));
        let Some(PawsResponse { id: 4, reply: Reply::Spectrum(s) }) = db.handle(&get(4)).reply else { panic!() };
        assert_eq!(s.grants.iter().map(|g| g.channel.0).collect::<Vec<_>>(), vec![3, 7]);
        for g in &s.grants {
            assert_eq!(g.max_eirp_dbm, 36.0);
            assert_eq!(g.granted_at, Timestamp(10_000));
            assert_eq!(g.expires_at, Timestamp(10_000 + 12 * 3600 * 1000));
        }
    }

    #[test]
    fn outage_is_silent_but_admin_answers() {
        let db = MockWsdb::new(WsdbState::default());
        db.set_outage(true);
        assert_eq!(db.handle(&get(1)).reply, None);
        let admin = RpcCall::Admin { id: 2, command: AdminCommand::SetOutage(false) };
        assert_eq!(db.handle(&admin).reply.unwrap().reply, Reply::AdminAck);
        assert!(db.handle(&get(3)).reply.is_some());
    }

    #[test]
    fn null_ruleset_and_bad_location() {
        let db = MockWsdb::new(WsdbState::with_available([ChannelId(1)]));
        db.set_null_ruleset(true);
        let Some(PawsResponse { reply: Reply::Error(e), .. }) = db.handle(&get(1)).reply else { panic!() };
        assert_eq!(e.code, wire::ERR_OUTSIDE_COVERAGE);
        db.set_null_ruleset(false);
        let RpcCall::Paws(mut req) = get(2) else { unreachable!() };
        req.location.lat = 91.0;
        let Some(PawsResponse { reply: Reply::Error(e), .. }) = db.handle(&RpcCall::Paws(req)).reply else { panic!() };
        assert_eq!(e.code, wire::ERR_INVALID_VALUE);
    }

    #[test]
    fn config_round_trip() {
        let text = "available = [3, 7]\ngrant_lifetime_s = 600\nlatency_ms = 20\n[[reserved]]\nchannel = 5\nclass = \"WirelessMic\"\n";
        let cfg: WsdbConfig = toml::from_str(text).unwrap();
        let state = WsdbState::try_from(cfg.clone()).unwrap();
        assert_eq!(state.grant_lifetime, Duration::from_secs(600));
        assert_eq!(state.reserved.get(&ChannelId(5)), Some(&SignalClass::WirelessMic));
        assert_eq!(state.max_eirp_dbm, 36.0);
        assert_eq!(WsdbConfig::from(state), cfg);
        let clash: WsdbConfig = toml::from_str("available = [5]\n[[reserved]]\nchannel = 5\nclass = \"TvBroadcast\"\n").unwrap();
        assert!(WsdbState::try_from(clash).is_err());
        assert!(toml::from_str::<WsdbConfig>("avail = [1]").is_err());
    }

    #[test]
    fn bind_failure() {
        let first = WsdbServer::start(MockWsdb::new(WsdbState::default()), "127.0.0.1:0").unwrap();
        let err = WsdbServer::start(MockWsdb::new(WsdbState::default()), first.local_addr()).unwrap_err();
        assert!(matches!(err, PawsError::BindFailure { .. }));
        first.stop();
    }
}
