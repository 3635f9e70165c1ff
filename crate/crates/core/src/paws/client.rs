use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use super::server::MockWsdb;
use super::wire::{self, AdminCommand, PawsResponse, Reply, RpcCall, SpectrumReply};
use super::{GeoLocation, PawsError, PawsMethod, PawsRequest, UnavailableCause};
use crate::spectrum::ChannelPlan;

/// Moves one encoded request to the database and back, within a deadline.
pub trait Transport {
    fn exchange(&mut self, request: &[u8], deadline: Duration) -> Result<Vec<u8>, UnavailableCause>;
}

/// Talks to a [`MockWsdb`] directly. Injected latency is compared against the
/// deadline instead of being slept, so simulations run at full speed.
#[derive(Debug, Clone)]
pub struct InProcessTransport {
    wsdb: MockWsdb,
}

impl InProcessTransport {
    pub fn new(wsdb: MockWsdb) -> Self {
        InProcessTransport { wsdb }
    }
}

impl Transport for InProcessTransport {
    fn exchange(&mut self, request: &[u8], deadline: Duration) -> Result<Vec<u8>, UnavailableCause> {
        match self.wsdb.handle_bytes(request) {
            (Some(bytes), latency) if latency < deadline => Ok(bytes),
            _ => Err(UnavailableCause::Timeout),
        }
    }
}

/// One TCP connection per exchange.
#[derive(Debug, Clone)]
pub struct TcpTransport {
    addr: SocketAddr,
}

impl TcpTransport {
    pub fn new(addr: SocketAddr) -> Self {
        TcpTransport { addr }
    }
}

fn is_timeout(e: &std::io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

impl Transport for TcpTransport {
    fn exchange(&mut self, request: &[u8], deadline: Duration) -> Result<Vec<u8>, UnavailableCause> {
        let start = Instant::now();
        let refused = |e: std::io::Error| if is_timeout(&e) { UnavailableCause::Timeout } else { UnavailableCause::ConnectionRefused };
        let mut stream = TcpStream::connect_timeout(&self.addr, deadline).map_err(refused)?;
        let _ = stream.set_nodelay(true);
        let mut framed = Vec::with_capacity(request.len() + 1);
        framed.extend_from_slice(request);
        framed.push(b'\n');
        stream.write_all(&framed).map_err(refused)?;
        let mut reader = BufReader::new(stream);
        let mut line = Vec::new();
        loop {
            let left = deadline.checked_sub(start.elapsed()).filter(|d| !d.is_zero()).ok_or(UnavailableCause::Timeout)?;
            reader.get_ref().set_read_timeout(Some(left)).map_err(refused)?;
            match reader.read_until(b'\n', &mut line) {
                Ok(0) => return Err(UnavailableCause::ConnectionRefused),
                Ok(_) if line.last() == Some(&b'\n') => {
                    line.pop();
                    return Ok(line);
                }
                Ok(_) => return Err(UnavailableCause::ConnectionRefused),
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(refused(e)),
            }
        }
    }
}

/// Session-scoped PAWS client. Request ids increase strictly within a session.
#[derive(Debug)]
pub struct PawsClient<T: Transport> {
    transport: T,
    device_id: String,
    antenna_height_m: f64,
    deadline: Duration,
    next_id: u64,
    ruleset_ids: Option<Vec<String>>,
}

impl<T: Transport> PawsClient<T> {
    pub fn new(transport: T, device_id: impl Into<String>, antenna_height_m: f64, deadline: Duration) -> Self {
        PawsClient {
            transport,
            device_id: device_id.into(),
            antenna_height_m,
            deadline,
            next_id: 1,
            ruleset_ids: None,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.ruleset_ids.is_some()
    }

    /// Rulesets announced at init; empty under a null ruleset.
    pub fn ruleset_ids(&self) -> Option<&[String]> {
        self.ruleset_ids.as_deref()
    }

    pub fn deadline(&self) -> Duration {
        self.deadline
    }

    pub fn set_deadline(&mut self, deadline: Duration) {
        self.deadline = deadline;
    }

    fn call(&mut self, method: PawsMethod, location: GeoLocation) -> Result<Reply, PawsError> {
        if !location.is_valid() {
            return Err(PawsError::InvalidLocation { lat: location.lat, lon: location.lon });
        }
        let id = self.next_id;
        self.next_id += 1;
        let req = PawsRequest {
            method,
            device_id: self.device_id.clone(),
            location,
            antenna_height_m: self.antenna_height_m,
            request_id: id,
        };
        let bytes = self.transport.exchange(&wire::encode_request(&req), self.deadline).map_err(PawsError::Unavailable)?;
        let PawsResponse { id: got, reply } = wire::decode_response(&bytes)?;
        match reply {
            Reply::Error(e) if e.code == wire::ERR_OUTSIDE_COVERAGE => Err(PawsError::Unavailable(UnavailableCause::NullRuleset)),
            Reply::Error(e) => Err(PawsError::Rejected { code: e.code, message: e.message }),
            _ if got != id => Err(PawsError::Protocol(format!("response id {got} for request {id}"))),
            reply => Ok(reply),
        }
    }

    pub fn init(&mut self, location: GeoLocation) -> Result<&[String], PawsError> {
        match self.call(PawsMethod::Init, location)? {
            Reply::Init { ruleset_ids } => Ok(self.ruleset_ids.insert(ruleset_ids)),
            other => Err(PawsError::Protocol(format!("expected INIT_RESP, got {other:?}"))),
        }
    }

    /// Available spectrum at `location`, restricted to channels of `plan`.
    pub fn query_spectrum(&mut self, location: GeoLocation, plan: &ChannelPlan) -> Result<SpectrumReply, PawsError> {
        if !self.is_initialized() {
            return Err(PawsError::NotInitialized);
        }
        match self.call(PawsMethod::GetSpectrum, location)? {
            Reply::Spectrum(mut s) => {
                s.grants.retain(|g| plan.contains(g.channel));
                s.reservations.retain(|r| plan.contains(r.channel));
                Ok(s)
            }
            other => Err(PawsError::Protocol(format!("expected AVAIL_SPECTRUM_RESP, got {other:?}"))),
        }
    }
}

/// Sends one admin command to a running server.
pub fn admin_request(addr: SocketAddr, command: AdminCommand, deadline: Duration) -> Result<(), PawsError> {
    let bytes = TcpTransport::new(addr)
        .exchange(&wire::encode_call(&RpcCall::Admin { id: 1, command }), deadline)
        .map_err(PawsError::Unavailable)?;
    match wire::decode_response(&bytes)?.reply {
        Reply::AdminAck => Ok(()),
        Reply::Error(e) => Err(PawsError::Rejected { code: e.code, message: e.message }),
        other => Err(PawsError::Protocol(format!("expected ADMIN_ACK, got {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paws::WsdbState;
    use crate::spectrum::ChannelId;

    const HERE: GeoLocation = GeoLocation { lat: 18.4655, lon: -66.1057 };

    fn client(db: &MockWsdb) -> PawsClient<InProcessTransport> {
        PawsClient::new(InProcessTransport::new(db.clone()), "test-dev", 5.0, Duration::from_millis(500))
    }

    #[test]
    fn query_requires_init() {
        let db = MockWsdb::new(WsdbState::with_available([ChannelId(3)]));
        let mut c = client(&db);
        let plan = ChannelPlan::tvws_default();
        assert_eq!(c.query_spectrum(HERE, &plan), Err(PawsError::NotInitialized));
        c.init(HERE).unwrap();
        assert_eq!(c.query_spectrum(HERE, &plan).unwrap().grants.len(), 1);
    }

    #[test]
    fn causes_are_distinguished() {
        let db = MockWsdb::new(WsdbState::with_available([ChannelId(3)]));
        let mut c = client(&db);
        let plan = ChannelPlan::tvws_default();
        c.init(HERE).unwrap();
        db.set_null_ruleset(true);
        assert_eq!(c.query_spectrum(HERE, &plan), Err(PawsError::Unavailable(UnavailableCause::NullRuleset)));
        db.set_null_ruleset(false);
        db.set_latency(Duration::from_millis(500));
        assert_eq!(c.query_spectrum(HERE, &plan), Err(PawsError::Unavailable(UnavailableCause::Timeout)));
        db.set_latency(Duration::from_millis(499));
        assert!(c.query_spectrum(HERE, &plan).is_ok());
        db.set_outage(true);
        assert_eq!(c.query_spectrum(HERE, &plan), Err(PawsError::Unavailable(UnavailableCause::Timeout)));
    }

    #[test]
    fn grants_outside_plan_dropped() {
        let db = MockWsdb::new(WsdbState::with_available([ChannelId(3), ChannelId(30)]));
        let mut c = client(&db);
        c.init(HERE).unwrap();
        let plan = crate::spectrum::build_plan(470_000_000, 542_000_000, 6_000_000).unwrap();
        let s = c.query_spectrum(HERE, &plan).unwrap();
        assert_eq!(s.grants.iter().map(|g| g.channel).collect::<Vec<_>>(), vec![ChannelId(3)]);
    }

    #[test]
    fn request_ids_increase() {
        struct Spy(MockWsdb, Vec<u64>);
        impl Transport for Spy {
            fn exchange(&mut self, request: &[u8], deadline: Duration) -> Result<Vec<u8>, UnavailableCause> {
                self.1.push(wire::decode_call(request).unwrap().id());
                InProcessTransport::new(self.0.clone()).exchange(request, deadline)
            }
        }
        let db = MockWsdb::new(WsdbState::default());
        let mut c = PawsClient::new(Spy(db.clone(), vec![]), "d", 1.0, Duration::from_secs(1));
        c.init(HERE).unwrap();
        for _ in 0..5 {
            c.query_spectrum(HERE, &ChannelPlan::tvws_default()).unwrap();
        }
        db.set_outage(true);
        let _ = c.query_spectrum(HERE, &ChannelPlan::tvws_default());
        let ids = &c.transport.1;
        assert!(ids.windows(2).all(|w| w[0] < w[1]), "{ids:?}");
    }
}
