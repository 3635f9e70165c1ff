use std::time::Duration;

use sidsense::compliance::{
    signing_key_from_seed, verify_log_bytes, verify_log_file, AuditError, AuditLog, ChainFailure, ComplianceGate,
    DecisionBasis, DecisionContext, EmergencyWaiver, FailureReason, GrantStatus,
};
use sidsense::paws::{GeoLocation, InProcessTransport, MockWsdb, PawsClient, PawsGrant, WsdbState};
use sidsense::sensing::SensingVerdict;
use sidsense::{ChannelId, ChannelPlan, SignalClass, Timestamp};

const HERE: GeoLocation = GeoLocation { lat: 18.4655, lon: -66.1057 };

fn ctx() -> DecisionContext {
    DecisionContext { gps: HERE, prior_occupancy: Some(0.1) }
}

fn vacant(ch: u32, confidence: f64, t: Timestamp) -> SensingVerdict {
    SensingVerdict {
        channel: ChannelId(ch),
        class: SignalClass::Vacant,
        confidence,
        occupied: false,
        decided_at: t,
        decision_latency: Duration::ZERO,
    }
}

fn key() -> ed25519_dalek::SigningKey {
    signing_key_from_seed(42)
}

/// Grants from the mock database, then an outage handled by the waiver.
#[test]
fn grant_then_waiver_then_denial_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gate.sida");
    let db = MockWsdb::new(WsdbState { grant_lifetime: Duration::from_secs(60), ..WsdbState::with_available([ChannelId(3)]) });
    let mut client = PawsClient::new(InProcessTransport::new(db.clone()), "gw", 5.0, Duration::from_millis(10));
    client.init(HERE).unwrap();
    let grants: Vec<PawsGrant> = client.query_spectrum(HERE, &ChannelPlan::tvws_default()).unwrap().grants;
    assert_eq!(grants.len(), 1);

    let waiver = EmergencyWaiver::with_default_threshold("EW-1", Timestamp(0), Duration::from_secs(120), 30.0).unwrap();
    let mut gate = ComplianceGate::new(AuditLog::create(&path, key()).unwrap());
    let ch = ChannelId(3);

    let t = Timestamp(10_000);
    let d = gate.decide(ch, t, &grants, Some(&waiver), Some(&vacant(3, 0.5, t)), ctx()).unwrap();
    assert_eq!((d.basis, d.allowed, d.eirp_cap_dbm), (DecisionBasis::ValidGrant, true, grants[0].max_eirp_dbm));

    let t = Timestamp(60_000);
    let d = gate.decide(ch, t, &grants, Some(&waiver), Some(&vacant(3, 0.9, t)), ctx()).unwrap();
    assert_eq!((d.basis, d.allowed, d.eirp_cap_dbm), (DecisionBasis::WaiverSensing, true, 30.0));
    assert_eq!(d.grant_status, GrantStatus::WaiverActive);

    let t = Timestamp(61_000);
    let d = gate.decide(ch, t, &grants, Some(&waiver), Some(&vacant(3, 0.84, t)), ctx()).unwrap();
    assert_eq!((d.basis, d.allowed), (DecisionBasis::Denied, false));
    assert_eq!(d.eirp_cap_dbm, f64::NEG_INFINITY);

    let t = Timestamp(120_000);
    let d = gate.decide(ch, t, &grants, Some(&waiver), Some(&vacant(3, 0.99, t)), ctx()).unwrap();
    assert_eq!((d.basis, d.grant_status), (DecisionBasis::Denied, GrantStatus::Expired));

    assert_eq!(gate.pending_waiver_decisions().len(), 1);
    let fresh = client.query_spectrum(HERE, &ChannelPlan::tvws_default()).unwrap();
    let report = gate.reconcile_pending(&fresh.grants, &fresh.reservations);
    assert_eq!((report.compared, report.confirmed), (1, 1));
    assert!(gate.pending_waiver_decisions().is_empty());

    drop(gate);
    assert_eq!(verify_log_file(&path, None).unwrap(), 4);
}

#[test]
fn reopen_append_and_reverify() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.sida");
    {
        let mut gate = ComplianceGate::new(AuditLog::create(&path, key()).unwrap());
        for s in 0..5 {
            gate.decide(ChannelId(1), Timestamp(s * 1000), &[], None, None, ctx()).unwrap();
        }
    }
    assert!(matches!(AuditLog::create(&path, key()), Err(AuditError::Io(_))));
    assert!(matches!(AuditLog::open(&path, Some(signing_key_from_seed(1))), Err(AuditError::KeyMismatch)));

    let read_only = AuditLog::open(&path, None).unwrap();
    assert_eq!(read_only.len(), 5);
    let mut gate = ComplianceGate::new(read_only);
    assert!(matches!(
        gate.decide(ChannelId(1), Timestamp(9_000), &[], None, None, ctx()),
        Err(AuditError::SigningKeyUnavailable)
    ));

    let log = AuditLog::open(&path, Some(key())).unwrap();
    log.verify().unwrap();
    let head = log.head();
    let mut gate = ComplianceGate::new(log);
    gate.decide(ChannelId(2), Timestamp(10_000), &[], None, None, ctx()).unwrap();
    assert_eq!(gate.log().entries()[5].prev_hash, head);
    drop(gate);
    assert_eq!(verify_log_file(&path, None).unwrap(), 6);
}

#[test]
fn file_damage_is_located() {
    let mut gate = ComplianceGate::new(AuditLog::in_memory(key()));
    for s in 0..10 {
        gate.decide(ChannelId(s as u32), Timestamp(s * 1000), &[], None, None, ctx()).unwrap();
    }
    let log = gate.into_log();
    let bytes = log.to_file_bytes();
    let entry_len = log.entries()[0].to_bytes().len() + 4;
    let header = bytes.len() - 10 * entry_len;

    // truncated in the middle of entry 7
    let cut = &bytes[..header + 7 * entry_len + 20];
    match verify_log_bytes(cut, None) {
        Err(AuditError::Chain(ChainFailure { index, offset, reason })) => {
            assert_eq!((index, offset, reason), (7, (header + 7 * entry_len) as u64, FailureReason::Truncated));
        }
        other => panic!("{other:?}"),
    }

    // dropping a whole entry breaks the chain at the next one
    let mut spliced = bytes[..header + 3 * entry_len].to_vec();
    spliced.extend_from_slice(&bytes[header + 4 * entry_len..]);
    match verify_log_bytes(&spliced, None) {
        Err(AuditError::Chain(f)) => assert_eq!((f.index, f.reason), (3, FailureReason::HashMismatch)),
        other => panic!("{other:?}"),
    }

    // re-signed with a different key
    let other = signing_key_from_seed(7).verifying_key();
    assert!(verify_log_bytes(&bytes, Some(&other)).is_err());

    let mut bad_header = bytes.clone();
    bad_header[0] = b'X';
    assert!(matches!(verify_log_bytes(&bad_header, None), Err(AuditError::BadHeader(_))));
}
