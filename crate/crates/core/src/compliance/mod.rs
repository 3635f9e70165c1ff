//! The transmission gate.
//!
//! [`decide`] rules on one channel at one instant. Precedence is fixed: a
//! valid database grant always wins, then an active emergency waiver backed by
//! a confident vacant verdict, otherwise the channel is denied. A grant is not
//! vetoed by an occupied-looking verdict; the conflict is only flagged.
//!
//! [`ComplianceGate`] wraps [`decide`] with the signed audit log so that each
//! ruling produces exactly one record, and keeps the waiver-based decisions
//! that [`reconcile`] later checks against fresh grants.

pub mod audit;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paws::{grant_valid, GeoLocation, PawsGrant, Reservation};
use crate::sensing::{SensingVerdict, THETA_SENSE};
use crate::spectrum::{ChannelId, SignalClass};
use crate::time::Timestamp;

pub use audit::{
    signing_key_from_seed, verify_entries, verify_log_bytes, verify_log_file, verifying_key_from_hex, AuditEntry, AuditError, AuditLog,
    AuditRecord, ChainFailure, FailureReason,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComplianceError {
    #[error("min_confidence must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("waiver duration must be positive")]
    ZeroDuration,
    #[error("waiver EIRP must be finite")]
    InvalidEirp,
}

/// Pre-cleared, time-bounded permission to transmit on sensing evidence alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergencyWaiver {
    pub waiver_id: String,
    pub activated_at: Timestamp,
    pub max_duration: Duration,
    pub min_confidence: f64,
    pub max_eirp_dbm: f64,
}

impl EmergencyWaiver {
    pub fn new(
        waiver_id: impl Into<String>,
        activated_at: Timestamp,
        max_duration: Duration,
        min_confidence: f64,
        max_eirp_dbm: f64,
    ) -> Result<Self, ComplianceError> {
        if !(min_confidence > 0.0 && min_confidence < 1.0) {
            return Err(ComplianceError::InvalidConfidence(min_confidence));
        }
        if max_duration.is_zero() {
            return Err(ComplianceError::ZeroDuration);
        }
        if !max_eirp_dbm.is_finite() {
            return Err(ComplianceError::InvalidEirp);
        }
        Ok(EmergencyWaiver { waiver_id: waiver_id.into(), activated_at, max_duration, min_confidence, max_eirp_dbm })
    }

    /// Waiver with the default sensing threshold.
    pub fn with_default_threshold(
        waiver_id: impl Into<String>,
        activated_at: Timestamp,
        max_duration: Duration,
        max_eirp_dbm: f64,
    ) -> Result<Self, ComplianceError> {
        Self::new(waiver_id, activated_at, max_duration, THETA_SENSE, max_eirp_dbm)
    }

    pub fn expires_at(&self) -> Timestamp {
        self.activated_at + self.max_duration
    }

    /// Active on `[activated_at, activated_at + max_duration)`.
    pub fn is_active(&self, now: Timestamp) -> bool {
        self.activated_at <= now && now < self.expires_at()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionBasis {
    ValidGrant,
    WaiverSensing,
    Denied,
}

impl DecisionBasis {
    pub fn name(self) -> &'static str {
        match self {
            DecisionBasis::ValidGrant => "ValidGrant",
            DecisionBasis::WaiverSensing => "WaiverSensing",
            DecisionBasis::Denied => "Denied",
        }
    }
}

impl fmt::Display for DecisionBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GrantStatus {
    Valid,
    Expired,
    None,
    WaiverActive,
}

/// EIRP cap written into denied decisions: no emission at all.
pub const NO_EMISSION_DBM: f64 = f64::NEG_INFINITY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceDecision {
    pub channel: ChannelId,
    pub allowed: bool,
    pub basis: DecisionBasis,
    pub eirp_cap_dbm: f64,
    /// Confidence of the verdict considered, if any.
    pub sensing_confidence: Option<f64>,
    pub sensing_class: Option<SignalClass>,
    pub grant_status: GrantStatus,
    /// A valid grant was used although sensing reported an incumbent.
    pub sensing_conflict: bool,
    pub decided_at: Timestamp,
}

pub fn decide(
    ch: ChannelId,
    now: Timestamp,
    grants: &[PawsGrant],
    waiver: Option<&EmergencyWaiver>,
    verdict: Option<&SensingVerdict>,
) -> ComplianceDecision {
    let verdict = verdict.filter(|v| v.channel == ch);
    let waiver_active = waiver.is_some_and(|w| w.is_active(now));
    let valid = grants.iter().filter(|g| grant_valid(g, now, ch)).min_by(|a, b| a.max_eirp_dbm.total_cmp(&b.max_eirp_dbm));
    let grant_status = if valid.is_some() {
        GrantStatus::Valid
    } else if waiver_active {
        GrantStatus::WaiverActive
    } else if grants.iter().any(|g| g.channel == ch && now >= g.expires_at) {
        GrantStatus::Expired
    } else {
        GrantStatus::None
    };
    let mut d = ComplianceDecision {
        channel: ch,
        allowed: false,
        basis: DecisionBasis::Denied,
        eirp_cap_dbm: NO_EMISSION_DBM,
        sensing_confidence: verdict.map(|v| v.confidence),
        sensing_class: verdict.map(|v| v.class),
        grant_status,
        sensing_conflict: false,
        decided_at: now,
    };
    if let Some(g) = valid {
        d.allowed = true;
        d.basis = DecisionBasis::ValidGrant;
        d.eirp_cap_dbm = g.max_eirp_dbm;
        d.sensing_conflict = verdict.is_some_and(|v| v.class.is_occupied());
        return d;
    }
    if let (Some(w), Some(v)) = (waiver, verdict) {
        if waiver_active && v.class == SignalClass::Vacant && v.confidence >= w.min_confidence {
            d.allowed = true;
            d.basis = DecisionBasis::WaiverSensing;
            d.eirp_cap_dbm = w.max_eirp_dbm;
        }
    }
    d
}

/// What the database said about a channel once it was reachable again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DbClaim {
    Granted,
    Reserved(SignalClass),
    NotListed,
}

impl fmt::Display for DbClaim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DbClaim::Granted => f.write_str("Granted"),
            DbClaim::Reserved(c) => write!(f, "Reserved({c})"),
            DbClaim::NotListed => f.write_str("NotListed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub channel: ChannelId,
    pub decided_at: Timestamp,
    pub sensing_said: SignalClass,
    pub db_said: DbClaim,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconciliationReport {
    pub compared: usize,
    pub confirmed: usize,
    pub discrepancies: Vec<Discrepancy>,
    /// `confirmed / compared`; absent when nothing was compared.
    pub confirmation_rate: Option<f64>,
}

impl ReconciliationReport {
    /// Sums several reports; the rate is recomputed from the totals.
    pub fn merge(reports: &[ReconciliationReport]) -> ReconciliationReport {
        let mut out = ReconciliationReport::default();
        for r in reports {
            out.compared += r.compared;
            out.confirmed += r.confirmed;
            out.discrepancies.extend(r.discrepancies.iter().cloned());
        }
        out.confirmation_rate = (out.compared > 0).then(|| out.confirmed as f64 / out.compared as f64);
        out
    }
}

/// Checks every waiver-based decision against the grants obtained on reconnect.
pub fn reconcile(
    prior_decisions: &[ComplianceDecision],
    fresh_grants: &[PawsGrant],
    reservations: &[Reservation],
) -> ReconciliationReport {
    let mut report = ReconciliationReport::default();
    for d in prior_decisions.iter().filter(|d| d.basis == DecisionBasis::WaiverSensing) {
        report.compared += 1;
        if fresh_grants.iter().any(|g| g.channel == d.channel) {
            report.confirmed += 1;
            continue;
        }
        let db_said = reservations
            .iter()
            .find(|r| r.channel == d.channel)
            .map_or(DbClaim::NotListed, |r| DbClaim::Reserved(r.incumbent));
        report.discrepancies.push(Discrepancy {
            channel: d.channel,
            decided_at: d.decided_at,
            sensing_said: d.sensing_class.unwrap_or(SignalClass::Vacant),
            db_said,
        });
    }
    report.confirmation_rate = (report.compared > 0).then(|| report.confirmed as f64 / report.compared as f64);
    report
}

/// Advisory context recorded alongside each decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionContext {
    pub gps: GeoLocation,
    /// Twin occupancy prior for the channel.
    pub prior_occupancy: Option<f64>,
}

/// Single-writer gate: every ruling is appended to the audit log before it is returned.
#[derive(Debug)]
pub struct ComplianceGate {
    log: AuditLog,
    pending: Vec<ComplianceDecision>,
    decisions: u64,
}

impl ComplianceGate {
    pub fn new(log: AuditLog) -> Self {
        ComplianceGate { log, pending: Vec::new(), decisions: 0 }
    }

    pub fn decide(
        &mut self,
        ch: ChannelId,
        now: Timestamp,
        grants: &[PawsGrant],
        waiver: Option<&EmergencyWaiver>,
        verdict: Option<&SensingVerdict>,
        ctx: DecisionContext,
    ) -> Result<ComplianceDecision, AuditError> {
        let d = decide(ch, now, grants, waiver, verdict);
        self.log.append(AuditRecord::from_decision(&d, ctx))?;
        self.decisions += 1;
        if d.basis == DecisionBasis::WaiverSensing {
            self.pending.push(d.clone());
        }
        Ok(d)
    }

    pub fn decision_count(&self) -> u64 {
        self.decisions
    }

    /// Waiver-based decisions not yet reconciled.
    pub fn pending_waiver_decisions(&self) -> &[ComplianceDecision] {
        &self.pending
    }

    /// Reconciles and clears the pending waiver decisions.
    pub fn reconcile_pending(&mut self, fresh_grants: &[PawsGrant], reservations: &[Reservation]) -> ReconciliationReport {
        let report = reconcile(&self.pending, fresh_grants, reservations);
        self.pending.clear();
        report
    }

    pub fn log(&self) -> &AuditLog {
        &self.log
    }

    pub fn into_log(self) -> AuditLog {
        self.log
    }
}
