//! Closed-loop scenario harness.
//!
//! A [`ScenarioScript`] drives every component against a shared ground truth:
//! each epoch the harness applies scripted events, refreshes grants from the
//! mock database, feeds the mode controller, senses every channel, picks one
//! channel and asks the compliance gate. Every epoch yields exactly one audit
//! record.

mod reference;
mod report;
mod script;

pub use reference::{reference_script, REFERENCE_SCRIPTS};
pub use report::{emit_report, parse_text_rows, BasisCounts, LatencyStats, ReportFormat, ScenarioReport};
pub use script::{
    ClassifierKind, KpmSegment, ScenarioScript, SensingSetup, TrackPoint, WaiverEvent, WaiverEventKind,
    WaiverTemplate, WsdbEvent, WsdbEventKind, DEFAULT_LOCATION, DEFAULT_THROUGHPUT_MBPS,
};

use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use thiserror::Error;

use crate::compliance::{
    decide, signing_key_from_seed, AuditError, AuditLog, ComplianceGate, DecisionBasis, DecisionContext,
    EmergencyWaiver, ReconciliationReport,
};
use crate::controller::{ControllerError, Mode, ModeController, ModeState};
use crate::paws::{InProcessTransport, MockWsdb, PawsClient, PawsGrant};
use crate::sensing::{
    sense_channel, train_default_model, ClassifierModel, SensingError, SensingVerdict, SignalClassifier,
    TrainingRecipe,
};
use crate::spectrum::{occupancy_at, ChannelId, SignalClass};
use crate::synth::{synth_scene_channel, SceneCapture};
use crate::time::Timestamp;
use crate::twin::OccupancyPrior;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario script: {0}")]
    ScriptInvalid(String),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// Which classifier backs the sensing step.
#[derive(Clone, Default)]
pub enum ClassifierChoice {
    /// Whatever the script asks for.
    #[default]
    Script,
    /// Reads the ground truth directly, confidence 1.
    Oracle,
    Model(Arc<dyn SignalClassifier>),
}

#[derive(Clone, Default)]
pub struct RunOptions {
    pub classifier: ClassifierChoice,
    pub seed: Option<u64>,
    /// Adds wall-clock sensing latency statistics to the report.
    /// Off by default so reports are reproducible.
    pub measure_latency: bool,
    /// Persist the audit log here instead of keeping it in memory.
    pub audit_log: Option<PathBuf>,
    /// Copy the finished log here, as the shore upload would.
    pub audit_export: Option<PathBuf>,
}

pub fn run_scenario(script: &ScenarioScript) -> Result<ScenarioReport, ScenarioError> {
    run_scenario_with(script, &RunOptions::default())
}

/// Ranks admissible channels: lowest prior occupancy, then highest sensing
/// confidence, then lowest channel index.
pub fn select_channel(candidates: &[(ChannelId, SensingVerdict)], prior: &OccupancyPrior) -> Option<ChannelId> {
    candidates
        .iter()
        .min_by(|(a, va), (b, vb)| {
            prior
                .get(*a)
                .mean()
                .total_cmp(&prior.get(*b).mean())
                .then(vb.confidence.total_cmp(&va.confidence))
                .then(a.cmp(b))
        })
        .map(|(ch, _)| *ch)
}

fn trained_model(recipe: &TrainingRecipe) -> Result<Arc<ClassifierModel>, SensingError> {
    static CACHE: OnceLock<Mutex<Vec<(TrainingRecipe, Arc<ClassifierModel>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some((_, m)) = cache.lock().unwrap().iter().find(|(r, _)| r == recipe) {
        return Ok(m.clone());
    }
    let model = Arc::new(train_default_model(recipe)?);
    cache.lock().unwrap().push((recipe.clone(), model.clone()));
    Ok(model)
}

enum Backend {
    Oracle,
    Model(Arc<dyn SignalClassifier>),
}

struct Tally {
    epochs: u64,
    allowed: u64,
    violations: u64,
    basis: BasisCounts,
    outage_epochs: u64,
    outage_allowed: u64,
    verdicts: u64,
    correct: u64,
    occupied_truths: u64,
    occupied_called_vacant: u64,
    conflicts: u64,
    zone_warnings: u64,
    queries_ok: u64,
    queries_failed: u64,
    latencies: Vec<Duration>,
}

pub fn run_scenario_with(script: &ScenarioScript, opts: &RunOptions) -> Result<ScenarioReport, ScenarioError> {
    let seed = opts.seed.unwrap_or(script.seed);
    let sensing = &script.sensing;
    let backend = match (&opts.classifier, sensing.classifier) {
        (ClassifierChoice::Oracle, _) | (ClassifierChoice::Script, ClassifierKind::Oracle) => Backend::Oracle,
        (ClassifierChoice::Model(m), _) => Backend::Model(m.clone()),
        (ClassifierChoice::Script, ClassifierKind::Trained) => {
            let mut recipe = sensing.training.clone();
            if let Some(s) = opts.seed {
                recipe.seed = s ^ 0x51D5;
            }
            Backend::Model(trained_model(&recipe)?)
        }
    };
    let classifier_name = match backend {
        Backend::Oracle => "oracle",
        Backend::Model(_) => "trained",
    };

    let key = signing_key_from_seed(seed);
    let log = match &opts.audit_log {
        Some(path) => AuditLog::create(path, key)?,
        None => AuditLog::in_memory(key),
    };
    let mut gate = ComplianceGate::new(log);

    let db = MockWsdb::new(script.wsdb.clone());
    let mut client = PawsClient::new(
        InProcessTransport::new(db.clone()),
        script.device_id.clone(),
        script.antenna_height_m,
        script.wsdb_deadline,
    );
    let mut grants: Vec<PawsGrant> = Vec::new();
    let mut next_query = Timestamp::ZERO;
    let mut reconciliations: Vec<ReconciliationReport> = Vec::new();

    let mut controller = ModeController::new(script.policy.clone(), ModeState::initial(Mode::NativeHd, Timestamp::ZERO))?;
    let mut twin = script.twin.clone();
    let mut waiver: Option<EmergencyWaiver> = None;
    let mut wsdb_events = script.wsdb_events.iter().peekable();
    let mut waiver_events = script.waiver_events.iter().peekable();
    let capture = SceneCapture { sample_rate_hz: sensing.sample_rate_hz, samples: sensing.capture_samples };
    let channels: Vec<ChannelId> = script.plan.channels().collect();

    let mut tally = Tally {
        epochs: 0,
        allowed: 0,
        violations: 0,
        basis: BasisCounts::default(),
        outage_epochs: 0,
        outage_allowed: 0,
        verdicts: 0,
        correct: 0,
        occupied_truths: 0,
        occupied_called_vacant: 0,
        conflicts: 0,
        zone_warnings: 0,
        queries_ok: 0,
        queries_failed: 0,
        latencies: Vec::new(),
    };

    for k in 0..script.epoch_count() {
        let t = script.epoch_time(k);

        while let Some(e) = wsdb_events.next_if(|e| e.at <= t) {
            match e.kind {
                WsdbEventKind::OutageStart => db.set_outage(true),
                WsdbEventKind::OutageEnd => db.set_outage(false),
                WsdbEventKind::SetAvailability { channel, available } => db.set_availability(channel, available),
                WsdbEventKind::SetLatency(l) => db.set_latency(l),
                WsdbEventKind::SetNullRuleset(on) => db.set_null_ruleset(on),
            }
        }
        while let Some(e) = waiver_events.next_if(|e| e.at <= t) {
            waiver = match e.kind {
                WaiverEventKind::Activate => script.waiver.as_ref().map(|w| w.activate(e.at)),
                WaiverEventKind::Expire => None,
            };
        }

        let gps = script.location_at(t);
        db.set_time(t);
        let outage = db.state().outage;
        let have_valid = grants.iter().any(|g| g.granted_at <= t && t < g.expires_at);
        if t >= next_query || !have_valid {
            let result = if client.is_initialized() {
                client.query_spectrum(gps, &script.plan)
            } else {
                client.init(gps).map(|_| ()).and_then(|_| client.query_spectrum(gps, &script.plan))
            };
            match result {
                Ok(reply) => {
                    tally.queries_ok += 1;
                    grants = reply.grants;
                    if !gate.pending_waiver_decisions().is_empty() {
                        reconciliations.push(gate.reconcile_pending(&grants, &reply.reservations));
                    }
                    // re-query once half of the shortest remaining lifetime has passed
                    next_query = grants
                        .iter()
                        .map(|g| g.expires_at)
                        .min()
                        .map_or(t + script.epoch(), |e| t + e.since(t) / 2);
                }
                Err(_) => {
                    tally.queries_failed += 1;
                    next_query = t + script.epoch();
                }
            }
        }

        controller.ingest(script.kpm_at(t))?;
        controller.tick(t);

        let mut verdicts = Vec::with_capacity(channels.len());
        for &ch in &channels {
            let truth_class = occupancy_at(&script.truth, ch, t);
            let v = match &backend {
                Backend::Oracle => SensingVerdict {
                    channel: ch,
                    class: truth_class,
                    confidence: 1.0,
                    occupied: truth_class.is_occupied(),
                    decided_at: t,
                    decision_latency: Duration::ZERO,
                },
                Backend::Model(m) => {
                    let buf = synth_scene_channel(&script.truth, &script.plan, ch, t, capture, seed)
                        .map_err(SensingError::from)?;
                    let v = sense_channel(ch, &buf, m.as_ref(), sensing.theta)?;
                    if opts.measure_latency {
                        tally.latencies.push(v.decision_latency);
                    }
                    v
                }
            };
            tally.verdicts += 1;
            tally.correct += u64::from(v.class == truth_class);
            if truth_class.is_occupied() {
                tally.occupied_truths += 1;
                tally.occupied_called_vacant += u64::from(v.class == SignalClass::Vacant);
            }
            twin.observe(ch, v.occupied);
            verdicts.push(v);
        }

        let mut grant_backed = Vec::new();
        let mut waiver_backed = Vec::new();
        for v in &verdicts {
            let d = decide(v.channel, t, &grants, waiver.as_ref(), Some(v));
            match (d.allowed, d.basis) {
                (true, DecisionBasis::ValidGrant) => grant_backed.push((v.channel, *v)),
                (true, DecisionBasis::WaiverSensing) => waiver_backed.push((v.channel, *v)),
                _ => {}
            }
        }
        let pool = if grant_backed.is_empty() { &waiver_backed } else { &grant_backed };
        let chosen = select_channel(pool, &twin.prior).unwrap_or_else(|| fallback_channel(&verdicts));
        let verdict = verdicts.iter().find(|v| v.channel == chosen);
        let ctx = DecisionContext { gps, prior_occupancy: Some(twin.occupancy(chosen)) };
        let d = gate.decide(chosen, t, &grants, waiver.as_ref(), verdict, ctx)?;

        tally.epochs += 1;
        if outage {
            tally.outage_epochs += 1;
        }
        match d.basis {
            DecisionBasis::ValidGrant => tally.basis.valid_grant += 1,
            DecisionBasis::WaiverSensing => tally.basis.waiver_sensing += 1,
            DecisionBasis::Denied => tally.basis.denied += 1,
        }
        if d.allowed {
            tally.allowed += 1;
            tally.outage_allowed += u64::from(outage);
            if occupancy_at(&script.truth, chosen, t).is_occupied() {
                tally.violations += 1;
            }
            if twin.protected(gps, chosen) {
                tally.zone_warnings += 1;
            }
        }
        tally.conflicts += u64::from(d.sensing_conflict);
    }

    if let Some(path) = &opts.audit_export {
        gate.log().export(path)?;
    }
    let merged = ReconciliationReport::merge(&reconciliations);
    let chain_ok = gate.log().verify().is_ok();
    let transitions = controller.transitions().to_vec();
    let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(num as f64 / den as f64) };
    Ok(ScenarioReport {
        scenario: script.name.clone(),
        seed,
        classifier: classifier_name.into(),
        epochs: tally.epochs,
        availability: ratio(tally.allowed, tally.epochs).unwrap_or(0.0),
        availability_during_outage: ratio(tally.outage_allowed, tally.outage_epochs),
        violations: tally.violations,
        sensing_accuracy: ratio(tally.correct, tally.verdicts).unwrap_or(0.0),
        occupied_called_vacant_rate: ratio(tally.occupied_called_vacant, tally.occupied_truths),
        confirmation_rate: merged.confirmation_rate,
        reconciliation_runs: reconciliations.len() as u64,
        reconciled_decisions: merged.compared as u64,
        confirmed_decisions: merged.confirmed as u64,
        unreconciled_decisions: gate.pending_waiver_decisions().len() as u64,
        discrepancies: merged.discrepancies,
        basis: tally.basis,
        sensing_conflicts: tally.conflicts,
        protection_zone_warnings: tally.zone_warnings,
        outage_epochs: tally.outage_epochs,
        wsdb_queries_ok: tally.queries_ok,
        wsdb_queries_failed: tally.queries_failed,
        mode_transitions: transitions.len() as u64,
        final_mode: controller.state().mode,
        transitions,
        audit_entries: gate.log().len() as u64,
        audit_chain_ok: chain_ok,
        decision_latency: opts.measure_latency.then(|| LatencyStats::from_samples(&tally.latencies)).flatten(),
    })
}

/// Channel recorded when nothing is admissible: the most confident vacant
/// verdict, else the first channel.
fn fallback_channel(verdicts: &[SensingVerdict]) -> ChannelId {
    verdicts
        .iter()
        .filter(|v| v.class == SignalClass::Vacant)
        .max_by(|a, b| a.confidence.total_cmp(&b.confidence).then(b.channel.cmp(&a.channel)))
        .or(verdicts.first())
        .map_or(ChannelId(0), |v| v.channel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twin::BetaPrior;

    fn verdict(ch: u32, confidence: f64) -> (ChannelId, SensingVerdict) {
        (
            ChannelId(ch),
            SensingVerdict {
                channel: ChannelId(ch),
                class: SignalClass::Vacant,
                confidence,
                occupied: false,
                decided_at: Timestamp::ZERO,
                decision_latency: Duration::ZERO,
            },
        )
    }

    #[test]
    fn selection_order() {
        let mut prior = OccupancyPrior::new();
        let c = [verdict(3, 0.9), verdict(1, 0.95), verdict(2, 0.95)];
        assert_eq!(select_channel(&c, &prior), Some(ChannelId(1)));
        prior.set(ChannelId(1), BetaPrior::new(5.0, 1.0).unwrap());
        assert_eq!(select_channel(&c, &prior), Some(ChannelId(2)));
        prior.set(ChannelId(3), BetaPrior::new(1.0, 9.0).unwrap());
        assert_eq!(select_channel(&c, &prior), Some(ChannelId(3)));
        assert_eq!(select_channel(&[], &prior), None);
    }

    #[test]
    fn fallback_prefers_confident_vacant() {
        let vs: Vec<SensingVerdict> = [verdict(0, 0.5), verdict(1, 0.7), verdict(2, 0.7)].map(|p| p.1).to_vec();
        assert_eq!(fallback_channel(&vs), ChannelId(1));
        assert_eq!(fallback_channel(&[]), ChannelId(0));
    }
}
