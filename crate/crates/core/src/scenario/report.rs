use std::fmt::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::compliance::Discrepancy;
use crate::controller::{Mode, TransitionEvent};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisCounts {
    pub valid_grant: u64,
    pub waiver_sensing: u64,
    pub denied: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: u64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles; `None` for no samples.
    pub fn from_samples(samples: &[Duration]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let rank = |p: f64| ms[((p * ms.len() as f64).ceil() as usize).clamp(1, ms.len()) - 1];
        Some(LatencyStats { samples: ms.len() as u64, median_ms: rank(0.5), p95_ms: rank(0.95) })
    }
}

/// Outcome of one scenario run. Ratios with an empty denominator are absent,
/// except `availability` and `sensing_accuracy`, which read zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub classifier: String,
    pub epochs: u64,
    pub availability: f64,
    pub availability_during_outage: Option<f64>,
    /// Epochs that allowed emission on a channel the ground truth had occupied.
    pub violations: u64,
    pub sensing_accuracy: f64,
    pub occupied_called_vacant_rate: Option<f64>,
    pub confirmation_rate: Option<f64>,
    pub reconciliation_runs: u64,
    pub reconciled_decisions: u64,
    pub confirmed_decisions: u64,
    pub unreconciled_decisions: u64,
    pub discrepancies: Vec<Discrepancy>,
    pub basis: BasisCounts,
    pub sensing_conflicts: u64,
    pub protection_zone_warnings: u64,
    pub outage_epochs: u64,
    pub wsdb_queries_ok: u64,
    pub wsdb_queries_failed: u64,
    pub mode_transitions: u64,
    pub final_mode: Mode,
    pub transitions: Vec<TransitionEvent>,
    pub audit_entries: u64,
    pub audit_chain_ok: bool,
    /// Wall-clock dependent; only present when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decision_latency: Option<LatencyStats>,
}

impl ScenarioReport {
    /// Report of a run with no epochs.
    pub fn empty(scenario: impl Into<String>, seed: u64, classifier: impl Into<String>) -> Self {
        ScenarioReport {
            scenario: scenario.into(),
            seed,
            classifier: classifier.into(),
            epochs: 0,
            availability: 0.0,
            availability_during_outage: None,
            violations: 0,
            sensing_accuracy: 0.0,
            occupied_called_vacant_rate: None,
            confirmation_rate: None,
            reconciliation_runs: 0,
            reconciled_decisions: 0,
            confirmed_decisions: 0,
            unreconciled_decisions: 0,
            discrepancies: Vec::new(),
            basis: BasisCounts::default(),
            sensing_conflicts: 0,
            protection_zone_warnings: 0,
            outage_epochs: 0,
            wsdb_queries_ok: 0,
            wsdb_queries_failed: 0,
            mode_transitions: 0,
            final_mode: Mode::NativeHd,
            transitions: Vec::new(),
            audit_entries: 0,
            audit_chain_ok: true,
            decision_latency: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Aligned `key  value` table.
    Text,
    /// Pretty-printed JSON, fields in declaration order.
    Structured,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "structured" | "json" => Ok(ReportFormat::Structured),
            other => Err(format!("unknown report format {other:?} (text|structured)")),
        }
    }
}

pub fn emit_report(report: &ScenarioReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("report serialises");
            s.push('\n');
            s
        }
        ReportFormat::Text => text_table(report),
    }
}

/// Both formats come from the same serialised value, so they cannot drift.
fn text_table(report: &ScenarioReport) -> String {
    let value = serde_json::to_value(report).expect("report serialises");
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut tables: Vec<(String, Vec<Value>)> = Vec::new();
    flatten("", &value, &mut rows, &mut tables);
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in &rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    for (name, items) in tables {
        let _ = writeln!(out, "\n{name} ({})", items.len());
        for (i, item) in items.iter().enumerate() {
            let _ = writeln!(out, "  [{i}] {}", scalar(item));
        }
    }
    out
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>, tables: &mut Vec<(String, Vec<Value>)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, rows, tables);
            }
        }
        Value::Array(items) => tables.push((prefix.to_string(), items.clone())),
        other => rows.push((prefix.to_string(), scalar(other))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses a text table back into `key -> value` rows.
pub fn parse_text_rows(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| !l.is_empty())
        .filter_map(|l| l.split_once("  ").map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_renders() {
        let r = ScenarioReport::empty("nothing", 3, "oracle");
        let json = emit_report(&r, ReportFormat::Structured);
        assert!(json.contains("\"availability\": 0.0"));
        assert!(json.contains("\"confirmation_rate\": null"));
        assert!(!json.contains("decision_latency"));
        let text = emit_report(&r, ReportFormat::Text);
        let rows = parse_text_rows(&text);
        assert!(rows.contains(&("confirmation_rate".into(), "-".into())));
        assert!(rows.contains(&("basis.denied".into(), "0".into())));
        let back: ScenarioReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn text_matches_structured() {
        let mut r = ScenarioReport::empty("x", 1, "trained");
        r.epochs = 10;
        r.availability = 0.9;
        r.confirmation_rate = Some(0.97);
        r.decision_latency = LatencyStats::from_samples(&[Duration::from_millis(4), Duration::from_millis(8)]);
        let v: Value = serde_json::from_str(&emit_report(&r, ReportFormat::Structured)).unwrap();
        for (k, text_value) in parse_text_rows(&emit_report(&r, ReportFormat::Text)) {
            let mut node = &v;
            for part in k.split('.') {
                node = &node[part];
            }
            assert_eq!(scalar(node), text_value, "{k}");
        }
    }

    #[test]
    fn percentiles() {
        let s: Vec<Duration> = (1..=100).map(Duration::from_millis).collect();
        let st = LatencyStats::from_samples(&s).unwrap();
        assert_eq!((st.median_ms, st.p95_ms, st.samples), (50.0, 95.0, 100));
        assert!(LatencyStats::from_samples(&[]).is_none());
    }
}
