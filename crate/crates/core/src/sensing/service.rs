//! Verdict distribution: a latest-wins board, a fixed-cadence sensing loop,
//! and the line-delimited verdict export.
//!
//! Export records are one JSON object per line with fields in this order:
//! `channel, class, confidence, occupied, decided_at_ms, decision_latency_us`.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{sense_channel, SensingVerdict, SignalClassifier};
use crate::spectrum::{ChannelId, SignalClass};
use crate::synth::IqBuffer;
use crate::time::Timestamp;

/// Latest verdict per channel. Publishing never blocks on readers beyond the
/// map lock; older verdicts for a channel are overwritten.
#[derive(Debug, Default, Clone)]
pub struct VerdictBoard {
    inner: Arc<Mutex<BTreeMap<ChannelId, SensingVerdict>>>,
}

impl VerdictBoard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, verdicts: impl IntoIterator<Item = SensingVerdict>) {
        let mut map = self.inner.lock().expect("verdict board poisoned");
        for v in verdicts {
            match map.get(&v.channel) {
                Some(existing) if existing.decided_at > v.decided_at => {}
                _ => {
                    map.insert(v.channel, v);
                }
            }
        }
    }

    pub fn snapshot(&self) -> BTreeMap<ChannelId, SensingVerdict> {
        self.inner.lock().expect("verdict board poisoned").clone()
    }
}

/// Background loop that senses every channel once per period.
pub struct SensingService {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<usize>>,
}

impl SensingService {
    /// `capture` is called once per cycle and returns one buffer per channel.
    pub fn spawn<F>(
        period: Duration,
        classifier: Arc<dyn SignalClassifier>,
        theta: f64,
        board: VerdictBoard,
        mut capture: F,
    ) -> Self
    where
        F: FnMut() -> Vec<(ChannelId, IqBuffer)> + Send + 'static,
    {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = thread::spawn(move || {
            let mut cycles = 0;
            while !flag.load(Ordering::Relaxed) {
                let started = Instant::now();
                let batch: Vec<SensingVerdict> = capture()
                    .iter()
                    .filter_map(|(ch, buf)| sense_channel(*ch, buf, classifier.as_ref(), theta).ok())
                    .collect();
                board.publish(batch);
                cycles += 1;
                if let Some(rest) = period.checked_sub(started.elapsed()) {
                    thread::sleep(rest);
                }
            }
            cycles
        });
        SensingService { stop, handle: Some(handle) }
    }

    /// Stops the loop and returns the number of completed cycles.
    pub fn stop(mut self) -> usize {
        self.stop.store(true, Ordering::Relaxed);
        self.handle.take().map_or(0, |h| h.join().unwrap_or(0))
    }
}

impl Drop for SensingService {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub channel: u32,
    pub class: SignalClass,
    pub confidence: f64,
    pub occupied: bool,
    pub decided_at_ms: u64,
    pub decision_latency_us: u64,
}

impl From<&SensingVerdict> for VerdictRecord {
    fn from(v: &SensingVerdict) -> Self {
        VerdictRecord {
            channel: v.channel.0,
            class: v.class,
            confidence: v.confidence,
            occupied: v.occupied,
            decided_at_ms: v.decided_at.as_millis(),
            decision_latency_us: v.decision_latency.as_micros() as u64,
        }
    }
}

impl From<&VerdictRecord> for SensingVerdict {
    fn from(r: &VerdictRecord) -> Self {
        SensingVerdict {
            channel: ChannelId(r.channel),
            class: r.class,
            confidence: r.confidence,
            occupied: r.occupied,
            decided_at: Timestamp(r.decided_at_ms),
            decision_latency: Duration::from_micros(r.decision_latency_us),
        }
    }
}

pub fn write_verdict_line<W: Write>(w: &mut W, verdict: &SensingVerdict) -> io::Result<()> {
    serde_json::to_writer(&mut *w, &VerdictRecord::from(verdict))?;
    w.write_all(b"\n")
}
