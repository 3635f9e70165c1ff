//! Capture → representation → classifier → decision.
//!
//! [`sense_channel`] turns one channel's IQ capture into a [`SensingVerdict`].
//! A channel is a transmission candidate only when the verdict is `Vacant`
//! with confidence at or above `θ_sense`; that test lives in
//! [`is_transmission_candidate`] and is applied by the compliance gate.

mod classifier;
mod energy;
mod features;
mod service;
mod spectrogram;

pub use classifier::{
    classify, train_classifier, Classification, ClassifierModel, Posterior, SignalClassifier, MIN_EXAMPLES_PER_CLASS,
    MODEL_MAGIC, MODEL_VERSION,
};
pub use energy::{cfar_threshold, energy_detect, q_inverse};
pub use features::{extract_features, FeatureVector, LabeledFeatures};
pub use service::{write_verdict_line, SensingService, VerdictBoard, VerdictRecord};
pub use spectrogram::{frame_count, spectrogram, Spectrogram, Window, FFT_SIZE, FLOOR_DB, HOP};

use std::io;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::spectrum::{ChannelId, SignalClass};
use crate::synth::{synth_channel, IqBuffer, SynthConfig, SynthError};
use crate::time::Timestamp;

/// Vacancy confidence required before a channel may carry waiver traffic.
pub const THETA_SENSE: f64 = 0.85;

#[derive(Debug, Error)]
pub enum SensingError {
    #[error("buffer holds {0} samples, need at least 1024")]
    BufferTooShort(usize),
    #[error("invalid spectrogram: {0}")]
    InvalidSpectrogram(String),
    #[error("false-alarm probability {0} outside (0, 1)")]
    InvalidPfa(f64),
    #[error("noise power {0} must be positive")]
    InvalidNoisePower(f64),
    #[error("sensing threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("need at least two classes with >= 25 examples each, got counts {0:?}")]
    InsufficientData([usize; 4]),
    #[error("training features contain non-finite values")]
    InvalidFeatures,
    #[error("bad model file: {0}")]
    BadModel(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingVerdict {
    pub channel: ChannelId,
    pub class: SignalClass,
    pub confidence: f64,
    pub occupied: bool,
    pub decided_at: Timestamp,
    /// Wall-clock time from spectrogram start to classifier output.
    pub decision_latency: Duration,
}

impl SensingVerdict {
    pub fn new(channel: ChannelId, c: &Classification, decided_at: Timestamp, latency: Duration) -> Self {
        SensingVerdict {
            channel,
            class: c.class,
            confidence: c.confidence,
            occupied: c.class.is_occupied(),
            decided_at,
            decision_latency: latency,
        }
    }

    /// Equality ignoring the measured latency.
    pub fn same_decision(&self, other: &SensingVerdict) -> bool {
        SensingVerdict { decision_latency: Duration::ZERO, ..*self }
            == SensingVerdict { decision_latency: Duration::ZERO, ..*other }
    }
}

pub fn validate_theta(theta: f64) -> Result<f64, SensingError> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(theta)
    } else {
        Err(SensingError::InvalidThreshold(theta))
    }
}

/// Vacant with confidence at or above `theta`.
pub fn is_transmission_candidate(verdict: &SensingVerdict, theta: f64) -> bool {
    verdict.class == SignalClass::Vacant && verdict.confidence >= theta
}

/// Runs spectrogram → features → classifier on one capture. The capture's
/// timestamp becomes `decided_at`.
pub fn sense_channel(
    channel: ChannelId,
    buf: &IqBuffer,
    classifier: &dyn SignalClassifier,
    theta: f64,
) -> Result<SensingVerdict, SensingError> {
    validate_theta(theta)?;
    let started = Instant::now();
    let sg = spectrogram(buf)?;
    let features = extract_features(&sg, buf.sample_rate_hz());
    let c = classifier.classify(&features, buf.sample_rate_hz());
    Ok(SensingVerdict::new(channel, &c, buf.capture_time(), started.elapsed()))
}

/// Synthetic training-set recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecipe {
    pub examples_per_class: usize,
    /// SNR drawn uniformly from this range for non-vacant classes.
    pub snr_db: (f64, f64),
    pub capture_samples: usize,
    pub sample_rate_hz: f64,
    pub channel_width_hz: f64,
    pub seed: u64,
    /// Apply random frequency shift / stretch / noise augmentation to half the examples.
    pub augment: bool,
}

impl Default for TrainingRecipe {
    fn default() -> Self {
        TrainingRecipe {
            examples_per_class: 200,
            snr_db: (8.0, 30.0),
            capture_samples: 16_384,
            sample_rate_hz: crate::synth::DEFAULT_SAMPLE_RATE_HZ,
            channel_width_hz: 6e6,
            seed: 0x51D5,
            augment: true,
        }
    }
}

/// Generates labelled feature vectors from seeded synthetic captures,
/// interleaving classes so that prefixes stay balanced.
pub fn synth_dataset(recipe: &TrainingRecipe) -> Result<Vec<LabeledFeatures>, SensingError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(recipe.seed);
    let mut out = Vec::with_capacity(recipe.examples_per_class * 4);
    for i in 0..recipe.examples_per_class {
        for class in SignalClass::ALL {
            let snr = if recipe.snr_db.0 < recipe.snr_db.1 {
                rng.random_range(recipe.snr_db.0..recipe.snr_db.1)
            } else {
                recipe.snr_db.0
            };
            let config = SynthConfig {
                class,
                snr_db: snr,
                duration_s: recipe.capture_samples as f64 / recipe.sample_rate_hz,
                seed: rng.random(),
                channel_width_hz: recipe.channel_width_hz,
            };
            let mut buf = synth_channel(&config, recipe.sample_rate_hz)?;
            if recipe.augment && i % 2 == 1 {
                let shift = rng.random_range(-crate::synth::MAX_FREQ_SHIFT_HZ..=crate::synth::MAX_FREQ_SHIFT_HZ);
                let stretch = rng.random_range(0.9..=1.1);
                let extra = rng.random_range(-20.0..-6.0);
                buf = crate::synth::augment(&buf, shift, stretch, extra, rng.random())?;
            }
            let sg = spectrogram(&buf)?;
            out.push(LabeledFeatures {
                features: extract_features(&sg, recipe.sample_rate_hz),
                sample_rate_hz: recipe.sample_rate_hz,
                label: class,
            });
        }
    }
    Ok(out)
}

/// Trains the default feature classifier on a synthetic dataset.
pub fn train_default_model(recipe: &TrainingRecipe) -> Result<ClassifierModel, SensingError> {
    train_classifier(&synth_dataset(recipe)?, recipe.seed)
}
