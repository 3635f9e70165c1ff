//! Multinomial logistic regression over [`FeatureVector`]s.
//!
//! The classifier sits behind [`SignalClassifier`] so that other backends can
//! replace it without touching the gate.
//!
//! ## Model file format (little-endian)
//!
//! ```text
//! magic        4   "SIDM"
//! version      2   u16 = 1
//! seed         8   u64 training seed
//! descriptor   4+n u32 length, UTF-8 dataset description
//! classes      1   u8 count C, then per class: u8 length + UTF-8 name
//! features     4   u32 count F
//! mean         8F  f64 per-feature standardisation offset
//! scale        8F  f64 per-feature standardisation divisor
//! weights      8C(F+1) f64, row per class, bias last
//! ```

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::features::{FeatureVector, LabeledFeatures};
use super::SensingError;
use crate::spectrum::SignalClass;

pub const MODEL_MAGIC: [u8; 4] = *b"SIDM";
pub const MODEL_VERSION: u16 = 1;
pub const MIN_EXAMPLES_PER_CLASS: usize = 25;

const NUM_CLASSES: usize = 4;
const NUM_FEATURES: usize = FeatureVector::LEN;
const MAX_EPOCHS: usize = 500;
const GRAD_TOL: f64 = 1e-6;
const LEARNING_RATE: f64 = 0.5;
const MOMENTUM: f64 = 0.9;
const L2: f64 = 1e-4;
/// Every class keeps at least this much posterior mass so that a confidence
/// of exactly 1 is never reported.
const POSTERIOR_FLOOR: f64 = 1e-9;

/// Class posterior over [`SignalClass::ALL`] order.
pub type Posterior = [f64; NUM_CLASSES];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub class: SignalClass,
    pub confidence: f64,
    pub posterior: Posterior,
}

impl Classification {
    pub fn from_posterior(posterior: Posterior) -> Self {
        let (idx, &confidence) = posterior
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty posterior");
        Classification { class: SignalClass::from_index(idx).expect("index < 4"), confidence, posterior }
    }
}

/// Maps features to a 4-way posterior.
pub trait SignalClassifier: Send + Sync {
    fn posterior(&self, features: &FeatureVector, sample_rate_hz: f64) -> Posterior;

    fn classify(&self, features: &FeatureVector, sample_rate_hz: f64) -> Classification {
        Classification::from_posterior(self.posterior(features, sample_rate_hz))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub training_seed: u64,
    pub dataset: String,
    classes: Vec<SignalClass>,
    mean: [f64; NUM_FEATURES],
    scale: [f64; NUM_FEATURES],
    /// `NUM_CLASSES` rows of `NUM_FEATURES + 1` (bias last).
    weights: Vec<f64>,
}

impl ClassifierModel {
    /// A model with all-zero weights: every input gets the uniform posterior.
    pub fn uniform() -> Self {
        ClassifierModel {
            training_seed: 0,
            dataset: "uniform".into(),
            classes: SignalClass::ALL.to_vec(),
            mean: [0.0; NUM_FEATURES],
            scale: [1.0; NUM_FEATURES],
            weights: vec![0.0; NUM_CLASSES * (NUM_FEATURES + 1)],
        }
    }

    pub fn classes(&self) -> &[SignalClass] {
        &self.classes
    }

    fn standardise(&self, x: &[f64; NUM_FEATURES]) -> [f64; NUM_FEATURES] {
        let mut z = [0.0; NUM_FEATURES];
        for i in 0..NUM_FEATURES {
            z[i] = (x[i] - self.mean[i]) / self.scale[i];
        }
        z
    }

    pub fn save<W: Write>(&self, w: &mut W) -> Result<(), SensingError> {
        let mut out = Vec::new();
        out.write_all(&MODEL_MAGIC)?;
        out.write_u16::<LittleEndian>(MODEL_VERSION)?;
        out.write_u64::<LittleEndian>(self.training_seed)?;
        out.write_u32::<LittleEndian>(self.dataset.len() as u32)?;
        out.write_all(self.dataset.as_bytes())?;
        out.write_u8(self.classes.len() as u8)?;
        for c in &self.classes {
            out.write_u8(c.name().len() as u8)?;
            out.write_all(c.name().as_bytes())?;
        }
        out.write_u32::<LittleEndian>(NUM_FEATURES as u32)?;
        for v in self.mean.iter().chain(&self.scale).chain(&self.weights) {
            out.write_f64::<LittleEndian>(*v)?;
        }
        w.write_all(&out)?;
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self, SensingError> {
        let bad = |m: &str| SensingError::BadModel(m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MODEL_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != MODEL_VERSION {
            return Err(SensingError::BadModel(format!("unsupported version {version}")));
        }
        let training_seed = r.read_u64::<LittleEndian>()?;
        let len = r.read_u32::<LittleEndian>()? as usize;
        if len > 1 << 20 {
            return Err(bad("descriptor too long"));
        }
        let mut desc = vec![0u8; len];
        r.read_exact(&mut desc)?;
        let dataset = String::from_utf8(desc).map_err(|_| bad("descriptor is not UTF-8"))?;
        let n_classes = r.read_u8()? as usize;
        let mut classes = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            let mut name = vec![0u8; r.read_u8()? as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("class name is not UTF-8"))?;
            classes.push(name.parse::<SignalClass>().map_err(|e| bad(&e))?);
        }
        if classes != SignalClass::ALL {
            return Err(bad("class list must be TvBroadcast, WirelessMic, OtherTvws, Vacant"));
        }
        if r.read_u32::<LittleEndian>()? as usize != NUM_FEATURES {
            return Err(bad("feature count mismatch"));
        }
        let mut read_vec = |n: usize| -> io::Result<Vec<f64>> {
            (0..n).map(|_| r.read_f64::<LittleEndian>()).collect()
        };
        let mean: [f64; NUM_FEATURES] = read_vec(NUM_FEATURES)?.try_into().expect("length");
        let scale: [f64; NUM_FEATURES] = read_vec(NUM_FEATURES)?.try_into().expect("length");
        let weights = read_vec(NUM_CLASSES * (NUM_FEATURES + 1))?;
        if mean.iter().chain(&scale).chain(&weights).any(|v| !v.is_finite()) || scale.iter().any(|&s| s <= 0.0) {
            return Err(bad("non-finite or non-positive parameters"));
        }
        Ok(ClassifierModel { training_seed, dataset, classes, mean, scale, weights })
    }
}

fn logits(weights: &[f64], z: &[f64; NUM_FEATURES]) -> [f64; NUM_CLASSES] {
    let mut out = [0.0; NUM_CLASSES];
    for (c, o) in out.iter_mut().enumerate() {
        let row = &weights[c * (NUM_FEATURES + 1)..(c + 1) * (NUM_FEATURES + 1)];
        *o = row[NUM_FEATURES] + row[..NUM_FEATURES].iter().zip(z).map(|(w, x)| w * x).sum::<f64>();
    }
    out
}

fn softmax(l: [f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = l.iter().cloned().fold(f64::MIN, f64::max);
    let mut p = l.map(|v| (v - max).exp());
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

impl SignalClassifier for ClassifierModel {
    fn posterior(&self, features: &FeatureVector, sample_rate_hz: f64) -> Posterior {
        let z = self.standardise(&features.to_model_input(sample_rate_hz));
        let p = softmax(logits(&self.weights, &z));
        p.map(|v| (1.0 - NUM_CLASSES as f64 * POSTERIOR_FLOOR) * v + POSTERIOR_FLOOR)
    }
}

pub fn classify(model: &dyn SignalClassifier, features: &FeatureVector, sample_rate_hz: f64) -> Classification {
    model.classify(features, sample_rate_hz)
}

/// Full-batch gradient descent with momentum on the L2-regularised
/// cross-entropy. Stops when the gradient norm drops below 1e-6 or after
/// 500 epochs. The seed only drives weight initialisation, so the result is
/// a pure function of `(dataset order, seed)`.
pub fn train_classifier(dataset: &[LabeledFeatures], seed: u64) -> Result<ClassifierModel, SensingError> {
    let mut counts = [0usize; NUM_CLASSES];
    for ex in dataset {
        counts[ex.label.index()] += 1;
    }
    let present: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    if present.len() < 2 || present.iter().any(|&c| c < MIN_EXAMPLES_PER_CLASS) {
        return Err(SensingError::InsufficientData(counts));
    }

    let inputs: Vec<[f64; NUM_FEATURES]> =
        dataset.iter().map(|ex| ex.features.to_model_input(ex.sample_rate_hz)).collect();
    if inputs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SensingError::InvalidFeatures);
    }
    let n = inputs.len() as f64;
    let mut mean = [0.0; NUM_FEATURES];
    let mut scale = [0.0; NUM_FEATURES];
    for x in &inputs {
        for i in 0..NUM_FEATURES {
            mean[i] += x[i] / n;
        }
    }
    for x in &inputs {
        for i in 0..NUM_FEATURES {
            scale[i] += (x[i] - mean[i]).powi(2) / n;
        }
    }
    let scale = scale.map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });

    let mut model = ClassifierModel {
        training_seed: seed,
        dataset: format!("{} examples, per-class counts {:?}", dataset.len(), counts),
        classes: SignalClass::ALL.to_vec(),
        mean,
        scale,
        weights: vec![0.0; NUM_CLASSES * (NUM_FEATURES + 1)],
    };
    let z: Vec<[f64; NUM_FEATURES]> = inputs.iter().map(|x| model.standardise(x)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    model.weights.iter_mut().for_each(|w| *w = init.sample(&mut rng));

    let stride = NUM_FEATURES + 1;
    let mut velocity = vec![0.0; model.weights.len()];
    let mut grad = vec![0.0; model.weights.len()];
    for _epoch in 0..MAX_EPOCHS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (x, ex) in z.iter().zip(dataset) {
            let p = softmax(logits(&model.weights, x));
            for c in 0..NUM_CLASSES {
                let err = (p[c] - if ex.label.index() == c { 1.0 } else { 0.0 }) / n;
                let row = &mut grad[c * stride..(c + 1) * stride];
                for i in 0..NUM_FEATURES {
                    row[i] += err * x[i];
                }
                row[NUM_FEATURES] += err;
            }
        }
        for (g, w) in grad.iter_mut().zip(&model.weights) {
            *g += L2 * w;
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < GRAD_TOL {
            break;
        }
        for ((v, w), g) in velocity.iter_mut().zip(model.weights.iter_mut()).zip(&grad) {
            *v = MOMENTUM * *v - LEARNING_RATE * g;
            *w += *v;
        }
    }
    Ok(model)
}
