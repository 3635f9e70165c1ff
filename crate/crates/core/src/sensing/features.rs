//! Hand-crafted spectrogram features feeding the default classifier.

use serde::{Deserialize, Serialize};

use super::spectrogram::{Spectrogram, FFT_SIZE, FLOOR_POWER};

/// Quantile of the time-averaged spectrum taken as the noise level when
/// measuring occupied bandwidth.
const NOISE_QUANTILE: f64 = 0.10;
/// Frame-energy dynamic range below which a capture counts as stationary.
const STATIONARY_RATIO: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Mean power over all bins and frames, dB.
    pub total_energy_db: f64,
    /// Geometric over arithmetic mean of the time-averaged spectrum.
    pub spectral_flatness: f64,
    /// 99 % power bandwidth of the noise-subtracted time-averaged spectrum, Hz.
    pub occupied_bw_hz: f64,
    pub peak_to_mean_db: f64,
    /// Fraction of frames that carry a burst.
    pub temporal_duty: f64,
    /// Kurtosis of the time-averaged spectrum's bin powers.
    pub spectral_kurtosis: f64,
}

impl FeatureVector {
    pub const LEN: usize = 6;

    /// Inputs to the linear classifier; bandwidth is normalised to the sample
    /// rate and kurtosis log-compressed.
    pub fn to_model_input(&self, sample_rate_hz: f64) -> [f64; Self::LEN] {
        [
            self.total_energy_db,
            self.spectral_flatness,
            self.occupied_bw_hz / sample_rate_hz,
            self.peak_to_mean_db,
            self.temporal_duty,
            self.spectral_kurtosis.ln_1p(),
        ]
    }
}

/// Labelled example for training, carrying the rate the features were taken at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatures {
    pub features: FeatureVector,
    pub sample_rate_hz: f64,
    pub label: crate::spectrum::SignalClass,
}

pub fn extract_features(sg: &Spectrogram, sample_rate_hz: f64) -> FeatureVector {
    let frames = sg.frames();
    let mut avg = vec![0f64; FFT_SIZE];
    let mut frame_energy = Vec::with_capacity(frames);
    for f in 0..frames {
        let row = sg.frame_power(f);
        let mut e = 0f64;
        for (a, &p) in avg.iter_mut().zip(row) {
            *a += f64::from(p);
            e += f64::from(p);
        }
        frame_energy.push(e);
    }
    avg.iter_mut().for_each(|a| *a /= frames as f64);
    // negative frequencies first so occupied bands are contiguous
    avg.rotate_left(FFT_SIZE / 2);

    let mean = avg.iter().sum::<f64>() / FFT_SIZE as f64;
    let log_mean = avg.iter().map(|p| p.ln()).sum::<f64>() / FFT_SIZE as f64;
    let spectral_flatness = (log_mean.exp() / mean).clamp(0.0, 1.0);
    let peak = avg.iter().cloned().fold(f64::MIN, f64::max);

    let m2 = avg.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / FFT_SIZE as f64;
    let m4 = avg.iter().map(|p| (p - mean).powi(4)).sum::<f64>() / FFT_SIZE as f64;
    let spectral_kurtosis = if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 };

    FeatureVector {
        total_energy_db: 10.0 * mean.log10(),
        spectral_flatness,
        occupied_bw_hz: occupied_bins(&avg) as f64 * sample_rate_hz / FFT_SIZE as f64,
        peak_to_mean_db: 10.0 * (peak / mean).log10(),
        temporal_duty: temporal_duty(&frame_energy),
        spectral_kurtosis,
    }
}

/// Width in bins of the band holding the central 99 % of excess power.
fn occupied_bins(spectrum: &[f64]) -> usize {
    let mut sorted = spectrum.to_vec();
    sorted.sort_by(f64::total_cmp);
    let noise = sorted[((sorted.len() - 1) as f64 * NOISE_QUANTILE) as usize];
    let excess: Vec<f64> = spectrum.iter().map(|p| (p - noise).max(0.0)).collect();
    let total: f64 = excess.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    let mut lo = None;
    for (k, e) in excess.iter().enumerate() {
        acc += e;
        if lo.is_none() && acc >= 0.005 * total {
            lo = Some(k);
        }
        if acc >= 0.995 * total {
            return k - lo.unwrap_or(k) + 1;
        }
    }
    excess.len() - lo.unwrap_or(0)
}

fn temporal_duty(frame_energy: &[f64]) -> f64 {
    let floor = f64::from(FLOOR_POWER) * FFT_SIZE as f64;
    let lo = frame_energy.iter().cloned().fold(f64::MAX, f64::min);
    let hi = frame_energy.iter().cloned().fold(f64::MIN, f64::max);
    if hi <= floor * (1.0 + 1e-3) {
        return 0.0;
    }
    if hi < STATIONARY_RATIO * lo {
        return 1.0;
    }
    let split = (lo * hi).sqrt();
    frame_energy.iter().filter(|&&e| e > split).count() as f64 / frame_energy.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::spectrogram::{spectrogram, FLOOR_DB};
    use crate::spectrum::SignalClass;
    use crate::synth::{synth_channel, IqBuffer, SynthConfig};
    use crate::time::Timestamp;
    use num_complex::Complex32;

    fn features_of(buf: &IqBuffer) -> FeatureVector {
        extract_features(&spectrogram(buf).unwrap(), buf.sample_rate_hz())
    }

    fn percentile(mut v: Vec<f64>, q: f64) -> f64 {
        v.sort_by(f64::total_cmp);
        v[((v.len() - 1) as f64 * q).round() as usize]
    }

    #[test]
    fn white_noise_is_flat() {
        let flat: Vec<f64> = (0..100)
            .map(|seed| {
                let buf = synth_channel(&SynthConfig::new(SignalClass::Vacant, 0.0, 0.002048, seed), 8e6).unwrap();
                features_of(&buf).spectral_flatness
            })
            .collect();
        let p5 = percentile(flat, 0.05);
        assert!(p5 >= 0.8, "5th percentile flatness {p5}");
    }

    #[test]
    fn single_tone_is_peaky() {
        let bin = 200.0;
        let samples: Vec<Complex32> = (0..16_384)
            .map(|i| {
                let p = 2.0 * std::f64::consts::PI * bin * i as f64 / 1024.0;
                Complex32::new(p.cos() as f32, p.sin() as f32)
            })
            .collect();
        let fv = features_of(&IqBuffer::new(samples, 8e6, 0.0, Timestamp::ZERO).unwrap());
        let bin_hz = 8e6 / 1024.0;
        assert!(fv.spectral_flatness <= 0.1, "flatness {}", fv.spectral_flatness);
        assert!(fv.occupied_bw_hz <= 3.0 * bin_hz, "bw {}", fv.occupied_bw_hz);
        assert!(fv.peak_to_mean_db > 20.0);
    }

    #[test]
    fn floor_spectrogram_has_no_duty() {
        let sg = Spectrogram::from_db(8, vec![FLOOR_DB; 8 * 1024]).unwrap();
        let fv = extract_features(&sg, 8e6);
        assert_eq!(fv.temporal_duty, 0.0);
        assert_eq!(fv.occupied_bw_hz, 0.0);
        assert!(fv.total_energy_db <= -119.9);
    }

    #[test]
    fn class_signatures() {
        let fv = |class, seed| {
            features_of(&synth_channel(&SynthConfig::new(class, 20.0, 0.004096, seed), 8e6).unwrap())
        };
        let tv = fv(SignalClass::TvBroadcast, 1);
        let mic = fv(SignalClass::WirelessMic, 1);
        let burst = fv(SignalClass::OtherTvws, 1);
        let vacant = fv(SignalClass::Vacant, 1);
        assert!(tv.occupied_bw_hz > 5e6, "tv bw {}", tv.occupied_bw_hz);
        assert!(mic.occupied_bw_hz < 250e3, "mic bw {}", mic.occupied_bw_hz);
        assert!(burst.temporal_duty < 0.9, "burst duty {}", burst.temporal_duty);
        assert_eq!(tv.temporal_duty, 1.0);
        assert!(vacant.total_energy_db.abs() < 0.5);
        for f in [tv, mic, burst, vacant] {
            assert!((0.0..=1.0).contains(&f.spectral_flatness));
            assert!((0.0..=1.0).contains(&f.temporal_duty));
            assert!(f.to_model_input(8e6).iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn deterministic() {
        let buf = synth_channel(&SynthConfig::new(SignalClass::OtherTvws, 10.0, 0.002, 4), 8e6).unwrap();
        assert_eq!(features_of(&buf), features_of(&buf));
    }
}
