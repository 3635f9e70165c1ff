//! Seeded complex-baseband waveforms for each signal class.
//!
//! Every generator draws from a ChaCha8 stream seeded by the caller, so a
//! given `(SynthConfig, sample_rate)` always yields the same samples.
//! Noise is circular complex white Gaussian with unit power; signals are
//! scaled so that their realised mean power equals `10^(snr_db/10)`.
//!
//! Class archetypes:
//!
//! | class         | waveform                                                        |
//! |---------------|-----------------------------------------------------------------|
//! | `TvBroadcast` | OFDM, 1024-point IFFT, random QPSK, 95 % of the channel width   |
//! | `WirelessMic` | two-tone FM, peak deviation 10–40 kHz, random offset in channel |
//! | `OtherTvws`   | RRC-shaped 16-QAM bursts, duty cycle 0.3–0.8                     |
//! | `Vacant`      | noise only                                                      |

mod iqfile;

pub use iqfile::{read_captures, write_capture, IqFileError, LabeledCapture, IQ_MAGIC, IQ_VERSION};

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::spectrum::{ChannelId, ChannelPlan, GroundTruthOccupancy, SignalClass, MHZ};
use crate::time::Timestamp;

/// Per-channel sample rate used when none is given.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 8e6;
pub const MAX_FREQ_SHIFT_HZ: f64 = 500e3;
pub const TIME_STRETCH_RANGE: (f64, f64) = (0.9, 1.1);

const OFDM_FFT: usize = 1024;
const OFDM_CP: usize = OFDM_FFT / 8;
const OFDM_OCCUPANCY: f64 = 0.95;
const MIC_EDGE_GUARD_HZ: f64 = 150e3;
const BURST_DUTY_RANGE: (f64, f64) = (0.3, 0.8);
const RRC_ROLLOFF: f64 = 0.25;
const RRC_SPAN_SYMBOLS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("augmentation parameter out of range: {0}")]
    AugmentOutOfRange(String),
    #[error("invalid IQ buffer: {0}")]
    InvalidBuffer(String),
}

/// Complex baseband capture of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    samples: Vec<Complex32>,
    sample_rate_hz: f64,
    center_freq_hz: f64,
    capture_time: Timestamp,
}

impl IqBuffer {
    pub fn new(
        samples: Vec<Complex32>,
        sample_rate_hz: f64,
        center_freq_hz: f64,
        capture_time: Timestamp,
    ) -> Result<Self, SynthError> {
        if samples.is_empty() {
            return Err(SynthError::InvalidBuffer("no samples".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SynthError::InvalidBuffer(format!("sample rate {sample_rate_hz}")));
        }
        if !center_freq_hz.is_finite() {
            return Err(SynthError::InvalidBuffer("non-finite center frequency".into()));
        }
        if let Some(i) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(SynthError::InvalidBuffer(format!("non-finite sample at {i}")));
        }
        Ok(IqBuffer { samples, sample_rate_hz, center_freq_hz, capture_time })
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn center_freq_hz(&self) -> f64 {
        self.center_freq_hz
    }

    pub fn capture_time(&self) -> Timestamp {
        self.capture_time
    }

    pub fn with_center_freq(mut self, hz: f64) -> Self {
        self.center_freq_hz = hz;
        self
    }

    pub fn with_capture_time(mut self, t: Timestamp) -> Self {
        self.capture_time = t;
        self
    }

    /// Mean `|x|²` over the buffer.
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub(crate) fn mean_power(samples: &[Complex32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| f64::from(s.norm_sqr())).sum::<f64>() / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub class: SignalClass,
    pub snr_db: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Width of the channel the waveform must fit in.
    pub channel_width_hz: f64,
}

impl SynthConfig {
    pub fn new(class: SignalClass, snr_db: f64, duration_s: f64, seed: u64) -> Self {
        SynthConfig { class, snr_db, duration_s, seed, channel_width_hz: (6 * MHZ) as f64 }
    }

    pub fn with_channel_width(mut self, hz: f64) -> Self {
        self.channel_width_hz = hz;
        self
    }

    fn sample_count(&self, sample_rate_hz: f64) -> usize {
        (self.duration_s * sample_rate_hz).round() as usize
    }

    fn validate(&self, sample_rate_hz: f64) -> Result<usize, SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration {} s", self.duration_s));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return bad(format!("sample rate {sample_rate_hz} Hz"));
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite".into());
        }
        if !(self.channel_width_hz > 0.0 && self.channel_width_hz <= sample_rate_hz) {
            return bad(format!(
                "channel width {} Hz does not fit a {} Hz sample rate",
                self.channel_width_hz, sample_rate_hz
            ));
        }
        let n = self.sample_count(sample_rate_hz);
        if n == 0 {
            return bad("duration shorter than one sample".into());
        }
        Ok(n)
    }
}

/// Signal and noise components before they are summed.
#[derive(Debug, Clone)]
pub struct SynthParts {
    /// Scaled signal; all zeros for `Vacant`.
    pub signal: Vec<Complex32>,
    pub noise: Vec<Complex32>,
}

pub fn synth_parts(config: &SynthConfig, sample_rate_hz: f64) -> Result<SynthParts, SynthError> {
    let n = config.validate(sample_rate_hz)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let raw = match config.class {
        SignalClass::Vacant => None,
        SignalClass::TvBroadcast => Some(ofdm(&mut rng, n, sample_rate_hz, config.channel_width_hz)),
        SignalClass::WirelessMic => Some(fm_mic(&mut rng, n, sample_rate_hz, config.channel_width_hz)),
        SignalClass::OtherTvws => Some(bursty_qam(&mut rng, n, sample_rate_hz, config.channel_width_hz)),
    };
    let signal = match raw {
        None => vec![Complex32::new(0.0, 0.0); n],
        Some(raw) => {
            let p = raw.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
            let target = 10f64.powf(config.snr_db / 10.0);
            let gain = if p > 0.0 { (target / p).sqrt() } else { 0.0 };
            raw.iter().map(|s| Complex32::new((s.re * gain) as f32, (s.im * gain) as f32)).collect()
        }
    };
    let noise = awgn(&mut rng, n, 1.0);
    Ok(SynthParts { signal, noise })
}

/// One channel's capture: scaled signal for `config.class` plus unit-power noise.
pub fn synth_channel(config: &SynthConfig, sample_rate_hz: f64) -> Result<IqBuffer, SynthError> {
    let SynthParts { signal, mut noise } = synth_parts(config, sample_rate_hz)?;
    if config.class != SignalClass::Vacant {
        noise.iter_mut().zip(&signal).for_each(|(w, s)| *w += s);
    }
    IqBuffer::new(noise, sample_rate_hz, 0.0, Timestamp::ZERO)
}

fn awgn(rng: &mut ChaCha8Rng, n: usize, power: f64) -> Vec<Complex32> {
    let sigma = (power / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex32::new((re * sigma) as f32, (im * sigma) as f32)
        })
        .collect()
}

fn qpsk(rng: &mut ChaCha8Rng) -> Complex64 {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(if rng.random::<bool>() { a } else { -a }, if rng.random::<bool>() { a } else { -a })
}

fn qam16(rng: &mut ChaCha8Rng) -> Complex64 {
    const LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
    Complex64::new(LEVELS[rng.random_range(0..4)], LEVELS[rng.random_range(0..4)]) / 10f64.sqrt()
}

fn ofdm(rng: &mut ChaCha8Rng, n: usize, fs: f64, width: f64) -> Vec<Complex64> {
    let spacing = fs / OFDM_FFT as f64;
    let half = ((OFDM_OCCUPANCY * width / 2.0) / spacing).floor() as usize;
    let half = half.clamp(1, OFDM_FFT / 2 - 1);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(OFDM_FFT);
    let symbol_len = OFDM_FFT + OFDM_CP;
    let offset = rng.random_range(0..symbol_len);
    let mut out = Vec::with_capacity(n + 2 * symbol_len);
    let mut bins = vec![Complex64::new(0.0, 0.0); OFDM_FFT];
    while out.len() < n + offset {
        bins.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for k in 1..=half {
            bins[k] = qpsk(rng);
            bins[OFDM_FFT - k] = qpsk(rng);
        }
        ifft.process(&mut bins);
        out.extend_from_slice(&bins[OFDM_FFT - OFDM_CP..]);
        out.extend_from_slice(&bins);
    }
    out.drain(..offset);
    out.truncate(n);
    out
}

fn fm_mic(rng: &mut ChaCha8Rng, n: usize, fs: f64, width: f64) -> Vec<Complex64> {
    let max_offset = (width / 2.0 - MIC_EDGE_GUARD_HZ).max(0.0);
    let carrier = if max_offset > 0.0 { rng.random_range(-max_offset..max_offset) } else { 0.0 };
    let deviation = rng.random_range(10e3..40e3);
    let tones: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| {
            let f = rng.random_range(300.0..3000.0);
            let share = rng.random_range(0.3..0.7);
            (f, share, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let total: f64 = tones.iter().map(|t| t.1).sum();
    let phase0 = rng.random_range(0.0..2.0 * PI);
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            // instantaneous frequency carrier + Σ Δf_k cos(2π f_k t + θ_k), integrated
            let mut phase = phase0 + 2.0 * PI * carrier * t;
            for &(f, share, theta) in &tones {
                let beta = deviation * share / total / f;
                phase += beta * (2.0 * PI * f * t + theta).sin();
            }
            Complex64::from_polar(1.0, phase)
        })
        .collect()
}

fn rrc_taps(sps: usize, rolloff: f64, span: usize) -> Vec<f64> {
    let len = span * sps + 1;
    let mid = (len / 2) as f64;
    let b = rolloff;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let t = (i as f64 - mid) / sps as f64;
            if t.abs() < 1e-12 {
                1.0 - b + 4.0 * b / PI
            } else if (t.abs() - 1.0 / (4.0 * b)).abs() < 1e-9 {
                b / 2f64.sqrt() * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let norm = taps.iter().map(|x| x * x).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|x| *x /= norm);
    taps
}

fn bursty_qam(rng: &mut ChaCha8Rng, n: usize, fs: f64, width: f64) -> Vec<Complex64> {
    // samples-per-symbol candidates whose shaped bandwidth fits the channel
    let usable: Vec<usize> =
        [2usize, 4, 8].into_iter().filter(|&sps| fs / sps as f64 * (1.0 + RRC_ROLLOFF) <= 0.9 * width).collect();
    let sps = if usable.is_empty() { 16 } else { usable[rng.random_range(0..usable.len())] };
    let occupied = fs / sps as f64 * (1.0 + RRC_ROLLOFF);
    let max_offset = ((width - occupied) / 2.0).max(0.0);
    let offset_hz = if max_offset > 0.0 { rng.random_range(-max_offset..max_offset) } else { 0.0 };
    let duty = rng.random_range(BURST_DUTY_RANGE.0..BURST_DUTY_RANGE.1);
    let period = rng.random_range(4096usize..8192);
    let on_len = ((duty * period as f64).round() as usize).max(1);
    let phase_start = rng.random_range(0..period);

    let taps = rrc_taps(sps, RRC_ROLLOFF, RRC_SPAN_SYMBOLS);
    let delay = taps.len() / 2;
    let n_symbols = (n + taps.len()) / sps + 1;
    let symbols: Vec<Complex64> = (0..n_symbols).map(|_| qam16(rng)).collect();
    let mut shaped = vec![Complex64::new(0.0, 0.0); n];
    for (k, sym) in symbols.iter().enumerate() {
        for (j, tap) in taps.iter().enumerate() {
            let idx = (k * sps + j) as isize - delay as isize;
            if idx >= 0 && (idx as usize) < n {
                shaped[idx as usize] += sym * *tap;
            }
        }
    }
    shaped
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let on = (i + phase_start) % period < on_len;
            if on {
                s * Complex64::from_polar(1.0, 2.0 * PI * offset_hz * i as f64 / fs)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Training augmentation: complex mixing by `freq_shift_hz`, linear-interpolation
/// resampling by `time_stretch`, then additive white noise at `extra_noise_db`
/// relative to unit power (`f64::NEG_INFINITY` adds none).
pub fn augment(
    buf: &IqBuffer,
    freq_shift_hz: f64,
    time_stretch: f64,
    extra_noise_db: f64,
    seed: u64,
) -> Result<IqBuffer, SynthError> {
    if !(freq_shift_hz.abs() <= MAX_FREQ_SHIFT_HZ) {
        return Err(SynthError::AugmentOutOfRange(format!("frequency shift {freq_shift_hz} Hz")));
    }
    if !(time_stretch >= TIME_STRETCH_RANGE.0 && time_stretch <= TIME_STRETCH_RANGE.1) {
        return Err(SynthError::AugmentOutOfRange(format!("time stretch {time_stretch}")));
    }
    if extra_noise_db.is_nan() || extra_noise_db == f64::INFINITY {
        return Err(SynthError::AugmentOutOfRange(format!("extra noise {extra_noise_db} dB")));
    }
    let fs = buf.sample_rate_hz();
    let mut samples = buf.samples().to_vec();

    if freq_shift_hz != 0.0 {
        let w = 2.0 * PI * freq_shift_hz / fs;
        for (i, s) in samples.iter_mut().enumerate() {
            let rot = Complex64::from_polar(1.0, w * i as f64);
            let v = Complex64::new(f64::from(s.re), f64::from(s.im)) * rot;
            *s = Complex32::new(v.re as f32, v.im as f32);
        }
    }

    if time_stretch != 1.0 {
        let n_in = samples.len();
        let n_out = ((n_in as f64 * time_stretch).round() as usize).max(1);
        let src = samples;
        samples = (0..n_out)
            .map(|m| {
                let pos = m as f64 / time_stretch;
                let i = pos.floor() as usize;
                if i + 1 >= n_in {
                    src[n_in - 1]
                } else {
                    let frac = (pos - i as f64) as f32;
                    src[i] * (1.0 - frac) + src[i + 1] * frac
                }
            })
            .collect();
    }

    if extra_noise_db.is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = awgn(&mut rng, samples.len(), 10f64.powf(extra_noise_db / 10.0));
        samples.iter_mut().zip(noise).for_each(|(s, w)| *s += w);
    }

    IqBuffer::new(samples, fs, buf.center_freq_hz(), buf.capture_time())
}

/// Capture parameters for [`mix_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneCapture {
    pub sample_rate_hz: f64,
    pub samples: usize,
}

impl Default for SceneCapture {
    fn default() -> Self {
        SceneCapture { sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ, samples: 16_384 }
    }
}

/// Seed for one channel's capture at one instant; independent streams per (seed, channel, t).
pub fn derive_seed(seed: u64, channel: ChannelId, t: Timestamp) -> u64 {
    let mut x = seed ^ 0x9E37_79B9_7F4A_7C15;
    for word in [u64::from(channel.0), t.as_millis()] {
        x = splitmix64(x ^ word);
    }
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Synthesises the capture for a single channel of a scene.
pub fn synth_scene_channel(
    truth: &GroundTruthOccupancy,
    plan: &ChannelPlan,
    ch: ChannelId,
    t: Timestamp,
    capture: SceneCapture,
    seed: u64,
) -> Result<IqBuffer, SynthError> {
    let center = plan
        .channel_center_hz(ch)
        .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let (class, snr_db) = truth.active_entry(ch, t).map_or((SignalClass::Vacant, 0.0), |e| (e.class, e.snr_db));
    let config = SynthConfig {
        class,
        snr_db,
        duration_s: capture.samples as f64 / capture.sample_rate_hz,
        seed: derive_seed(seed, ch, t),
        channel_width_hz: plan.channel_width_hz() as f64,
    };
    Ok(synth_channel(&config, capture.sample_rate_hz)?.with_center_freq(center).with_capture_time(t))
}

/// One capture per channel of `plan`, consistent with the scripted occupancy at `t`.
pub fn mix_scene(
    truth: &GroundTruthOccupancy,
    plan: &ChannelPlan,
    t: Timestamp,
    capture: SceneCapture,
    seed: u64,
) -> Result<BTreeMap<ChannelId, IqBuffer>, SynthError> {
    plan.channels()
        .map(|ch| Ok((ch, synth_scene_channel(truth, plan, ch, t, capture, seed)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::OccupancyEntry;

    /// Noise-subtracted 99 % occupied bandwidth of a buffer (oracle).
    fn occupied_bw_oracle(buf: &IqBuffer, noise_power: f64) -> f64 {
        let nfft = 4096;
        let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
        let mut psd = vec![0.0; nfft];
        let mut frames = 0;
        for chunk in buf.samples().chunks_exact(nfft) {
            let mut v: Vec<Complex64> =
                chunk.iter().map(|s| Complex64::new(f64::from(s.re), f64::from(s.im))).collect();
            fft.process(&mut v);
            for (p, x) in psd.iter_mut().zip(&v) {
                *p += x.norm_sqr() / nfft as f64;
            }
            frames += 1;
        }
        // fftshift, subtract the known noise level per bin
        let shifted: Vec<f64> = (0..nfft)
            .map(|k| (psd[(k + nfft / 2) % nfft] / frames as f64 - noise_power).max(0.0))
            .collect();
        let total: f64 = shifted.iter().sum();
        let mut acc = 0.0;
        let (mut lo, mut hi) = (0, nfft - 1);
        let mut found_lo = false;
        for (k, p) in shifted.iter().enumerate() {
            acc += p;
            if !found_lo && acc >= 0.005 * total {
                lo = k;
                found_lo = true;
            }
            if acc >= 0.995 * total {
                hi = k;
                break;
            }
        }
        (hi - lo + 1) as f64 * buf.sample_rate_hz() / nfft as f64
    }

    #[test]
    fn vacant_noise_power() {
        for seed in 0..3 {
            let buf = synth_channel(&SynthConfig::new(SignalClass::Vacant, 30.0, 0.02, seed), 8e6).unwrap();
            assert!(buf.len() >= 100_000);
            assert!((buf.mean_power() - 1.0).abs() < 0.05, "power {}", buf.mean_power());
        }
    }

    #[test]
    fn tv_occupied_bandwidth() {
        let buf = synth_channel(&SynthConfig::new(SignalClass::TvBroadcast, 20.0, 0.01, 3), 8e6).unwrap();
        let bw = occupied_bw_oracle(&buf, 1.0);
        assert!(bw >= 0.9 * 6e6, "TV occupied bandwidth {bw}");
        assert!(bw <= 6e6, "TV spills out of channel: {bw}");
    }

    #[test]
    fn mic_occupied_bandwidth() {
        for seed in 0..5 {
            let buf = synth_channel(&SynthConfig::new(SignalClass::WirelessMic, 20.0, 0.01, seed), 8e6).unwrap();
            let bw = occupied_bw_oracle(&buf, 1.0);
            assert!(bw <= 200e3, "mic occupied bandwidth {bw}");
        }
    }

    #[test]
    fn burst_duty_cycle_in_range() {
        for seed in 0..10 {
            let parts = synth_parts(&SynthConfig::new(SignalClass::OtherTvws, 20.0, 0.01, seed), 8e6).unwrap();
            let on = parts.signal.iter().filter(|s| s.norm_sqr() > 0.0).count() as f64;
            let duty = on / parts.signal.len() as f64;
            assert!((0.28..=0.82).contains(&duty), "duty {duty}");
        }
    }

    #[test]
    fn snr_calibration_one_second() {
        for class in [SignalClass::TvBroadcast, SignalClass::WirelessMic, SignalClass::OtherTvws] {
            for (i, snr) in [-5.0, 10.0, 25.0].into_iter().enumerate() {
                let cfg = SynthConfig::new(class, snr, 1.0, 100 + i as u64);
                let parts = synth_parts(&cfg, 8e6).unwrap();
                let measured = 10.0 * (mean_power(&parts.signal) / mean_power(&parts.noise)).log10();
                assert!((measured - snr).abs() <= 0.5, "{class} at {snr} dB measured {measured}");
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        for class in SignalClass::ALL {
            let cfg = SynthConfig::new(class, 12.0, 0.002, 77);
            assert_eq!(synth_channel(&cfg, 8e6).unwrap(), synth_channel(&cfg, 8e6).unwrap());
            let other = SynthConfig { seed: 78, ..cfg };
            assert_ne!(synth_channel(&cfg, 8e6).unwrap(), synth_channel(&other, 8e6).unwrap());
        }
    }

    #[test]
    fn invalid_configs() {
        let ok = SynthConfig::new(SignalClass::Vacant, 0.0, 0.001, 1);
        assert!(synth_channel(&SynthConfig { duration_s: 0.0, ..ok }, 8e6).is_err());
        assert!(synth_channel(&SynthConfig { duration_s: -1.0, ..ok }, 8e6).is_err());
        assert!(synth_channel(&ok, 0.0).is_err());
        assert!(synth_channel(&ok.with_channel_width(8e6), 6e6).is_err());
        assert!(synth_channel(&SynthConfig { snr_db: f64::NAN, ..ok }, 8e6).is_err());
    }

    fn tone(n: usize, freq: f64, fs: f64) -> IqBuffer {
        let s = (0..n)
            .map(|i| {
                let p = 2.0 * PI * freq * i as f64 / fs;
                Complex32::new(p.cos() as f32, p.sin() as f32)
            })
            .collect();
        IqBuffer::new(s, fs, 0.0, Timestamp::ZERO).unwrap()
    }

    #[test]
    fn identity_augmentation() {
        let buf = synth_channel(&SynthConfig::new(SignalClass::OtherTvws, 10.0, 0.001, 5), 8e6).unwrap();
        assert_eq!(augment(&buf, 0.0, 1.0, f64::NEG_INFINITY, 0).unwrap(), buf);
    }

    #[test]
    fn frequency_shift_moves_peak() {
        let fs = 8e6;
        let n = 8192;
        let shifted = augment(&tone(n, 0.0, fs), 500e3, 1.0, f64::NEG_INFINITY, 0).unwrap();
        let mut v: Vec<Complex64> =
            shifted.samples().iter().map(|s| Complex64::new(f64::from(s.re), f64::from(s.im))).collect();
        FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut v);
        let peak = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .map(|(k, _)| k)
            .unwrap();
        let bin_hz = fs / n as f64;
        assert!((peak as f64 * bin_hz - 500e3).abs() <= bin_hz);
    }

    #[test]
    fn stretch_lengths() {
        let buf = tone(1000, 1e3, 8e6);
        assert_eq!(augment(&buf, 0.0, 1.1, f64::NEG_INFINITY, 0).unwrap().len(), 1100);
        assert_eq!(augment(&buf, 0.0, 0.9, f64::NEG_INFINITY, 0).unwrap().len(), 900);
        let odd = tone(1001, 1e3, 8e6);
        assert_eq!(augment(&odd, 0.0, 1.1, f64::NEG_INFINITY, 0).unwrap().len(), 1101);
    }

    #[test]
    fn augment_ranges() {
        let buf = tone(64, 0.0, 8e6);
        assert!(matches!(augment(&buf, 500_001.0, 1.0, f64::NEG_INFINITY, 0), Err(SynthError::AugmentOutOfRange(_))));
        assert!(matches!(augment(&buf, -600e3, 1.0, f64::NEG_INFINITY, 0), Err(SynthError::AugmentOutOfRange(_))));
        assert!(matches!(augment(&buf, 0.0, 1.2, f64::NEG_INFINITY, 0), Err(SynthError::AugmentOutOfRange(_))));
        assert!(matches!(augment(&buf, 0.0, 0.85, f64::NEG_INFINITY, 0), Err(SynthError::AugmentOutOfRange(_))));
        assert!(augment(&buf, -500e3, 0.9, -10.0, 0).is_ok());
    }

    #[test]
    fn extra_noise_power() {
        let buf = IqBuffer::new(vec![Complex32::new(0.0, 0.0); 200_000], 8e6, 0.0, Timestamp::ZERO).unwrap();
        let noisy = augment(&buf, 0.0, 1.0, 3.0, 9).unwrap();
        assert!((10.0 * noisy.mean_power().log10() - 3.0).abs() < 0.1);
    }

    /// Energy oracle: average power against a 3·σ threshold for unit noise.
    fn energy_says_occupied(buf: &IqBuffer) -> bool {
        buf.mean_power() > 1.0 + 3.0 / (buf.len() as f64).sqrt()
    }

    #[test]
    fn scene_matches_truth() {
        let plan = crate::spectrum::build_plan(470 * MHZ, 530 * MHZ, 6 * MHZ).unwrap();
        let capture = SceneCapture { sample_rate_hz: 8e6, samples: 16_384 };
        let t = Timestamp::from_secs_f64(5.0);

        let vacant = mix_scene(&GroundTruthOccupancy::new(), &plan, t, capture, 1).unwrap();
        assert_eq!(vacant.len(), 10);
        assert!(vacant.values().all(|b| !energy_says_occupied(b)));

        let truth = GroundTruthOccupancy::from_entries(vec![OccupancyEntry {
            channel: ChannelId(4),
            class: SignalClass::TvBroadcast,
            snr_db: 30.0,
            start: Timestamp::ZERO,
            end: Timestamp::from_secs_f64(10.0),
        }])
        .unwrap();
        let scene = mix_scene(&truth, &plan, t, capture, 1).unwrap();
        for (ch, buf) in &scene {
            assert_eq!(energy_says_occupied(buf), *ch == ChannelId(4), "{ch}");
            assert_eq!(buf.center_freq_hz(), plan.channel_center_hz(*ch).unwrap());
            assert_eq!(buf.capture_time(), t);
        }
        assert_eq!(scene, mix_scene(&truth, &plan, t, capture, 1).unwrap());
    }
}
