//! Short-time Fourier transform: 1024-point FFT, 50 % overlap, Hanning window.

use std::sync::{Arc, OnceLock};

use num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

use super::SensingError;
use crate::synth::IqBuffer;

pub const FFT_SIZE: usize = 1024;
pub const HOP: usize = FFT_SIZE / 2;
/// Log-magnitude floor in dB; keeps empty bins finite.
pub const FLOOR_DB: f32 = -120.0;
pub(crate) const FLOOR_POWER: f32 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hanning,
}

fn hanning() -> &'static [f32] {
    static W: OnceLock<Vec<f32>> = OnceLock::new();
    W.get_or_init(|| {
        (0..FFT_SIZE)
            .map(|n| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (FFT_SIZE - 1) as f64).cos()) as f32)
            .collect()
    })
}

fn fft() -> &'static Arc<dyn Fft<f32>> {
    static F: OnceLock<Arc<dyn Fft<f32>>> = OnceLock::new();
    F.get_or_init(|| FftPlanner::new().plan_fft_forward(FFT_SIZE))
}

/// Time × frequency grid of power in dB, one row per frame, bins in FFT order
/// (bin 0 is DC, bins above `FFT_SIZE/2` are negative frequencies).
///
/// Power is normalised by the window energy, so unit-power white noise averages
/// 0 dB per bin. The dB grid is derived from the linear power grid on first use.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    frames: usize,
    db: OnceLock<Vec<f32>>,
    power: Vec<f32>,
}

impl PartialEq for Spectrogram {
    fn eq(&self, other: &Self) -> bool {
        self.frames == other.frames && self.power == other.power
    }
}

pub fn frame_count(n: usize) -> Option<usize> {
    (n >= FFT_SIZE).then(|| (n - FFT_SIZE) / HOP + 1)
}

pub fn spectrogram(buf: &IqBuffer) -> Result<Spectrogram, SensingError> {
    let samples = buf.samples();
    let frames = frame_count(samples.len()).ok_or(SensingError::BufferTooShort(samples.len()))?;
    let window = hanning();
    let norm = 1.0 / window.iter().map(|w| w * w).sum::<f32>();
    let fft = fft();
    let mut scratch = vec![Complex32::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut frame = vec![Complex32::new(0.0, 0.0); FFT_SIZE];
    let mut power = Vec::with_capacity(frames * FFT_SIZE);
    for f in 0..frames {
        let start = f * HOP;
        for ((dst, src), w) in frame.iter_mut().zip(&samples[start..start + FFT_SIZE]).zip(window) {
            *dst = src * *w;
        }
        fft.process_with_scratch(&mut frame, &mut scratch);
        power.extend(frame.iter().map(|x| (x.norm_sqr() * norm).max(FLOOR_POWER)));
    }
    Ok(Spectrogram { frames, db: OnceLock::new(), power })
}

impl Spectrogram {
    /// Builds a spectrogram from a dB grid (row-major, `FFT_SIZE` bins per row).
    pub fn from_db(frames: usize, db: Vec<f32>) -> Result<Self, SensingError> {
        if frames == 0 || db.len() != frames * FFT_SIZE {
            return Err(SensingError::InvalidSpectrogram(format!("{} values for {} frames", db.len(), frames)));
        }
        if db.iter().any(|v| !v.is_finite()) {
            return Err(SensingError::InvalidSpectrogram("non-finite bin".into()));
        }
        let db: Vec<f32> = db.into_iter().map(|v| v.max(FLOOR_DB)).collect();
        let power = db.iter().map(|v| 10f32.powf(v / 10.0)).collect();
        Ok(Spectrogram { frames, db: OnceLock::from(db), power })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn fft_size(&self) -> usize {
        FFT_SIZE
    }

    pub fn overlap(&self) -> f64 {
        0.5
    }

    pub fn window(&self) -> Window {
        Window::Hanning
    }

    /// dB values of one frame.
    pub fn frame_db(&self, frame: usize) -> &[f32] {
        &self.db()[frame * FFT_SIZE..(frame + 1) * FFT_SIZE]
    }

    pub fn db(&self) -> &[f32] {
        self.db.get_or_init(|| self.power.iter().map(|p| 10.0 * p.log10()).collect())
    }

    pub(crate) fn frame_power(&self, frame: usize) -> &[f32] {
        &self.power[frame * FFT_SIZE..(frame + 1) * FFT_SIZE]
    }
}
