//! CFAR energy detector for the idle/occupied hypothesis test.
//!
//! Under H0 the per-sample power of unit complex Gaussian noise is
//! exponential with mean and variance `σ²`, so the N-sample average is
//! approximately normal with standard deviation `σ²/√N`. The threshold
//! `σ²·(1 + Q⁻¹(p_fa)/√N)` therefore fixes the false-alarm rate.

use statrs::distribution::{ContinuousCDF, Normal};

use super::SensingError;
use crate::synth::IqBuffer;

/// Inverse of the Gaussian tail function `Q(x) = P(Z > x)`.
pub fn q_inverse(p: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - p)
}

pub fn cfar_threshold(noise_power: f64, p_fa: f64, n: usize) -> Result<f64, SensingError> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(SensingError::InvalidPfa(p_fa));
    }
    if !(noise_power.is_finite() && noise_power > 0.0) {
        return Err(SensingError::InvalidNoisePower(noise_power));
    }
    Ok(noise_power * (1.0 + q_inverse(p_fa) / (n as f64).sqrt()))
}

/// True when the buffer's average power exceeds the CFAR threshold.
pub fn energy_detect(buf: &IqBuffer, noise_power: f64, p_fa: f64) -> Result<bool, SensingError> {
    let threshold = cfar_threshold(noise_power, p_fa, buf.len())?;
    Ok(buf.mean_power() > threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::SignalClass;
    use crate::synth::{synth_channel, SynthConfig};

    #[test]
    fn q_inverse_values() {
        assert!((q_inverse(0.5)).abs() < 1e-9);
        assert!((q_inverse(0.01) - 2.326_347_874).abs() < 1e-6);
        assert!((q_inverse(0.1) - 1.281_551_566).abs() < 1e-6);
    }

    #[test]
    fn parameter_checks() {
        let buf = synth_channel(&SynthConfig::new(SignalClass::Vacant, 0.0, 0.0001, 1), 8e6).unwrap();
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(energy_detect(&buf, 1.0, p), Err(SensingError::InvalidPfa(_))));
        }
        assert!(energy_detect(&buf, 0.0, 0.01).is_err());
    }

    #[test]
    fn small_monte_carlo() {
        // coarse version of the acceptance run: 400 trials at N = 10⁴
        let n_trials = 400;
        let mut false_alarms = 0;
        let mut overset = 0;
        let mut detections = 0;
        for seed in 0..n_trials {
            let noise = synth_channel(&SynthConfig::new(SignalClass::Vacant, 0.0, 10_000.0 / 8e6, seed), 8e6).unwrap();
            false_alarms += energy_detect(&noise, 1.0, 0.05).unwrap() as u32;
            overset += energy_detect(&noise, 2.0, 0.05).unwrap() as u32;
            let sig = synth_channel(&SynthConfig::new(SignalClass::OtherTvws, 0.0, 10_000.0 / 8e6, seed), 8e6).unwrap();
            detections += energy_detect(&sig, 1.0, 0.05).unwrap() as u32;
        }
        let rate = f64::from(false_alarms) / n_trials as f64;
        assert!((0.01..0.11).contains(&rate), "false-alarm rate {rate}");
        assert_eq!(overset, 0);
        assert_eq!(detections, n_trials as u32);
    }
}
