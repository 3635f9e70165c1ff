//! Over-water two-ray channel model and link budget.
//!
//! The sea surface is treated as a perfect reflector with coefficient −1, so
//! the two-ray loss has no free parameters beyond geometry and frequency.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Receiver noise floor used when a scenario does not override it (dBm per 6 MHz).
pub const DEFAULT_NOISE_FLOOR_DBM: f64 = -103.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropagationError {
    #[error("{0} must be positive and finite")]
    NonPositiveInput(&'static str),
    #[error("fade margin must be non-negative, got {0} dB")]
    NegativeFadeMargin(f64),
}

type Result<T> = std::result::Result<T, PropagationError>;

fn positive(v: f64, name: &'static str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(PropagationError::NonPositiveInput(name))
    }
}

pub fn wavelength_m(freq_hz: f64) -> Result<f64> {
    Ok(SPEED_OF_LIGHT_M_S / positive(freq_hz, "center frequency")?)
}

/// Distance beyond which the direct and sea-reflected rays stop producing
/// lobes and loss steepens to 40 dB/decade: `4·h_t·h_r/λ`.
pub fn breakpoint_distance_m(h_t: f64, h_r: f64, center_freq_hz: f64) -> Result<f64> {
    let h_t = positive(h_t, "transmitter height")?;
    let h_r = positive(h_r, "receiver height")?;
    Ok(4.0 * h_t * h_r / wavelength_m(center_freq_hz)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub h_t: f64,
    pub h_r: f64,
    pub distance_m: f64,
    pub center_freq_hz: f64,
}

impl LinkGeometry {
    pub fn validate(&self) -> Result<()> {
        positive(self.h_t, "transmitter height")?;
        positive(self.h_r, "receiver height")?;
        positive(self.distance_m, "distance")?;
        positive(self.center_freq_hz, "center frequency")?;
        Ok(())
    }

    pub fn breakpoint_m(&self) -> Result<f64> {
        breakpoint_distance_m(self.h_t, self.h_r, self.center_freq_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudgetParams {
    pub p_t_dbm: f64,
    pub g_t_dbi: f64,
    pub g_r_dbi: f64,
    pub fade_margin_db: f64,
}

impl LinkBudgetParams {
    pub fn validate(&self) -> Result<()> {
        if self.fade_margin_db.is_nan() || self.fade_margin_db < 0.0 {
            return Err(PropagationError::NegativeFadeMargin(self.fade_margin_db));
        }
        Ok(())
    }
}

/// Free-space loss between isotropic antennas.
pub fn free_space_path_loss_db(distance_m: f64, freq_hz: f64) -> Result<f64> {
    let d = positive(distance_m, "distance")?;
    Ok(20.0 * (4.0 * PI * d / wavelength_m(freq_hz)?).log10())
}

/// Exact flat-earth two-ray loss between isotropic antennas.
///
/// The received field is the sum of the direct ray and a unity-magnitude,
/// phase-inverted surface reflection. The path difference is computed as
/// `4·h_t·h_r/(r1 + r2)` to avoid cancellation at long range.
pub fn two_ray_path_loss_db(geom: &LinkGeometry) -> Result<f64> {
    geom.validate()?;
    let lambda = wavelength_m(geom.center_freq_hz)?;
    let d = geom.distance_m;
    let r_direct = d.hypot(geom.h_t - geom.h_r);
    let r_reflect = d.hypot(geom.h_t + geom.h_r);
    let path_diff = 4.0 * geom.h_t * geom.h_r / (r_direct + r_reflect);
    let phase = 2.0 * PI * path_diff / lambda;
    // |1/r1 - e^{-j phase}/r2|
    let re = 1.0 / r_direct - phase.cos() / r_reflect;
    let im = phase.sin() / r_reflect;
    let amplitude = lambda / (4.0 * PI) * re.hypot(im);
    Ok(-20.0 * amplitude.log10())
}

/// Path-loss model selector for scenario configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model")]
pub enum PathLossModel {
    #[default]
    TwoRay,
    /// Free-space loss at `reference_m`, then `10·exponent` dB per decade.
    LogDistance { exponent: f64, reference_m: f64 },
}

impl PathLossModel {
    pub fn path_loss_db(&self, geom: &LinkGeometry) -> Result<f64> {
        match *self {
            PathLossModel::TwoRay => two_ray_path_loss_db(geom),
            PathLossModel::LogDistance { exponent, reference_m } => {
                geom.validate()?;
                positive(exponent, "path-loss exponent")?;
                let d0 = positive(reference_m, "reference distance")?;
                let l0 = free_space_path_loss_db(d0, geom.center_freq_hz)?;
                Ok(l0 + 10.0 * exponent * (geom.distance_m / d0).log10())
            }
        }
    }
}

/// `P_r = P_t + G_t + G_r − L − M_f` with the loss supplied by the caller.
pub fn received_power_with_loss(params: &LinkBudgetParams, path_loss_db: f64) -> Result<f64> {
    params.validate()?;
    Ok(params.p_t_dbm + params.g_t_dbi + params.g_r_dbi - path_loss_db - params.fade_margin_db)
}

/// Received power with two-ray path loss.
pub fn received_power_dbm(params: &LinkBudgetParams, geom: &LinkGeometry) -> Result<f64> {
    received_power_with_loss(params, two_ray_path_loss_db(geom)?)
}

pub fn received_power_with_model(
    model: &PathLossModel,
    params: &LinkBudgetParams,
    geom: &LinkGeometry,
) -> Result<f64> {
    received_power_with_loss(params, model.path_loss_db(geom)?)
}

pub fn snr_db(received_dbm: f64, noise_floor_dbm: f64) -> f64 {
    received_dbm - noise_floor_dbm
}

/// `kTB` at 290 K plus a receiver noise figure.
pub fn thermal_noise_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    -174.0 + 10.0 * bandwidth_hz.log10() + noise_figure_db
}
