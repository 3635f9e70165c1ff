//! Control plane for disaster-resilient TV white space backhaul.
//!
//! The crate is organised along the data path:
//!
//! - [`spectrum`]: band plans, channel ids, scripted ground-truth occupancy.
//! - [`propagation`]: over-water two-ray path loss and link budget.
//! - [`synth`]: seeded baseband waveforms per signal class, training augmentations,
//!   and the labelled IQ container format.
//! - [`sensing`]: STFT spectrograms, features, the pluggable classifier, the CFAR
//!   energy detector and per-channel verdicts.
//! - [`paws`]: a PAWS (RFC 7545 subset) client and an embeddable mock whitespace
//!   database with fault injection.
//! - [`compliance`]: the transmission gate, emergency waivers, post-outage
//!   reconciliation and the signed, hash-chained audit log.
//! - [`controller`]: the Native-HD / Degraded hysteresis mode controller.
//! - [`twin`]: occupancy priors and transmitter protection zones.
//! - [`scenario`]: the deterministic outage simulator and its reports.

pub mod compliance;
pub mod controller;
pub mod paws;
pub mod propagation;
pub mod scenario;
pub mod sensing;
pub mod spectrum;
pub mod synth;
pub mod time;
pub mod twin;

pub use spectrum::{ChannelId, ChannelPlan, SignalClass};
pub use time::Timestamp;
