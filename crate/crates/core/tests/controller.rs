use sidsense::controller::{
    directives_idempotent, ConsumerState, Directive, EncoderProfile, HysteresisPolicy, KpmSample, Mode, ModeController,
    ModeState,
};
use sidsense::Timestamp;

fn trace(tp: impl Fn(u64) -> f64, secs: u64) -> Vec<KpmSample> {
    (0..secs).map(|s| KpmSample::nominal(Timestamp(s * 1000), tp(s))).collect()
}

#[test]
fn fade_and_recovery_drive_the_consumer() {
    let policy: HysteresisPolicy = toml::from_str(
        "degrade_threshold_mbps = 3.0\nrestore_threshold_mbps = 6.0\ndegrade_sustain_s = 5\nrestore_sustain_s = 10\nmin_dwell_s = 10\ngpu_util_ceiling = 0.85\nthermal_floor_c = 10.0\nbler_threshold = 0.1\n",
    )
    .unwrap();
    assert_eq!(policy, HysteresisPolicy::default());

    let mut c = ModeController::new(policy, ModeState::initial(Mode::NativeHd, Timestamp::ZERO)).unwrap();
    let mut consumer = ConsumerState::default();
    let samples = trace(|s| if (30..60).contains(&s) { 1.5 } else { 12.0 }, 120);
    for s in samples {
        c.ingest(s).unwrap();
        consumer.apply(&c.tick(s.t));
    }
    let t = c.transitions();
    assert_eq!(t.len(), 2);
    assert_eq!((t[0].from, t[0].to, t[0].at), (Mode::NativeHd, Mode::Degraded, Timestamp(35_000)));
    assert_eq!((t[1].to, t[1].at), (Mode::NativeHd, Timestamp(70_000)));
    assert_eq!(consumer.encoder, Some(EncoderProfile::P1080Fps30));
    assert!(!consumer.sr_enabled);

    // replaying the idempotent set to a fresh consumer lands in the same place
    let mut fresh = ConsumerState::default();
    fresh.apply(&directives_idempotent(c.state()));
    fresh.apply(&directives_idempotent(c.state()));
    assert_eq!(fresh, consumer);
}

#[test]
fn degraded_mode_emits_low_profile_and_sr() {
    let mut c = ModeController::new(HysteresisPolicy::default(), ModeState::initial(Mode::NativeHd, Timestamp::ZERO)).unwrap();
    let mut seen = Vec::new();
    for s in trace(|_| 1.0, 30) {
        c.ingest(s).unwrap();
        seen.extend(c.tick(s.t));
    }
    assert_eq!(c.state().mode, Mode::Degraded);
    assert!(seen.contains(&Directive::SetEncoder(EncoderProfile::P480Fps15)));
    assert!(seen.contains(&Directive::EnableSr));
    assert!(c.ingest(KpmSample::nominal(Timestamp(1_000), 1.0)).is_err(), "out-of-order sample");
}

#[test]
fn policy_toml_rejects_inverted_thresholds() {
    let bad = "degrade_threshold_mbps = 6.0\nrestore_threshold_mbps = 3.0\ndegrade_sustain_s = 5\nrestore_sustain_s = 10\nmin_dwell_s = 10\ngpu_util_ceiling = 0.85\nthermal_floor_c = 10.0\nbler_threshold = 0.1\n";
    assert!(toml::from_str::<HysteresisPolicy>(bad).is_err());
}
