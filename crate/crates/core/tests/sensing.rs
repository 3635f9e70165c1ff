use std::io::Cursor;

use sidsense::propagation::{received_power_dbm, snr_db, LinkBudgetParams, LinkGeometry, DEFAULT_NOISE_FLOOR_DBM};
use sidsense::sensing::{
    is_transmission_candidate, sense_channel, train_default_model, ClassifierModel, SignalClassifier, TrainingRecipe,
    THETA_SENSE,
};
use sidsense::spectrum::{GroundTruthOccupancy, OccupancyEntry};
use sidsense::synth::{mix_scene, read_captures, synth_channel, write_capture, LabeledCapture, SceneCapture, SynthConfig};
use sidsense::{ChannelId, ChannelPlan, SignalClass, Timestamp};

fn model() -> ClassifierModel {
    train_default_model(&TrainingRecipe { examples_per_class: 80, ..TrainingRecipe::default() }).unwrap()
}

#[test]
fn scene_to_verdicts() {
    let plan = ChannelPlan::tvws_default();
    let geom = LinkGeometry { h_t: 200.0, h_r: 5.0, distance_m: 40_000.0, center_freq_hz: 497e6 };
    let params = LinkBudgetParams { p_t_dbm: 60.0, g_t_dbi: 10.0, g_r_dbi: 2.0, fade_margin_db: 5.0 };
    let tv_snr = snr_db(received_power_dbm(&params, &geom).unwrap(), DEFAULT_NOISE_FLOOR_DBM);
    assert!(tv_snr > 20.0, "tv snr {tv_snr}");
    let entry = |ch, class, snr_db| OccupancyEntry {
        channel: ChannelId(ch),
        class,
        snr_db,
        start: Timestamp(0),
        end: Timestamp(60_000),
    };
    let truth = GroundTruthOccupancy::from_entries(vec![
        entry(4, SignalClass::TvBroadcast, tv_snr),
        entry(9, SignalClass::WirelessMic, 20.0),
        entry(15, SignalClass::OtherTvws, 20.0),
    ])
    .unwrap();
    let model = model();
    let scene = mix_scene(&truth, &plan, Timestamp(5_000), SceneCapture::default(), 3).unwrap();
    assert_eq!(scene.len(), plan.channel_count() as usize);
    for (ch, buf) in &scene {
        assert_eq!(buf.capture_time(), Timestamp(5_000));
        assert_eq!(buf.center_freq_hz(), plan.channel_center_hz(*ch).unwrap());
        let v = sense_channel(*ch, buf, &model, THETA_SENSE).unwrap();
        let truth_class = truth.active_entry(*ch, Timestamp(5_000)).map_or(SignalClass::Vacant, |e| e.class);
        assert_eq!(v.class, truth_class, "channel {}", ch.0);
        assert_eq!(is_transmission_candidate(&v, THETA_SENSE), truth_class == SignalClass::Vacant);
        assert_eq!(v.decided_at, Timestamp(5_000));
    }
}

#[test]
fn iq_container_and_model_round_trip() {
    let model = model();
    let mut bytes = Vec::new();
    model.save(&mut bytes).unwrap();
    let restored = ClassifierModel::load(&mut Cursor::new(&bytes)).unwrap();

    let mut file = Vec::new();
    let mut originals = Vec::new();
    for (i, class) in SignalClass::ALL.into_iter().enumerate() {
        let buffer = synth_channel(&SynthConfig::new(class, 18.0, 16_384.0 / 8e6, 90 + i as u64), 8e6).unwrap();
        let c = LabeledCapture { buffer, label: Some(class), snr_db: Some(18.0) };
        write_capture(&mut file, &c).unwrap();
        originals.push(c);
    }
    let read = read_captures(&mut Cursor::new(&file)).unwrap();
    assert_eq!(read, originals);
    for c in &read {
        let a = sense_channel(ChannelId(0), &c.buffer, &model, THETA_SENSE).unwrap();
        let b = sense_channel(ChannelId(0), &c.buffer, &restored as &dyn SignalClassifier, THETA_SENSE).unwrap();
        assert!(a.same_decision(&b));
        assert_eq!(Some(a.class), c.label);
    }
}
