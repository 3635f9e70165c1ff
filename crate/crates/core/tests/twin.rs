use sidsense::paws::GeoLocation;
use sidsense::scenario::{reference_script, run_scenario_with, ClassifierChoice, RunOptions};
use sidsense::twin::{great_circle_m, DigitalTwin, ProtectionZone};
use sidsense::ChannelId;

#[test]
fn warm_start_round_trip() {
    let mut twin = DigitalTwin::default();
    for i in 0..50 {
        twin.observe(ChannelId(2), i % 5 == 0);
        twin.observe(ChannelId(7), true);
    }
    twin.zones.push(ProtectionZone::new(GeoLocation { lat: 18.47, lon: -66.11 }, ChannelId(7), 2_000.0).unwrap());
    let text = twin.to_toml();
    let back = DigitalTwin::from_toml(&text).unwrap();
    assert_eq!(back, twin);
    assert!((back.occupancy(ChannelId(2)) - 11.0 / 52.0).abs() < 1e-12);
    assert!(back.protected(GeoLocation { lat: 18.4655, lon: -66.1057 }, ChannelId(7)));
    assert!(!back.protected(GeoLocation { lat: 18.4655, lon: -66.1057 }, ChannelId(2)));
}

#[test]
fn zone_in_script_raises_advisory_warnings_only() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/nominal.toml")).unwrap();
    let here = GeoLocation { lat: 18.4655, lon: -66.1057 };
    let mut zoned = text.clone();
    for ch in [1, 2, 4, 5] {
        zoned.push_str(&format!(
            "\n[[twin.zones]]\nlat = {}\nlon = {}\nchannel = {ch}\nradius_m = 5000\n",
            here.lat + 0.01,
            here.lon
        ));
    }
    let script = sidsense::scenario::ScenarioScript::from_toml(&zoned).unwrap();
    assert!(great_circle_m(here, GeoLocation { lat: here.lat + 0.01, lon: here.lon }) < 5000.0);
    let opts = RunOptions { classifier: ClassifierChoice::Oracle, ..RunOptions::default() };
    let plain = run_scenario_with(&reference_script("nominal").unwrap(), &opts).unwrap();
    let r = run_scenario_with(&script, &opts).unwrap();
    assert_eq!(r.protection_zone_warnings, r.epochs);
    assert_eq!(plain.protection_zone_warnings, 0);
    assert_eq!(r.availability, plain.availability);
}
