use std::time::Instant;

use lifetime_twin::analysis::TimeHistogram;
use lifetime_twin::io::*;
use lifetime_twin::sim::{folded_histogram, run_experiment, EventKind, EventRecord};
use lifetime_twin::{Error, Execution};
use proptest::prelude::*;

#[test]
fn simulated_run_survives_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load_preset("p32_linear").unwrap();
    c.duration_s = 0.5;
    let events = run_experiment(&c, Execution::Sequential).unwrap();
    let hist = folded_histogram(&c, &events).unwrap();

    let ev_path = dir.path().join("events.csv");
    write_events(&ev_path, &events, true).unwrap();
    assert_eq!(read_events(&ev_path).unwrap(), events);

    let h_path = dir.path().join("hist.txt");
    write_histogram(&h_path, &hist).unwrap();
    assert_eq!(read_histogram(&h_path).unwrap(), hist);

    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, format_config(&c)).unwrap();
    assert_eq!(load_config(&cfg_path).unwrap(), c);
    assert_eq!(resolve_config(cfg_path.to_str().unwrap()).unwrap(), c);
    assert_eq!(resolve_config("p32_linear").unwrap().transition, c.transition);
    assert!(matches!(resolve_config("no_such_preset"), Err(Error::Io(_))));
}

#[test]
fn empirical_irf_path_is_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut counts = vec![0u64; 124];
    counts[10] = 300;
    counts[11] = 100;
    let h = TimeHistogram::new(100.0, 0.0, counts).unwrap();
    write_histogram(&dir.path().join("irf.txt"), &h).unwrap();
    let text = preset_text("p12_quadrupole").unwrap().replace(
        "irf_kind = parametric",
        "irf_kind = empirical\nirf_histogram_path = irf.txt",
    );
    let path = dir.path().join("emp.cfg");
    std::fs::write(&path, text).unwrap();
    let c = load_config(&path).unwrap();
    match c.irf {
        lifetime_twin::sim::InstrumentResponse::Empirical(e) => {
            assert_eq!(e.weights()[10], 0.75);
            assert_eq!(e.weights()[11], 0.25);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn million_bin_histogram_round_trips_within_a_second() {
    let dir = tempfile::tempdir().unwrap();
    let counts: Vec<u64> = (0..1_000_000u64).map(|i| (i * 2_654_435_761) % 100_003).collect();
    let mut h = TimeHistogram::new(100.0, 0.0, counts).unwrap();
    h.exposure_s = 60.0;
    let path = dir.path().join("big.txt");
    let t = Instant::now();
    write_histogram(&path, &h).unwrap();
    let back = read_histogram(&path).unwrap();
    let elapsed = t.elapsed();
    println!("10^6-bin round trip {elapsed:?}");
    assert_eq!(back, h);
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn histogram_text_is_lossless(
        counts in prop::collection::vec(any::<u64>(), 0..200),
        width in 1e-3f64..1e6,
        origin in -1e9f64..1e9,
        exposure in 0f64..1e6,
    ) {
        let mut h = TimeHistogram::new(width, origin, counts).unwrap();
        h.exposure_s = exposure;
        h.metadata.insert("note".into(), "x y".into());
        prop_assert_eq!(parse_histogram(&format_histogram(&h)).unwrap(), h);
    }

    #[test]
    fn event_text_is_lossless(
        rows in prop::collection::vec((any::<u64>(), any::<u32>(), -1e12f64..1e12, 0u8..4), 0..100),
    ) {
        let events: Vec<EventRecord> = rows
            .into_iter()
            .map(|(cycle_index, pulse_index, raw_time_ps, k)| EventRecord {
                cycle_index,
                pulse_index,
                raw_time_ps,
                kind: [None, Some(EventKind::Decay), Some(EventKind::Prompt), Some(EventKind::Background)][k as usize],
            })
            .collect();
        prop_assert_eq!(parse_events(&format_events(&events, true)).unwrap(), events);
    }
}
