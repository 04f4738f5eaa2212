use lifetime_twin::analysis::fold_and_invert;
use lifetime_twin::io::load_preset;
use lifetime_twin::rng::StreamRng;
use lifetime_twin::sim::*;
use lifetime_twin::Execution;

#[test]
fn preset_pulse_excites_about_ten_percent() {
    // 10 pJ, 1 ps, 6 um waist on P3/2; accepted within a factor of two of 0.1.
    let pulse = PulseParams::new(10.0, 1.0, 6.0).unwrap();
    let p = excitation_probability(&pulse, &AtomicTransition::cd_p32()).unwrap();
    println!("P3/2 excitation probability {p:.4}");
    assert!(
        (0.05..=0.2).contains(&p),
        "excitation probability {p} outside [0.05, 0.2]"
    );
}

/// Per-pulse detection probability from the raw ingredients, independent of the
/// configuration's own bookkeeping.
fn expected_events(c: &ExperimentConfig) -> f64 {
    let p_decay = excitation_probability(&c.pulse, &c.transition).unwrap() * c.detection_efficiency;
    let p_bg = 1.0 - (-c.background_rate_hz / (c.train.cycle_rate_hz * c.train.pulses_per_cycle as f64)).exp();
    let p_none = (1.0 - c.prompt_scatter_prob) * (1.0 - p_decay) * (1.0 - p_bg);
    c.duration_s * c.train.cycle_rate_hz * c.train.pulses_per_cycle as f64 * (1.0 - p_none)
}

#[test]
fn rate_law_holds_at_three_presets() {
    for name in ["p12_quadrupole", "p32_quadrupole", "p12_linear"] {
        let mut c = load_preset(name).unwrap();
        c.duration_s = 10.0;
        let n = run_experiment(&c, Execution::Parallel).unwrap().len() as f64;
        let mu = expected_events(&c);
        let z = (n - mu) / mu.sqrt();
        println!("{name}: {n} events, expected {mu:.1}, z = {z:.2}");
        assert!(z.abs() < 4.0, "{name}: z = {z}");
        if name.ends_with("quadrupole") {
            // about 3000 counts per second
            assert!((n - 30_000.0).abs() < 3.0 * 30_000f64.sqrt(), "{name}: {n}");
        }
    }
}

#[test]
fn events_are_conserved_and_partitioned() {
    let c = load_preset("p12_linear").unwrap();
    let c = ExperimentConfig { duration_s: 5.0, ..c };
    let events = run_experiment(&c, Execution::Parallel).unwrap();
    let key = |e: &EventRecord| (e.cycle_index, e.pulse_index);
    assert!(
        events.windows(2).all(|w| key(&w[0]) < key(&w[1])),
        "one event per pulse, ordered"
    );
    let count = |k| events.iter().filter(|e| e.kind == Some(k)).count();
    let parts = count(EventKind::Decay) + count(EventKind::Prompt) + count(EventKind::Background);
    assert_eq!(parts, events.len());
    assert!(count(EventKind::Prompt) > 0 && count(EventKind::Background) > 0);
    let raw = raw_histogram(&c, &events).unwrap();
    assert_eq!(raw.total() + raw.out_of_range(), events.len() as u64);
    let folded = fold_and_invert(&raw, c.fold_period_ps()).unwrap();
    assert_eq!(folded.total(), raw.total());
    assert_eq!(folded.n_bins(), 124);
}

#[test]
fn streams_do_not_depend_on_worker_count() {
    let mut c = load_preset("p32_quadrupole").unwrap();
    c.duration_s = 1.0;
    let seq = run_experiment(&c, Execution::Sequential).unwrap();
    for exec in [Execution::Parallel, Execution::Workers(2), Execution::Workers(5)] {
        assert_eq!(run_experiment(&c, exec).unwrap(), seq);
    }
    c.seed += 1;
    assert_ne!(run_experiment(&c, Execution::Sequential).unwrap(), seq);
}

/// OLS slope of log(counts) against bin start, with its standard error.
fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (rss / (n - 2.0) / sxx).sqrt())
}

#[test]
fn ideal_chain_gives_log_linear_decay() {
    let tr = AtomicTransition::cd_p12();
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let c = ExperimentConfig::ideal(tr, 10.0, 500 + seed);
        let events = run_experiment(&c, Execution::Parallel).unwrap();
        let h = folded_histogram(&c, &events).unwrap();
        // first 6 ns: every bin holds over a hundred counts, so log(n) is nearly unbiased
        let (x, y): (Vec<f64>, Vec<f64>) = h.counts[..60]
            .iter()
            .enumerate()
            .map(|(k, &n)| (k as f64 * 0.1, (n as f64).ln()))
            .unzip();
        let (slope, err) = ols_slope(&x, &y);
        let z = (slope + 1.0 / tr.lifetime_ns()) / err;
        worst = worst.max(z.abs());
        assert!(z.abs() < 4.0, "seed {seed}: slope {slope} +- {err}, z = {z}");
    }
    println!("largest |z| over 50 seeds: {worst:.2}");
}

/// Asymptotic two-sample Kolmogorov-Smirnov p-value.
fn ks_p_value(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

#[test]
fn zero_amplitude_beats_change_nothing() {
    let tr = AtomicTransition::cd_p32();
    let on = BeatModulation {
        enabled: true,
        amplitude: 0.0,
        angular_frequency: 2.93e6,
        phase: 0.4,
    };
    let draw = |beats: &BeatModulation, stream: u64| -> Vec<f64> {
        let mut rng = StreamRng::new(77, stream);
        (0..1_000_000)
            .map(|_| sample_emission_delay(&tr, beats, &mut rng).unwrap())
            .collect()
    };
    let p = ks_p_value(draw(&BeatModulation::off(), 1), draw(&on, 2));
    println!("KS p-value {p:.3}");
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn irf_measurement_shows_echoes_and_conserves_prompts() {
    let mut c = load_preset("p12_quadrupole").unwrap();
    c.background_rate_hz = 0.0;
    c.irf_measurement.duration_s = 20.0;
    let h = simulate_irf_measurement(&c, Execution::Parallel).unwrap();
    let run = c.irf_run();
    let prompts = run_experiment(&run, Execution::Parallel)
        .unwrap()
        .iter()
        .filter(|e| e.kind == Some(EventKind::Prompt))
        .count() as u64;
    assert_eq!(h.total(), prompts);

    // Echo areas from the excess over an otherwise identical response without echoes.
    let mut plain = c.clone();
    if let InstrumentResponse::Parametric(p) = &mut plain.irf {
        p.echoes.clear();
    }
    let h0 = simulate_irf_measurement(&plain, Execution::Parallel).unwrap();
    let (v, v0) = (h.values(), h0.values());
    let (t, t0) = (h.total() as f64, h0.total() as f64);
    let peak = lifetime_twin::analysis::peak_index(&v0);
    let weight = 1.012;
    for (delay_bins, span) in [(15usize, 14usize), (30, 30)] {
        let excess: f64 = (delay_bins - 4..delay_bins + span)
            .map(|k| {
                let i = (peak + k) % v.len();
                v[i] / t - v0[i] / t0
            })
            .sum();
        let ratio = excess * weight;
        println!("echo at +{delay_bins} bins: {ratio:.5} of the main peak");
        assert!((0.004..0.008).contains(&ratio), "echo ratio {ratio}");
    }

    let mut d = ExperimentConfig::ideal(AtomicTransition::cd_p12(), 1.0, 4);
    d.irf_measurement.duration_s = 1.0;
    let h = simulate_irf_measurement(&d, Execution::Sequential).unwrap();
    assert_eq!(h.counts.iter().filter(|&&n| n > 0).count(), 1);
}
