use crate::analysis::{fold_and_invert, histogram_events, TimeHistogram};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::StreamRng;
use crate::sim::{
    apply_instrument_response, digitize, excitation_probability, generate_inl_pattern, sample_emission_delay,
    AtomicTransition, BeatModulation, InlTable, InstrumentResponse, PulseParams, TdcSpec,
};

/// Cycles simulated per work item.
const CHUNK_CYCLES: u64 = 1 << 16;
/// Stream salt separating the IRF measurement run from the data run with the same seed.
const IRF_RUN_SALT: u64 = 0x1BF0_1BF0_1BF0_1BF0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseTrain {
    pub pulses_per_cycle: u32,
    pub pulse_spacing_ns: f64,
    pub cooling_window_ns: f64,
    pub cycle_rate_hz: f64,
}

impl PulseTrain {
    /// 500 ns of cooling, then 15 pulses 12.4 ns apart, repeated at 1 MHz.
    pub fn preset() -> Self {
        Self {
            pulses_per_cycle: 15,
            pulse_spacing_ns: 12.4,
            cooling_window_ns: 500.0,
            cycle_rate_hz: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulses_per_cycle < 1 {
            return Err(Error::invalid(
                "pulses_per_cycle",
                "PulseTrain requires at least one pulse",
            ));
        }
        if !(self.pulse_spacing_ns.is_finite() && self.pulse_spacing_ns > 0.0) {
            return Err(Error::invalid(
                "pulse_spacing_ns",
                "PulseTrain requires pulse_spacing > 0",
            ));
        }
        if !(self.cooling_window_ns.is_finite() && self.cooling_window_ns >= 0.0) {
            return Err(Error::invalid("cooling_window_ns", "must be >= 0"));
        }
        if !(self.cycle_rate_hz.is_finite() && self.cycle_rate_hz > 0.0) {
            return Err(Error::invalid("cycle_rate_hz", "must be > 0"));
        }
        let cycle_ns = self.cooling_window_ns + self.pulses_per_cycle as f64 * self.pulse_spacing_ns;
        if cycle_ns > 1e9 / self.cycle_rate_hz * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "cycle_rate_hz",
                format!(
                    "PulseTrain requires cooling + pulses * spacing ({cycle_ns} ns) <= 1 / cycle_rate ({} ns)",
                    1e9 / self.cycle_rate_hz
                ),
            ));
        }
        Ok(())
    }

    pub fn spacing_ps(&self) -> f64 {
        self.pulse_spacing_ns * 1e3
    }

    /// Length of the recorded (pulsed) part of one cycle.
    pub fn window_ps(&self) -> f64 {
        self.pulses_per_cycle as f64 * self.spacing_ps()
    }
}

/// Separate electrode-scatter run used to record the instrument response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrfMeasurement {
    pub scatter_prob: f64,
    pub duration_s: f64,
}

impl Default for IrfMeasurement {
    fn default() -> Self {
        Self {
            scatter_prob: 1e-3,
            duration_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub transition: AtomicTransition,
    pub pulse: PulseParams,
    pub train: PulseTrain,
    pub irf: InstrumentResponse,
    pub tdc: TdcSpec,
    pub beats: BeatModulation,
    /// Collection times quantum efficiency.
    pub detection_efficiency: f64,
    /// Per pulse, fires the detector at t = 0.
    pub prompt_scatter_prob: f64,
    /// Uncorrelated counts per second of run time, spread over the pulse windows.
    pub background_rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub irf_measurement: IrfMeasurement,
}

/// Exclusive per-pulse outcome probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseProbabilities {
    pub prompt: f64,
    pub decay: f64,
    pub background: f64,
}

impl PulseProbabilities {
    pub fn any(&self) -> f64 {
        self.prompt + self.decay + self.background
    }
}

impl ExperimentConfig {
    /// Ideal chain for a transition: delta response, ideal TDC, no prompt or background,
    /// per-pulse detection probability 2e-4.
    pub fn ideal(transition: AtomicTransition, duration_s: f64, seed: u64) -> Self {
        let pulse = PulseParams::new(10.0, 1.0, 6.0).expect("valid pulse");
        let p_exc = excitation_probability(&pulse, &transition).expect("valid preset");
        Self {
            transition,
            pulse,
            train: PulseTrain::preset(),
            irf: InstrumentResponse::Parametric(crate::sim::ParametricIrf::delta()),
            tdc: TdcSpec::ideal(100.0),
            beats: BeatModulation::off(),
            detection_efficiency: 2e-4 / p_exc,
            prompt_scatter_prob: 0.0,
            background_rate_hz: 0.0,
            duration_s,
            seed,
            irf_measurement: IrfMeasurement::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pulse.validate()?;
        self.train.validate()?;
        self.irf.validate()?;
        self.tdc.validate()?;
        self.beats.validate()?;
        for (key, p) in [
            ("detection_efficiency", self.detection_efficiency),
            ("prompt_scatter_prob", self.prompt_scatter_prob),
            ("irf_scatter_prob", self.irf_measurement.scatter_prob),
        ] {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(Error::invalid(key, format!("probability must lie in [0, 1], got {p}")));
            }
        }
        if !(self.background_rate_hz.is_finite() && self.background_rate_hz >= 0.0) {
            return Err(Error::invalid("background_rate_hz", "must be >= 0"));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::invalid("duration_s", "ExperimentConfig requires duration > 0"));
        }
        if !(self.irf_measurement.duration_s.is_finite() && self.irf_measurement.duration_s > 0.0) {
            return Err(Error::invalid("irf_duration_s", "must be > 0"));
        }
        let ratio = self.train.spacing_ps() / self.tdc.bin_width_ps;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio {
            return Err(Error::invalid(
                "tdc_bin_width_ps",
                format!("pulse spacing must be an integer number of TDC bins (ratio {ratio})"),
            ));
        }
        let p = self.pulse_probabilities()?;
        if p.decay * (1.0 - self.prompt_scatter_prob) > 1.0 {
            return Err(Error::invalid(
                "detection_efficiency",
                "per-pulse probability exceeds 1",
            ));
        }
        Ok(())
    }

    pub fn n_cycles(&self) -> u64 {
        (self.duration_s * self.train.cycle_rate_hz).round() as u64
    }

    pub fn pulse_probabilities(&self) -> Result<PulseProbabilities> {
        let p_decay = excitation_probability(&self.pulse, &self.transition)? * self.detection_efficiency;
        let lambda_bg = self.background_rate_hz / (self.train.cycle_rate_hz * self.train.pulses_per_cycle as f64);
        let p_bg = -(-lambda_bg).exp_m1();
        let prompt = self.prompt_scatter_prob;
        Ok(PulseProbabilities {
            prompt,
            decay: (1.0 - prompt) * p_decay,
            background: (1.0 - prompt) * (1.0 - p_decay) * p_bg,
        })
    }

    /// Expected detected events per second.
    pub fn expected_rate_hz(&self) -> Result<f64> {
        Ok(self.train.cycle_rate_hz * self.train.pulses_per_cycle as f64 * self.pulse_probabilities()?.any())
    }

    pub fn fold_period_ps(&self) -> f64 {
        self.train.spacing_ps()
    }

    /// Configuration of the prompt-only run that records the response function.
    pub fn irf_run(&self) -> Self {
        let mut c = self.clone();
        c.detection_efficiency = 0.0;
        c.prompt_scatter_prob = self.irf_measurement.scatter_prob;
        c.duration_s = self.irf_measurement.duration_s;
        c.seed = self.seed ^ IRF_RUN_SALT;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Decay,
    Prompt,
    Background,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Decay => "decay",
            EventKind::Prompt => "prompt",
            EventKind::Background => "background",
        }
    }
}

impl std::str::FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decay" => Ok(EventKind::Decay),
            "prompt" => Ok(EventKind::Prompt),
            "background" => Ok(EventKind::Background),
            other => Err(Error::domain(format!("unknown event kind `{other}`"))),
        }
    }
}

/// One TDC reading. `raw_time_ps` is the start/stop interval as measured: the photon
/// starts the converter and the clock edge closing the pulse train stops it, so later
/// photons give smaller readings. `kind` is simulator truth, never used by analysis and
/// absent for blinded data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub cycle_index: u64,
    pub pulse_index: u32,
    pub raw_time_ps: f64,
    pub kind: Option<EventKind>,
}

struct CycleKernel<'a> {
    config: &'a ExperimentConfig,
    inl: InlTable,
    probs: PulseProbabilities,
    any: f64,
    ln_no_event: f64,
    cycle_event_prob: f64,
    spacing_ps: f64,
    window_ps: f64,
    stream_seed: u64,
}

impl<'a> CycleKernel<'a> {
    fn new(config: &'a ExperimentConfig) -> Result<Self> {
        let probs = config.pulse_probabilities()?;
        let any = probs.any().min(1.0);
        let ln_no_event = (-any).ln_1p();
        let n = config.train.pulses_per_cycle as f64;
        let window_ps = config.train.window_ps();
        let n_bins = (window_ps / config.tdc.bin_width_ps).round() as usize;
        Ok(Self {
            config,
            inl: generate_inl_pattern(&config.tdc, n_bins),
            probs,
            any,
            ln_no_event,
            cycle_event_prob: -(n * ln_no_event).exp_m1(),
            spacing_ps: config.train.spacing_ps(),
            window_ps,
            stream_seed: config.seed,
        })
    }

    /// Index of the next eventful pulse after `skip` quiet ones, geometric in `u`.
    #[inline]
    fn gap(&self, u: f64) -> u64 {
        let g = (-u).ln_1p() / self.ln_no_event;
        if g.is_finite() {
            g.floor() as u64
        } else {
            0
        }
    }

    fn run_cycle(&self, cycle: u64, out: &mut Vec<EventRecord>) -> Result<()> {
        if self.any <= 0.0 {
            return Ok(());
        }
        let mut rng = StreamRng::new(self.stream_seed, cycle);
        let u = rng.uniform();
        if u >= self.cycle_event_prob {
            return Ok(());
        }
        let n_pulses = self.config.train.pulses_per_cycle as u64;
        let mut k = self.gap(u);
        while k < n_pulses {
            out.push(self.emit(cycle, k as u32, &mut rng)?);
            k += 1 + self.gap(rng.uniform());
        }
        Ok(())
    }

    fn emit(&self, cycle: u64, pulse: u32, rng: &mut StreamRng) -> Result<EventRecord> {
        let cfg = self.config;
        let v = rng.uniform() * self.any;
        let (kind, detect_ps) = if v < self.probs.prompt {
            (EventKind::Prompt, apply_instrument_response(0.0, &cfg.irf, rng))
        } else if v < self.probs.prompt + self.probs.decay {
            let emission_ns = sample_emission_delay(&cfg.transition, &cfg.beats, rng)?;
            (
                EventKind::Decay,
                apply_instrument_response(emission_ns * 1e3, &cfg.irf, rng),
            )
        } else {
            (EventKind::Background, rng.uniform() * self.spacing_ps)
        };
        let interval = self.window_ps - (pulse as f64 * self.spacing_ps + detect_ps);
        Ok(EventRecord {
            cycle_index: cycle,
            pulse_index: pulse,
            // Late photons of the last pulses are stopped by the next cycle's first clock edge.
            raw_time_ps: digitize(interval, &cfg.tdc, &self.inl, rng).rem_euclid(self.window_ps),
            kind: Some(kind),
        })
    }
}

/// Simulates every cycle of the run and returns the detected events ordered by
/// `(cycle_index, pulse_index)`. Identical for any execution policy.
pub fn run_experiment(config: &ExperimentConfig, exec: Execution) -> Result<Vec<EventRecord>> {
    config.validate()?;
    let kernel = CycleKernel::new(config)?;
    let n_cycles = config.n_cycles();
    let n_chunks = n_cycles.div_ceil(CHUNK_CYCLES) as usize;
    let chunks = exec.map_indexed(n_chunks, |c| -> Result<Vec<EventRecord>> {
        let start = c as u64 * CHUNK_CYCLES;
        let end = (start + CHUNK_CYCLES).min(n_cycles);
        let mut out = Vec::new();
        for cycle in start..end {
            kernel.run_cycle(cycle, &mut out)?;
        }
        Ok(out)
    });
    let mut events = Vec::new();
    for chunk in chunks {
        events.extend(chunk?);
    }
    Ok(events)
}

/// Histogram of a run over the recorded window with the TDC binning.
pub fn raw_histogram(config: &ExperimentConfig, events: &[EventRecord]) -> Result<TimeHistogram> {
    let mut h = histogram_events(events, config.tdc.bin_width_ps, config.train.window_ps())?;
    h.exposure_s = config.duration_s;
    Ok(h)
}

/// Raw histogram folded at the pulse spacing and time-inverted: delay after each pulse.
pub fn folded_histogram(config: &ExperimentConfig, events: &[EventRecord]) -> Result<TimeHistogram> {
    fold_and_invert(&raw_histogram(config, events)?, config.fold_period_ps())
}

/// Runs the prompt-only electrode-scatter measurement and returns its folded,
/// time-inverted histogram: the self-measured instrument response.
pub fn simulate_irf_measurement(config: &ExperimentConfig, exec: Execution) -> Result<TimeHistogram> {
    let run = config.irf_run();
    let events = run_experiment(&run, exec)?;
    let mut folded = folded_histogram(&run, &events)?;
    folded.metadata.insert("kind".into(), "irf".into());
    Ok(folded)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_probabilities_give_empty_stream() {
        let mut c = ExperimentConfig::ideal(AtomicTransition::cd_p12(), 1.0, 1);
        c.detection_efficiency = 0.0;
        assert!(run_experiment(&c, Execution::Sequential).unwrap().is_empty());
    }

    #[test]
    fn same_seed_same_stream_any_policy() {
        let c = ExperimentConfig::ideal(AtomicTransition::cd_p32(), 0.5, 99);
        let a = run_experiment(&c, Execution::Sequential).unwrap();
        let b = run_experiment(&c, Execution::Workers(3)).unwrap();
        let d = run_experiment(&c, Execution::Parallel).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
        assert_eq!(a, d);
    }

    #[test]
    fn events_are_ordered_and_pulse_index_bounded() {
        let c = ExperimentConfig::ideal(AtomicTransition::cd_p32(), 0.5, 3);
        let ev = run_experiment(&c, Execution::Sequential).unwrap();
        for w in ev.windows(2) {
            assert!((w[0].cycle_index, w[0].pulse_index) < (w[1].cycle_index, w[1].pulse_index));
        }
        assert!(ev.iter().all(|e| e.pulse_index < 15 && e.raw_time_ps.is_finite()));
    }

    #[test]
    fn cycle_longer_than_period_is_rejected() {
        let mut t = PulseTrain::preset();
        t.cycle_rate_hz = 2e6;
        assert!(t.validate().is_err());
    }

    #[test]
    fn spacing_must_be_whole_bins() {
        let mut c = ExperimentConfig::ideal(AtomicTransition::cd_p12(), 1.0, 1);
        c.tdc.bin_width_ps = 300.0;
        assert!(c.validate().is_err());
    }
}
