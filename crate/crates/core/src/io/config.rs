//! Flat `key = value` experiment configuration. Keys carry their unit as a suffix
//! (`_ns`, `_ps`, `_hz`, ...); `#` starts a comment; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::histfile::read_histogram;
use crate::io::path_error;
use crate::sim::{
    AtomicTransition, BeatModulation, Echo, EmpiricalIrf, ExperimentConfig, InstrumentResponse, IrfMeasurement,
    ParametricIrf, PulseParams, PulseTrain, TdcSpec, TransitionLabel,
};

/// Keys that a run manifest adds on top of the configuration.
pub const MANIFEST_PREFIX: &str = "manifest.";

const REQUIRED: &[&str] = &[
    "transition",
    "lifetime_ns",
    "wavelength_nm",
    "pulse_energy_pj",
    "pulse_duration_ps",
    "beam_waist_um",
    "pulses_per_cycle",
    "pulse_spacing_ns",
    "cooling_window_ns",
    "cycle_rate_hz",
    "irf_kind",
    "tdc_bin_width_ps",
    "detection_efficiency",
    "prompt_scatter_prob",
    "background_rate_hz",
    "duration_s",
    "seed",
];

const OPTIONAL: &[&str] = &[
    "irf_rise_sigma_ps",
    "irf_tail_ns",
    "irf_offset_ns",
    "irf_echo_delays_ns",
    "irf_echo_amplitudes",
    "irf_histogram_path",
    "irf_bin_width_ps",
    "irf_origin_ps",
    "irf_weights",
    "tdc_jitter_sigma_ps",
    "tdc_scale_error_ppm",
    "tdc_inl_rms_ps",
    "tdc_inl_seed",
    "beat_enabled",
    "beat_amplitude",
    "beat_angular_frequency_rad_per_s",
    "beat_phase_rad",
    "irf_scatter_prob",
    "irf_duration_s",
];

const PRESETS: &[(&str, &str)] = &[
    ("p12_quadrupole", include_str!("../../presets/p12_quadrupole.cfg")),
    ("p32_quadrupole", include_str!("../../presets/p32_quadrupole.cfg")),
    ("p12_linear", include_str!("../../presets/p12_linear.cfg")),
    ("p32_linear", include_str!("../../presets/p32_linear.cfg")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load_preset(name: &str) -> Result<ExperimentConfig> {
    let text = preset_text(name).ok_or_else(|| {
        Error::invalid(
            "preset",
            format!("unknown preset `{name}`; available: {}", preset_names().join(", ")),
        )
    })?;
    parse_config(text, None)
}

/// Reads and validates a configuration file. Relative `irf_histogram_path` values are
/// resolved against the file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| path_error(path, e))?;
    parse_config(&text, path.parent())
}

/// A file path if one exists, otherwise a built-in preset name.
pub fn resolve_config(spec: &str) -> Result<ExperimentConfig> {
    let path = Path::new(spec);
    if path.exists() {
        load_config(path)
    } else if let Some(text) = preset_text(spec) {
        parse_config(text, None)
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!(
                "`{spec}` is neither a file nor a preset ({})",
                preset_names().join(", ")
            ),
        )))
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "empty key".into(),
                });
            }
            if map.insert(k.to_string(), (line_no, v.to_string())).is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(Self { map })
    }

    fn check_keys(&self) -> Result<()> {
        for k in self.map.keys() {
            if !(REQUIRED.contains(&k.as_str()) || OPTIONAL.contains(&k.as_str()) || k.starts_with(MANIFEST_PREFIX)) {
                return Err(Error::UnknownKey(k.clone()));
            }
        }
        let missing: Vec<String> = REQUIRED
            .iter()
            .filter(|k| !self.map.contains_key(**k))
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn bad(key: &str, value: &str, what: &str) -> Error {
        Error::invalid(key, format!("expected {what}, got `{value}`"))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        let v = self.raw(key).ok_or_else(|| Error::MissingKeys(vec![key.to_string()]))?;
        v.parse::<f64>().map_err(|_| Self::bad(key, v, "a number"))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.raw(key).is_some() {
            self.f64(key)
        } else {
            Ok(default)
        }
    }

    fn u64(&self, key: &str) -> Result<u64> {
        let v = self.raw(key).ok_or_else(|| Error::MissingKeys(vec![key.to_string()]))?;
        v.parse::<u64>()
            .map_err(|_| Self::bad(key, v, "a non-negative integer"))
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        if self.raw(key).is_some() {
            self.u64(key)
        } else {
            Ok(default)
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Self::bad(key, v, "`true` or `false`")),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        match self.raw(key) {
            None | Some("") => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Self::bad(key, v, "a comma-separated list of numbers"))
                })
                .collect(),
        }
    }
}

/// The `manifest.*` entries of a configuration text, prefix stripped.
pub(crate) fn manifest_entries(text: &str) -> Result<BTreeMap<String, String>> {
    Ok(Entries::parse(text)?
        .map
        .into_iter()
        .filter_map(|(k, (_, v))| k.strip_prefix(MANIFEST_PREFIX).map(|k| (k.to_string(), v)))
        .collect())
}

fn build_irf(e: &Entries, base_dir: Option<&Path>) -> Result<InstrumentResponse> {
    let kind = e.raw("irf_kind").unwrap_or_default();
    match kind {
        "parametric" => {
            let delays = e.list("irf_echo_delays_ns")?;
            let amps = e.list("irf_echo_amplitudes")?;
            if delays.len() != amps.len() {
                return Err(Error::invalid(
                    "irf_echo_amplitudes",
                    format!("{} amplitudes for {} echo delays", amps.len(), delays.len()),
                ));
            }
            let irf = ParametricIrf {
                rise_sigma_ps: e.f64_or("irf_rise_sigma_ps", 0.0)?,
                tail_ns: e.f64_or("irf_tail_ns", 0.0)?,
                offset_ns: e.f64_or("irf_offset_ns", 0.0)?,
                echoes: delays
                    .into_iter()
                    .zip(amps)
                    .map(|(delay_ns, amplitude)| Echo { delay_ns, amplitude })
                    .collect(),
            };
            irf.validate()?;
            Ok(InstrumentResponse::Parametric(irf))
        }
        "empirical" => {
            if let Some(p) = e.raw("irf_histogram_path") {
                let path = match base_dir {
                    Some(dir) if Path::new(p).is_relative() => dir.join(p),
                    _ => Path::new(p).to_path_buf(),
                };
                let h = read_histogram(&path)?;
                let counts: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
                Ok(InstrumentResponse::Empirical(EmpiricalIrf::from_counts(
                    h.bin_width_ps,
                    h.origin_ps,
                    &counts,
                )?))
            } else if e.raw("irf_weights").is_some() {
                let weights = e.list("irf_weights")?;
                Ok(InstrumentResponse::Empirical(EmpiricalIrf::new(
                    e.f64("irf_bin_width_ps")?,
                    e.f64_or("irf_origin_ps", 0.0)?,
                    weights,
                )?))
            } else {
                Err(Error::MissingKeys(vec!["irf_histogram_path".into()]))
            }
        }
        other => Err(Error::invalid(
            "irf_kind",
            format!("expected `parametric` or `empirical`, got `{other}`"),
        )),
    }
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<ExperimentConfig> {
    let e = Entries::parse(text)?;
    e.check_keys()?;
    let label: TransitionLabel = e.raw("transition").unwrap_or_default().parse()?;
    let transition = AtomicTransition::new(label, e.f64("lifetime_ns")?, e.f64("wavelength_nm")?)?;
    let pulse = PulseParams::new(
        e.f64("pulse_energy_pj")?,
        e.f64("pulse_duration_ps")?,
        e.f64("beam_waist_um")?,
    )?;
    let pulses = e.u64("pulses_per_cycle")?;
    let train = PulseTrain {
        pulses_per_cycle: u32::try_from(pulses).map_err(|_| Error::invalid("pulses_per_cycle", "too large"))?,
        pulse_spacing_ns: e.f64("pulse_spacing_ns")?,
        cooling_window_ns: e.f64("cooling_window_ns")?,
        cycle_rate_hz: e.f64("cycle_rate_hz")?,
    };
    let tdc = TdcSpec {
        bin_width_ps: e.f64("tdc_bin_width_ps")?,
        jitter_sigma_ps: e.f64_or("tdc_jitter_sigma_ps", 0.0)?,
        scale_error_ppm: e.f64_or("tdc_scale_error_ppm", 0.0)?,
        inl_rms_ps: e.f64_or("tdc_inl_rms_ps", 0.0)?,
        inl_seed: e.u64_or("tdc_inl_seed", 0)?,
    };
    let beats = BeatModulation {
        enabled: e.bool_or("beat_enabled", false)?,
        amplitude: e.f64_or("beat_amplitude", 0.0)?,
        angular_frequency: e.f64_or("beat_angular_frequency_rad_per_s", 0.0)?,
        phase: e.f64_or("beat_phase_rad", 0.0)?,
    };
    let defaults = IrfMeasurement::default();
    let config = ExperimentConfig {
        transition,
        pulse,
        train,
        irf: build_irf(&e, base_dir)?,
        tdc,
        beats,
        detection_efficiency: e.f64("detection_efficiency")?,
        prompt_scatter_prob: e.f64("prompt_scatter_prob")?,
        background_rate_hz: e.f64("background_rate_hz")?,
        duration_s: e.f64("duration_s")?,
        seed: e.u64("seed")?,
        irf_measurement: IrfMeasurement {
            scatter_prob: e.f64_or("irf_scatter_prob", defaults.scatter_prob)?,
            duration_s: e.f64_or("irf_duration_s", defaults.duration_s)?,
        },
    };
    config.validate()?;
    Ok(config)
}

fn join(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Serializes a configuration so that [`parse_config`] returns it unchanged. Empirical
/// responses are written inline as weights.
pub fn format_config(c: &ExperimentConfig) -> String {
    let mut s = String::new();
    let t = &c.transition;
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("transition", t.label.to_string());
    kv("lifetime_ns", t.lifetime_ns().to_string());
    kv("wavelength_nm", t.wavelength_nm().to_string());
    kv("pulse_energy_pj", c.pulse.energy_pj.to_string());
    kv("pulse_duration_ps", c.pulse.duration_ps.to_string());
    kv("beam_waist_um", c.pulse.waist_um.to_string());
    kv("pulses_per_cycle", c.train.pulses_per_cycle.to_string());
    kv("pulse_spacing_ns", c.train.pulse_spacing_ns.to_string());
    kv("cooling_window_ns", c.train.cooling_window_ns.to_string());
    kv("cycle_rate_hz", c.train.cycle_rate_hz.to_string());
    match &c.irf {
        InstrumentResponse::Parametric(p) => {
            kv("irf_kind", "parametric".into());
            kv("irf_rise_sigma_ps", p.rise_sigma_ps.to_string());
            kv("irf_tail_ns", p.tail_ns.to_string());
            kv("irf_offset_ns", p.offset_ns.to_string());
            kv("irf_echo_delays_ns", join(p.echoes.iter().map(|e| e.delay_ns)));
            kv("irf_echo_amplitudes", join(p.echoes.iter().map(|e| e.amplitude)));
        }
        InstrumentResponse::Empirical(e) => {
            kv("irf_kind", "empirical".into());
            kv("irf_bin_width_ps", e.bin_width_ps().to_string());
            kv("irf_origin_ps", e.origin_ps().to_string());
            kv("irf_weights", join(e.weights().iter().copied()));
        }
    }
    kv("tdc_bin_width_ps", c.tdc.bin_width_ps.to_string());
    kv("tdc_jitter_sigma_ps", c.tdc.jitter_sigma_ps.to_string());
    kv("tdc_scale_error_ppm", c.tdc.scale_error_ppm.to_string());
    kv("tdc_inl_rms_ps", c.tdc.inl_rms_ps.to_string());
    kv("tdc_inl_seed", c.tdc.inl_seed.to_string());
    kv("beat_enabled", c.beats.enabled.to_string());
    kv("beat_amplitude", c.beats.amplitude.to_string());
    kv(
        "beat_angular_frequency_rad_per_s",
        c.beats.angular_frequency.to_string(),
    );
    kv("beat_phase_rad", c.beats.phase.to_string());
    kv("detection_efficiency", c.detection_efficiency.to_string());
    kv("prompt_scatter_prob", c.prompt_scatter_prob.to_string());
    kv("background_rate_hz", c.background_rate_hz.to_string());
    kv("duration_s", c.duration_s.to_string());
    kv("seed", c.seed.to_string());
    kv("irf_scatter_prob", c.irf_measurement.scatter_prob.to_string());
    kv("irf_duration_s", c.irf_measurement.duration_s.to_string());
    s
}
