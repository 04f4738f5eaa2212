use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Echo {
    pub delay_ns: f64,
    /// Relative to the main peak.
    pub amplitude: f64,
}

/// Main peak is an exponentially modified Gaussian (Gaussian rise convolved with an
/// exponential tail); each echo is a scaled, delayed copy of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricIrf {
    pub rise_sigma_ps: f64,
    pub tail_ns: f64,
    /// Fixed transit/cable delay of the main peak.
    pub offset_ns: f64,
    pub echoes: Vec<Echo>,
}

impl ParametricIrf {
    /// Identity response.
    pub fn delta() -> Self {
        Self {
            rise_sigma_ps: 0.0,
            tail_ns: 0.0,
            offset_ns: 0.0,
            echoes: Vec::new(),
        }
    }

    /// 0.5 ns tail, 120 ps rise, two ringing echoes at 0.6 % of the main peak.
    pub fn preset() -> Self {
        Self {
            rise_sigma_ps: 120.0,
            tail_ns: 0.5,
            offset_ns: 1.0,
            echoes: vec![
                Echo {
                    delay_ns: 1.5,
                    amplitude: 0.006,
                },
                Echo {
                    delay_ns: 3.0,
                    amplitude: 0.006,
                },
            ],
        }
    }

    pub fn echo_weight(&self) -> f64 {
        let total: f64 = self.echoes.iter().map(|e| e.amplitude).sum();
        total / (1.0 + total)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rise_sigma_ps.is_finite() && self.rise_sigma_ps >= 0.0) {
            return Err(Error::invalid("irf_rise_sigma_ps", "must be finite and >= 0"));
        }
        if !(self.tail_ns.is_finite() && self.tail_ns >= 0.0) {
            return Err(Error::invalid("irf_tail_ns", "must be finite and >= 0"));
        }
        if !self.offset_ns.is_finite() {
            return Err(Error::invalid("irf_offset_ns", "must be finite"));
        }
        for e in &self.echoes {
            if !(e.amplitude.is_finite() && (0.0..1.0).contains(&e.amplitude)) {
                return Err(Error::invalid(
                    "irf_echo_amplitudes",
                    format!("echo amplitudes must lie in [0, 1), got {}", e.amplitude),
                ));
            }
            if !e.delay_ns.is_finite() {
                return Err(Error::invalid("irf_echo_delays_ns", "must be finite"));
            }
        }
        Ok(())
    }
}

/// A measured response: probability per bin, delay of bin `i` = `origin + i * width`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalIrf {
    bin_width_ps: f64,
    origin_ps: f64,
    weights: Vec<f64>,
    cdf: Vec<f64>,
}

impl EmpiricalIrf {
    pub fn new(bin_width_ps: f64, origin_ps: f64, weights: Vec<f64>) -> Result<Self> {
        if !(bin_width_ps > 0.0) {
            return Err(Error::invalid("irf_bin_width_ps", "must be > 0"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain("empirical IRF weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "empirical IRF must be normalized (sum = {total})"
            )));
        }
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            bin_width_ps,
            origin_ps,
            weights,
            cdf,
        })
    }

    /// Normalizes raw counts first.
    pub fn from_counts(bin_width_ps: f64, origin_ps: f64, counts: &[f64]) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::domain("empirical IRF has no counts"));
        }
        Self::new(bin_width_ps, origin_ps, counts.iter().map(|c| c / total).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bin_width_ps(&self) -> f64 {
        self.bin_width_ps
    }

    pub fn origin_ps(&self) -> f64 {
        self.origin_ps
    }

    fn sample(&self, rng: &mut StreamRng) -> f64 {
        let u = rng.uniform() * self.cdf.last().copied().unwrap_or(1.0);
        let i = self.cdf.partition_point(|&c| c <= u).min(self.weights.len() - 1);
        self.origin_ps + i as f64 * self.bin_width_ps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstrumentResponse {
    Parametric(ParametricIrf),
    Empirical(EmpiricalIrf),
}

impl InstrumentResponse {
    pub fn validate(&self) -> Result<()> {
        match self {
            InstrumentResponse::Parametric(p) => p.validate(),
            InstrumentResponse::Empirical(e) => {
                let total: f64 = e.weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::domain("empirical IRF must be normalized"));
                }
                Ok(())
            }
        }
    }
}

/// Adds a response delay drawn from the IRF to `emission_ps`.
#[inline]
pub fn apply_instrument_response(emission_ps: f64, irf: &InstrumentResponse, rng: &mut StreamRng) -> f64 {
    match irf {
        InstrumentResponse::Parametric(p) => {
            let mut delay = p.offset_ns * 1e3;
            if !p.echoes.is_empty() {
                let total: f64 = 1.0 + p.echoes.iter().map(|e| e.amplitude).sum::<f64>();
                let mut u = rng.uniform() * total - 1.0;
                for e in &p.echoes {
                    if u < 0.0 {
                        break;
                    }
                    if u < e.amplitude {
                        delay += e.delay_ns * 1e3;
                        break;
                    }
                    u -= e.amplitude;
                }
            }
            if p.rise_sigma_ps > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                delay += p.rise_sigma_ps * z;
            }
            if p.tail_ns > 0.0 {
                delay += -p.tail_ns * 1e3 * rng.uniform_pos().ln();
            }
            emission_ps + delay
        }
        InstrumentResponse::Empirical(e) => emission_ps + e.sample(rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_is_identity() {
        let irf = InstrumentResponse::Parametric(ParametricIrf::delta());
        let mut rng = StreamRng::new(1, 1);
        for t in [0.0, 123.4, 9_999.0] {
            assert_eq!(apply_instrument_response(t, &irf, &mut rng), t);
        }
    }

    #[test]
    fn single_bin_empirical_is_constant_shift() {
        let mut w = vec![0.0; 20];
        w[7] = 1.0;
        let irf = InstrumentResponse::Empirical(EmpiricalIrf::new(100.0, 0.0, w).unwrap());
        let mut rng = StreamRng::new(1, 2);
        for _ in 0..1000 {
            assert_eq!(apply_instrument_response(50.0, &irf, &mut rng), 750.0);
        }
    }

    #[test]
    fn unnormalized_empirical_is_rejected() {
        assert!(matches!(
            EmpiricalIrf::new(100.0, 0.0, vec![0.5, 0.6]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn echo_mixture_weight() {
        // Echo components are separated from the main peak by several ns with a
        // narrow main peak, so each sample can be attributed unambiguously.
        let p = ParametricIrf {
            rise_sigma_ps: 50.0,
            tail_ns: 0.1,
            offset_ns: 1.0,
            echoes: vec![
                Echo {
                    delay_ns: 5.0,
                    amplitude: 0.006,
                },
                Echo {
                    delay_ns: 10.0,
                    amplitude: 0.006,
                },
            ],
        };
        let expect = p.echo_weight();
        let irf = InstrumentResponse::Parametric(p);
        let mut rng = StreamRng::new(4, 4);
        let n = 2_000_000;
        let echoes = (0..n)
            .filter(|_| apply_instrument_response(0.0, &irf, &mut rng) > 4_000.0)
            .count();
        let frac = echoes as f64 / n as f64;
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((frac - expect).abs() < 4.0 * sigma, "frac={frac} expect={expect}");
    }

    #[test]
    fn preset_respects_invariants() {
        let p = ParametricIrf::preset();
        p.validate().unwrap();
        assert!((p.tail_ns - 0.5).abs() < 1e-12);
        assert!(p.echoes.iter().all(|e| (e.amplitude - 0.006).abs() < 1e-12));
    }

    #[test]
    fn echo_amplitude_of_one_is_invalid() {
        let mut p = ParametricIrf::preset();
        p.echoes[0].amplitude = 1.0;
        assert!(p.validate().is_err());
    }
}
