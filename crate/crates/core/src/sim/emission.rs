use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::sim::AtomicTransition;

/// Single-frequency quantum-beat modulation of the decay:
/// `p(t) ∝ exp(-t/tau) * (1 + A cos(omega t + phi))`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BeatModulation {
    pub enabled: bool,
    pub amplitude: f64,
    /// rad/s
    pub angular_frequency: f64,
    pub phase: f64,
}

impl BeatModulation {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        if !(self.amplitude.is_finite() && (0.0..1.0).contains(&self.amplitude)) {
            return Err(Error::invalid(
                "beat_amplitude",
                format!(
                    "must lie in [0, 1) so the density stays positive, got {}",
                    self.amplitude
                ),
            ));
        }
        if !self.angular_frequency.is_finite() || !self.phase.is_finite() {
            return Err(Error::invalid("beat_angular_frequency_rad_per_s", "must be finite"));
        }
        Ok(())
    }

    fn active(&self) -> bool {
        self.enabled && self.amplitude != 0.0
    }
}

/// Parameters in ns units, shared by the density, CDF and sampler.
struct Shape {
    rate: f64,
    amp: f64,
    omega: f64,
    phase: f64,
    norm: f64,
}

impl Shape {
    fn new(transition: &AtomicTransition, beats: &BeatModulation) -> Self {
        let tau = transition.lifetime_ns();
        let (amp, omega, phase) = if beats.active() {
            (beats.amplitude, beats.angular_frequency * 1e-9, beats.phase)
        } else {
            (0.0, 0.0, 0.0)
        };
        let wt = omega * tau;
        let norm = 1.0 + amp * (phase.cos() - wt * phase.sin()) / (1.0 + wt * wt);
        Self {
            rate: 1.0 / tau,
            amp,
            omega,
            phase,
            norm,
        }
    }

    fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.rate * (-self.rate * t).exp() * (1.0 + self.amp * (self.omega * t + self.phase).cos()) / self.norm
    }

    fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let c = self.rate;
        let decay = (-c * t).exp();
        let base = 1.0 - decay;
        if self.amp == 0.0 {
            return base;
        }
        // integral_0^t c e^{-cs} cos(ws + phi) ds
        let (w, phi) = (self.omega, self.phase);
        let d = c * c + w * w;
        let arg = w * t + phi;
        let beat = c / d * (c * phi.cos() - w * phi.sin() - decay * (c * arg.cos() - w * arg.sin()));
        (base + self.amp * beat) / self.norm
    }
}

/// Normalized emission-delay density (per ns).
pub fn emission_density(transition: &AtomicTransition, beats: &BeatModulation, t_ns: f64) -> f64 {
    Shape::new(transition, beats).density(t_ns)
}

/// Closed-form emission-delay CDF.
pub fn emission_cdf(transition: &AtomicTransition, beats: &BeatModulation, t_ns: f64) -> f64 {
    Shape::new(transition, beats).cdf(t_ns)
}

/// Draws a spontaneous-emission delay in ns.
///
/// Without beats this is the exact exponential inverse CDF. With beats the closed-form
/// CDF is inverted by bisection to `1e-4 * tau`, consuming exactly one uniform either way.
pub fn sample_emission_delay(
    transition: &AtomicTransition,
    beats: &BeatModulation,
    rng: &mut StreamRng,
) -> Result<f64> {
    if beats.enabled && beats.amplitude >= 1.0 {
        return Err(Error::domain(format!(
            "beat amplitude must be < 1, got {}",
            beats.amplitude
        )));
    }
    beats.validate()?;
    let u = rng.uniform();
    Ok(invert(&Shape::new(transition, beats), transition.lifetime_ns(), u))
}

fn invert(shape: &Shape, tau: f64, u: f64) -> f64 {
    if shape.amp == 0.0 {
        return -tau * (-u).ln_1p();
    }
    let mut hi = tau;
    while shape.cdf(hi) < u {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    let tol = 1e-4 * tau;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if shape.cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p12() -> AtomicTransition {
        AtomicTransition::cd_p12()
    }

    #[test]
    fn amplitude_at_or_above_one_is_rejected() {
        let beats = BeatModulation {
            enabled: true,
            amplitude: 1.0,
            angular_frequency: 1e9,
            phase: 0.0,
        };
        let mut rng = StreamRng::new(0, 0);
        assert!(matches!(
            sample_emission_delay(&p12(), &beats, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn cdf_matches_numerical_integral_of_density() {
        let beats = BeatModulation {
            enabled: true,
            amplitude: 0.3,
            angular_frequency: 2.1e9,
            phase: 0.7,
        };
        let t = p12();
        // Simpson's rule on the density, independent of the closed form.
        for &x in &[0.5, 2.0, 5.0, 20.0] {
            let n = 20_000;
            let h = x / n as f64;
            let mut s = emission_density(&t, &beats, 0.0) + emission_density(&t, &beats, x);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * emission_density(&t, &beats, i as f64 * h);
            }
            let integral = s * h / 3.0;
            assert!((integral - emission_cdf(&t, &beats, x)).abs() < 1e-10, "x={x}");
        }
        assert!((emission_cdf(&t, &beats, 400.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_cdf_at_tau() {
        let t = p12();
        let beats = BeatModulation::off();
        let mut rng = StreamRng::new(11, 0);
        let n = 1_000_000;
        let below = (0..n)
            .filter(|_| sample_emission_delay(&t, &beats, &mut rng).unwrap() <= t.lifetime_ns())
            .count();
        let p = 1.0 - (-1.0f64).exp();
        let frac = below as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((frac - p).abs() < 3.0 * sigma, "frac={frac}");
    }

    #[test]
    fn exponential_sample_mean() {
        let t = AtomicTransition::cd_p32();
        let beats = BeatModulation::off();
        let mut rng = StreamRng::new(5, 1);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| sample_emission_delay(&t, &beats, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let tau = t.lifetime_ns();
        assert!((mean - tau).abs() < 3.0 * tau / (n as f64).sqrt(), "mean={mean}");
    }

    #[test]
    fn beat_histogram_matches_closed_form_density() {
        let t = p12();
        let tau = t.lifetime_ns();
        let beats = BeatModulation {
            enabled: true,
            amplitude: 0.2,
            angular_frequency: 5.0 / (tau * 1e-9),
            phase: 0.0,
        };
        let mut rng = StreamRng::new(3, 3);
        let n = 10_000_000usize;
        let width = 0.1;
        let nbins = 200;
        let mut counts = vec![0u64; nbins];
        for _ in 0..n {
            let x = sample_emission_delay(&t, &beats, &mut rng).unwrap();
            let k = (x / width) as usize;
            if k < nbins {
                counts[k] += 1;
            }
        }
        let mut chi2 = 0.0;
        let mut ndf = 0;
        for (k, &c) in counts.iter().enumerate() {
            let lo = k as f64 * width;
            let expected = n as f64 * (emission_cdf(&t, &beats, lo + width) - emission_cdf(&t, &beats, lo));
            if expected > 20.0 {
                chi2 += (c as f64 - expected).powi(2) / expected;
                ndf += 1;
            }
        }
        let r = chi2 / ndf as f64;
        assert!((0.8..=1.2).contains(&r), "chi2/ndf = {r}");
    }
}
