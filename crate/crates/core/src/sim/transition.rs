use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const PLANCK: f64 = 6.626_070_15e-34;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionLabel {
    P12,
    P32,
}

impl fmt::Display for TransitionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionLabel::P12 => f.write_str("P1/2"),
            TransitionLabel::P32 => f.write_str("P3/2"),
        }
    }
}

impl FromStr for TransitionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P1/2" | "P12" | "p12" => Ok(TransitionLabel::P12),
            "P3/2" | "P32" | "p32" => Ok(TransitionLabel::P32),
            other => Err(Error::invalid(
                "transition",
                format!("expected P1/2 or P3/2, got `{other}`"),
            )),
        }
    }
}

/// An excited level decaying to the ground state. The linewidth is always derived from
/// the lifetime so that `linewidth * lifetime == 1` holds by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicTransition {
    pub label: TransitionLabel,
    lifetime_ns: f64,
    wavelength_nm: f64,
}

impl AtomicTransition {
    pub fn new(label: TransitionLabel, lifetime_ns: f64, wavelength_nm: f64) -> Result<Self> {
        if !(lifetime_ns.is_finite() && lifetime_ns > 0.0) {
            return Err(Error::invalid("lifetime_ns", "must be finite and > 0"));
        }
        if !(wavelength_nm.is_finite() && wavelength_nm > 0.0) {
            return Err(Error::invalid("wavelength_nm", "must be finite and > 0"));
        }
        Ok(Self {
            label,
            lifetime_ns,
            wavelength_nm,
        })
    }

    /// Cd+ 5p 2P1/2, 226.5 nm.
    pub fn cd_p12() -> Self {
        Self::new(TransitionLabel::P12, 3.148, 226.5).expect("valid preset")
    }

    /// Cd+ 5p 2P3/2, 214.5 nm.
    pub fn cd_p32() -> Self {
        Self::new(TransitionLabel::P32, 2.647, 214.5).expect("valid preset")
    }

    pub fn lifetime_ns(&self) -> f64 {
        self.lifetime_ns
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    /// Decay rate in rad/s.
    pub fn linewidth(&self) -> f64 {
        1.0 / (self.lifetime_ns * 1e-9)
    }

    /// Two-level saturation intensity in W/m^2.
    pub fn saturation_intensity(&self) -> f64 {
        saturation_intensity(self.linewidth(), self.wavelength_nm * 1e-9)
    }

    pub fn with_lifetime(mut self, lifetime_ns: f64) -> Result<Self> {
        self = Self::new(self.label, lifetime_ns, self.wavelength_nm)?;
        Ok(self)
    }
}

/// `I_s = pi h c gamma / (3 lambda^3)`, SI units.
pub fn saturation_intensity(linewidth: f64, wavelength_m: f64) -> f64 {
    PI * PLANCK * SPEED_OF_LIGHT * linewidth / (3.0 * wavelength_m.powi(3))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParams {
    pub energy_pj: f64,
    pub duration_ps: f64,
    pub waist_um: f64,
}

impl PulseParams {
    pub fn new(energy_pj: f64, duration_ps: f64, waist_um: f64) -> Result<Self> {
        let p = Self {
            energy_pj,
            duration_ps,
            waist_um,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("pulse_energy_pj", self.energy_pj),
            ("pulse_duration_ps", self.duration_ps),
            ("beam_waist_um", self.waist_um),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(key, "must be finite and >= 0"));
            }
        }
        if self.energy_pj > 0.0 && self.waist_um <= 0.0 {
            return Err(Error::invalid(
                "beam_waist_um",
                "must be > 0 when the pulse energy is > 0",
            ));
        }
        Ok(())
    }
}

/// Probability that one ultrafast pulse leaves the ion excited:
/// `sin^2( sqrt( gamma^2 / (4 pi I_s) * E t / w^2 ) )`.
///
/// The argument is the squared pulse area; the result is periodic in it, so it only
/// grows with energy up to the first Rabi maximum. The argument is not clamped.
pub fn excitation_probability(pulse: &PulseParams, transition: &AtomicTransition) -> Result<f64> {
    let check = |name: &str, v: f64| {
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")))
        }
    };
    check("pulse energy", pulse.energy_pj)?;
    check("pulse duration", pulse.duration_ps)?;
    check("beam waist", pulse.waist_um)?;
    if pulse.waist_um <= 0.0 {
        return Err(Error::domain("beam waist must be > 0"));
    }
    let gamma = transition.linewidth();
    let i_sat = transition.saturation_intensity();
    if !(i_sat.is_finite() && i_sat > 0.0) {
        return Err(Error::domain("saturation intensity must be > 0"));
    }
    let energy = pulse.energy_pj * 1e-12;
    let duration = pulse.duration_ps * 1e-12;
    let waist = pulse.waist_um * 1e-6;
    let arg = gamma * gamma / (4.0 * PI * i_sat) * (energy * duration / (waist * waist));
    Ok(arg.sqrt().sin().powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linewidth_times_lifetime_is_one() {
        for t in [AtomicTransition::cd_p12(), AtomicTransition::cd_p32()] {
            let product = t.linewidth() * t.lifetime_ns() * 1e-9;
            assert!((product - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_energy_gives_zero() {
        let p = PulseParams::new(0.0, 1.0, 6.0).unwrap();
        assert_eq!(excitation_probability(&p, &AtomicTransition::cd_p32()).unwrap(), 0.0);
    }

    #[test]
    fn pi_pulse_gives_unity() {
        // Choose the energy so that the argument is exactly (pi/2)^2.
        let t = AtomicTransition::cd_p32();
        let (dur, waist) = (1.0, 6.0);
        let coeff = t.linewidth().powi(2) / (4.0 * PI * t.saturation_intensity())
            * (1e-12 * dur * 1e-12 / (waist * 1e-6f64).powi(2));
        let energy = (PI / 2.0).powi(2) / coeff;
        let p = PulseParams::new(energy, dur, waist).unwrap();
        assert!((excitation_probability(&p, &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = AtomicTransition::cd_p12();
        let nan = PulseParams {
            energy_pj: f64::NAN,
            duration_ps: 1.0,
            waist_um: 6.0,
        };
        assert!(matches!(excitation_probability(&nan, &t), Err(Error::Domain(_))));
        let neg = PulseParams {
            energy_pj: -1.0,
            duration_ps: 1.0,
            waist_um: 6.0,
        };
        assert!(excitation_probability(&neg, &t).is_err());
        let no_waist = PulseParams {
            energy_pj: 1.0,
            duration_ps: 1.0,
            waist_um: 0.0,
        };
        assert!(excitation_probability(&no_waist, &t).is_err());
        assert!(PulseParams::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn saturation_intensity_matches_hand_value() {
        // pi h c / (3 lambda^3 tau) for 214.5 nm, 2.647 ns, evaluated by hand: 7962.87 W/m^2
        let t = AtomicTransition::cd_p32();
        assert!((t.saturation_intensity() - 7962.868).abs() < 0.01);
    }
}
