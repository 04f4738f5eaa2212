use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdcSpec {
    pub bin_width_ps: f64,
    pub jitter_sigma_ps: f64,
    pub scale_error_ppm: f64,
    pub inl_rms_ps: f64,
    pub inl_seed: u64,
}

impl TdcSpec {
    /// No jitter, no scale error, no INL.
    pub fn ideal(bin_width_ps: f64) -> Self {
        Self {
            bin_width_ps,
            jitter_sigma_ps: 0.0,
            scale_error_ppm: 0.0,
            inl_rms_ps: 0.0,
            inl_seed: 0,
        }
    }

    /// 100 ps bins, 145 ps jitter, 20 ppm timebase error, 20 ps rms INL.
    pub fn preset() -> Self {
        Self {
            bin_width_ps: 100.0,
            jitter_sigma_ps: 145.0,
            scale_error_ppm: 20.0,
            inl_rms_ps: 20.0,
            inl_seed: 9353,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_ps.is_finite() && self.bin_width_ps > 0.0) {
            return Err(Error::invalid("tdc_bin_width_ps", "TdcSpec requires bin_width > 0"));
        }
        if !(self.jitter_sigma_ps.is_finite() && self.jitter_sigma_ps >= 0.0) {
            return Err(Error::invalid(
                "tdc_jitter_sigma_ps",
                "TdcSpec requires jitter_sigma >= 0",
            ));
        }
        if !self.scale_error_ppm.is_finite() {
            return Err(Error::invalid("tdc_scale_error_ppm", "must be finite"));
        }
        if !(self.inl_rms_ps.is_finite() && self.inl_rms_ps >= 0.0) {
            return Err(Error::invalid("tdc_inl_rms_ps", "TdcSpec requires inl_rms >= 0"));
        }
        Ok(())
    }
}

/// Per-bin integral non-linearity offsets in ps.
#[derive(Debug, Clone, PartialEq)]
pub struct InlTable {
    offsets_ps: Vec<f64>,
}

impl InlTable {
    pub fn zeros(n_bins: usize) -> Self {
        Self {
            offsets_ps: vec![0.0; n_bins],
        }
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets_ps
    }

    /// Offset for bin `index`; bins outside the table have none.
    #[inline]
    pub fn offset(&self, index: i64) -> f64 {
        if index < 0 {
            return 0.0;
        }
        self.offsets_ps.get(index as usize).copied().unwrap_or(0.0)
    }

    pub fn rms(&self) -> f64 {
        if self.offsets_ps.is_empty() {
            return 0.0;
        }
        (self.offsets_ps.iter().map(|x| x * x).sum::<f64>() / self.offsets_ps.len() as f64).sqrt()
    }
}

const INL_HARMONICS: usize = 6;

/// Smooth INL pattern: a few low harmonics with seeded amplitudes and phases, shifted to
/// zero mean and scaled to exactly `inl_rms`. A single bin cannot carry a zero-mean
/// nonzero pattern and is returned as zero.
pub fn generate_inl_pattern(tdc: &TdcSpec, n_bins: usize) -> InlTable {
    if tdc.inl_rms_ps == 0.0 || n_bins < 2 {
        return InlTable::zeros(n_bins);
    }
    let mut rng = StreamRng::new(tdc.inl_seed, 0x1_u64 << 40 | n_bins as u64);
    let harmonics = INL_HARMONICS.min(n_bins / 2).max(1);
    let terms: Vec<(f64, f64)> = (1..=harmonics)
        .map(|h| {
            let a: f64 = StandardNormal.sample(&mut rng);
            (a / h as f64, 2.0 * PI * rng.uniform())
        })
        .collect();
    let mut offsets: Vec<f64> = (0..n_bins)
        .map(|i| {
            let x = i as f64 / n_bins as f64;
            terms
                .iter()
                .enumerate()
                .map(|(k, (a, ph))| a * (2.0 * PI * (k + 1) as f64 * x + ph).sin())
                .sum()
        })
        .collect();
    let mean = offsets.iter().sum::<f64>() / n_bins as f64;
    offsets.iter_mut().for_each(|v| *v -= mean);
    let rms = (offsets.iter().map(|v| v * v).sum::<f64>() / n_bins as f64).sqrt();
    if rms == 0.0 {
        return InlTable::zeros(n_bins);
    }
    let scale = tdc.inl_rms_ps / rms;
    offsets.iter_mut().for_each(|v| *v *= scale);
    InlTable { offsets_ps: offsets }
}

/// Converts an analog interval (ps) into a TDC reading: Gaussian jitter, timebase scale
/// error, bin-dependent INL shift, then floor to the bin's left edge.
#[inline]
pub fn digitize(true_time_ps: f64, tdc: &TdcSpec, inl: &InlTable, rng: &mut StreamRng) -> f64 {
    let mut t = true_time_ps;
    if tdc.jitter_sigma_ps > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        t += tdc.jitter_sigma_ps * z;
    }
    t *= 1.0 + tdc.scale_error_ppm * 1e-6;
    let w = tdc.bin_width_ps;
    t += inl.offset((t / w).floor() as i64);
    (t / w).floor() * w
}
