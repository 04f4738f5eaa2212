use crate::analysis::fit::FitWindow;
use crate::analysis::histogram::{peak_index, TimeHistogram};
use crate::error::{Error, Result};

/// Gap left between the background region and the peak it precedes.
const PEAK_GUARD_NS: f64 = 1.0;
const DEFAULT_REGION_BINS: usize = 10;
/// A bin above this fraction of the peak means the region reaches into the signal.
const SIGNAL_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundEstimate {
    /// Mean counts per bin.
    pub level: f64,
    /// Poisson error on `level`.
    pub error: f64,
    pub n_bins: usize,
    pub region: FitWindow,
    pub warning: Option<String>,
}

/// The `DEFAULT_REGION_BINS` bins that end `PEAK_GUARD_NS` before the peak (circularly),
/// expressed as offsets after the peak.
pub fn default_background_region(hist: &TimeHistogram) -> Result<FitWindow> {
    let w = hist.bin_width_ns();
    let period = hist.span_ns();
    let guard = (PEAK_GUARD_NS / w).ceil() * w;
    let end = period - guard;
    let start = end - DEFAULT_REGION_BINS as f64 * w;
    if start < 0.0 {
        return Err(Error::invalid(
            "background_region",
            format!("histogram span {period} ns is too short for the default background region"),
        ));
    }
    FitWindow::new(start, end)
}

/// Region of an IRF measurement that holds only the uncorrelated floor: from half the
/// period after the peak up to `PEAK_GUARD_NS` before the next one.
pub fn default_irf_floor_region(irf: &TimeHistogram) -> Result<FitWindow> {
    let w = irf.bin_width_ns();
    let period = irf.span_ns();
    let guard = (PEAK_GUARD_NS / w).ceil() * w;
    let start = (0.5 * period / w).round() * w;
    FitWindow::new(start, period - guard)
}

/// Background per data bin inferred from the floor of a prompt-only IRF run, scaled by
/// the ratio of exposures. The IRF run has no decay photons, so its floor is free of the
/// decay tail that wraps into every region of a folded decay histogram.
pub fn background_from_irf(irf: &TimeHistogram, data: &TimeHistogram, region: FitWindow) -> Result<BackgroundEstimate> {
    if !(irf.exposure_s > 0.0 && data.exposure_s > 0.0) {
        return Err(Error::invalid(
            "exposure_s",
            "scaling an IRF floor to the data needs both exposures > 0",
        ));
    }
    let floor = background_estimate(irf, region)?;
    let scale = data.exposure_s / irf.exposure_s;
    Ok(BackgroundEstimate {
        level: floor.level * scale,
        error: floor.error * scale,
        ..floor
    })
}

/// Mean counts per bin over `region`, measured forward from the peak bin.
pub fn background_estimate(hist: &TimeHistogram, region: FitWindow) -> Result<BackgroundEstimate> {
    let n = hist.n_bins();
    region.validate_for(hist.span_ns())?;
    let (first, last) = region.bin_range(hist.bin_width_ns());
    let last = last.min(n);
    let n_bins = last.saturating_sub(first);
    if n_bins < 5 {
        return Err(Error::invalid(
            "background_region",
            format!("region holds {n_bins} bins; at least 5 are required"),
        ));
    }
    let values = hist.values();
    let peak = peak_index(&values);
    let region_counts: Vec<f64> = (first..last).map(|k| values[(peak + k) % n]).collect();
    let sum: f64 = region_counts.iter().sum();
    let level = sum / n_bins as f64;
    let error = sum.max(1.0).sqrt() / n_bins as f64;

    let peak_height = values[peak];
    let warning = if first == 0 {
        Some("background region overlaps the peak bin".to_string())
    } else if peak_height > 0.0 && region_counts.iter().any(|&c| c > SIGNAL_FRACTION * peak_height) {
        Some(format!(
            "background region holds bins above {:.0}% of the peak; it overlaps the signal",
            SIGNAL_FRACTION * 100.0
        ))
    } else {
        None
    };
    Ok(BackgroundEstimate {
        level,
        error,
        n_bins,
        region,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use rand_distr::{Distribution, Poisson};

    fn peaked(flat: Vec<u64>) -> TimeHistogram {
        let mut c = flat;
        c[3] += 100_000;
        TimeHistogram::new(100.0, 0.0, c).unwrap()
    }

    #[test]
    fn zero_region_gives_zero() {
        let h = peaked(vec![0; 124]);
        let r = default_background_region(&h).unwrap();
        let b = background_estimate(&h, r).unwrap();
        assert_eq!(b.level, 0.0);
        assert_eq!(b.n_bins, 10);
        assert!(b.warning.is_none());
    }

    #[test]
    fn injected_uniform_rate_is_recovered() {
        let mut rng = StreamRng::new(31, 0);
        let pois = Poisson::new(37.5).unwrap();
        for _ in 0..20 {
            let h = peaked((0..124).map(|_| pois.sample(&mut rng) as u64).collect());
            let b = background_estimate(&h, default_background_region(&h).unwrap()).unwrap();
            assert!((b.level - 37.5).abs() < 3.0 * b.error, "{} +- {}", b.level, b.error);
        }
    }

    #[test]
    fn region_over_peak_warns() {
        let h = peaked(vec![1; 124]);
        let b = background_estimate(&h, FitWindow::new(0.0, 1.0).unwrap()).unwrap();
        assert!(b.warning.is_some());
        let b = background_estimate(&h, FitWindow::new(12.0 - 1.0, 12.4).unwrap()).unwrap();
        assert!(b.warning.is_none());
    }

    #[test]
    fn irf_floor_scales_with_exposure() {
        let mut irf = peaked(vec![4; 124]);
        irf.exposure_s = 10.0;
        let mut data = peaked(vec![0; 124]);
        data.exposure_s = 60.0;
        let region = default_irf_floor_region(&irf).unwrap();
        assert_eq!(region.bin_range(0.1), (62, 114));
        let b = background_from_irf(&irf, &data, region).unwrap();
        assert!((b.level - 24.0).abs() < 1e-12);
        data.exposure_s = 0.0;
        assert!(background_from_irf(&irf, &data, region).is_err());
    }

    #[test]
    fn too_few_bins_is_rejected() {
        let h = peaked(vec![1; 124]);
        assert!(background_estimate(&h, FitWindow::new(5.0, 5.3).unwrap()).is_err());
    }
}
