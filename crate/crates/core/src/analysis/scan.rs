use crate::analysis::fit::{fit_decay_values, Background, DecayModel, FitResult, FitWindow};
use crate::analysis::histogram::{fit_anchor, TimeHistogram};
use crate::error::{Error, Result};

/// Start-time scan settings. All offsets are in ns after the peak bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub step_ns: f64,
    pub max_offset_ns: f64,
    /// Fixed end of every fit window.
    pub end_offset_ns: f64,
    pub model: DecayModel,
    pub background: Background,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            step_ns: 0.2,
            max_offset_ns: 5.0,
            end_offset_ns: 11.0,
            model: DecayModel::Wrapped,
            background: Background::Floated,
        }
    }
}

impl ScanConfig {
    pub fn offsets(&self) -> Vec<f64> {
        let n = (self.max_offset_ns / self.step_ns + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.step_ns).collect()
    }

    fn validate(&self, bin_width_ns: f64) -> Result<()> {
        if !(self.step_ns.is_finite() && self.step_ns >= bin_width_ns * (1.0 - 1e-9)) {
            return Err(Error::invalid(
                "scan_step_ns",
                format!("step {} ns is below the {bin_width_ns} ns bin width", self.step_ns),
            ));
        }
        if !(self.max_offset_ns >= 0.0 && self.max_offset_ns < self.end_offset_ns) {
            return Err(Error::invalid(
                "scan_max_offset_ns",
                format!(
                    "max offset {} ns must lie in [0, end offset {} ns)",
                    self.max_offset_ns, self.end_offset_ns
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub start_offset_ns: f64,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartTimeScan {
    pub points: Vec<ScanPoint>,
}

impl StartTimeScan {
    pub fn converged(&self) -> impl Iterator<Item = &ScanPoint> {
        self.points
            .iter()
            .filter(|p| p.fit.converged && p.fit.tau_stat.is_finite())
    }

    /// Converged point closest to `offset_ns`.
    pub fn point_near(&self, offset_ns: f64) -> Option<&ScanPoint> {
        self.converged().min_by(|a, b| {
            (a.start_offset_ns - offset_ns)
                .abs()
                .total_cmp(&(b.start_offset_ns - offset_ns).abs())
        })
    }

    /// Largest `|tau_i - tau_ref| / tau_ref` over converged points, with the latest
    /// converged point as reference.
    pub fn relative_variation(&self) -> Option<f64> {
        let reference = self.converged().last()?.fit.tau;
        self.converged()
            .map(|p| (p.fit.tau - reference).abs() / reference)
            .reduce(f64::max)
    }

    /// Largest deviation from the latest converged point in units of the combined
    /// error. Windows are nested, so the variance of a difference is the difference of
    /// the variances.
    pub fn max_deviation_sigma(&self) -> Option<f64> {
        let last = self.converged().last()?.fit.clone();
        self.converged()
            .filter(|p| p.fit.window != last.window)
            .map(|p| {
                let var = (last.tau_stat.powi(2) - p.fit.tau_stat.powi(2)).abs();
                (p.fit.tau - last.tau).abs() / var.sqrt().max(1e-300)
            })
            .reduce(f64::max)
    }
}

/// Refits with the window start stepped out from the peak.
pub fn scan_start_time(hist: &TimeHistogram, config: &ScanConfig) -> Result<StartTimeScan> {
    let values = hist.values();
    let anchor = fit_anchor(&values);
    scan_values(&values, hist.bin_width_ns(), anchor, config)
}

/// [`scan_start_time`] on real-valued bins with an explicit anchor bin.
pub fn scan_values(values: &[f64], bin_width_ns: f64, anchor: usize, config: &ScanConfig) -> Result<StartTimeScan> {
    config.validate(bin_width_ns)?;
    let points = config
        .offsets()
        .into_iter()
        .map(|start| {
            let window = FitWindow::new(start, config.end_offset_ns)?;
            let fit = fit_decay_values(values, bin_width_ns, anchor, window, config.model, config.background)?;
            Ok(ScanPoint {
                start_offset_ns: start,
                fit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StartTimeScan { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use rand_distr::{Distribution, Poisson};

    fn exponential_hist(seed: u64, total: f64, tau: f64) -> TimeHistogram {
        let n = 124;
        let norm: f64 = (0..n).map(|k| (-(k as f64) * 0.1 / tau).exp()).sum();
        let mut rng = StreamRng::new(seed, 0);
        let counts = (0..n)
            .map(|k| {
                let mu = total * (-(k as f64) * 0.1 / tau).exp() / norm + 2.0;
                Poisson::new(mu).unwrap().sample(&mut rng) as u64
            })
            .collect();
        TimeHistogram::new(100.0, 0.0, counts).unwrap()
    }

    #[test]
    fn offsets_are_strictly_increasing() {
        let c = ScanConfig::default();
        let o = c.offsets();
        assert_eq!(o.len(), 26);
        assert!(o.windows(2).all(|w| w[1] > w[0]));
        assert!((o[25] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn pure_exponential_scan_is_flat() {
        let h = exponential_hist(5, 2e5, 3.148);
        let s = scan_start_time(&h, &ScanConfig::default()).unwrap();
        assert_eq!(s.converged().count(), 26);
        let dev = s.max_deviation_sigma().unwrap();
        assert!(dev < 4.0, "max deviation {dev} sigma");
    }

    #[test]
    fn step_below_bin_width_is_rejected() {
        let h = exponential_hist(5, 1e4, 3.0);
        let c = ScanConfig {
            step_ns: 0.05,
            ..ScanConfig::default()
        };
        assert!(scan_start_time(&h, &c).is_err());
    }
}
