use crate::analysis::histogram::TimeHistogram;
use crate::error::{Error, Result};

/// How the continuous decay is discretized before the circular convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvolutionKernel {
    /// Decay evaluated at bin starts: exact when the response sits on bin edges.
    PointSampled,
    /// Response position uniform within its bin; the decay's first bin picks up the
    /// triangular overlap. Matches smooth responses recorded by the same TDC.
    #[default]
    BinAveraged,
}

/// Instrument response as unit-sum bin weights over one fold period.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedIrf {
    bin_width_ps: f64,
    weights: Vec<f64>,
}

impl NormalizedIrf {
    pub fn new(bin_width_ps: f64, weights: Vec<f64>) -> Result<Self> {
        if !(bin_width_ps.is_finite() && bin_width_ps > 0.0) {
            return Err(Error::invalid("bin_width_ps", "must be > 0"));
        }
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain("IRF weights must be finite, >= 0 and non-empty"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "IRF weights sum to {sum}, expected 1 within 1e-9"
            )));
        }
        Ok(Self { bin_width_ps, weights })
    }

    /// Normalizes a (folded) IRF measurement.
    pub fn from_histogram(hist: &TimeHistogram) -> Result<Self> {
        let total = hist.total();
        if total == 0 {
            return Err(Error::domain("IRF histogram is empty"));
        }
        let weights = hist.counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self::new(hist.bin_width_ps, weights)
    }

    /// Normalizes an IRF measurement after removing a flat floor of `floor_per_bin`
    /// counts; bins that would go negative are set to zero.
    pub fn from_histogram_minus_floor(hist: &TimeHistogram, floor_per_bin: f64) -> Result<Self> {
        let net: Vec<f64> = hist
            .counts
            .iter()
            .map(|&c| (c as f64 - floor_per_bin).max(0.0))
            .collect();
        let total: f64 = net.iter().sum();
        if !(total > 0.0) {
            return Err(Error::domain("IRF histogram holds no counts above its floor"));
        }
        Self::new(hist.bin_width_ps, net.iter().map(|v| v / total).collect())
    }

    /// Unit weight in bin 0.
    pub fn delta(bin_width_ps: f64, n_bins: usize) -> Result<Self> {
        let mut w = vec![0.0; n_bins.max(1)];
        w[0] = 1.0;
        Self::new(bin_width_ps, w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bin_width_ps(&self) -> f64 {
        self.bin_width_ps
    }

    pub fn span_ns(&self) -> f64 {
        self.weights.len() as f64 * self.bin_width_ps * 1e-3
    }
}

/// Expected counts per bin; real-valued.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHistogram {
    pub bin_width_ps: f64,
    pub values: Vec<f64>,
}

impl ModelHistogram {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn bin_width_ns(&self) -> f64 {
        self.bin_width_ps * 1e-3
    }
}

/// Period-wrapped decay kernel, unit sum.
fn decay_kernel(n: usize, w_ns: f64, tau: f64, kernel: ConvolutionKernel) -> Vec<f64> {
    let x = w_ns / tau;
    let q = (-x).exp();
    let wrap = 1.0 / (1.0 - q.powi(n as i32));
    let mut d: Vec<f64> = (0..n).map(|j| q.powi(j as i32) * wrap).collect();
    match kernel {
        ConvolutionKernel::PointSampled => {}
        ConvolutionKernel::BinAveraged => {
            // Bin j >= 1 gets (tau/w)(1 - q)(1/q - 1) q^j; bin 0 gets the rest of the
            // first-period mass, 1 - (tau/w)(1 - q), plus its wrapped share.
            let c = -(-x).exp_m1() / x * x.exp_m1();
            for v in d.iter_mut() {
                *v *= c;
            }
            let first = 1.0 + (-x).exp_m1() / x;
            d[0] = first + c * (wrap - 1.0);
        }
    }
    let sum: f64 = d.iter().sum();
    d.iter().map(|v| v / sum).collect()
}

/// Expected folded spectrum for lifetime `tau_ns`: the IRF circularly convolved with the
/// wrapped decay, mixed with `prompt_fraction` of the bare IRF (a prompt δ seen through
/// the detector), scaled so the whole histogram holds `total_counts` including a flat
/// `background_level` per bin.
pub fn build_template(
    irf: &NormalizedIrf,
    tau_ns: f64,
    prompt_fraction: f64,
    period_ns: f64,
    background_level: f64,
    total_counts: f64,
    kernel: ConvolutionKernel,
) -> Result<ModelHistogram> {
    if !(tau_ns.is_finite() && tau_ns > 0.0) {
        return Err(Error::domain(format!("template lifetime must be > 0, got {tau_ns}")));
    }
    if !(0.0..=1.0).contains(&prompt_fraction) {
        return Err(Error::domain(format!(
            "prompt fraction {prompt_fraction} outside [0, 1]"
        )));
    }
    if !(background_level.is_finite() && background_level >= 0.0 && total_counts.is_finite() && total_counts >= 0.0) {
        return Err(Error::domain("background and total counts must be finite and >= 0"));
    }
    let w_ns = irf.bin_width_ps * 1e-3;
    let ratio = period_ns / w_ns;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-6 * n {
        return Err(Error::invalid(
            "period",
            format!(
                "period {period_ns} ns is not an integer multiple of the {} ps bin width",
                irf.bin_width_ps
            ),
        ));
    }
    let n = n as usize;
    if irf.weights.len() > n {
        return Err(Error::invalid(
            "irf",
            format!(
                "IRF spans {} bins, longer than the {n}-bin period; fold it first",
                irf.weights.len()
            ),
        ));
    }
    let d = decay_kernel(n, w_ns, tau_ns, kernel);
    let mut shape = vec![0.0; n];
    for (i, &a) in irf.weights.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let decay = (1.0 - prompt_fraction) * a;
        for (j, &dj) in d.iter().enumerate() {
            shape[(i + j) % n] += decay * dj;
        }
        shape[i] += prompt_fraction * a;
    }
    let signal = (total_counts - background_level * n as f64).max(0.0);
    let values = shape.iter().map(|s| signal * s + background_level).collect();
    Ok(ModelHistogram {
        bin_width_ps: irf.bin_width_ps,
        values,
    })
}
