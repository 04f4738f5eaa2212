use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sim::EventRecord;

pub const META_FOLDED_PERIOD: &str = "folded_period_ps";
pub const META_UNDERFLOW: &str = "underflow";
pub const META_OVERFLOW: &str = "overflow";

#[derive(Debug, Clone, PartialEq)]
pub struct TimeHistogram {
    pub bin_width_ps: f64,
    pub origin_ps: f64,
    pub counts: Vec<u64>,
    /// Live data-taking time.
    pub exposure_s: f64,
    pub metadata: BTreeMap<String, String>,
}

impl TimeHistogram {
    pub fn new(bin_width_ps: f64, origin_ps: f64, counts: Vec<u64>) -> Result<Self> {
        if !(bin_width_ps.is_finite() && bin_width_ps > 0.0) {
            return Err(Error::invalid("bin_width_ps", "TimeHistogram requires bin_width > 0"));
        }
        if !origin_ps.is_finite() {
            return Err(Error::invalid("origin_ps", "must be finite"));
        }
        Ok(Self {
            bin_width_ps,
            origin_ps,
            counts,
            exposure_s: 0.0,
            metadata: BTreeMap::new(),
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn span_ns(&self) -> f64 {
        self.counts.len() as f64 * self.bin_width_ps * 1e-3
    }

    pub fn bin_width_ns(&self) -> f64 {
        self.bin_width_ps * 1e-3
    }

    pub fn is_folded(&self) -> bool {
        self.metadata.contains_key(META_FOLDED_PERIOD)
    }

    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Events that fell outside the histogram span.
    pub fn out_of_range(&self) -> u64 {
        [META_UNDERFLOW, META_OVERFLOW]
            .iter()
            .filter_map(|k| self.metadata.get(*k).and_then(|v| v.parse::<u64>().ok()))
            .sum()
    }
}

/// First bin holding the maximum count.
pub fn peak_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Origin for decay fits: the leading edge of the peak. Steps back from the maximum while
/// the earlier bin's shortfall from it is within four Poisson standard deviations of
/// the difference, so counting noise near a sharp onset cannot push the origin past the
/// true first bin.
pub fn fit_anchor(values: &[f64]) -> usize {
    let n = values.len();
    if n == 0 {
        return 0;
    }
    let peak = peak_index(values);
    let max = values[peak];
    let mut anchor = peak;
    for _ in 0..n / 4 {
        let prev = (anchor + n - 1) % n;
        let v = values[prev];
        if max - v > 4.0 * (max + v).max(0.0).sqrt() {
            break;
        }
        anchor = prev;
    }
    anchor
}

/// Bins event raw times into `[0, span)`; events outside are tallied in the
/// `underflow`/`overflow` metadata entries rather than dropped.
pub fn histogram_events(events: &[EventRecord], bin_width_ps: f64, span_ps: f64) -> Result<TimeHistogram> {
    if !(bin_width_ps.is_finite() && bin_width_ps > 0.0) {
        return Err(Error::invalid("bin_width_ps", "TimeHistogram requires bin_width > 0"));
    }
    if !(span_ps.is_finite() && span_ps > 0.0) {
        return Err(Error::invalid("span_ps", "must be > 0"));
    }
    let n_bins = (span_ps / bin_width_ps - 1e-9).ceil().max(1.0) as usize;
    let mut counts = vec![0u64; n_bins];
    let (mut under, mut over) = (0u64, 0u64);
    for e in events {
        // Readings sit on bin edges; the small bias keeps k * w / w from flooring to k - 1.
        let x = e.raw_time_ps / bin_width_ps + 1e-9;
        if x < 0.0 {
            under += 1;
            continue;
        }
        let k = x.floor() as usize;
        if k >= n_bins || e.raw_time_ps >= span_ps {
            over += 1;
        } else {
            counts[k] += 1;
        }
    }
    let mut h = TimeHistogram::new(bin_width_ps, 0.0, counts)?;
    h.metadata.insert(META_UNDERFLOW.into(), under.to_string());
    h.metadata.insert(META_OVERFLOW.into(), over.to_string());
    Ok(h)
}

/// Sums the histogram modulo `period` and reverses the bin order, turning the
/// start/stop-reversed TDC readings into delay-after-pulse. Totals are conserved.
pub fn fold_and_invert(hist: &TimeHistogram, period_ps: f64) -> Result<TimeHistogram> {
    let ratio = period_ps / hist.bin_width_ps;
    let n = ratio.round();
    if !(period_ps > 0.0) || n < 1.0 || (ratio - n).abs() > 1e-6 * n {
        return Err(Error::invalid(
            "period",
            format!(
                "fold period {period_ps} ps is not an integer multiple of the {} ps bin width",
                hist.bin_width_ps
            ),
        ));
    }
    let n = n as usize;
    let mut folded = vec![0u64; n];
    for (i, &c) in hist.counts.iter().enumerate() {
        folded[i % n] += c;
    }
    folded.reverse();
    let mut out = TimeHistogram::new(hist.bin_width_ps, 0.0, folded)?;
    out.exposure_s = hist.exposure_s;
    out.metadata = hist.metadata.clone();
    out.metadata
        .insert(META_FOLDED_PERIOD.into(), format!("{}", n as f64 * hist.bin_width_ps));
    Ok(out)
}
