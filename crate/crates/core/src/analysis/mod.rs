//! From raw photon-arrival histograms to lifetimes: folding, background, Poisson
//! maximum-likelihood exponential fits, start-time scans, convolved templates and the
//! scan-matching extraction, plus error bookkeeping.

mod background;
mod combine;
mod extract;
mod fit;
mod histogram;
mod precision;
mod scan;
mod template;

pub use background::{
    background_estimate, background_from_irf, default_background_region, default_irf_floor_region, BackgroundEstimate,
};
pub use combine::{combine_measurements, CombineRule, LifetimeResult};
pub use extract::{extract_lifetime, BackgroundSource, ExtractConfig, Extraction};
pub use fit::{fit_decay, fit_decay_values, Background, DecayLikelihood, DecayModel, FitResult, FitWindow};
pub use histogram::{fit_anchor, fold_and_invert, histogram_events, peak_index, TimeHistogram};
pub use precision::predict_statistical_precision;
pub use scan::{scan_start_time, scan_values, ScanConfig, ScanPoint, StartTimeScan};
pub use template::{build_template, ConvolutionKernel, ModelHistogram, NormalizedIrf};
