use nalgebra::{Matrix2, Vector2};

use crate::analysis::background::{background_from_irf, default_irf_floor_region};
use crate::analysis::combine::{CombineRule, LifetimeResult};
use crate::analysis::fit::{Background, FitResult, FitWindow};
use crate::analysis::histogram::{fit_anchor, TimeHistogram};
use crate::analysis::scan::{scan_values, ScanConfig, StartTimeScan};
use crate::analysis::template::{build_template, ConvolutionKernel, ModelHistogram, NormalizedIrf};
use crate::error::{Error, Result};

const PROMPT_STARTS: [f64; 3] = [0.02, 0.1, 0.3];
const MAX_PROMPT: f64 = 0.999;
const MAX_ITERATIONS: usize = 100;

/// Where the flat background of data and template comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackgroundSource {
    /// Floated in every data fit; the template uses the plateau fit's value.
    Floated,
    /// Known counts per data bin, held fixed.
    Fixed(f64),
    /// Measured in this region of the IRF run (offsets after its peak; `None` for the
    /// default floor region), scaled by the exposure ratio and held fixed. The floor is
    /// also removed from the IRF before it is normalized.
    IrfFloor(Option<FitWindow>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractConfig {
    /// Its `background` field is overridden by `background`.
    pub scan: ScanConfig,
    pub background: BackgroundSource,
    pub kernel: ConvolutionKernel,
    /// Scan offset whose fit supplies the statistical error and the template background.
    pub plateau_offset_ns: f64,
    /// Scan-matching chi2/ndf at or above this fails the extraction.
    pub max_chi2_ndf: f64,
    pub rule: CombineRule,
    pub trap_label: String,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            scan: ScanConfig::default(),
            background: BackgroundSource::IrfFloor(None),
            kernel: ConvolutionKernel::default(),
            plateau_offset_ns: 2.0,
            max_chi2_ndf: 10.0,
            rule: CombineRule::Quadrature,
            trap_label: "trap".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub result: LifetimeResult,
    pub prompt_fraction: f64,
    pub chi2_ndf: f64,
    pub data_scan: StartTimeScan,
    pub template_scan: StartTimeScan,
    pub template: ModelHistogram,
    pub plateau: FitResult,
    pub background_level: f64,
    /// Error on `background_level` when it was measured rather than fitted.
    pub background_error: Option<f64>,
    /// Peak bin of the data; every fit, data or template, is anchored here.
    pub anchor: usize,
}

struct Matcher<'a> {
    irf: NormalizedIrf,
    config: &'a ExtractConfig,
    scan: ScanConfig,
    period_ns: f64,
    bin_width_ns: f64,
    anchor: usize,
    background: f64,
    total: f64,
    /// Offsets and data values of the converged data scan points.
    targets: Vec<(f64, f64, f64)>,
}

impl Matcher<'_> {
    fn template(&self, tau: f64, prompt: f64) -> Result<ModelHistogram> {
        build_template(
            &self.irf,
            tau,
            prompt,
            self.period_ns,
            self.background,
            self.total,
            self.config.kernel,
        )
    }

    fn template_scan(&self, tau: f64, prompt: f64) -> Option<(ModelHistogram, StartTimeScan)> {
        let t = self.template(tau, prompt).ok()?;
        let scan = scan_values(&t.values, self.bin_width_ns, self.anchor, &self.scan).ok()?;
        Some((t, scan))
    }

    /// Weighted residuals `(tau_data - tau_template) / sigma_data` per converged data point.
    fn residuals(&self, p: Vector2<f64>) -> Option<Vec<f64>> {
        let (_, scan) = self.template_scan(p[0], p[1])?;
        self.targets
            .iter()
            .map(|&(offset, tau, sigma)| {
                let pt = scan.points.iter().find(|q| (q.start_offset_ns - offset).abs() < 1e-9)?;
                pt.fit.converged.then(|| (tau - pt.fit.tau) / sigma)
            })
            .collect()
    }

    fn clamp(&self, p: Vector2<f64>, tau_range: (f64, f64)) -> Vector2<f64> {
        Vector2::new(p[0].clamp(tau_range.0, tau_range.1), p[1].clamp(0.0, MAX_PROMPT))
    }

    fn jacobian(&self, p: Vector2<f64>, r0: &[f64]) -> Option<Vec<[f64; 2]>> {
        let mut cols = Vec::with_capacity(2);
        for i in 0..2 {
            let h = if i == 0 { 1e-5 * p[0] } else { 1e-5 };
            let mut up = p;
            let mut dn = p;
            up[i] += h;
            dn[i] -= h;
            let col: Vec<f64> = if i == 1 && dn[1] < 0.0 {
                let ru = self.residuals(up)?;
                ru.iter().zip(r0).map(|(a, b)| (a - b) / h).collect()
            } else if i == 1 && up[1] > MAX_PROMPT {
                let rd = self.residuals(dn)?;
                r0.iter().zip(&rd).map(|(a, b)| (a - b) / h).collect()
            } else {
                let (ru, rd) = (self.residuals(up)?, self.residuals(dn)?);
                ru.iter().zip(&rd).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            };
            cols.push(col);
        }
        Some((0..r0.len()).map(|k| [cols[0][k], cols[1][k]]).collect())
    }

    /// Levenberg–Marquardt on chi2 with box bounds applied by projection.
    fn solve(&self, start: Vector2<f64>, tau_range: (f64, f64)) -> Option<(Vector2<f64>, f64)> {
        let mut p = self.clamp(start, tau_range);
        let mut r = self.residuals(p)?;
        let mut chi2: f64 = r.iter().map(|v| v * v).sum();
        let mut lambda: f64 = 1e-2;
        for _ in 0..MAX_ITERATIONS {
            let jac = self.jacobian(p, &r)?;
            let mut jtj = Matrix2::<f64>::zeros();
            let mut jtr = Vector2::zeros();
            for (row, &rk) in jac.iter().zip(&r) {
                for a in 0..2 {
                    jtr[a] += row[a] * rk;
                    for b in 0..2 {
                        jtj[(a, b)] += row[a] * row[b];
                    }
                }
            }
            let mut improved = None;
            for _ in 0..20 {
                let mut m = jtj;
                for a in 0..2 {
                    m[(a, a)] += lambda * jtj[(a, a)].max(1e-12);
                }
                if let Some(inv) = m.try_inverse() {
                    let trial = self.clamp(p - inv * jtr, tau_range);
                    if let Some(rt) = self.residuals(trial) {
                        let ct: f64 = rt.iter().map(|v| v * v).sum();
                        if ct <= chi2 {
                            improved = Some((trial, rt, ct));
                            break;
                        }
                    }
                }
                lambda *= 10.0;
            }
            let Some((trial, rt, ct)) = improved else { break };
            let moved = ((trial[0] - p[0]) / p[0]).abs().max((trial[1] - p[1]).abs());
            let gain = chi2 - ct;
            p = trial;
            r = rt;
            chi2 = ct;
            lambda = (lambda * 0.1).max(1e-9);
            if moved < 1e-8 || gain < 1e-10 * (1.0 + chi2) {
                break;
            }
        }
        Some((p, chi2))
    }
}

/// Finds the lifetime and prompt fraction whose convolved template, scanned exactly like
/// the data, best reproduces the data's start-time scan.
///
/// The lifetime is the matching template's; the systematic error is the rms difference
/// between the two scan curves and the statistical error is the plateau fit's.
pub fn extract_lifetime(data: &TimeHistogram, irf: &TimeHistogram, config: &ExtractConfig) -> Result<Extraction> {
    if (data.bin_width_ps - irf.bin_width_ps).abs() > 1e-9 * data.bin_width_ps {
        return Err(Error::invalid(
            "irf",
            format!(
                "IRF bin width {} ps differs from data bin width {} ps",
                irf.bin_width_ps, data.bin_width_ps
            ),
        ));
    }
    if irf.n_bins() != data.n_bins() {
        return Err(Error::invalid(
            "irf",
            format!(
                "IRF spans {} bins but the data period is {} bins; fold both with the same period",
                irf.n_bins(),
                data.n_bins()
            ),
        ));
    }
    let values = data.values();
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::Extraction("data histogram is empty".into()));
    }
    let (norm_irf, fixed, background_error) = match config.background {
        BackgroundSource::Floated => (NormalizedIrf::from_histogram(irf)?, None, None),
        BackgroundSource::Fixed(b) => (NormalizedIrf::from_histogram(irf)?, Some(b), None),
        BackgroundSource::IrfFloor(region) => {
            let region = match region {
                Some(r) => r,
                None => default_irf_floor_region(irf)?,
            };
            let est = background_from_irf(irf, data, region)?;
            let floor = est.level * irf.exposure_s / data.exposure_s;
            (
                NormalizedIrf::from_histogram_minus_floor(irf, floor)?,
                Some(est.level),
                Some(est.error),
            )
        }
    };
    let scan_config = ScanConfig {
        background: fixed.map_or(Background::Floated, Background::Fixed),
        ..config.scan
    };
    let anchor = fit_anchor(&values);
    let bin_width_ns = data.bin_width_ns();
    let data_scan = scan_values(&values, bin_width_ns, anchor, &scan_config)?;
    let targets: Vec<(f64, f64, f64)> = data_scan
        .converged()
        .map(|p| (p.start_offset_ns, p.fit.tau, p.fit.tau_stat))
        .collect();
    if targets.len() < 3 {
        return Err(Error::Extraction(format!(
            "only {} of {} data scan fits converged",
            targets.len(),
            data_scan.points.len()
        )));
    }
    let plateau = data_scan
        .point_near(config.plateau_offset_ns)
        .map(|p| p.fit.clone())
        .ok_or_else(|| Error::Extraction("no converged plateau fit".into()))?;
    let background = fixed.unwrap_or(plateau.background_level.max(0.0));

    let matcher = Matcher {
        irf: norm_irf,
        config,
        scan: scan_config,
        period_ns: data.span_ns(),
        bin_width_ns,
        anchor,
        background,
        total,
        targets,
    };
    let tau0 = plateau.tau;
    let tau_range = (0.1 * tau0, 10.0 * tau0);
    let best = PROMPT_STARTS
        .iter()
        .filter_map(|&pf| matcher.solve(Vector2::new(tau0, pf), tau_range))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let Some((p, chi2)) = best else {
        return Err(Error::Extraction("no template could be evaluated".into()));
    };
    let ndf = matcher.targets.len().saturating_sub(2).max(1);
    let chi2_ndf = chi2 / ndf as f64;
    if !(chi2_ndf < config.max_chi2_ndf) {
        return Err(Error::Extraction(format!(
            "best template (tau = {:.4} ns, prompt fraction = {:.4}) leaves scan chi2/ndf = {chi2_ndf:.2}, limit {}",
            p[0], p[1], config.max_chi2_ndf
        )));
    }
    let (template, template_scan) = matcher
        .template_scan(p[0], p[1])
        .ok_or_else(|| Error::Extraction("best template could not be rebuilt".into()))?;
    let diffs: Vec<f64> = matcher
        .targets
        .iter()
        .filter_map(|&(offset, tau, _)| {
            template_scan
                .points
                .iter()
                .find(|q| (q.start_offset_ns - offset).abs() < 1e-9)
                .map(|q| tau - q.fit.tau)
        })
        .collect();
    let sys = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
    let result = LifetimeResult::new(config.trap_label.clone(), p[0], plateau.tau_stat, sys, config.rule);
    Ok(Extraction {
        result,
        prompt_fraction: p[1],
        chi2_ndf,
        data_scan,
        template_scan,
        template,
        plateau,
        background_level: background,
        background_error,
        anchor,
    })
}
