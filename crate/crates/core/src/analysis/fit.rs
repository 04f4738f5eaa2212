use nalgebra::{DMatrix, DVector};

use crate::analysis::histogram::{fit_anchor, TimeHistogram};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 500;
const PARAM_TOLERANCE: f64 = 1e-9;
const DECREMENT_TOLERANCE: f64 = 1e-12;
/// Likelihood-ratio below which a singular fit is read as "no decay present".
const NO_DECAY_LR: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `exp(-t/tau)`
    Bare,
    /// `exp(-(t mod T)/tau) / (1 - exp(-T/tau))`, T being the histogram span. Inside a
    /// single period this differs from `Bare` only in what the amplitude means.
    Wrapped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Background {
    Floated,
    Fixed(f64),
}

/// Fit range in ns, measured forward from the peak bin (circularly for folded data).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub start_offset_ns: f64,
    pub end_offset_ns: f64,
}

impl FitWindow {
    pub fn new(start_offset_ns: f64, end_offset_ns: f64) -> Result<Self> {
        if !(start_offset_ns.is_finite() && end_offset_ns.is_finite())
            || start_offset_ns < 0.0
            || start_offset_ns >= end_offset_ns
        {
            return Err(Error::invalid(
                "fit_window",
                format!("FitWindow requires 0 <= start < end, got [{start_offset_ns}, {end_offset_ns}]"),
            ));
        }
        Ok(Self {
            start_offset_ns,
            end_offset_ns,
        })
    }

    pub fn validate_for(&self, period_ns: f64) -> Result<()> {
        Self::new(self.start_offset_ns, self.end_offset_ns)?;
        if self.end_offset_ns > period_ns * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "fit_window",
                format!("end offset {} ns exceeds the {period_ns} ns period", self.end_offset_ns),
            ));
        }
        Ok(())
    }

    /// Bin offsets `[first, last)` relative to the peak.
    pub(crate) fn bin_range(&self, bin_width_ns: f64) -> (usize, usize) {
        let first = (self.start_offset_ns / bin_width_ns).round() as usize;
        let last = (self.end_offset_ns / bin_width_ns).round() as usize;
        (first, last)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub tau: f64,
    pub tau_stat: f64,
    pub amplitude: f64,
    pub background_level: f64,
    /// Always zero for a plain exponential fit; set by template extraction.
    pub prompt_fraction: f64,
    /// Over `param_names`, inverse observed information at the optimum.
    pub covariance: DMatrix<f64>,
    pub param_names: Vec<&'static str>,
    /// Poisson deviance per degree of freedom.
    pub gof: f64,
    pub deviance: f64,
    pub ndf: usize,
    pub n_bins_used: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Bin the window offsets are measured from.
    pub anchor: usize,
    pub window: FitWindow,
    pub diagnostic: Option<String>,
}

impl FitResult {
    fn failed(window: FitWindow, peak: usize, n_bins: usize, why: impl Into<String>) -> Self {
        Self {
            tau: f64::NAN,
            tau_stat: f64::NAN,
            amplitude: f64::NAN,
            background_level: f64::NAN,
            prompt_fraction: 0.0,
            covariance: DMatrix::zeros(0, 0),
            param_names: Vec::new(),
            gof: f64::NAN,
            deviance: f64::NAN,
            ndf: 0,
            n_bins_used: n_bins,
            converged: false,
            iterations: 0,
            anchor: peak,
            window,
            diagnostic: Some(why.into()),
        }
    }

    /// Model expectation at `t` ns after the peak.
    pub fn model_at(&self, model: DecayModel, period_ns: f64, t_ns: f64) -> f64 {
        let (g, _, _) = shape(model, period_ns, self.tau, t_ns);
        self.amplitude * g + self.background_level
    }
}

/// `g`, `dg/dtau`, `d2g/dtau2` for the chosen shape.
#[inline]
fn shape(model: DecayModel, period: f64, tau: f64, t: f64) -> (f64, f64, f64) {
    let (u, e) = match model {
        DecayModel::Bare => (t, 0.0),
        DecayModel::Wrapped => (t.rem_euclid(period), (-period / tau).exp()),
    };
    let tau2 = tau * tau;
    let tau3 = tau2 * tau;
    let wrap = if e > 0.0 { e / (1.0 - e) } else { 0.0 };
    let g = (-u / tau).exp() * (1.0 + wrap);
    // ln g = -u/tau - ln(1 - e)
    let d1 = u / tau2 + period * wrap / tau2;
    let d_wrap = if e > 0.0 {
        period / tau2 * e / (1.0 - e).powi(2)
    } else {
        0.0
    };
    let d2 = -2.0 * u / tau3 - 2.0 * period * wrap / tau3 + period / tau2 * d_wrap;
    (g, g * d1, g * (d1 * d1 + d2))
}

/// Poisson likelihood of binned counts under `A g(t; tau) + b`.
///
/// Parameters are `[A, tau]` with a fixed background, `[A, tau, b]` when floated.
#[derive(Debug, Clone)]
pub struct DecayLikelihood {
    times: Vec<f64>,
    counts: Vec<f64>,
    model: DecayModel,
    period: f64,
    background: Background,
}

impl DecayLikelihood {
    pub fn new(times: Vec<f64>, counts: Vec<f64>, model: DecayModel, period: f64, background: Background) -> Self {
        assert_eq!(times.len(), counts.len());
        Self {
            times,
            counts,
            model,
            period,
            background,
        }
    }

    pub fn n_params(&self) -> usize {
        match self.background {
            Background::Floated => 3,
            Background::Fixed(_) => 2,
        }
    }

    fn b(&self, p: &[f64]) -> f64 {
        match self.background {
            Background::Floated => p[2],
            Background::Fixed(b) => b,
        }
    }

    pub fn mean(&self, p: &[f64], t: f64) -> f64 {
        p[0] * shape(self.model, self.period, p[1], t).0 + self.b(p)
    }

    fn admissible(&self, p: &[f64]) -> bool {
        p.iter().all(|v| v.is_finite()) && p[1] > 0.0 && self.times.iter().all(|&t| self.mean(p, t) > 0.0)
    }

    /// Half the Poisson deviance, i.e. the negative log-likelihood up to a constant.
    pub fn nll(&self, p: &[f64]) -> f64 {
        self.times
            .iter()
            .zip(&self.counts)
            .map(|(&t, &n)| {
                let mu = self.mean(p, t);
                if n > 0.0 {
                    mu - n + n * (n / mu).ln()
                } else {
                    mu
                }
            })
            .sum()
    }

    /// Gradient of the log-likelihood.
    pub fn score(&self, p: &[f64]) -> Vec<f64> {
        self.gradient_nll(p).iter().map(|g| -g).collect()
    }

    fn gradient_nll(&self, p: &[f64]) -> DVector<f64> {
        let k = self.n_params();
        let mut g = DVector::zeros(k);
        for (&t, &n) in self.times.iter().zip(&self.counts) {
            let (s, s_tau, _) = shape(self.model, self.period, p[1], t);
            let mu = p[0] * s + self.b(p);
            let w = 1.0 - n / mu;
            g[0] += w * s;
            g[1] += w * p[0] * s_tau;
            if k == 3 {
                g[2] += w;
            }
        }
        g
    }

    /// Observed information (Hessian of the negative log-likelihood).
    pub fn hessian_nll(&self, p: &[f64]) -> DMatrix<f64> {
        let k = self.n_params();
        let mut h = DMatrix::zeros(k, k);
        for (&t, &n) in self.times.iter().zip(&self.counts) {
            let (s, s_tau, s_tau2) = shape(self.model, self.period, p[1], t);
            let mu = p[0] * s + self.b(p);
            let d = [s, p[0] * s_tau, 1.0];
            let c = n / (mu * mu);
            let w = 1.0 - n / mu;
            for i in 0..k {
                for j in 0..k {
                    h[(i, j)] += c * d[i] * d[j];
                }
            }
            h[(0, 1)] += w * s_tau;
            h[(1, 0)] += w * s_tau;
            h[(1, 1)] += w * p[0] * s_tau2;
        }
        h
    }

    /// Expected (Fisher) information.
    fn fisher(&self, p: &[f64]) -> DMatrix<f64> {
        let k = self.n_params();
        let mut f = DMatrix::zeros(k, k);
        for &t in &self.times {
            let (s, s_tau, _) = shape(self.model, self.period, p[1], t);
            let mu = p[0] * s + self.b(p);
            let d = [s, p[0] * s_tau, 1.0];
            for i in 0..k {
                for j in 0..k {
                    f[(i, j)] += d[i] * d[j] / mu;
                }
            }
        }
        f
    }
}

struct Minimum {
    params: Vec<f64>,
    nll: f64,
    iterations: usize,
    converged: bool,
}

fn damped_solve(m: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut a = m.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda * m[(i, i)].abs().max(1e-12);
    }
    a.cholesky().map(|c| c.solve(&(-g)))
}

/// Levenberg-damped Newton on the observed information, falling back to Fisher scoring
/// where the Hessian is not positive definite.
fn minimize(lik: &DecayLikelihood, start: Vec<f64>) -> Minimum {
    let mut p = start;
    let mut f = lik.nll(&p);
    let mut lambda = 1e-3;
    for iter in 1..=MAX_ITERATIONS {
        let g = lik.gradient_nll(&p);
        let h = lik.hessian_nll(&p);
        let curvature = if h.clone().cholesky().is_some() {
            h
        } else {
            lik.fisher(&p)
        };
        if let Some(newton) = damped_solve(&curvature, &g, 0.0) {
            if -g.dot(&newton) < DECREMENT_TOLERANCE * (1.0 + f.abs()) {
                return Minimum {
                    params: p,
                    nll: f,
                    iterations: iter,
                    converged: true,
                };
            }
        }
        let mut accepted = None;
        for _ in 0..40 {
            if let Some(step) = damped_solve(&curvature, &g, lambda) {
                let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                if lik.admissible(&trial) {
                    let ft = lik.nll(&trial);
                    if ft <= f {
                        accepted = Some((trial, ft, step));
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        let Some((trial, ft, step)) = accepted else {
            return Minimum {
                params: p,
                nll: f,
                iterations: iter,
                converged: false,
            };
        };
        let rel = step
            .iter()
            .zip(&p)
            .map(|(d, v)| d.abs() / v.abs().max(1e-8))
            .fold(0.0, f64::max);
        p = trial;
        f = ft;
        lambda = (lambda * 0.1).max(1e-12);
        if rel < PARAM_TOLERANCE {
            return Minimum {
                params: p,
                nll: f,
                iterations: iter,
                converged: true,
            };
        }
    }
    Minimum {
        params: p,
        nll: f,
        iterations: MAX_ITERATIONS,
        converged: false,
    }
}

fn symmetric_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = m.clone().cholesky()?.inverse();
    let ok = inv.iter().all(|v| v.is_finite()) && (0..inv.nrows()).all(|i| inv[(i, i)] > 0.0);
    ok.then(|| (&inv + inv.transpose()) * 0.5)
}

/// Fits the histogram's decay over `window`, measured from its peak bin.
///
/// Failures of the fit itself come back as `converged = false` with a diagnostic; only
/// an invalid window is an error.
pub fn fit_decay(
    hist: &TimeHistogram,
    window: FitWindow,
    model: DecayModel,
    background: Background,
) -> Result<FitResult> {
    let values = hist.values();
    let peak = fit_anchor(&values);
    fit_decay_values(&values, hist.bin_width_ns(), peak, window, model, background)
}

/// Like [`fit_decay`] on real-valued (possibly non-integer) bin contents with an
/// explicit anchor bin. Used for noiseless templates, which must be fitted with the
/// same anchor as the data they are compared to.
pub fn fit_decay_values(
    values: &[f64],
    bin_width_ns: f64,
    anchor: usize,
    window: FitWindow,
    model: DecayModel,
    background: Background,
) -> Result<FitResult> {
    let n = values.len();
    let period = n as f64 * bin_width_ns;
    window.validate_for(period)?;
    let (first, last) = window.bin_range(bin_width_ns);
    let last = last.min(n);
    if first >= last {
        return Ok(FitResult::failed(window, anchor, 0, "empty fit window"));
    }
    let times: Vec<f64> = (first..last).map(|k| k as f64 * bin_width_ns).collect();
    let counts: Vec<f64> = (first..last).map(|k| values[(anchor + k) % n]).collect();
    let used = counts.len();
    let occupied = counts.iter().filter(|&&c| c > 0.0).count();
    if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Ok(FitResult::failed(
            window,
            anchor,
            used,
            "counts must be finite and >= 0",
        ));
    }
    if occupied < 3 {
        return Ok(FitResult::failed(
            window,
            anchor,
            used,
            format!("need at least 3 occupied bins, found {occupied}"),
        ));
    }
    let lik = DecayLikelihood::new(times.clone(), counts.clone(), model, period, background);
    let n_free = lik.n_params();
    if used <= n_free {
        return Ok(FitResult::failed(
            window,
            anchor,
            used,
            "fewer bins than free parameters",
        ));
    }

    let total: f64 = counts.iter().sum();
    let t0 = times[0];
    let mean_residual = counts.iter().zip(&times).map(|(c, t)| c * (t - t0)).sum::<f64>() / total;
    let tau0 = mean_residual.max(bin_width_ns);
    let b0 = match background {
        Background::Floated => 0.5 * counts.iter().copied().fold(f64::INFINITY, f64::min),
        Background::Fixed(b) => b,
    };

    let mut best: Option<Minimum> = None;
    for tau in [0.5 * tau0, tau0, 2.0 * tau0] {
        let sum_g: f64 = times.iter().map(|&t| shape(model, period, tau, t).0).sum();
        let amp = ((total - b0 * used as f64) / sum_g).max(1e-3 * total / sum_g);
        let mut start = vec![amp, tau];
        if n_free == 3 {
            start.push(b0);
        }
        if !lik.admissible(&start) {
            continue;
        }
        let m = minimize(&lik, start);
        let better = match &best {
            None => true,
            Some(b) => (m.converged && !b.converged) || (m.converged == b.converged && m.nll < b.nll),
        };
        if better {
            best = Some(m);
        }
    }
    let Some(m) = best else {
        return Ok(FitResult::failed(window, anchor, used, "no admissible starting point"));
    };

    let p = &m.params;
    let deviance = 2.0 * m.nll;
    let ndf = used - n_free;
    let names: Vec<&'static str> = ["amplitude", "tau", "background"][..n_free].to_vec();
    let mut result = FitResult {
        tau: p[1],
        tau_stat: f64::NAN,
        amplitude: p[0],
        background_level: lik.b(p),
        prompt_fraction: 0.0,
        covariance: DMatrix::zeros(0, 0),
        param_names: names,
        gof: deviance.max(0.0) / ndf as f64,
        deviance,
        ndf,
        n_bins_used: used,
        converged: m.converged,
        iterations: m.iterations,
        anchor,
        window,
        diagnostic: (!m.converged).then(|| "optimizer stalled".to_string()),
    };

    let h = lik.hessian_nll(p);
    if let Some(cov) = symmetric_inverse(&h) {
        result.tau_stat = cov[(1, 1)].sqrt();
        result.covariance = cov;
    } else {
        // Lifetime not identifiable. If the data are compatible with no decay at all,
        // report the constant-only solution and the covariance of what remains.
        let b_const = match background {
            Background::Floated => total / used as f64,
            Background::Fixed(b) => b,
        };
        let tau_rep = if p[1].is_finite() && p[1] > 0.0 && p[1] < 1e3 * period {
            p[1]
        } else {
            tau0
        };
        let mut flat = vec![0.0, tau_rep];
        if n_free == 3 {
            flat.push(b_const);
        }
        let keep: Vec<usize> = (0..n_free).filter(|&i| i != 1).collect();
        let hf = lik.hessian_nll(&flat);
        let reduced = DMatrix::from_fn(keep.len(), keep.len(), |i, j| hf[(keep[i], keep[j])]);
        let lr = 2.0 * (lik.nll(&flat) - m.nll);
        match symmetric_inverse(&reduced) {
            Some(cov) if b_const > 0.0 && lr < NO_DECAY_LR => {
                result.tau = tau_rep;
                result.amplitude = 0.0;
                result.background_level = b_const;
                result.tau_stat = f64::INFINITY;
                result.covariance = cov;
                result.converged = true;
                result.param_names = keep.iter().map(|&i| ["amplitude", "tau", "background"][i]).collect();
                result.diagnostic = Some("lifetime not constrained: amplitude compatible with zero".into());
            }
            _ => {
                result.converged = false;
                result.diagnostic = Some("information matrix is singular".into());
            }
        }
    }
    if result.converged && !(result.tau > 0.0) {
        result.converged = false;
        result.diagnostic = Some("non-positive lifetime".into());
    }
    Ok(result)
}
