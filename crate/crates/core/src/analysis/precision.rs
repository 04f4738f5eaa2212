use crate::error::{Error, Result};

/// Cramér–Rao bound on the relative lifetime error, `sigma_tau / tau`, for
/// `rate * duration` events drawn from an exponential truncated to `[0, window)`.
///
/// The per-event Fisher information is `Var(t) / tau^4`, so the bound reads
/// `tau / (sqrt(N) * sd(t))`.
pub fn predict_statistical_precision(count_rate_hz: f64, duration_s: f64, tau_ns: f64, window_ns: f64) -> Result<f64> {
    for (name, v) in [
        ("count_rate", count_rate_hz),
        ("duration", duration_s),
        ("tau", tau_ns),
        ("window", window_ns),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
        }
    }
    let n = count_rate_hz * duration_s;
    let w = window_ns;
    let e = (-w / tau_ns).exp();
    let mean = tau_ns - w * e / (1.0 - e);
    let second = (2.0 * tau_ns * tau_ns - e * (w * w + 2.0 * w * tau_ns + 2.0 * tau_ns * tau_ns)) / (1.0 - e);
    let var = second - mean * mean;
    Ok(tau_ns / (n.sqrt() * var.sqrt()))
}
