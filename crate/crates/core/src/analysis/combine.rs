use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How statistical and systematic errors merge into the final error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombineRule {
    #[default]
    Quadrature,
    /// `(stat + sys) / 2`, kept for comparison with the alternative reading of the error budget.
    ArithmeticMean,
}

impl CombineRule {
    pub fn apply(&self, stat: f64, sys: f64) -> f64 {
        match self {
            CombineRule::Quadrature => stat.hypot(sys),
            CombineRule::ArithmeticMean => 0.5 * (stat + sys),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CombineRule::Quadrature => "quadrature",
            CombineRule::ArithmeticMean => "arithmetic-mean",
        }
    }
}

impl fmt::Display for CombineRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CombineRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrature" => Ok(CombineRule::Quadrature),
            "arithmetic-mean" => Ok(CombineRule::ArithmeticMean),
            other => Err(Error::invalid("rule", format!("unknown combine rule `{other}`"))),
        }
    }
}

/// A lifetime with separated error components, in ns.
#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeResult {
    pub trap_label: String,
    pub tau: f64,
    pub stat_error: f64,
    pub sys_error: f64,
    pub final_error: f64,
    pub rule: CombineRule,
}

impl LifetimeResult {
    pub fn new(trap_label: impl Into<String>, tau: f64, stat_error: f64, sys_error: f64, rule: CombineRule) -> Self {
        Self {
            trap_label: trap_label.into(),
            tau,
            stat_error,
            sys_error,
            final_error: rule.apply(stat_error, sys_error),
            rule,
        }
    }
}

/// Inverse-variance weighted mean over the statistical errors.
///
/// With `common_sys` the systematic error is shared, so its weighted mean passes through
/// unreduced; otherwise systematics are treated as independent and propagated with the
/// same weights.
pub fn combine_measurements(results: &[LifetimeResult], common_sys: bool, rule: CombineRule) -> Result<LifetimeResult> {
    if results.is_empty() {
        return Err(Error::domain("combine_measurements needs at least one result"));
    }
    if let Some(bad) = results
        .iter()
        .find(|r| !(r.stat_error.is_finite() && r.stat_error > 0.0))
    {
        return Err(Error::domain(format!(
            "statistical error of `{}` must be finite and > 0, got {}",
            bad.trap_label, bad.stat_error
        )));
    }
    let weights: Vec<f64> = results.iter().map(|r| r.stat_error.powi(-2)).collect();
    let wsum: f64 = weights.iter().sum();
    let tau = results.iter().zip(&weights).map(|(r, w)| w * r.tau).sum::<f64>() / wsum;
    let stat = wsum.sqrt().recip();
    let sys = if common_sys {
        results.iter().zip(&weights).map(|(r, w)| w * r.sys_error).sum::<f64>() / wsum
    } else {
        results
            .iter()
            .zip(&weights)
            .map(|(r, w)| (w * r.sys_error).powi(2))
            .sum::<f64>()
            .sqrt()
            / wsum
    };
    let label = if results.len() == 1 {
        results[0].trap_label.clone()
    } else {
        "combined".to_string()
    };
    Ok(LifetimeResult::new(label, tau, stat, sys, rule))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(tau: f64, stat: f64, sys: f64) -> LifetimeResult {
        LifetimeResult::new("t", tau, stat, sys, CombineRule::Quadrature)
    }

    #[test]
    fn two_trap_average() {
        let c = combine_measurements(
            &[r(2.646, 0.002, 0.010), r(2.649, 0.003, 0.010)],
            true,
            CombineRule::Quadrature,
        )
        .unwrap();
        let w1 = 1.0 / 0.002f64.powi(2);
        let w2 = 1.0 / 0.003f64.powi(2);
        let mean = (w1 * 2.646 + w2 * 2.649) / (w1 + w2);
        assert!((c.tau - mean).abs() < 1e-15);
        assert!((c.stat_error - (w1 + w2).powf(-0.5)).abs() < 1e-15);
        assert_eq!(c.sys_error, 0.010);
        assert_eq!((c.tau * 1000.0).round() / 1000.0, 2.647);
        assert_eq!((c.final_error * 1000.0).round() / 1000.0, 0.010);
    }

    #[test]
    fn single_result_passes_through() {
        let c = combine_measurements(&[r(3.148, 0.005, 0.010)], true, CombineRule::Quadrature).unwrap();
        assert_eq!(c.tau, 3.148);
        assert_eq!((c.final_error * 1000.0).round() / 1000.0, 0.011);
    }

    #[test]
    fn identical_inputs_shrink_stat_by_root_two() {
        let c = combine_measurements(
            &[r(3.0, 0.004, 0.01), r(3.0, 0.004, 0.01)],
            true,
            CombineRule::Quadrature,
        )
        .unwrap();
        assert_eq!(c.tau, 3.0);
        assert!((c.stat_error - 0.004 / 2f64.sqrt()).abs() < 1e-15);
        let c = combine_measurements(
            &[r(3.0, 0.004, 0.01), r(3.0, 0.004, 0.01)],
            false,
            CombineRule::Quadrature,
        )
        .unwrap();
        assert!((c.sys_error - 0.01 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_stat_error_is_a_domain_error() {
        assert!(combine_measurements(&[r(3.0, 0.0, 0.01)], true, CombineRule::Quadrature).is_err());
        assert!(combine_measurements(&[], true, CombineRule::Quadrature).is_err());
    }

    #[test]
    fn rules_differ_on_table_inputs() {
        assert!((CombineRule::ArithmeticMean.apply(0.005, 0.010) - 0.0075).abs() < 1e-15);
        assert_eq!("quadrature".parse::<CombineRule>().unwrap(), CombineRule::Quadrature);
    }
}
