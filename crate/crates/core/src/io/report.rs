//! Reports: lifetime rows, goodness-of-fit values, scan/decay/residual tables and a
//! settings echo. All numbers are computed when the report is assembled; the renderers
//! only format them, at full precision.

use std::fmt::Write as _;

use crate::analysis::{ExtractConfig, Extraction, LifetimeResult, ScanConfig, StartTimeScan, TimeHistogram};

/// Maximum scan deviation, in combined standard errors, still reported as flat.
pub const FLAT_SCAN_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub title: String,
    pub settings: Vec<(String, String)>,
    pub lifetimes: Vec<LifetimeResult>,
    pub combined: Option<LifetimeResult>,
    /// Goodness-of-fit and other scalar outputs, `(name, value)`.
    pub values: Vec<(String, f64)>,
    pub notes: Vec<String>,
    pub tables: Vec<Table>,
}

fn scan_flat(scan: &StartTimeScan) -> Option<bool> {
    scan.max_deviation_sigma().map(|s| s < FLAT_SCAN_SIGMA)
}

fn echo_scan(out: &mut Vec<(String, String)>, prefix: &str, scan: &ScanConfig) {
    let d = ScanConfig::default();
    let tag = |same: bool| if same { " (default)" } else { "" };
    out.push((
        format!("{prefix}scan_step_ns"),
        format!("{}{}", scan.step_ns, tag(scan.step_ns == d.step_ns)),
    ));
    out.push((
        format!("{prefix}scan_max_offset_ns"),
        format!("{}{}", scan.max_offset_ns, tag(scan.max_offset_ns == d.max_offset_ns)),
    ));
    out.push((
        format!("{prefix}scan_end_offset_ns"),
        format!("{}{}", scan.end_offset_ns, tag(scan.end_offset_ns == d.end_offset_ns)),
    ));
    out.push((format!("{prefix}fit_model"), format!("{:?}", scan.model)));
    out.push((
        format!("{prefix}fit_weighting"),
        "poisson-likelihood (default)".to_string(),
    ));
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Self::default()
        }
    }

    pub fn setting(&mut self, key: impl Into<String>, value: impl ToString) {
        self.settings.push((key.into(), value.to_string()));
    }

    /// Echoes scan settings, marking values that are this crate's defaults.
    pub fn echo_scan_config(&mut self, scan: &ScanConfig) {
        echo_scan(&mut self.settings, "", scan);
    }

    pub fn echo_extract_config(&mut self, cfg: &ExtractConfig) {
        let d = ExtractConfig::default();
        echo_scan(&mut self.settings, "", &cfg.scan);
        let tag = |same: bool| if same { " (default)" } else { "" };
        self.setting(
            "background",
            format!("{:?}{}", cfg.background, tag(cfg.background == d.background)),
        );
        self.setting("kernel", format!("{:?}{}", cfg.kernel, tag(cfg.kernel == d.kernel)));
        self.setting(
            "plateau_offset_ns",
            format!(
                "{}{}",
                cfg.plateau_offset_ns,
                tag(cfg.plateau_offset_ns == d.plateau_offset_ns)
            ),
        );
        self.setting("max_chi2_ndf", cfg.max_chi2_ndf);
        self.setting("final_error_rule", cfg.rule.name());
    }

    /// Start-time scan of one histogram, without template matching.
    pub fn add_scan(&mut self, label: &str, scan: &StartTimeScan) {
        let mut t = Table::new(
            format!("{label}_scan"),
            &["start_offset_ns", "tau_ns", "tau_stat_ns", "gof", "converged"],
        );
        for p in &scan.points {
            t.rows.push(vec![
                p.start_offset_ns,
                p.fit.tau,
                p.fit.tau_stat,
                p.fit.gof,
                f64::from(u8::from(p.fit.converged)),
            ]);
        }
        self.tables.push(t);
        self.scan_summary(label, scan);
    }

    fn scan_summary(&mut self, label: &str, scan: &StartTimeScan) {
        if let Some(v) = scan.relative_variation() {
            self.values.push((format!("{label}.scan_relative_variation"), v));
        }
        if let Some(s) = scan.max_deviation_sigma() {
            self.values.push((format!("{label}.scan_max_deviation_sigma"), s));
        }
        self.notes.push(match scan_flat(scan) {
            Some(true) => format!("{label}: scan flat (max deviation < {FLAT_SCAN_SIGMA} sigma)"),
            Some(false) => format!("{label}: scan NOT flat (max deviation >= {FLAT_SCAN_SIGMA} sigma)"),
            None => format!("{label}: scan has too few converged points to judge flatness"),
        });
    }

    /// One trap's extraction: lifetime row, fit quality, and scan, decay and residual
    /// tables. `data` is the folded histogram the extraction ran on.
    pub fn add_extraction(&mut self, ex: &Extraction, data: &TimeHistogram) {
        let label = ex.result.trap_label.clone();
        self.lifetimes.push(ex.result.clone());
        self.values
            .push((format!("{label}.prompt_fraction"), ex.prompt_fraction));
        self.values.push((format!("{label}.scan_match_chi2_ndf"), ex.chi2_ndf));
        self.values.push((format!("{label}.plateau_gof"), ex.plateau.gof));
        self.values.push((format!("{label}.plateau_tau_ns"), ex.plateau.tau));
        self.values
            .push((format!("{label}.background_per_bin"), ex.background_level));
        if let Some(e) = ex.background_error {
            self.values.push((format!("{label}.background_error"), e));
        }

        let mut scan = Table::new(
            format!("{label}_scan"),
            &[
                "start_offset_ns",
                "data_tau_ns",
                "data_tau_stat_ns",
                "template_tau_ns",
                "converged",
            ],
        );
        for p in &ex.data_scan.points {
            let tmpl = ex
                .template_scan
                .points
                .iter()
                .find(|q| (q.start_offset_ns - p.start_offset_ns).abs() < 1e-9)
                .map_or(f64::NAN, |q| q.fit.tau);
            scan.rows.push(vec![
                p.start_offset_ns,
                p.fit.tau,
                p.fit.tau_stat,
                tmpl,
                f64::from(u8::from(p.fit.converged)),
            ]);
        }
        self.tables.push(scan);
        self.scan_summary(&label, &ex.data_scan);

        let bw = data.bin_width_ns();
        let origin = data.origin_ps * 1e-3;
        let mut decay = Table::new(format!("{label}_decay"), &["delay_ns", "data", "template"]);
        let mut resid = Table::new(
            format!("{label}_residuals"),
            &["delay_ns", "residual", "normalized_residual"],
        );
        for (k, (&c, &m)) in data.counts.iter().zip(&ex.template.values).enumerate() {
            let t = origin + k as f64 * bw;
            let d = c as f64;
            decay.rows.push(vec![t, d, m]);
            let norm = if m > 0.0 { (d - m) / m.sqrt() } else { f64::NAN };
            resid.rows.push(vec![t, d - m, norm]);
        }
        self.tables.push(decay);
        self.tables.push(resid);
    }

    /// Lifetime rows (per trap then combined) as a table.
    pub fn lifetime_table(&self) -> Vec<&LifetimeResult> {
        self.lifetimes.iter().chain(self.combined.as_ref()).collect()
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(s, "{}", "=".repeat(self.title.len().max(1)));
        if !self.settings.is_empty() {
            let _ = writeln!(s, "\nSettings");
            for (k, v) in &self.settings {
                let _ = writeln!(s, "  {k} = {v}");
            }
        }
        let rows = self.lifetime_table();
        if !rows.is_empty() {
            let _ = writeln!(s, "\nLifetime results (ns)");
            let _ = writeln!(
                s,
                "  {:<12} {:>22} {:>22} {:>22} {:>22}  rule",
                "trap", "tau", "stat", "sys", "final"
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "  {:<12} {:>22} {:>22} {:>22} {:>22}  {}",
                    r.trap_label,
                    r.tau,
                    r.stat_error,
                    r.sys_error,
                    r.final_error,
                    r.rule.name()
                );
            }
        }
        if !self.values.is_empty() {
            let _ = writeln!(s, "\nValues");
            for (k, v) in &self.values {
                let _ = writeln!(s, "  {k} = {v}");
            }
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "\nNotes");
            for n in &self.notes {
                let _ = writeln!(s, "  {n}");
            }
        }
        for t in &self.tables {
            let _ = writeln!(s, "\n[{}]", t.name);
            s.push_str(&t.to_csv());
        }
        s
    }

    /// Lifetime rows followed by the scalar values, as CSV.
    pub fn render_csv(&self) -> String {
        let mut s = String::from("trap,tau_ns,stat_error_ns,sys_error_ns,final_error_ns,rule\n");
        for r in self.lifetime_table() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.trap_label,
                r.tau,
                r.stat_error,
                r.sys_error,
                r.final_error,
                r.rule.name()
            );
        }
        if !self.values.is_empty() {
            s.push_str("\nname,value\n");
            for (k, v) in &self.values {
                let _ = writeln!(s, "{k},{v}");
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{combine_measurements, CombineRule};

    #[test]
    fn renderers_keep_full_precision() {
        let a = LifetimeResult::new("quadrupole", 2.646, 0.002, 0.010, CombineRule::Quadrature);
        let b = LifetimeResult::new("linear", 2.649, 0.003, 0.010, CombineRule::Quadrature);
        let c = combine_measurements(&[a.clone(), b.clone()], true, CombineRule::Quadrature).unwrap();
        let mut r = Report::new("P3/2");
        r.lifetimes = vec![a, b];
        r.combined = Some(c.clone());
        r.values.push(("x".into(), 1.0 / 3.0));
        let text = r.render_text();
        let csv = r.render_csv();
        for needle in [c.tau.to_string(), c.final_error.to_string(), (1.0f64 / 3.0).to_string()] {
            assert!(text.contains(&needle) && csv.contains(&needle), "{needle}");
        }
        let parsed: f64 = csv.lines().nth(3).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(parsed, c.tau);
    }

    #[test]
    fn table_csv_shape() {
        let mut t = Table::new("t", &["a", "b"]);
        t.rows.push(vec![0.1, 2.0]);
        assert_eq!(t.to_csv(), "a,b\n0.1,2\n");
    }
}
