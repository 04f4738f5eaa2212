//! Command-line workflows over the `lifetime-twin` library: simulate, measure the IRF,
//! fit, scan, run pull studies, combine trap results and re-render reports.
//!
//! Exit codes: 0 success, 2 validation error, 3 fit/extraction failure, 4 I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lifetime_twin::analysis::{
    combine_measurements, extract_lifetime, scan_start_time, Background, BackgroundSource, CombineRule,
    ConvolutionKernel, DecayModel, ExtractConfig, LifetimeResult, ScanConfig,
};
use lifetime_twin::io::{read_histogram, resolve_config, write_events, write_histogram, Report, RunManifest, Table};
use lifetime_twin::sim::{folded_histogram, run_experiment, simulate_irf_measurement, ExperimentConfig};
use lifetime_twin::study::{run_pull_study, PullStudyConfig};
use lifetime_twin::{Error, Execution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_FIT: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Rate the presets are tuned to.
const PRESET_RATE_HZ: f64 = 3000.0;

#[derive(Debug, Parser)]
#[command(name = "lifetime-twin", version, about = "Trapped-ion TCSPC lifetime twin")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (1 = sequential). Defaults to all cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a run: event file, folded histogram, IRF measurement and manifest.
    Simulate {
        /// Config file, manifest, or preset name.
        config: String,
        /// Overrides the run duration.
        #[arg(long)]
        duration_s: Option<f64>,
        /// Omit the simulator-truth `kind` column.
        #[arg(long)]
        blind: bool,
    },
    /// Simulate only the prompt-scatter run that records the instrument response.
    MeasureIrf { config: String },
    /// Extract lifetimes from folded data and IRF histograms, one pair per trap.
    Fit {
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        #[arg(long = "irf", required = true)]
        irf: Vec<PathBuf>,
        /// Trap labels, in the order of the data files.
        #[arg(long = "label")]
        label: Vec<String>,
        #[command(flatten)]
        scan: ScanArgs,
        #[command(flatten)]
        extract: ExtractArgs,
    },
    /// Start-time scan of one folded histogram.
    Scan {
        data: PathBuf,
        #[command(flatten)]
        scan: ScanArgs,
        #[arg(long, value_enum, default_value_t = ModelArg::Wrapped)]
        model: ModelArg,
        /// `floated` or `fixed:<counts per bin>`.
        #[arg(long, default_value = "floated")]
        background: String,
    },
    /// Repeated simulate-and-fit with derived seeds; writes the pull table.
    Pullstudy {
        config: String,
        #[arg(long)]
        repeats: usize,
    },
    /// Weighted average of trap results read from results CSV files.
    Combine {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = RuleArg::Quadrature)]
        rule: RuleArg,
        /// Treat systematic errors as independent rather than common.
        #[arg(long)]
        independent_sys: bool,
    },
    /// Re-render a results CSV as a report.
    Report { results: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Wrapped,
    Bare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Quadrature,
    ArithmeticMean,
}

impl From<RuleArg> for CombineRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Quadrature => CombineRule::Quadrature,
            RuleArg::ArithmeticMean => CombineRule::ArithmeticMean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    BinAveraged,
    PointSampled,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub step_ns: Option<f64>,
    #[arg(long)]
    pub max_offset_ns: Option<f64>,
    #[arg(long)]
    pub end_offset_ns: Option<f64>,
}

impl ScanArgs {
    fn apply(&self, mut c: ScanConfig) -> ScanConfig {
        c.step_ns = self.step_ns.unwrap_or(c.step_ns);
        c.max_offset_ns = self.max_offset_ns.unwrap_or(c.max_offset_ns);
        c.end_offset_ns = self.end_offset_ns.unwrap_or(c.end_offset_ns);
        c
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// `irf-floor`, `floated`, or `fixed:<counts per bin>`.
    #[arg(long, default_value = "irf-floor")]
    pub background: String,
    #[arg(long, value_enum, default_value_t = KernelArg::BinAveraged)]
    pub kernel: KernelArg,
    #[arg(long)]
    pub plateau_offset_ns: Option<f64>,
    #[arg(long, value_enum, default_value_t = RuleArg::Quadrature)]
    pub rule: RuleArg,
}

/// A failure mapped to an exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) => EXIT_IO,
            Error::Extraction(_) => EXIT_FIT,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

type CmdResult = Result<String, Failure>;

/// Parses arguments, runs the command and returns the process exit code. Normal output
/// goes to stdout, diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(cli: &Cli) -> CmdResult {
    let c = &cli.common;
    std::fs::create_dir_all(&c.out_dir).map_err(|e| io_failure(&c.out_dir, e))?;
    let exec = Execution::from_workers(c.workers);
    match &cli.command {
        Command::Simulate {
            config,
            duration_s,
            blind,
        } => simulate(c, exec, config, *duration_s, *blind),
        Command::MeasureIrf { config } => measure_irf(c, exec, config),
        Command::Fit {
            data,
            irf,
            label,
            scan,
            extract,
        } => fit(c, data, irf, label, scan, extract),
        Command::Scan {
            data,
            scan,
            model,
            background,
        } => scan_cmd(c, data, scan, *model, background),
        Command::Pullstudy { config, repeats } => pullstudy(c, exec, config, *repeats),
        Command::Combine {
            results,
            rule,
            independent_sys,
        } => combine(c, results, (*rule).into(), !independent_sys),
        Command::Report { results } => report(c, results),
    }
}

fn load(common: &Common, spec: &str) -> Result<ExperimentConfig, Failure> {
    let mut config = resolve_config(spec)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn render(common: &Common, report: &Report) -> String {
    match common.format {
        Format::Text => report.render_text(),
        Format::Csv => report.render_csv(),
    }
}

fn report_name(common: &Common) -> &'static str {
    match common.format {
        Format::Text => "report.txt",
        Format::Csv => "report.csv",
    }
}

fn simulate(common: &Common, exec: Execution, spec: &str, duration_s: Option<f64>, blind: bool) -> CmdResult {
    let mut config = load(common, spec)?;
    if let Some(d) = duration_s {
        config.duration_s = d;
        config.validate()?;
    }
    let events = run_experiment(&config, exec)?;
    let hist = folded_histogram(&config, &events)?;
    let irf = simulate_irf_measurement(&config, exec)?;
    let dir = &common.out_dir;
    write_events(&dir.join("events.csv"), &events, !blind)?;
    write_histogram(&dir.join("histogram.txt"), &hist)?;
    write_histogram(&dir.join("irf.txt"), &irf)?;
    RunManifest::new(config.clone())
        .with_output("events", "events.csv")
        .with_output("histogram", "histogram.txt")
        .with_output("irf", "irf.txt")
        .write(&dir.join("manifest.cfg"))?;

    let rate = events.len() as f64 / config.duration_s;
    let expected = config.expected_rate_hz()?;
    if events.is_empty() {
        eprintln!("warning: no events were detected; output files are empty");
    }
    let mut report = Report::new("Simulation summary");
    report.setting("config", spec);
    report.setting("seed", config.seed);
    report.setting("duration_s", config.duration_s);
    report.values.push(("events".into(), events.len() as f64));
    report.values.push(("irf_events".into(), irf.total() as f64));
    report.values.push(("rate_hz".into(), rate));
    report.values.push(("expected_rate_hz".into(), expected));
    report
        .values
        .push(("rate_over_preset_3000_hz".into(), rate / PRESET_RATE_HZ));
    report.notes.push(format!(
        "observed {rate:.1} counts/s against {expected:.1} expected (presets aim for about {PRESET_RATE_HZ} counts/s)"
    ));
    Ok(render(common, &report))
}

fn measure_irf(common: &Common, exec: Execution, spec: &str) -> CmdResult {
    let config = load(common, spec)?;
    let irf = simulate_irf_measurement(&config, exec)?;
    write_histogram(&common.out_dir.join("irf.txt"), &irf)?;
    RunManifest::new(config.clone())
        .with_output("irf", "irf.txt")
        .write(&common.out_dir.join("manifest.cfg"))?;
    let mut report = Report::new("IRF measurement");
    report.setting("config", spec);
    report.values.push(("irf_events".into(), irf.total() as f64));
    report.values.push(("irf_exposure_s".into(), irf.exposure_s));
    Ok(render(common, &report))
}

fn parse_background(s: &str, allow_irf: bool) -> Result<BackgroundSource, Failure> {
    match s {
        "floated" => Ok(BackgroundSource::Floated),
        "irf-floor" if allow_irf => Ok(BackgroundSource::IrfFloor(None)),
        _ => match s.strip_prefix("fixed:").map(str::parse::<f64>) {
            Some(Ok(b)) if b.is_finite() && b >= 0.0 => Ok(BackgroundSource::Fixed(b)),
            _ => Err(invalid(format!(
                "invalid --background `{s}`; expected {}floated or fixed:<counts per bin>",
                if allow_irf { "irf-floor, " } else { "" }
            ))),
        },
    }
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_tables(dir: &Path, tables: &[Table]) -> Result<(), Failure> {
    for t in tables {
        write_text(&dir.join(format!("{}.csv", file_stem(&t.name))), &t.to_csv())?;
    }
    Ok(())
}

fn fit(
    common: &Common,
    data: &[PathBuf],
    irf: &[PathBuf],
    labels: &[String],
    scan: &ScanArgs,
    args: &ExtractArgs,
) -> CmdResult {
    if data.len() != irf.len() {
        return Err(invalid(format!(
            "{} --data files but {} --irf files",
            data.len(),
            irf.len()
        )));
    }
    if !labels.is_empty() && labels.len() != data.len() {
        return Err(invalid(format!(
            "{} --label values for {} data files",
            labels.len(),
            data.len()
        )));
    }
    let defaults = ExtractConfig::default();
    let base = ExtractConfig {
        scan: scan.apply(defaults.scan),
        background: parse_background(&args.background, true)?,
        kernel: match args.kernel {
            KernelArg::BinAveraged => ConvolutionKernel::BinAveraged,
            KernelArg::PointSampled => ConvolutionKernel::PointSampled,
        },
        plateau_offset_ns: args.plateau_offset_ns.unwrap_or(defaults.plateau_offset_ns),
        rule: args.rule.into(),
        ..defaults
    };
    let mut report = Report::new("Lifetime measurement results");
    report.echo_extract_config(&base);
    let dir = &common.out_dir;
    for (i, (d, r)) in data.iter().zip(irf).enumerate() {
        let label = labels.get(i).cloned().unwrap_or_else(|| format!("trap{}", i + 1));
        report.setting(format!("{label}.data"), d.display());
        report.setting(format!("{label}.irf"), r.display());
        let hist = read_histogram(d)?;
        let irf_hist = read_histogram(r)?;
        let config = ExtractConfig {
            trap_label: label.clone(),
            ..base.clone()
        };
        match extract_lifetime(&hist, &irf_hist, &config) {
            Ok(ex) => report.add_extraction(&ex, &hist),
            Err(e) => {
                let failure = Failure::from(e);
                let mut diag = Report::new(format!("Extraction failed for {label}"));
                diag.notes.push(failure.message.clone());
                if let Ok(s) = scan_start_time(&hist, &config.scan) {
                    diag.add_scan(&label, &s);
                }
                write_text(&dir.join("fit_diagnostics.txt"), &diag.render_text())?;
                write_tables(dir, &diag.tables)?;
                return Err(failure);
            }
        }
    }
    if report.lifetimes.len() > 1 {
        report.combined = Some(combine_measurements(&report.lifetimes, true, base.rule)?);
    }
    write_tables(dir, &report.tables)?;
    write_text(&dir.join("results.csv"), &report.render_csv())?;
    let text = render(common, &report);
    write_text(&dir.join(report_name(common)), &text)?;
    Ok(text)
}

fn scan_cmd(common: &Common, data: &Path, args: &ScanArgs, model: ModelArg, background: &str) -> CmdResult {
    let hist = read_histogram(data)?;
    let bg = match parse_background(background, false)? {
        BackgroundSource::Fixed(b) => Background::Fixed(b),
        _ => Background::Floated,
    };
    let config = ScanConfig {
        model: match model {
            ModelArg::Wrapped => DecayModel::Wrapped,
            ModelArg::Bare => DecayModel::Bare,
        },
        background: bg,
        ..args.apply(ScanConfig::default())
    };
    let scan = scan_start_time(&hist, &config)?;
    let mut report = Report::new("Start-time scan");
    report.setting("data", data.display());
    report.echo_scan_config(&config);
    report.setting("background", format!("{:?}", config.background));
    report.add_scan("data", &scan);
    write_tables(&common.out_dir, &report.tables)?;
    let text = render(common, &report);
    write_text(&common.out_dir.join(report_name(common)), &text)?;
    Ok(text)
}

fn pullstudy(common: &Common, exec: Execution, spec: &str, repeats: usize) -> CmdResult {
    let config = load(common, spec)?;
    let cfg = PullStudyConfig::matched_to(&config, repeats)?;
    let study = run_pull_study(&config, &cfg, exec)?;
    let mut pulls = Table::new(
        "pulls",
        &[
            "index",
            "seed",
            "n_events",
            "tau_ns",
            "tau_stat_ns",
            "pull",
            "converged",
        ],
    );
    let mut seeds = String::from("index,seed\n");
    for r in &study.records {
        pulls.rows.push(vec![
            r.index as f64,
            r.seed as f64,
            r.n_events as f64,
            r.tau,
            r.tau_stat,
            r.pull,
            f64::from(u8::from(r.converged)),
        ]);
        let _ = writeln!(seeds, "{},{}", r.index, r.seed);
    }
    let s = &study.summary;
    let mut report = Report::new("Pull study");
    report.setting("config", spec);
    report.setting("repeats", repeats);
    report.setting("master_seed", config.seed);
    report.setting(
        "fit_window_ns",
        format!("[{}, {}]", cfg.window.start_offset_ns, cfg.window.end_offset_ns),
    );
    report.setting("fit_model", format!("{:?}", cfg.model));
    report.setting("background", format!("{:?}", cfg.background));
    report.values.extend([
        ("truth_ns".to_string(), study.truth_ns),
        ("n_converged".to_string(), s.n_converged as f64),
        ("mean_pull".to_string(), s.mean_pull),
        ("pull_width".to_string(), s.pull_width),
        ("mean_tau_ns".to_string(), s.mean_tau),
        ("relative_spread".to_string(), s.relative_spread),
        ("mean_tau_stat_ns".to_string(), s.mean_tau_stat),
    ]);
    write_text(&common.out_dir.join("pulls.csv"), &pulls.to_csv())?;
    // Seeds exceed f64 precision, so they also go out as exact integers.
    write_text(&common.out_dir.join("pull_seeds.csv"), &seeds)?;
    let text = render(common, &report);
    write_text(&common.out_dir.join(report_name(common)), &text)?;
    Ok(text)
}

/// Lifetime rows of a results CSV, skipping any combined row.
pub fn read_results(path: &Path) -> Result<Vec<LifetimeResult>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            break;
        }
        let bad = |msg: &str| invalid(format!("{}: line {}: {msg}", path.display(), i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(
                "expected trap,tau_ns,stat_error_ns,sys_error_ns,final_error_ns,rule",
            ));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("not a number: `{s}`")));
        let rule: CombineRule = f[5].parse().map_err(|_| bad(&format!("unknown rule `{}`", f[5])))?;
        if f[0] == "combined" {
            continue;
        }
        let mut r = LifetimeResult::new(f[0], num(f[1])?, num(f[2])?, num(f[3])?, rule);
        r.final_error = num(f[4])?;
        out.push(r);
    }
    if out.is_empty() {
        return Err(invalid(format!("{}: no trap rows", path.display())));
    }
    Ok(out)
}

fn combine(common: &Common, files: &[PathBuf], rule: CombineRule, common_sys: bool) -> CmdResult {
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_results(f)?);
    }
    let mut report = Report::new("Combined lifetime");
    report.setting("rule", rule.name());
    report.setting("common_systematic", common_sys);
    report.combined = Some(combine_measurements(&rows, common_sys, rule)?);
    report.lifetimes = rows;
    let text = render(common, &report);
    write_text(&common.out_dir.join(report_name(common)), &text)?;
    Ok(text)
}

fn report(common: &Common, results: &Path) -> CmdResult {
    let text = std::fs::read_to_string(results).map_err(|e| io_failure(results, e))?;
    let mut report = Report::new("Lifetime measurement results");
    report.setting("source", results.display());
    report.lifetimes = read_results(results)?;
    if text.lines().any(|l| l.starts_with("combined,")) {
        let all: Vec<&str> = text.lines().filter(|l| l.starts_with("combined,")).collect();
        let f: Vec<&str> = all[0].split(',').collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| invalid(format!("not a number: `{s}`")));
        let rule: CombineRule = f[5].parse().map_err(|_| invalid("unknown rule"))?;
        let mut c = LifetimeResult::new("combined", num(f[1])?, num(f[2])?, num(f[3])?, rule);
        c.final_error = num(f[4])?;
        report.combined = Some(c);
    }
    let mut in_values = false;
    for line in text.lines() {
        if line == "name,value" {
            in_values = true;
            continue;
        }
        if in_values {
            if let Some((k, v)) = line.split_once(',') {
                let v = v.parse::<f64>().map_err(|_| invalid(format!("not a number: `{v}`")))?;
                report.values.push((k.to_string(), v));
            }
        }
    }
    Ok(render(common, &report))
}
