//! Command-line front end. Every command writes CSV (or a trace file) and
//! is deterministic given its flags and seed.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 invalid arguments,
//! 3 malformed input, 4 failed adequacy test under `analyze --require-pass`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::distributions::{
    convolve_dark_counts, dark_shifted_moments, subsystem_table, theoretical_g2,
    theoretical_mean, Moments, Pmf, SubtractionConfig,
};
use crate::error::{invalid, Error, Result};
use crate::pipeline::{
    bin_timestamps, chi2_test, condition_on, estimate_moments, fit_mu0, group_records,
    thin_bins, BinnedTrace, TimeTags, EVENTS_HEADER, MIN_GOF_SAMPLES,
};
use crate::simulator::{
    run_conditional, synth_experiment_trace, SimConfig, TraceConfig, DEFAULT_MIN_ACCEPTANCE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INVALID_ARGS: i32 = 2;
pub const EXIT_INPUT_FORMAT: i32 = 3;
pub const EXIT_STATISTICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "subthermal",
    version,
    about = "Photon statistics of multimode thermal light after conditional photon subtraction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the subsystem photon-number law, with and without dark counts.
    Pmf(PmfArgs),
    /// Mean and g2 of the subsystem law, with and without dark counts.
    Moments(MomentsArgs),
    /// Write theory curves for one figure family, one CSV per curve.
    Figures(FiguresArgs),
    /// Run the post-selected beam-splitter Monte Carlo.
    Simulate(SimulateArgs),
    /// Generate a synthetic binned detector record.
    Synth(SynthArgs),
    /// Thin, group and condition a record, then test each K-class.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Total number of modes.
    #[arg(long = "M")]
    pub total_modes: u32,
    /// Observed subsystem modes.
    #[arg(long = "m")]
    pub observed_modes: u32,
    /// Photons subtracted from the whole system.
    #[arg(long = "K", default_value_t = 0)]
    pub subtracted: u32,
    /// Mean photon number per mode.
    #[arg(long)]
    pub mu0: f64,
    /// Dark-count mean per observed mode.
    #[arg(long = "muD", default_value_t = 0.0)]
    pub mu_d: f64,
}

impl ModelArgs {
    fn config(&self) -> Result<SubtractionConfig> {
        SubtractionConfig::new(self.total_modes, self.observed_modes, self.subtracted, self.mu0)
    }
}

#[derive(Debug, Args)]
pub struct PmfArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1e-12)]
    pub tail_tol: f64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureId {
    /// P(N) for m = M = 1..5
    #[value(name = "4a")]
    Fig4a,
    /// P(N) for m = 1, M = 1..5
    #[value(name = "4b")]
    Fig4b,
    /// P(N) for M = 5, m = 1..5
    #[value(name = "4c")]
    Fig4c,
    /// mean photon number against m
    #[value(name = "5a")]
    Fig5a,
    /// g2 against m
    #[value(name = "5b")]
    Fig5b,
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    #[arg(long = "fig", value_enum)]
    pub fig: FigureId,
    #[arg(long)]
    pub mu0: f64,
    /// Dark-count mean per observed mode.
    #[arg(long = "muD", default_value_t = 0.0)]
    pub mu_d: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub tail_tol: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long = "M")]
    pub total_modes: u32,
    #[arg(long = "m")]
    pub observed_modes: u32,
    #[arg(long = "K", default_value_t = 0)]
    pub subtracted: u32,
    /// Mean photon number per mode before the beam splitter.
    #[arg(long)]
    pub mu_in: f64,
    /// Beam-splitter reflectivity toward the subtraction detector.
    #[arg(long = "r")]
    pub reflectivity: f64,
    /// Accepted trials to collect.
    #[arg(long)]
    pub trials: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MIN_ACCEPTANCE)]
    pub min_acceptance: f64,
    /// Per-trial samples; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Acceptance summary; stderr when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Per-mode mean of the subsystem law the record realizes.
    #[arg(long)]
    pub mu0: f64,
    /// Dark-count mean per bin.
    #[arg(long = "muD", default_value_t = 0.0)]
    pub mu_d: f64,
    #[arg(long, default_value_t = 10_000)]
    pub tau_ns: u64,
    #[arg(long, default_value_t = 48)]
    pub thin_period: usize,
    #[arg(long)]
    pub n_bins: usize,
    /// Probability that a photon goes to the subtraction detector.
    #[arg(long)]
    pub p_subtract: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Binned trace or raw event file.
    #[arg(long)]
    pub trace: PathBuf,
    /// Bin width for raw event files.
    #[arg(long)]
    pub tau_ns: Option<u64>,
    #[arg(long = "M")]
    pub total_modes: u32,
    #[arg(long = "m")]
    pub observed_modes: u32,
    /// Subtraction totals to condition on.
    #[arg(long = "K", value_delimiter = ',', default_values_t = [0, 1, 2, 3, 4, 5])]
    pub k_list: Vec<u32>,
    /// Dark-count mean per observed mode.
    #[arg(long = "muD", default_value_t = 0.0)]
    pub mu_d: f64,
    /// Keep every n-th bin before grouping.
    #[arg(long, default_value_t = 1)]
    pub thin_period: usize,
    /// Known per-mode mean; fitted per K-class when omitted.
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long, default_value_t = 1e-12)]
    pub tail_tol: f64,
    #[arg(long, default_value_t = 5.0)]
    pub min_expected: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
    #[arg(long)]
    pub seed: u64,
    /// Report CSV, one row per K; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pooled histogram CSV, one row per cell per K.
    #[arg(long)]
    pub hist_out: Option<PathBuf>,
    /// Exit with code 4 if any tested K-class fails at `alpha`.
    #[arg(long)]
    pub require_pass: bool,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter { .. } => EXIT_INVALID_ARGS,
        Error::Format { .. } | Error::UnsortedTimestamps { .. } => EXIT_INPUT_FORMAT,
        _ => EXIT_RUNTIME,
    }
}

pub fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Pmf(a) => cmd_pmf(a).map(|_| EXIT_OK),
        Command::Moments(a) => cmd_moments(a).map(|_| EXIT_OK),
        Command::Figures(a) => cmd_figures(a).map(|_| EXIT_OK),
        Command::Simulate(a) => cmd_simulate(a).map(|_| EXIT_OK),
        Command::Synth(a) => cmd_synth(a).map(|_| EXIT_OK),
        Command::Analyze(a) => cmd_analyze(a),
    }
}

/// Formats a float so that it round-trips and never expands into a long
/// run of zeros.
fn num(x: f64) -> String {
    if x != 0.0 && x.is_finite() && (x.abs() < 1e-4 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn sink(path: Option<&Path>, fallback: Box<dyn Write>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => fallback,
    })
}

fn write_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(io::Error::from)?;
    for row in rows {
        w.write_record(row).map_err(io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn check_mu_d(mu_d: f64) -> Result<()> {
    if mu_d.is_finite() && mu_d >= 0.0 {
        Ok(())
    } else {
        Err(invalid("muD", format!("must be finite and nonnegative, got {mu_d}")))
    }
}

/// The subsystem table and its dark-count convolution for `m` modes.
fn model_tables(cfg: &SubtractionConfig, mu_d_per_mode: f64, tail_tol: f64) -> Result<(Pmf, Pmf)> {
    check_mu_d(mu_d_per_mode)?;
    let table = subsystem_table(cfg, tail_tol)?;
    let dark = convolve_dark_counts(&table, mu_d_per_mode * f64::from(cfg.observed_modes()))?;
    Ok((table, dark))
}

fn pmf_rows(model: &Pmf, with_dark: &Pmf) -> Vec<Vec<String>> {
    (0..model.len().max(with_dark.len()))
        .map(|n| vec![n.to_string(), num(model.get(n)), num(with_dark.get(n))])
        .collect()
}

const PMF_HEADER: [&str; 3] = ["N", "P_model", "P_with_dark"];

fn cmd_pmf(a: &PmfArgs) -> Result<()> {
    let (table, dark) = model_tables(&a.model.config()?, a.model.mu_d, a.tail_tol)?;
    let out = sink(a.out.as_deref(), Box::new(io::stdout().lock()))?;
    write_csv(out, &PMF_HEADER, &pmf_rows(&table, &dark))
}

fn analytic_moments(cfg: &SubtractionConfig, mu_d_per_mode: f64) -> (Moments, Moments) {
    let bare = Moments {
        mean: theoretical_mean(cfg),
        g2: theoretical_g2(cfg),
    };
    let total_dark = mu_d_per_mode * f64::from(cfg.observed_modes());
    (bare, dark_shifted_moments(bare, total_dark))
}

fn cmd_moments(a: &MomentsArgs) -> Result<()> {
    let cfg = a.model.config()?;
    check_mu_d(a.model.mu_d)?;
    let (bare, dark) = analytic_moments(&cfg, a.model.mu_d);
    let row = vec![
        cfg.total_modes().to_string(),
        cfg.observed_modes().to_string(),
        cfg.subtracted().to_string(),
        num(cfg.mu0()),
        num(a.model.mu_d),
        num(bare.mean),
        num(bare.g2),
        num(dark.mean),
        num(dark.g2),
    ];
    let out = sink(a.out.as_deref(), Box::new(io::stdout().lock()))?;
    write_csv(
        out,
        &["M", "m", "K", "mu0", "muD", "mu", "g2", "mu_with_dark", "g2_with_dark"],
        &[row],
    )
}

const FIGURE_MAX_MODES: u32 = 5;
const FIGURE_MAX_K: u32 = 5;

fn figure_mode_pairs(fig: FigureId) -> Vec<(u32, u32)> {
    let modes = 1..=FIGURE_MAX_MODES;
    match fig {
        FigureId::Fig4a => modes.map(|m| (m, m)).collect(),
        FigureId::Fig4b => modes.map(|big| (big, 1)).collect(),
        FigureId::Fig4c => modes.map(|m| (FIGURE_MAX_MODES, m)).collect(),
        FigureId::Fig5a | FigureId::Fig5b => Vec::new(),
    }
}

/// Writes the curve files for `fig` and returns their paths in order.
pub fn write_figure(a: &FiguresArgs) -> Result<Vec<PathBuf>> {
    check_mu_d(a.mu_d)?;
    crate::distributions::check_mu0(a.mu0)?;
    fs::create_dir_all(&a.out_dir)?;
    let tag = a.fig.to_possible_value().expect("named variant").get_name().to_string();
    let mut written = Vec::new();
    match a.fig {
        FigureId::Fig4a | FigureId::Fig4b | FigureId::Fig4c => {
            for (big, m) in figure_mode_pairs(a.fig) {
                for k in 0..=FIGURE_MAX_K {
                    let cfg = SubtractionConfig::new(big, m, k, a.mu0)?;
                    let (table, dark) = model_tables(&cfg, a.mu_d, a.tail_tol)?;
                    let path = a.out_dir.join(format!("fig{tag}_M{big}_m{m}_K{k}.csv"));
                    write_csv(BufWriter::new(File::create(&path)?), &PMF_HEADER, &pmf_rows(&table, &dark))?;
                    written.push(path);
                }
            }
        }
        FigureId::Fig5a | FigureId::Fig5b => {
            let header = if a.fig == FigureId::Fig5a {
                ["m", "mu", "mu_with_dark"]
            } else {
                ["m", "g2", "g2_with_dark"]
            };
            for big in 1..=FIGURE_MAX_MODES {
                for k in 0..=FIGURE_MAX_K {
                    let rows = (1..=big)
                        .map(|m| {
                            let cfg = SubtractionConfig::new(big, m, k, a.mu0)?;
                            let (bare, dark) = analytic_moments(&cfg, a.mu_d);
                            Ok(if a.fig == FigureId::Fig5a {
                                vec![m.to_string(), num(bare.mean), num(dark.mean)]
                            } else {
                                vec![m.to_string(), num(bare.g2), num(dark.g2)]
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let path = a.out_dir.join(format!("fig{tag}_M{big}_K{k}.csv"));
                    write_csv(BufWriter::new(File::create(&path)?), &header, &rows)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

fn cmd_figures(a: &FiguresArgs) -> Result<()> {
    let written = write_figure(a)?;
    let mut out = io::stdout().lock();
    for p in written {
        writeln!(out, "{}", p.display())?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = SimConfig::new(
        a.total_modes,
        a.observed_modes,
        a.subtracted,
        a.mu_in,
        a.reflectivity,
        a.trials,
        a.seed,
    )?;
    cfg.min_acceptance = a.min_acceptance;
    let run = run_conditional(&cfg)?;
    let rows: Vec<Vec<String>> = run
        .samples
        .iter()
        .zip(&run.subsystem_subtracted)
        .enumerate()
        .map(|(i, (n, k))| vec![i.to_string(), n.to_string(), k.to_string()])
        .collect();
    write_csv(
        sink(a.out.as_deref(), Box::new(io::stdout().lock()))?,
        &["trial", "N", "k_subsystem"],
        &rows,
    )?;
    write_csv(
        sink(a.summary.as_deref(), Box::new(io::stderr().lock()))?,
        &["attempts", "accepted", "acceptance_rate", "mu0_effective"],
        &[vec![
            run.attempts.to_string(),
            run.accepted.to_string(),
            num(run.acceptance_rate()),
            num(cfg.effective_mu0()),
        ]],
    )
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let trace = synth_experiment_trace(&TraceConfig {
        mu0: a.mu0,
        mu_d_per_mode: a.mu_d,
        tau_ns: a.tau_ns,
        thin_period_bins: a.thin_period,
        n_bins: a.n_bins,
        p_subtract: a.p_subtract,
        seed: a.seed,
    })?;
    trace.write(sink(a.out.as_deref(), Box::new(BufWriter::new(io::stdout().lock())))?)
}

/// Reads a binned trace, or bins a raw event file at `tau_ns`.
pub fn load_trace(path: &Path, tau_ns: Option<u64>) -> Result<BinnedTrace> {
    let mut reader = BufReader::new(File::open(path)?);
    let is_events = reader.fill_buf()?.starts_with(EVENTS_HEADER.as_bytes());
    if is_events {
        let tau = tau_ns.ok_or_else(|| invalid("tau_ns", "required to bin a raw event file"))?;
        bin_timestamps(&TimeTags::read(reader)?, tau, None)
    } else {
        BinnedTrace::read(reader)
    }
}

const REPORT_HEADER: [&str; 15] = [
    "K", "samples", "status", "mu0", "mu0_fitted", "chi2", "dof", "p_value", "pass", "mu_hat",
    "mu_se", "g2_hat", "g2_se", "mu_theory", "g2_theory",
];

struct KReport {
    row: Vec<String>,
    hist: Vec<Vec<String>>,
    failed: bool,
}

fn analyze_class(a: &AnalyzeArgs, k: u32, samples: &[u64]) -> Result<KReport> {
    let mut row = vec![k.to_string(), samples.len().to_string()];
    let shape = SubtractionConfig::new(a.total_modes, a.observed_modes, k, a.mu0.unwrap_or(1.0))?;
    let dark_total = a.mu_d * f64::from(a.observed_modes);
    if samples.len() < MIN_GOF_SAMPLES {
        row.push("insufficient samples".into());
        row.resize(REPORT_HEADER.len(), String::new());
        return Ok(KReport {
            row,
            hist: Vec::new(),
            failed: false,
        });
    }

    let (mu0, fitted, mut status) = match a.mu0 {
        Some(mu0) => (mu0, false, "ok"),
        None => {
            let fit = fit_mu0(samples, a.total_modes, a.observed_modes, k, dark_total)?;
            let status = if fit.boundary.is_some() { "fit at search boundary" } else { "ok" };
            (fit.mu0_hat, true, status)
        }
    };
    let cfg = shape.with_mu0(mu0)?;
    let (_, model) = model_tables(&cfg, a.mu_d, a.tail_tol)?;
    let gof = match chi2_test(samples, &model, a.min_expected, u32::from(fitted)) {
        Ok(g) => Some(g),
        Err(Error::TooFewCells { .. }) => {
            status = "too few cells";
            None
        }
        Err(e) => return Err(e),
    };
    let est = estimate_moments(samples, a.bootstrap, a.seed)?;
    let (_, theory) = analytic_moments(&cfg, a.mu_d);
    let pass = gof.as_ref().map(|g| g.passes(a.alpha));
    row.extend([
        status.to_string(),
        num(mu0),
        fitted.to_string(),
        opt_num(gof.as_ref().map(|g| g.chi2)),
        gof.as_ref().map(|g| g.dof.to_string()).unwrap_or_default(),
        opt_num(gof.as_ref().map(|g| g.p_value)),
        pass.map(|p| p.to_string()).unwrap_or_default(),
        num(est.mu_hat),
        num(est.mu_se),
        opt_num(est.g2_hat),
        opt_num(est.g2_se),
        num(theory.mean),
        num(theory.g2),
    ]);
    let hist = gof
        .iter()
        .flat_map(|g| g.pooled_cells.iter())
        .map(|c| {
            vec![
                k.to_string(),
                c.lo.to_string(),
                c.hi.map(|h| h.to_string()).unwrap_or_default(),
                c.observed.to_string(),
                num(c.expected),
            ]
        })
        .collect();
    Ok(KReport {
        row,
        hist,
        failed: pass == Some(false),
    })
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<i32> {
    check_mu_d(a.mu_d)?;
    if a.thin_period == 0 {
        return Err(invalid("thin_period", "must be at least 1"));
    }
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    let trace = thin_bins(&load_trace(&a.trace, a.tau_ns)?, a.thin_period)?;
    let records = group_records(&trace, a.total_modes as usize, a.observed_modes as usize)?;
    let mut k_list = a.k_list.clone();
    k_list.sort_unstable();
    k_list.dedup();
    let reports = k_list
        .iter()
        .map(|&k| analyze_class(a, k, &condition_on(&records, u64::from(k))))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<Vec<String>> = reports.iter().map(|r| r.row.clone()).collect();
    write_csv(sink(a.out.as_deref(), Box::new(io::stdout().lock()))?, &REPORT_HEADER, &rows)?;
    if let Some(path) = &a.hist_out {
        let hist: Vec<Vec<String>> = reports.iter().flat_map(|r| r.hist.clone()).collect();
        write_csv(
            BufWriter::new(File::create(path)?),
            &["K", "lo", "hi", "observed", "expected"],
            &hist,
        )?;
    }
    let failed = reports.iter().any(|r| r.failed);
    Ok(if a.require_pass && failed { EXIT_STATISTICAL } else { EXIT_OK })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for x in [0.0, 1.0, 0.8064516129032258, 1e-300, 2.5e-5, 123456.75, 1e20] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert!(s.len() < 30, "{s}");
        }
    }

    #[test]
    fn figure_families() {
        assert_eq!(figure_mode_pairs(FigureId::Fig4a)[2], (3, 3));
        assert_eq!(figure_mode_pairs(FigureId::Fig4b)[4], (5, 1));
        assert_eq!(figure_mode_pairs(FigureId::Fig4c)[1], (5, 2));
    }

    #[test]
    fn parse_errors_exit_with_two() {
        assert_eq!(run(["subthermal", "pmf", "--M", "2"]), EXIT_INVALID_ARGS);
        assert_eq!(run(["subthermal", "figures", "--fig", "9z", "--mu0", "1", "--out-dir", "."]), 2);
    }

    #[test]
    fn analyze_k_list_parsing() {
        let cli = Cli::try_parse_from([
            "subthermal", "analyze", "--trace", "t", "--M", "5", "--m", "1", "--K", "0,5", "--seed", "1",
        ])
        .unwrap();
        match cli.command {
            Command::Analyze(a) => assert_eq!(a.k_list, vec![0, 5]),
            _ => unreachable!(),
        }
    }
}
