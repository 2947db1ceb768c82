//! Command-line surface: verification suite, false-alarm and missed-detection
//! curve sweeps as long-format CSV, and state dumps.
//!
//! Sweep settings come from flags and an optional TOML file given with
//! `--config`; a flag always overrides the same key from the file.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::combinatorics::{count_compositions, BigCount, LogProb};
use crate::detection::{
    false_alarm_coefficients, p_fa_closed, p_fa_oracle, p_md_closed, p_md_oracle,
    single_photon_baselines, NoiseModel,
};
use crate::error::{Error, AMPLITUDE_CAP};
use crate::fock_core::{apply_create, Register};
use crate::loss_channel::{
    beamsplitter_oracle, decompose_by_environment, oracle_size, phi_component, rho_pres_components,
    LossParams,
};
use crate::psi_family::{
    annihilation_identity_residual, build_psi_direct, build_psi_recursive, pair_commutator,
    PsiParams,
};

pub const DEFAULT_M_MAX: usize = 100_000;
pub const DEFAULT_M_POINTS: usize = 50;
pub const DEFAULT_NOISE: &str = "thermal:0.01";
pub const DEFAULT_ETA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{0}")]
    Cap(Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("verification failed")]
    Verification,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification => 1,
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Cap(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::CapExceeded { .. } => CliError::Cap(e),
            other => CliError::Input(other.to_string()),
        }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Like [`format_f64`], but values below the normal `f64` range are printed
/// from their logarithm so they stay positive in the output.
pub fn format_logprob(p: LogProb) -> String {
    if p.is_zero() {
        return format_f64(0.0);
    }
    let v = p.value();
    if v.is_normal() {
        return format_f64(v);
    }
    let l10 = p.log10();
    let exp = l10.floor();
    let mantissa = format!("{:.16e}", 10f64.powf(l10 - exp));
    // the mantissa may round up to 1.0e1
    let (digits, shift) = mantissa.split_once('e').expect("scientific format");
    let shift: i64 = shift.parse().expect("integer exponent");
    format!("{digits}e{}", exp as i64 + shift)
}

#[derive(Parser, Debug)]
#[command(
    name = "psin",
    version,
    about = "Multi-photon entangled state detection statistics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run every identity and oracle check for all N ≤ max-n, M ≤ max-m.
    Verify {
        #[arg(long, default_value_t = 3)]
        max_n: usize,
        #[arg(long, default_value_t = 3)]
        max_m: usize,
    },
    /// False-alarm coefficient curves versus M.
    PfaCurves(SweepArgs),
    /// Missed-detection probability (1−η)^N.
    PmdCurve {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Reflectivity grid; defaults to 0, 0.05, …, 1.
        #[arg(long, value_delimiter = ',')]
        eta: Vec<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write |ψ_N⟩ over M modes in the tab-separated dump format.
    StateDump {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default, Clone)]
pub struct SweepArgs {
    /// Photon numbers, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long)]
    pub m_min: Option<usize>,
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long)]
    pub m_points: Option<usize>,
    /// Explicit mode counts; replaces the log-spaced grid.
    #[arg(long, value_delimiter = ',')]
    pub m_list: Vec<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// `thermal:<nbar>` or `table:<path>`.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<Vec<usize>>,
    m_min: Option<usize>,
    m_max: Option<usize>,
    m_points: Option<usize>,
    m_list: Option<Vec<usize>>,
    eta: Option<f64>,
    noise: Option<String>,
    csv: Option<PathBuf>,
    svg: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MGrid {
    /// `m_min = None` starts each curve at its own N.
    LogSpaced {
        m_min: Option<usize>,
        m_max: usize,
        points: usize,
    },
    List(Vec<usize>),
}

impl MGrid {
    /// Ascending, de-duplicated mode counts for photon number `n`.
    pub fn points_for(&self, n: usize) -> Result<Vec<usize>, CliError> {
        let mut out = match self {
            MGrid::List(list) => {
                if list.is_empty() || list.contains(&0) {
                    return Err(CliError::Input("m-list entries must be ≥ 1".into()));
                }
                list.clone()
            }
            MGrid::LogSpaced {
                m_min,
                m_max,
                points,
            } => {
                let lo = m_min.unwrap_or(n.max(1));
                if lo == 0 || *points < 2 || *m_max < lo {
                    return Err(CliError::Input(format!(
                        "log grid needs 1 ≤ m-min ≤ m-max and m-points ≥ 2 (got {lo}, {m_max}, {points})"
                    )));
                }
                let (a, b) = ((lo as f64).log10(), (*m_max as f64).log10());
                let step = (b - a) / (*points - 1) as f64;
                (0..*points)
                    .map(|i| 10f64.powf(a + step * i as f64).round() as usize)
                    .map(|m| m.clamp(lo, *m_max))
                    .collect()
            }
        };
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSpec {
    Thermal(f64),
    Table(Vec<f64>),
}

impl NoiseSpec {
    /// Parses `thermal:<nbar>` or `table:<path>`, reading the table file.
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        match spec.split_once(':') {
            Some(("thermal", v)) => v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite() && *x >= 0.0)
                .map(NoiseSpec::Thermal)
                .ok_or_else(|| CliError::Input(format!("bad thermal mean photon number '{v}'"))),
            Some(("table", path)) => read_noise_table(Path::new(path)).map(NoiseSpec::Table),
            _ => Err(CliError::Input(format!(
                "noise must be thermal:<nbar> or table:<path>, got '{spec}'"
            ))),
        }
    }

    pub fn model(&self, modes: usize) -> Result<NoiseModel, CliError> {
        Ok(match self {
            NoiseSpec::Thermal(nbar) => NoiseModel::thermal(*nbar, modes)?,
            NoiseSpec::Table(values) => NoiseModel::table(values.clone(), modes)?,
        })
    }
}

/// One float per line; line `i` (1-based) holds `p̃_i`. Trailing blank lines are ignored.
pub fn read_noise_table(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read noise table {}: {e}", path.display())))?;
    parse_noise_table(&text)
}

pub fn parse_noise_table(text: &str) -> Result<Vec<f64>, CliError> {
    let lines: Vec<&str> = text.trim_end().lines().collect();
    lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !(lines.len() == 1 && l.trim().is_empty()))
        .map(|(i, line)| {
            line.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| CliError::Input(format!("noise table line {}: '{line}'", i + 1)))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub m_grid: MGrid,
    pub noise: NoiseSpec,
    pub eta: f64,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

impl SweepConfig {
    /// Merges flags over the optional config file over built-in defaults.
    pub fn resolve(args: &SweepArgs) -> Result<Self, CliError> {
        let file: FileConfig = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Input(format!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let n_values = if !args.n.is_empty() {
            args.n.clone()
        } else {
            file.n.unwrap_or_default()
        };
        if n_values.is_empty() {
            return Err(CliError::Input("at least one --n value is required".into()));
        }
        let m_list = if !args.m_list.is_empty() {
            Some(args.m_list.clone())
        } else {
            file.m_list
        };
        let m_grid = match m_list {
            Some(list) => MGrid::List(list),
            None => MGrid::LogSpaced {
                m_min: args.m_min.or(file.m_min),
                m_max: args.m_max.or(file.m_max).unwrap_or(DEFAULT_M_MAX),
                points: args.m_points.or(file.m_points).unwrap_or(DEFAULT_M_POINTS),
            },
        };
        let noise = NoiseSpec::parse(
            args.noise
                .as_deref()
                .or(file.noise.as_deref())
                .unwrap_or(DEFAULT_NOISE),
        )?;
        let eta = args.eta.or(file.eta).unwrap_or(DEFAULT_ETA);
        if !(0.0..=1.0).contains(&eta) {
            return Err(CliError::Input(format!("eta {eta} outside [0, 1]")));
        }
        Ok(SweepConfig {
            n_values,
            m_grid,
            noise,
            eta,
            csv: args.csv.clone().or(file.csv),
            svg: args.svg.clone().or(file.svg),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Series {
    Term(usize),
    OneOverM,
    NOverM,
    Total,
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Series::Term(k) => write!(f, "term:{k}"),
            Series::OneOverM => f.write_str("baseline:1_over_M"),
            Series::NOverM => f.write_str("baseline:N_over_M"),
            Series::Total => f.write_str("total"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub series: Series,
    pub n: usize,
    pub m: usize,
    pub value: LogProb,
}

/// Rows ordered by N, then M, then series (`term:1..N`, baselines, total).
pub fn pfa_curve_rows(config: &SweepConfig) -> Result<Vec<CurveRow>, CliError> {
    let mut points = Vec::new();
    for &n in &config.n_values {
        for m in config.m_grid.points_for(n)? {
            points.push((n, m));
        }
    }
    let blocks: Vec<Vec<CurveRow>> = points
        .par_iter()
        .map(|&(n, m)| -> Result<Vec<CurveRow>, CliError> {
            let params = PsiParams::new(n, m)?;
            let mut rows: Vec<CurveRow> = false_alarm_coefficients(params)
                .into_iter()
                .enumerate()
                .map(|(i, value)| CurveRow {
                    series: Series::Term(i + 1),
                    n,
                    m,
                    value,
                })
                .collect();
            let base = single_photon_baselines(params);
            let total = p_fa_closed(params, &config.noise.model(m)?)?.total;
            for (series, value) in [
                (Series::OneOverM, LogProb::from_value(base.single_copy)),
                (Series::NOverM, LogProb::from_value(base.n_copies)),
                (Series::Total, total),
            ] {
                rows.push(CurveRow {
                    series,
                    n,
                    m,
                    value,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("series,N,M,value\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.series,
            r.n,
            r.m,
            format_logprob(r.value)
        );
    }
    out
}

/// Runs a sweep and writes its CSV (and SVG) where the config asks; returns the CSV text.
pub fn cmd_pfa_curves(config: &SweepConfig) -> Result<String, CliError> {
    let rows = pfa_curve_rows(config)?;
    let csv = curves_csv(&rows);
    if let Some(path) = &config.csv {
        write_file(path, &csv)?;
    }
    if let Some(path) = &config.svg {
        write_file(path, &curves_svg(&rows))?;
    }
    Ok(csv)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Default reflectivity grid `0, 0.05, …, 1`.
pub fn default_eta_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// CSV `N,eta,p_md` over every `(N, η)` pair.
pub fn cmd_pmd_curve(n_values: &[usize], eta_grid: &[f64]) -> Result<String, CliError> {
    let mut out = String::from("N,eta,p_md\n");
    for &n in n_values {
        let params = PsiParams::new(n, 1)?;
        for &eta in eta_grid {
            let p = p_md_closed(params, eta)
                .map_err(|_| CliError::Input(format!("eta {eta} outside [0, 1]")))?;
            let text = if p == 0.0 || p.is_normal() {
                format_f64(p)
            } else {
                format_logprob(LogProb::from_ln(n as f64 * (-eta).ln_1p()))
            };
            let _ = writeln!(out, "{n},{},{text}", format_f64(eta));
        }
    }
    Ok(out)
}

pub fn cmd_state_dump(params: PsiParams) -> Result<String, CliError> {
    Ok(build_psi_direct(params)?.dump_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub check: &'static str,
    pub n: usize,
    pub m: usize,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
    pub seconds: f64,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<34} {:>3} {:>3} {:>12} {:>8}  result\n",
            "check", "N", "M", "deviation", "tol"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<34} {:>3} {:>3} {:>12.3e} {:>8.0e}  {}",
                r.check,
                r.n,
                r.m,
                r.value,
                r.tolerance,
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        let failed = self.rows.iter().filter(|r| !r.passed).count();
        let _ = writeln!(
            out,
            "{} checks, {} failed, {:.2}s",
            self.rows.len(),
            failed,
            self.seconds
        );
        out
    }
}

fn verify_footprint(n: usize, m: usize) -> Result<(), Error> {
    let params = PsiParams::new(n, m)?;
    let ensemble = params.term_count() * count_compositions(n, m + 1)?;
    let oracle = oracle_size(params);
    let cap = BigCount::from(AMPLITUDE_CAP as u64);
    for (what, need) in [
        ("noise ensemble", ensemble),
        ("beamsplitter oracle state", oracle),
    ] {
        if need > cap {
            return Err(Error::CapExceeded {
                what,
                photons: n,
                modes: m,
                required: need.to_string(),
            });
        }
    }
    Ok(())
}

const VERIFY_ETAS: [f64; 3] = [0.2, 0.5, 0.8];

/// All identity and oracle checks for `N ∈ 0..=max_n`, `M ∈ 1..=max_m`.
/// Refuses up front when any instance would exceed the amplitude cap.
pub fn cmd_verify(max_n: usize, max_m: usize) -> Result<VerifyReport, CliError> {
    if max_m == 0 {
        return Err(CliError::Input("max-m must be at least 1".into()));
    }
    for n in 0..=max_n {
        for m in 1..=max_m {
            verify_footprint(n, m)?;
        }
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    for n in 0..=max_n {
        for m in 1..=max_m {
            verify_instance(n, m, &mut rows)?;
        }
    }
    Ok(VerifyReport {
        rows,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn verify_instance(n: usize, m: usize, rows: &mut Vec<CheckRow>) -> Result<(), Error> {
    let params = PsiParams::new(n, m)?;
    let mut push = |check, value: f64, tolerance| {
        rows.push(CheckRow {
            check,
            n,
            m,
            value,
            tolerance,
            passed: value.is_finite() && value < tolerance,
        })
    };

    let psi = build_psi_direct(params)?;
    let (mut comm_s, mut comm_i, mut annih) = (0f64, 0f64, 0f64);
    for j in 0..m {
        let lhs = pair_commutator(&psi, Register::Signal, j)?;
        comm_s = comm_s.max(lhs.max_abs_diff(&apply_create(&psi, Register::Idler, j)?));
        let lhs = pair_commutator(&psi, Register::Idler, j)?;
        comm_i = comm_i.max(lhs.max_abs_diff(&apply_create(&psi, Register::Signal, j)?));
        if n >= 1 {
            annih = annih.max(annihilation_identity_residual(params, j)?);
        }
    }
    push("commutator [a_S, A+] = a+_I", comm_s, 1e-12);
    push("commutator [a_I, A+] = a+_S", comm_i, 1e-12);
    if n >= 1 {
        push("annihilation identity", annih, 1e-12);
    }
    push(
        "direct vs recursive psi",
        psi.max_abs_diff(&build_psi_recursive(params)?),
        1e-12,
    );

    let (mut completeness, mut gram, mut split, mut pmd) = (0f64, 0f64, 0f64, 0f64);
    for eta in VERIFY_ETAS {
        let loss = LossParams::new(eta, params)?;
        let mix = rho_pres_components(loss)?;
        completeness = completeness.max((mix.total_weight() - 1.0).abs());
        gram = gram.max(mix.gram_deviation()?);
        for (absorbed, w, state) in decompose_by_environment(&beamsplitter_oracle(loss)?)? {
            let (cw, cs) = phi_component(loss, &absorbed)?;
            split = split.max((w - cw).abs()).max(state.max_abs_diff(&cs));
        }
        pmd = pmd.max((p_md_oracle(params, eta)? - p_md_closed(params, eta)?).abs());
    }
    push("loss component weights sum to 1", completeness, 1e-10);
    push("loss components orthonormal", gram, 1e-12);
    push("beamsplitter oracle decomposition", split, 1e-12);
    push("P_MD closed vs oracle", pmd, 1e-10);

    let mut pfa = 0f64;
    let table: Vec<f64> = (1..=n).map(|k| 0.3 / k as f64).collect();
    for noise in [NoiseModel::thermal(0.5, m)?, NoiseModel::table(table, m)?] {
        let closed = p_fa_closed(params, &noise)?.value();
        pfa = pfa.max((closed - p_fa_oracle(params, &noise)?).abs());
    }
    push("P_FA closed vs oracle", pfa, 1e-10);
    Ok(())
}

const SVG_WIDTH: f64 = 720.0;
const SVG_PANEL: f64 = 420.0;
const SVG_DECADES: f64 = 60.0;

/// Log-log chart, one panel per N: the first three terms, term N, both
/// baselines and the total.
pub fn curves_svg(rows: &[CurveRow]) -> String {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    let height = SVG_PANEL * ns.len().max(1) as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (panel, &n) in ns.iter().enumerate() {
        let wanted = |s: &Series| match s {
            Series::Term(k) => *k <= 3 || *k == n,
            _ => true,
        };
        let mut series: Vec<(Series, Vec<(f64, f64)>)> = Vec::new();
        for r in rows.iter().filter(|r| r.n == n && wanted(&r.series)) {
            if r.value.is_zero() {
                continue;
            }
            let pt = ((r.m as f64).log10(), r.value.log10());
            match series.iter_mut().find(|(s, _)| *s == r.series) {
                Some((_, pts)) => pts.push(pt),
                None => series.push((r.series, vec![pt])),
            }
        }
        let all = series.iter().flat_map(|(_, p)| p.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x0 > x1 {
            continue;
        }
        y0 = y0.max(y1 - SVG_DECADES).floor();
        y1 = y1.ceil();
        if x1 - x0 < 1e-9 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-9 {
            y0 = y1 - 1.0;
        }
        let top = panel as f64 * SVG_PANEL;
        let (left, right, ptop, pbot) =
            (70.0, SVG_WIDTH - 150.0, top + 30.0, top + SVG_PANEL - 40.0);
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
        let sy = |y: f64| pbot - (y.max(y0) - y0) / (y1 - y0) * (pbot - ptop);
        let _ = writeln!(
            out,
            "<text x=\"{left}\" y=\"{}\">N = {n}</text>\n<rect x=\"{left}\" y=\"{ptop}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            top + 20.0,
            right - left,
            pbot - ptop
        );
        let _ = writeln!(
            out,
            "<text x=\"{left}\" y=\"{}\">log10 M: {x0:.2} .. {x1:.2}</text><text x=\"5\" y=\"{ptop}\">1e{y1}</text><text x=\"5\" y=\"{pbot}\">1e{y0}</text>",
            pbot + 25.0
        );
        for (idx, (s, pts)) in series.iter().enumerate() {
            let color = PALETTE[idx % PALETTE.len()];
            let dash = match s {
                Series::OneOverM | Series::NOverM => " stroke-dasharray=\"6 4\"",
                _ => "",
            };
            let path: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{color}\"{dash} points=\"{}\"/>\n<text x=\"{}\" y=\"{}\" fill=\"{color}\">{s}</text>",
                path.join(" "),
                right + 8.0,
                ptop + 14.0 * (idx as f64 + 1.0)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Dispatches a parsed command line, writing results to stdout unless a path was given.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Verify { max_n, max_m } => {
            let report = cmd_verify(max_n, max_m)?;
            print!("{}", report.render());
            if report.all_passed() {
                Ok(())
            } else {
                Err(CliError::Verification)
            }
        }
        Command::PfaCurves(args) => {
            let config = SweepConfig::resolve(&args)?;
            let csv = cmd_pfa_curves(&config)?;
            if config.csv.is_none() {
                print!("{csv}");
            }
            Ok(())
        }
        Command::PmdCurve { n, eta, csv } => {
            let grid = if eta.is_empty() {
                default_eta_grid()
            } else {
                eta
            };
            let text = cmd_pmd_curve(&n, &grid)?;
            match csv {
                Some(path) => write_file(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::StateDump { n, m, out } => {
            let text = cmd_state_dump(PsiParams::new(n, m)?)?;
            match out {
                Some(path) => write_file(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting() {
        assert_eq!(format_f64(0.5), "5.0000000000000000e-1");
        assert_eq!(
            format_logprob(LogProb::from_value(0.25)),
            "2.5000000000000000e-1"
        );
        assert_eq!(format_logprob(LogProb::ZERO), "0.0000000000000000e0");
        let tiny = format_logprob(LogProb::from_ln(-1000.0 * std::f64::consts::LN_10));
        assert!(tiny.ends_with("e-1000"), "{tiny}");
        assert!(
            tiny.starts_with("1.0000000000") || tiny.starts_with("9.99999999"),
            "{tiny}"
        );
        let v = format_logprob(LogProb::from_ln(-800.0));
        let (mant, exp) = v.split_once('e').unwrap();
        let l10: f64 = mant.parse::<f64>().unwrap().log10() + exp.parse::<f64>().unwrap();
        assert!((l10 - (-800.0 / std::f64::consts::LN_10)).abs() < 1e-12);
    }

    #[test]
    fn log_grid() {
        let g = MGrid::LogSpaced {
            m_min: None,
            m_max: 100_000,
            points: 41,
        };
        let pts = g.points_for(10).unwrap();
        assert_eq!(pts.first(), Some(&10));
        assert_eq!(pts.last(), Some(&100_000));
        assert!(pts.contains(&10_000));
        assert!(pts.windows(2).all(|w| w[0] < w[1]));

        let dense = MGrid::LogSpaced {
            m_min: Some(1),
            m_max: 3,
            points: 20,
        };
        assert_eq!(dense.points_for(5).unwrap(), vec![1, 2, 3]);

        let bad = MGrid::LogSpaced {
            m_min: Some(0),
            m_max: 10,
            points: 5,
        };
        assert!(bad.points_for(1).is_err());
        let bad = MGrid::LogSpaced {
            m_min: Some(2),
            m_max: 10,
            points: 1,
        };
        assert!(bad.points_for(1).is_err());
        assert!(MGrid::List(vec![3, 0]).points_for(1).is_err());
        assert_eq!(
            MGrid::List(vec![5, 2, 5]).points_for(1).unwrap(),
            vec![2, 5]
        );
    }

    #[test]
    fn noise_specs() {
        assert_eq!(
            NoiseSpec::parse("thermal:0.5").unwrap(),
            NoiseSpec::Thermal(0.5)
        );
        assert!(NoiseSpec::parse("thermal:-1").is_err());
        assert!(NoiseSpec::parse("gaussian:1").is_err());
        assert!(NoiseSpec::parse("table:/nonexistent/file").is_err());
        assert_eq!(parse_noise_table("0.1\n0.2\n\n").unwrap(), vec![0.1, 0.2]);
        assert_eq!(parse_noise_table("").unwrap(), Vec::<f64>::new());
        assert!(parse_noise_table("0.1\nabc\n").is_err());
        assert!(parse_noise_table("0.1\n\n0.2\n").is_err());
        assert!(parse_noise_table("-0.1\n").is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.toml");
        fs::write(
            &path,
            "n = [10, 100]\nm_max = 5000\nm_points = 7\nnoise = \"thermal:0.2\"\neta = 0.3\n",
        )
        .unwrap();
        let args = SweepArgs {
            config: Some(path.clone()),
            m_points: Some(9),
            ..Default::default()
        };
        let cfg = SweepConfig::resolve(&args).unwrap();
        assert_eq!(cfg.n_values, vec![10, 100]);
        assert_eq!(
            cfg.m_grid,
            MGrid::LogSpaced {
                m_min: None,
                m_max: 5000,
                points: 9
            }
        );
        assert_eq!(cfg.noise, NoiseSpec::Thermal(0.2));
        assert_eq!(cfg.eta, 0.3);

        let args = SweepArgs {
            config: Some(path),
            n: vec![3],
            m_list: vec![4, 8],
            noise: Some("thermal:1".into()),
            ..Default::default()
        };
        let cfg = SweepConfig::resolve(&args).unwrap();
        assert_eq!(cfg.n_values, vec![3]);
        assert_eq!(cfg.m_grid, MGrid::List(vec![4, 8]));
        assert_eq!(cfg.noise, NoiseSpec::Thermal(1.0));

        let bad = dir.path().join("bad.toml");
        fs::write(&bad, "n = [1]\nwhatever = 3\n").unwrap();
        let args = SweepArgs {
            config: Some(bad),
            ..Default::default()
        };
        assert!(matches!(
            SweepConfig::resolve(&args),
            Err(CliError::Input(_))
        ));
        assert!(SweepConfig::resolve(&SweepArgs::default()).is_err());
    }

    fn sweep(n: Vec<usize>, grid: MGrid) -> SweepConfig {
        SweepConfig {
            n_values: n,
            m_grid: grid,
            noise: NoiseSpec::Thermal(0.01),
            eta: 0.5,
            csv: None,
            svg: None,
        }
    }

    #[test]
    fn single_photon_term_is_the_baseline() {
        let rows =
            pfa_curve_rows(&sweep(vec![1], MGrid::List(vec![1, 2, 10, 999, 100_000]))).unwrap();
        for m in [1, 2, 10, 999, 100_000] {
            let get = |s: Series| {
                rows.iter()
                    .find(|r| r.m == m && r.series == s)
                    .unwrap()
                    .value
            };
            let (t, b) = (get(Series::Term(1)).value(), get(Series::OneOverM).value());
            assert!((t - b).abs() <= 1e-15 * b, "{m}: {t} vs {b}");
        }
    }

    #[test]
    fn row_layout() {
        let rows = pfa_curve_rows(&sweep(vec![3, 2], MGrid::List(vec![5, 4]))).unwrap();
        let labels: Vec<String> = rows
            .iter()
            .map(|r| format!("{}|{}|{}", r.n, r.m, r.series))
            .collect();
        assert_eq!(labels.len(), 2 * (3 + 3) + 2 * (2 + 3));
        assert_eq!(
            &labels[..6],
            &[
                "3|4|term:1",
                "3|4|term:2",
                "3|4|term:3",
                "3|4|baseline:1_over_M",
                "3|4|baseline:N_over_M",
                "3|4|total"
            ]
        );
        assert_eq!(labels[12], "2|4|term:1");
        let csv = curves_csv(&rows);
        assert!(csv.starts_with("series,N,M,value\nterm:1,3,4,"));
    }

    #[test]
    fn large_sweep_terms_stay_positive() {
        let rows = pfa_curve_rows(&sweep(vec![1000], MGrid::List(vec![1000, 100_000]))).unwrap();
        for r in rows.iter().filter(|r| matches!(r.series, Series::Term(_))) {
            assert!(!r.value.is_zero() && r.value.ln().is_finite() && r.value.ln() <= 0.0);
        }
        let csv = curves_csv(&rows);
        assert!(csv
            .lines()
            .skip(1)
            .all(|l| !l.ends_with(",0.0000000000000000e0")));
    }

    #[test]
    fn last_term_is_inverse_binomial() {
        let rows = pfa_curve_rows(&sweep(vec![10], MGrid::List(vec![50_000, 100_000]))).unwrap();
        for m in [50_000usize, 100_000] {
            let get = |s: Series| {
                rows.iter()
                    .find(|r| r.m == m && r.series == s)
                    .unwrap()
                    .value
            };
            let want = -crate::combinatorics::binomial(m as u64 + 9, 10).ln();
            let got = get(Series::Term(10)).ln();
            assert!(
                (got - want).abs() < 1e-12 * want.abs(),
                "{m}: {got} vs {want}"
            );
            assert!(got < get(Series::OneOverM).ln());
        }
    }

    #[test]
    fn pmd_examples() {
        let csv = cmd_pmd_curve(&[1, 10, 100], &[0.0, 0.1, 0.5]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "N,eta,p_md");
        assert_eq!(lines[1], "1,0.0000000000000000e0,1.0000000000000000e0");
        let row = |n: &str, eta: &str| -> f64 {
            lines
                .iter()
                .find(|l| l.starts_with(&format!("{n},{eta}")))
                .unwrap()
                .rsplit(',')
                .next()
                .unwrap()
                .parse()
                .unwrap()
        };
        assert_eq!(row("10", "5.0000000000000000e-1"), 0.0009765625);
        let v = row("100", "1.0000000000000001e-1");
        let want = (100.0 * 0.9f64.ln()).exp();
        assert!((v - want).abs() < 1e-12 * want);
        assert!((v - 2.656e-5).abs() < 1e-8);
        assert!(matches!(
            cmd_pmd_curve(&[1], &[1.2]),
            Err(CliError::Input(_))
        ));
    }

    #[test]
    fn state_dump_examples() {
        let d = cmd_state_dump(PsiParams::new(1, 2).unwrap()).unwrap();
        let lines: Vec<&str> = d.lines().collect();
        assert_eq!(lines.len(), 2);
        for l in &lines {
            let amp: f64 = l.split('\t').nth(2).unwrap().parse().unwrap();
            assert!((amp - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        }
        let d = cmd_state_dump(PsiParams::new(0, 5).unwrap()).unwrap();
        assert_eq!(
            d,
            "0,0,0,0,0\t0,0,0,0,0\t1.0000000000000000e0\t0.0000000000000000e0\n"
        );
        let d = cmd_state_dump(PsiParams::new(2, 3).unwrap()).unwrap();
        let amps: Vec<&str> = d.lines().map(|l| l.split('\t').nth(2).unwrap()).collect();
        assert_eq!(amps.len(), 6);
        assert!(amps.iter().all(|a| *a == amps[0]));
        let err = cmd_state_dump(PsiParams::new(40, 40).unwrap()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn verify_runs() {
        let report = cmd_verify(3, 3).unwrap();
        assert!(report.all_passed(), "{}", report.render());
        let vacuum = cmd_verify(0, 1).unwrap();
        assert!(vacuum.all_passed());
        assert!(!vacuum.rows.is_empty());
        let err = cmd_verify(50, 50).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("N="));
    }

    #[test]
    fn svg_is_well_formed() {
        let rows = pfa_curve_rows(&sweep(vec![10], MGrid::List(vec![10, 100, 1000]))).unwrap();
        let svg = curves_svg(&rows);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4 + 3);
    }
}
