//! `frlab` — command-line front end for correction-function generation,
//! dispersion/dissipation analysis, CFL maps, and 1D solver runs.
//!
//! All artifacts are deterministic: CSV cells carry 17 significant digits
//! (exact round-trip), lines end in LF, and sweep parallelism never affects
//! output ordering. Exit codes: 0 success, 2 validation failure, 3 runtime
//! divergence (with the offending step reported).

// Validation guards are written as `!(x > 0.0)` on purpose: unlike
// `x <= 0.0`, the negated form also rejects NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use frlab::{
    build_operators, cfl_map, convergence_study, diffusion_dispersion, energy, esfr_from_k,
    eval_correction, fully_discrete_sweep, gauss_legendre_points, glsfr_from_params, osfr,
    rk44_step, safe_tau_hat, semi_discrete_sweep, total_mass, validate_lebesgue, CorrectionPair,
    Discretization, EsfrK, Family, GlsfrParams, LebesgueReport, Mesh1D, SchemeConfig,
    SpectralSample,
};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Error handling and exit codes
// ---------------------------------------------------------------------------

enum CliError {
    /// Bad parameters, bad files, failed preconditions: exit 2.
    Validation(String),
    /// The computation produced non-finite values mid-run: exit 3.
    Divergence { step: usize, what: String },
}

impl From<frlab::Error> for CliError {
    fn from(e: frlab::Error) -> Self {
        match e {
            frlab::Error::Divergence { step, what } => CliError::Divergence { step, what },
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("i/o failure: {e}"))
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

type CliResult<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "frlab",
    version,
    about = "Flux-reconstruction laboratory: correction functions, von Neumann analysis, CFL maps, and a 1D reference solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a correction-function pair and its sampled curve.
    GenCorrection(GenCorrectionArgs),
    /// Dispersion/dissipation curves of the semi- or fully-discrete scheme.
    Dispersion(DispersionArgs),
    /// Map the CFL limit over the free GLSFR parameters.
    CflMap(CflMapArgs),
    /// Run the periodic 1D solver on an advected-sine problem.
    Solve(SolveArgs),
}

#[derive(Args, Clone)]
struct Shared {
    /// Output directory for artifacts (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// JSON config file supplying defaults; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for parameter sweeps (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed for randomized diagnostics; outputs are deterministic per seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Flags selecting a correction pair, shared by several commands.
#[derive(Args, Clone)]
struct PairSource {
    /// Correction family: glsfr | osfr | esfr-from-file.
    #[arg(long)]
    family: Option<String>,
    /// Solution polynomial order.
    #[arg(short = 'p', long)]
    p: Option<usize>,
    /// Comma-separated free GLSFR parameters (length p - 2).
    #[arg(short = 'q', long, allow_hyphen_values = true)]
    q: Option<String>,
    /// OSFR family parameter.
    #[arg(long)]
    iota: Option<f64>,
    /// JSON file holding the ESFR filter matrix as a square 2D array.
    #[arg(long)]
    k_file: Option<PathBuf>,
    /// Load the pair from a correction JSON written by gen-correction.
    #[arg(long)]
    correction: Option<PathBuf>,
}

/// Config-file mirror of [`PairSource`].
#[derive(Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
struct PairSourceConfig {
    family: Option<String>,
    p: Option<usize>,
    q: Option<Vec<f64>>,
    iota: Option<f64>,
    k_file: Option<PathBuf>,
    correction: Option<PathBuf>,
}

#[derive(Args)]
struct GenCorrectionArgs {
    #[command(flatten)]
    shared: Shared,
    #[command(flatten)]
    pair: PairSource,
}

#[derive(Args)]
struct DispersionArgs {
    #[command(flatten)]
    shared: Shared,
    #[command(flatten)]
    pair: PairSource,
    /// Analysis mode: semi-advection | semi-diffusion | full.
    #[arg(long)]
    mode: Option<String>,
    /// Advection upwinding ratio in [0.5, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Advection speed.
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Diffusion constant.
    #[arg(long)]
    nu: Option<f64>,
    /// Normalized time step for the fully discrete mode.
    #[arg(long)]
    tau: Option<f64>,
    /// Truncated-exponential order of the update polynomial (3 or 4).
    #[arg(long)]
    poly_order: Option<usize>,
    /// Number of normalized wavenumbers in (0, pi].
    #[arg(long)]
    n_k: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct DispersionConfig {
    #[serde(flatten)]
    pair: PairSourceConfig,
    mode: Option<String>,
    alpha: Option<f64>,
    c: Option<f64>,
    nu: Option<f64>,
    tau: Option<f64>,
    poly_order: Option<usize>,
    n_k: Option<usize>,
}

#[derive(Args)]
struct CflMapArgs {
    #[command(flatten)]
    shared: Shared,
    /// Solution polynomial order (3 or 4).
    #[arg(short = 'p', long)]
    p: Option<usize>,
    /// First free-parameter range as `lo,hi`.
    #[arg(long, allow_hyphen_values = true)]
    q0_range: Option<String>,
    /// Second free-parameter range as `lo,hi` (p = 4 only).
    #[arg(long, allow_hyphen_values = true)]
    q1_range: Option<String>,
    /// Grid points per axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Advection upwinding ratio in [0.5, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Advection speed.
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Diffusion constant.
    #[arg(long)]
    nu: Option<f64>,
    /// Truncated-exponential order of the update polynomial (3 or 4).
    #[arg(long)]
    poly_order: Option<usize>,
    /// Wavenumber samples per cell (at least 64).
    #[arg(long)]
    k_samples: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CflMapConfig {
    p: Option<usize>,
    q0_range: Option<[f64; 2]>,
    q1_range: Option<[f64; 2]>,
    resolution: Option<usize>,
    alpha: Option<f64>,
    c: Option<f64>,
    nu: Option<f64>,
    poly_order: Option<usize>,
    k_samples: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    shared: Shared,
    #[command(flatten)]
    pair: PairSource,
    /// Advection upwinding ratio in [0.5, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Advection speed.
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Diffusion constant.
    #[arg(long)]
    nu: Option<f64>,
    /// Number of mesh elements on [0, 1].
    #[arg(long)]
    n_elem: Option<usize>,
    /// Time step; defaults to half the scheme's CFL limit.
    #[arg(long)]
    tau: Option<f64>,
    /// Final time.
    #[arg(long)]
    t_final: Option<f64>,
    /// Record a history row every this many steps.
    #[arg(long)]
    record_every: Option<usize>,
    /// Comma-separated element counts for an additional order study.
    #[arg(long)]
    refine: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolveConfig {
    #[serde(flatten)]
    pair: PairSourceConfig,
    alpha: Option<f64>,
    c: Option<f64>,
    nu: Option<f64>,
    n_elem: Option<usize>,
    tau: Option<f64>,
    t_final: Option<f64>,
    record_every: Option<usize>,
    refine: Option<Vec<usize>>,
}

// ---------------------------------------------------------------------------
// Plumbing helpers
// ---------------------------------------------------------------------------

/// 17-significant-digit cell format: exact f64 round-trip, diff-stable.
fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text.as_bytes())?;
    Ok(())
}

fn load_config<T: for<'de> Deserialize<'de> + Default>(path: &Option<PathBuf>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| invalid(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", p.display())))
        }
    }
}

fn parse_f64_list(text: &str) -> CliResult<Vec<f64>> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("not a number: '{tok}'")))
        })
        .collect()
}

fn parse_usize_list(text: &str) -> CliResult<Vec<usize>> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| invalid(format!("not a positive integer: '{tok}'")))
        })
        .collect()
}

fn parse_range(text: &str) -> CliResult<(f64, f64)> {
    let vals = parse_f64_list(text)?;
    if vals.len() != 2 {
        return Err(invalid(format!("range must be 'lo,hi', got '{text}'")));
    }
    Ok((vals[0], vals[1]))
}

fn ensure_out_dir(shared: &Shared) -> CliResult<()> {
    fs::create_dir_all(&shared.out)
        .map_err(|e| invalid(format!("cannot create {}: {e}", shared.out.display())))
}

fn configure_jobs(shared: &Shared) -> CliResult<()> {
    if let Some(n) = shared.jobs {
        if n == 0 {
            return Err(invalid("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| invalid(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Resolve the correction pair from flags/config, flags winning.
fn resolve_pair(flags: &PairSource, cfg: &PairSourceConfig) -> CliResult<CorrectionPair> {
    if let Some(path) = flags.correction.as_ref().or(cfg.correction.as_ref()) {
        let text = fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read correction {}: {e}", path.display())))?;
        return Ok(CorrectionPair::from_json(&text)?);
    }
    let family = flags
        .family
        .clone()
        .or_else(|| cfg.family.clone())
        .ok_or_else(|| invalid("missing correction source: --family or --correction"))?;
    let p = flags
        .p
        .or(cfg.p)
        .ok_or_else(|| invalid("missing required parameter: -p"))?;
    match family.as_str() {
        "glsfr" => {
            let q = match &flags.q {
                Some(text) => parse_f64_list(text)?,
                None => cfg.q.clone().unwrap_or_default(),
            };
            Ok(glsfr_from_params(&GlsfrParams::new(p, q)?)?)
        }
        "osfr" => {
            let iota = flags
                .iota
                .or(cfg.iota)
                .ok_or_else(|| invalid("osfr requires --iota"))?;
            Ok(osfr(p, iota)?)
        }
        "esfr-from-file" => {
            let path = flags
                .k_file
                .clone()
                .or_else(|| cfg.k_file.clone())
                .ok_or_else(|| invalid("esfr-from-file requires --k-file"))?;
            let text = fs::read_to_string(&path)
                .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
            let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
                .map_err(|e| invalid(format!("filter matrix {}: {e}", path.display())))?;
            let n = p + 1;
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(invalid(format!(
                    "filter matrix must be {n}x{n} for order {p}"
                )));
            }
            let k = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            let ns = gauss_legendre_points(n)?;
            let ops = build_operators(&ns)?;
            Ok(esfr_from_k(&EsfrK::new(p, k)?, &ops)?)
        }
        other => Err(invalid(format!(
            "unknown family '{other}' (expected glsfr, osfr, or esfr-from-file)"
        ))),
    }
}

// ---------------------------------------------------------------------------
// gen-correction
// ---------------------------------------------------------------------------

/// On-disk record for a generated pair; `CorrectionPair::from_json` re-loads
/// it coefficient-exactly (extra fields are ignored on parse).
#[derive(Serialize)]
struct CorrectionRecord<'a> {
    p: usize,
    family_tag: Family,
    hl_coeffs: &'a [f64],
    hr_coeffs: &'a [f64],
    report: &'a LebesgueReport,
}

fn cmd_gen_correction(args: &GenCorrectionArgs) -> CliResult<()> {
    let cfg: PairSourceConfig = load_config(&args.shared.config)?;
    let cp = resolve_pair(&args.pair, &cfg)?;
    ensure_out_dir(&args.shared)?;

    let report = validate_lebesgue(&cp);
    let record = CorrectionRecord {
        p: cp.p,
        family_tag: cp.family,
        hl_coeffs: &cp.hl_coeffs,
        hr_coeffs: &cp.hr_coeffs,
        report: &report,
    };
    let json = serde_json::to_string_pretty(&record)
        .map_err(|e| invalid(format!("serialization: {e}")))?;
    write_text(&args.shared.out.join("correction.json"), &(json + "\n"))?;

    let mut csv = String::from("xi,h_l,h_r\n");
    for i in 0..=200 {
        let xi = -1.0 + 2.0 * i as f64 / 200.0;
        let (hl, hr) = eval_correction(&cp, xi)?;
        let _ = writeln!(csv, "{},{},{}", fmt_f(xi), fmt_f(hl), fmt_f(hr));
    }
    write_text(&args.shared.out.join("correction_curve.csv"), &csv)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// dispersion
// ---------------------------------------------------------------------------

fn dispersion_rows(samples: &[SpectralSample], full_tau: Option<f64>) -> String {
    let mut csv = String::from(if full_tau.is_some() {
        "k_hat,mode_index,re,im,is_physical,c_real,c_imag\n"
    } else {
        "k_hat,mode_index,re,im,is_physical\n"
    });
    for s in samples {
        for (m, lambda) in s.eigenvalues.iter().enumerate() {
            let physical = if m == s.physical_index { 1 } else { 0 };
            match full_tau {
                None => {
                    let _ = writeln!(
                        csv,
                        "{},{m},{},{},{physical}",
                        fmt_f(s.k_hat),
                        fmt_f(lambda.re),
                        fmt_f(lambda.im)
                    );
                }
                Some(tau) => {
                    // Modified phase speed of each mode on the principal
                    // branch: c = i Log(mu) / (2 k tau).
                    let denom = 2.0 * s.k * tau;
                    let c_real = -lambda.arg() / denom;
                    let c_imag = lambda.norm().ln() / denom;
                    let _ = writeln!(
                        csv,
                        "{},{m},{},{},{physical},{},{}",
                        fmt_f(s.k_hat),
                        fmt_f(lambda.re),
                        fmt_f(lambda.im),
                        fmt_f(c_real),
                        fmt_f(c_imag)
                    );
                }
            }
        }
    }
    csv
}

fn cmd_dispersion(args: &DispersionArgs) -> CliResult<()> {
    let cfg: DispersionConfig = load_config(&args.shared.config)?;
    let cp = resolve_pair(&args.pair, &cfg.pair)?;
    let mode = args
        .mode
        .clone()
        .or(cfg.mode)
        .ok_or_else(|| invalid("missing required parameter: --mode"))?;
    let alpha = args.alpha.or(cfg.alpha).unwrap_or(1.0);
    let c = args.c.or(cfg.c).unwrap_or(1.0);
    let nu = args.nu.or(cfg.nu).unwrap_or(0.0);
    let poly_order = args.poly_order.or(cfg.poly_order).unwrap_or(4);
    let n_k = args.n_k.or(cfg.n_k).unwrap_or(256);
    if n_k == 0 {
        return Err(invalid("--n-k must be at least 1"));
    }
    let scheme = SchemeConfig::reference(cp.p, alpha, c, nu)?;

    let csv = match mode.as_str() {
        "semi-advection" => dispersion_rows(&semi_discrete_sweep(&scheme, &cp, n_k)?, None),
        "semi-diffusion" => {
            let mut samples = Vec::with_capacity(n_k);
            for m in 1..=n_k {
                let k_hat = std::f64::consts::PI * m as f64 / n_k as f64;
                samples.push(diffusion_dispersion(
                    &scheme,
                    &cp,
                    scheme.k_from_hat(k_hat),
                )?);
            }
            dispersion_rows(&samples, None)
        }
        "full" => {
            let tau = args
                .tau
                .or(cfg.tau)
                .ok_or_else(|| invalid("full mode requires --tau"))?;
            if !(tau > 0.0) {
                return Err(invalid(format!("--tau must be positive, got {tau}")));
            }
            dispersion_rows(
                &fully_discrete_sweep(&scheme, &cp, tau, n_k, poly_order)?,
                Some(tau),
            )
        }
        other => {
            return Err(invalid(format!(
                "unknown mode '{other}' (expected semi-advection, semi-diffusion, or full)"
            )))
        }
    };
    ensure_out_dir(&args.shared)?;
    write_text(&args.shared.out.join("dispersion.csv"), &csv)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// cfl-map
// ---------------------------------------------------------------------------

fn cmd_cfl_map(args: &CflMapArgs) -> CliResult<()> {
    let cfg: CflMapConfig = load_config(&args.shared.config)?;
    let p = args
        .p
        .or(cfg.p)
        .ok_or_else(|| invalid("missing required parameter: -p"))?;
    let q0_range = match &args.q0_range {
        Some(text) => parse_range(text)?,
        None => cfg
            .q0_range
            .map(|r| (r[0], r[1]))
            .ok_or_else(|| invalid("missing required parameter: --q0-range"))?,
    };
    let q1_range = match &args.q1_range {
        Some(text) => Some(parse_range(text)?),
        None => cfg.q1_range.map(|r| (r[0], r[1])),
    };
    let resolution = args.resolution.or(cfg.resolution).unwrap_or(21);
    let alpha = args.alpha.or(cfg.alpha).unwrap_or(1.0);
    let c = args.c.or(cfg.c).unwrap_or(1.0);
    let nu = args.nu.or(cfg.nu).unwrap_or(0.0);
    let poly_order = args.poly_order.or(cfg.poly_order).unwrap_or(4);
    let k_samples = args.k_samples.or(cfg.k_samples).unwrap_or(256);

    let scheme = SchemeConfig::reference(p, alpha, c, nu)?;
    let map = cfl_map(
        &scheme, q0_range, q1_range, resolution, poly_order, k_samples,
    )?;

    let mut csv = String::new();
    if map.q1.len() == 1 {
        // One free parameter: a plain two-column table.
        csv.push_str("q0,tau_hat_max\n");
        for (i, &q0) in map.q0.iter().enumerate() {
            let _ = writeln!(csv, "{},{}", fmt_f(q0), fmt_f(map.tau_hat_max[i][0]));
        }
    } else {
        // Matrix layout: header row carries q1, header column carries q0.
        csv.push_str("q0");
        for &q1 in &map.q1 {
            let _ = write!(csv, ",{}", fmt_f(q1));
        }
        csv.push('\n');
        for (i, &q0) in map.q0.iter().enumerate() {
            let _ = write!(csv, "{}", fmt_f(q0));
            for j in 0..map.q1.len() {
                let _ = write!(csv, ",{}", fmt_f(map.tau_hat_max[i][j]));
            }
            csv.push('\n');
        }
    }
    ensure_out_dir(&args.shared)?;
    write_text(&args.shared.out.join("cfl_map.csv"), &csv)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveSummary {
    p: usize,
    family_tag: Family,
    alpha: f64,
    c: f64,
    nu: f64,
    n_elem: usize,
    tau: f64,
    n_steps: usize,
    seed: u64,
    energy_start: f64,
    energy_end: f64,
    energy_drift_rel: f64,
    min_energy_rate: f64,
    max_energy_rate: f64,
    mass_drift_rel: f64,
    final_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    observed_order: Option<f64>,
}

fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let file_cfg: SolveConfig = load_config(&args.shared.config)?;
    let cp = resolve_pair(&args.pair, &file_cfg.pair)?;
    let alpha = args.alpha.or(file_cfg.alpha).unwrap_or(1.0);
    let c = args.c.or(file_cfg.c).unwrap_or(1.0);
    let nu = args.nu.or(file_cfg.nu).unwrap_or(0.0);
    let n_elem = args.n_elem.or(file_cfg.n_elem).unwrap_or(16);
    let t_final = args.t_final.or(file_cfg.t_final).unwrap_or(1.0);
    let record_every = args
        .record_every
        .or(file_cfg.record_every)
        .unwrap_or(1)
        .max(1);
    if !(t_final > 0.0) {
        return Err(invalid(format!(
            "--t-final must be positive, got {t_final}"
        )));
    }
    let refine = match &args.refine {
        Some(text) => Some(parse_usize_list(text)?),
        None => file_cfg.refine.clone(),
    };

    let mesh = Mesh1D::new(n_elem, 0.0, 1.0)?;
    let h = mesh.h();
    let disc = Discretization::for_mesh(mesh, alpha, c, nu, cp.clone())?;
    // A user-supplied tau is honored exactly (step count rounds); the derived
    // default shrinks slightly so the steps land exactly on t_final.
    let (tau, n_steps) = match args.tau.or(file_cfg.tau) {
        Some(t) if t > 0.0 => (t, ((t_final / t).round() as usize).max(1)),
        Some(t) => return Err(invalid(format!("--tau must be positive, got {t}"))),
        None => {
            // The mesh operator is (1/h) (2c Q_a + (4 nu / h) Q_d), so the
            // stability window of this run is the reference window at the
            // effective diffusion nu / h. safe_tau_hat verifies its
            // candidate: some schemes are stable only on a window detached
            // from the origin, where half the limit is not a safe step.
            let analysis = SchemeConfig::reference(cp.p, alpha, c, nu / h)?;
            let tau_hat = safe_tau_hat(&analysis, &cp, 0.5, 4, 256)?.ok_or_else(|| {
                invalid("correction pair has no stable time step; pass --tau explicitly")
            })?;
            let tau0 = tau_hat / (2.0 * c.abs() / h + 4.0 * nu / (h * h));
            let n = (t_final / tau0).ceil() as usize;
            (t_final / n as f64, n)
        }
    };

    // Advected-diffused sine with a unit mean, so relative mass drift is
    // well-defined: u(x, t) = 1 + exp(-nu k^2 t) sin(k (x - c t)), k = 2 pi.
    let exact =
        |x: f64, t: f64| 1.0 + (-nu * TWO_PI * TWO_PI * t).exp() * (TWO_PI * (x - c * t)).sin();
    let mut state = frlab::project_initial(&disc, |x| exact(x, 0.0));

    let mut csv = String::from("t,energy,mass,error\n");
    let mut record = |state: &frlab::SolverState| -> CliResult<(f64, f64, f64)> {
        let e = energy(&disc, state);
        let m = total_mass(&disc, state);
        let err = frlab::l2_error(&disc, state, |x| exact(x, state.t))?;
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt_f(state.t),
            fmt_f(e),
            fmt_f(m),
            fmt_f(err)
        );
        Ok((e, m, err))
    };

    let (energy_start, mass_start, _) = record(&state)?;
    let mut prev_energy = energy_start;
    let mut prev_t = 0.0;
    let mut min_rate = f64::INFINITY;
    let mut max_rate = f64::NEG_INFINITY;
    let mut mass_drift = 0.0_f64;
    let mut last = (energy_start, mass_start, 0.0);
    for step in 1..=n_steps {
        state = rk44_step(&disc, &state, tau)?;
        if !state.u.iter().all(|v| v.is_finite()) {
            return Err(CliError::Divergence {
                step,
                what: "non-finite solution value".into(),
            });
        }
        if step % record_every == 0 || step == n_steps {
            last = record(&state)?;
            let (e, m, _) = last;
            let rate = (e - prev_energy) / (state.t - prev_t);
            min_rate = min_rate.min(rate);
            max_rate = max_rate.max(rate);
            mass_drift = mass_drift.max(((m - mass_start) / mass_start).abs());
            prev_energy = e;
            prev_t = state.t;
        }
    }

    let observed_order = match refine {
        None => None,
        Some(meshes) => {
            let scheme = SchemeConfig::new(cp.p, alpha, c, nu, h)?;
            Some(convergence_study(&scheme, &cp, &meshes, t_final)?.observed_order)
        }
    };

    let (energy_end, _, final_error) = last;
    let summary = SolveSummary {
        p: cp.p,
        family_tag: cp.family,
        alpha,
        c,
        nu,
        n_elem,
        tau,
        n_steps,
        seed: args.shared.seed,
        energy_start,
        energy_end,
        energy_drift_rel: ((energy_end - energy_start) / energy_start).abs(),
        min_energy_rate: min_rate,
        max_energy_rate: max_rate,
        mass_drift_rel: mass_drift,
        final_error,
        observed_order,
    };
    ensure_out_dir(&args.shared)?;
    write_text(&args.shared.out.join("solve_history.csv"), &csv)?;
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| invalid(format!("serialization: {e}")))?;
    write_text(&args.shared.out.join("solve_summary.json"), &(json + "\n"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn dispatch(cli: &Cli) -> CliResult<()> {
    let shared = match &cli.command {
        Command::GenCorrection(a) => &a.shared,
        Command::Dispersion(a) => &a.shared,
        Command::CflMap(a) => &a.shared,
        Command::Solve(a) => &a.shared,
    };
    configure_jobs(shared)?;
    match &cli.command {
        Command::GenCorrection(a) => cmd_gen_correction(a),
        Command::Dispersion(a) => cmd_dispersion(a),
        Command::CflMap(a) => cmd_cfl_map(a),
        Command::Solve(a) => cmd_solve(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Divergence { step, what }) => {
            eprintln!("error: diverged at step {step}: {what}");
            ExitCode::from(3)
        }
    }
}
