//! `dce`: spectra, rates and validation runs from the command line.
//!
//! Exit status: 0 on success, 1 for invalid input, 2 for numerical failure.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dce_core::oracle::finite_tau_spectrum;
use dce_core::params::{to_natural, ParamOverrides};
use dce_core::spectrum::{engine_for, MirrorToyConfig, NORMALIZATION_TAG};
use dce_core::{
    dirichlet_toy, photon_rate, spectral_density, Error, GammaSign, NaturalParams, QuadSpec, RateConvention,
    SpectralResult,
};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use config::{EffectiveConfig, Layer};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "DCE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "dce", version, about = "Particle creation by a time-dependent Robin boundary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectral density split by perturbative order.
    Spectrum(RunArgs),
    /// Photon rates, band rates and convention-free ratios.
    Rates(RatesArgs),
    /// Spectrum of the boundary modulated only to first order in the drive.
    Toy(RunArgs),
    /// Monochromatic limit against direct finite-tau quadrature.
    OracleCheck(OracleArgs),
    /// Natural-unit parameters and regime checks.
    ParamsAudit(RunArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sign {
    Positive,
    Negative,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Named parameter set (`squid`).
    #[arg(long)]
    preset: Option<String>,
    /// `key = value` or JSON configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Robin length in meters.
    #[arg(long)]
    gamma0_len: Option<f64>,
    /// Drive frequency in Hz.
    #[arg(long)]
    omega0_hz: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Envelope decay time in seconds.
    #[arg(long)]
    tau: Option<f64>,
    /// Phase velocity in m/s.
    #[arg(long)]
    v: Option<f64>,
    /// Perturbative order N.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, value_enum)]
    gamma0_sign: Option<Sign>,
    /// Lowest grid frequency in units of omega0.
    #[arg(long)]
    grid_min: Option<f64>,
    /// Highest grid frequency in units of omega0.
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_count: Option<usize>,
    /// Artifact path; without it the artifact goes to stdout and the summary to stderr.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct RatesArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Multiplier of the frequency integral (1 counts per rad/s, 1/(2 pi) per Hz).
    #[arg(long, default_value_t = 1.0)]
    angular_measure: f64,
    /// Emission time in units of tau.
    #[arg(long, default_value_t = 1.0)]
    time_divisor: f64,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Check frequencies in units of omega0.
    #[arg(long, value_delimiter = ',', default_values_t = [0.15, 0.3, 0.45, 0.6, 0.8, 1.2, 1.4, 1.55, 1.7, 1.85])]
    at: Vec<f64>,
    /// omega0 * tau used for both evaluations (replaces tau).
    #[arg(long, default_value_t = 2000.0)]
    omega0_tau: f64,
    #[arg(long, default_value_t = 1e-9)]
    rel_tol: f64,
}

struct Failure(Error);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e)
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure(Error::Validation {
        field: "output".into(),
        reason: format!("{}: {e}", path.display()),
    })
}

fn layer(args: &RunArgs) -> Result<Layer, Failure> {
    let mut merged = match &args.preset {
        Some(name) => Layer::preset(name)?,
        None => Layer::default(),
    };
    if let Some(path) = &args.config {
        merged = merged.merge(&config::load_file(path)?);
    }
    let flags = Layer {
        params: ParamOverrides {
            gamma0_len: args.gamma0_len,
            omega0_hz: args.omega0_hz,
            epsilon: args.epsilon,
            tau: args.tau,
            v: args.v,
            order: args.order,
            gamma0_sign: args.gamma0_sign.map(|s| match s {
                Sign::Positive => GammaSign::Positive,
                Sign::Negative => GammaSign::Negative,
            }),
        },
        grid_min: args.grid_min,
        grid_max: args.grid_max,
        grid_count: args.grid_count,
    };
    Ok(merged.merge(&flags))
}

fn digest(command: &str, cfg: &EffectiveConfig) -> String {
    let canonical = json!({ "command": command, "config": cfg }).to_string();
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write via a sibling temporary file and rename, so readers never see a
/// partial artifact.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| io_failure(path, std::io::ErrorKind::InvalidInput.into()))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| std::fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(io_failure(path, e));
    }
    Ok(())
}

struct Run {
    command: &'static str,
    cfg: EffectiveConfig,
    params: NaturalParams,
    digest: String,
}

fn prepare(command: &'static str, args: &RunArgs) -> Result<Run, Failure> {
    let (cfg, physical) = EffectiveConfig::new(&layer(args)?)?;
    let params = to_natural(&physical)?;
    let digest = digest(command, &cfg);
    Ok(Run { command, cfg, params, digest })
}

fn emit(run: &Run, args: &RunArgs, artifact: Vec<u8>, mut summary: Value) -> Result<(), Failure> {
    summary["command"] = json!(run.command);
    summary["digest"] = json!(run.digest);
    match &args.output {
        Some(path) => {
            write_atomic(path, &artifact)?;
            summary["output"] = json!(path.display().to_string());
            println!("{summary}");
        }
        None => {
            std::io::stdout().write_all(&artifact).map_err(|e| io_failure(Path::new("<stdout>"), e))?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn json_artifact<T: Serialize>(run: &Run, body: &T) -> Vec<u8> {
    let mut v = json!({ "config": run.cfg, "digest": run.digest, "normalization_tag": NORMALIZATION_TAG });
    let body = serde_json::to_value(body).expect("plain data serializes");
    if let (Some(obj), Value::Object(extra)) = (v.as_object_mut(), body) {
        for (k, x) in extra {
            obj.entry(k).or_insert(x);
        }
    }
    let mut out = serde_json::to_vec_pretty(&v).expect("plain data serializes");
    out.push(b'\n');
    out
}

fn spectrum_artifact(run: &Run, args: &RunArgs, result: &SpectralResult) -> Result<(), Failure> {
    let bytes = match args.format {
        Format::Csv => {
            let mut buf = Vec::new();
            result.write_csv(&mut buf).expect("writing to memory");
            buf
        }
        Format::Json => json_artifact(run, result),
    };
    let total = result.total();
    let peak = total.iter().cloned().fold(0.0, f64::max);
    let summary = json!({ "order": run.cfg.order, "points": result.grid.len(), "peak_total_over_tau": peak });
    emit(run, args, bytes, summary)
}

fn spectrum(args: &RunArgs) -> Result<(), Failure> {
    let run = prepare("spectrum", args)?;
    let grid = run.cfg.grid().build(run.params.omega0())?;
    let result = spectral_density(&run.params, &grid, run.params.order())?;
    spectrum_artifact(&run, args, &result)
}

fn toy(args: &RunArgs) -> Result<(), Failure> {
    let run = prepare("toy", args)?;
    let grid = run.cfg.grid().build(run.params.omega0())?;
    let result = dirichlet_toy(&run.params, &grid)?;
    spectrum_artifact(&run, args, &result)
}

fn rates(args: &RatesArgs) -> Result<(), Failure> {
    let run = prepare("rates", &args.run)?;
    let grid = run.cfg.grid().build(run.params.omega0())?;
    let result = spectral_density(&run.params, &grid, run.params.order())?;
    let convention = RateConvention {
        angular_measure: args.angular_measure,
        time_divisor_in_tau: args.time_divisor,
    };
    let report = photon_rate(&result, &convention)?;
    let bytes = match args.run.format {
        Format::Json => json_artifact(&run, &report),
        Format::Csv => {
            let w0 = run.params.omega0();
            let mut s = String::from("band_lo_over_omega0,band_hi_over_omega0,rate,fraction\n");
            let top = result.grid.last().copied().unwrap_or(0.0) / w0;
            for (m, (rate, frac)) in report.band_rates.iter().zip(&report.ratios.band_fractions).enumerate() {
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    m,
                    ((m + 1) as f64).min(top),
                    dce_core::spectrum::format_sig12(*rate),
                    frac.map_or("nan".to_string(), dce_core::spectrum::format_sig12)
                ));
            }
            s.into_bytes()
        }
    };
    let summary = json!({
        "order": run.cfg.order,
        "total_rate": report.total_rate,
        "enhancement": report.ratios.enhancement,
        "convention": report.convention,
    });
    emit(&run, &args.run, bytes, summary)
}

#[derive(Serialize)]
struct OracleRow {
    omega_over_omega0: f64,
    mono: f64,
    oracle: f64,
    rel_error: f64,
    oracle_error_estimate: f64,
}

fn oracle_check(args: &OracleArgs) -> Result<(), Failure> {
    let mut run = prepare("oracle-check", &args.run)?;
    let order = run.params.order().min(dce_core::oracle::ORACLE_MAX_ORDER);
    let params = run.params.with_tau(args.omega0_tau / run.params.omega0())?.with_order(order)?;
    let quad = QuadSpec { rel_tol: args.rel_tol, ..QuadSpec::default() };
    let engine = engine_for(&params, order, MirrorToyConfig::default())?;
    let rows = args
        .at
        .iter()
        .map(|&x| {
            let w = x * params.omega0();
            let o = finite_tau_spectrum(w, &params, order, &quad)?;
            let m = engine.total_at(w)?;
            Ok(OracleRow {
                omega_over_omega0: x,
                mono: m,
                oracle: o.value,
                rel_error: (m - o.value) / o.value,
                oracle_error_estimate: o.error,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    run.digest = digest(&format!("oracle-check:{}:{}:{:?}", args.omega0_tau, args.rel_tol, args.at), &run.cfg);
    let worst = rows.iter().map(|r| r.rel_error.abs()).fold(0.0, f64::max);
    let body = json!({ "order": order, "omega0_tau": args.omega0_tau, "rows": rows });
    let summary = json!({ "order": order, "max_rel_error": worst });
    emit(&run, &args.run, json_artifact(&run, &body), summary)
}

fn params_audit(args: &RunArgs) -> Result<(), Failure> {
    let run = prepare("params-audit", args)?;
    let p = &run.params;
    let body = json!({
        "gamma0_s": p.gamma0(),
        "gamma0_signed_s": p.signed_gamma0(),
        "omega0_rad_s": p.omega0(),
        "gamma0_omega0": p.gamma0_omega0(),
        "omega0_tau": p.omega0_tau(),
        "monochromatic": p.check_monochromatic(dce_core::params::MONOCHROMATIC_THRESHOLD).is_ok(),
        "rate_convention": RateConvention::default(),
    });
    let summary = json!({ "gamma0_omega0": p.gamma0_omega0(), "omega0_tau": p.omega0_tau() });
    emit(&run, args, json_artifact(&run, &body), summary)
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Failure(Error::Validation {
                field: THREADS_ENV.into(),
                reason: format!("expected a positive integer, got `{value}`"),
            })
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure(Error::Validation { field: THREADS_ENV.into(), reason: e.to_string() }))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let help = matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            return ExitCode::from(if help { 0 } else { 1 });
        }
    };
    let outcome = configure_threads().and_then(|_| match &cli.command {
        Command::Spectrum(a) => spectrum(a),
        Command::Rates(a) => rates(a),
        Command::Toy(a) => toy(a),
        Command::OracleCheck(a) => oracle_check(a),
        Command::ParamsAudit(a) => params_audit(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
