//! Batch front-end behind the `msgate` binary.
//!
//! Every subcommand loads and validates all inputs first, computes, and only
//! then writes its outputs. JSON outputs carry a `meta` object and CSV
//! outputs start with `#` header lines (tool, version, config hash, units).
//! Exit codes: 0 ok, 2 configuration, 3 infeasible, 4 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::arobust::{nth_order_arobust, two_ion_arobust, AmSolution};
use crate::error::{Error, Result};
use crate::filter::{log_grid, spectral_error, FilterFunctionCurve, NoiseSpectrum};
use crate::kernel::{diagnostics, IonPair};
use crate::modes::{chain_modes, load_mode_spec, two_ion_modes, ModeFile, ModeSpec};
use crate::optimizer::{optimize_fm, OptimizerConfig};
use crate::pulse::{load_pulse, PulseFile, PulseProgram};
use crate::sim::{
    detuning_scan, lindblad_sim, repeated_gate_fidelities, repeated_gate_fit, NoiseModel, DEFAULT_SCHEDULE,
    NOISY_N_MAX,
};
use crate::TWO_PI;

pub const TOOL: &str = "msgate";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "msgate", version, about = "Robust and angle-robust MS gate pulse design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a mode file.
    Modes(ModesArgs),
    /// Optimize a robust FM pulse.
    Design(DesignArgs),
    /// Build an angle-robust composite from robust seeds.
    Arobust(ArobustArgs),
    /// Gate diagnostics of a pulse.
    Diagnose(DiagnoseArgs),
    /// Detuning-offset scan of a repeated gate.
    Scan(ScanArgs),
    /// Filter functions and optional spectral errors.
    Ff(FfArgs),
    /// Master-equation simulation and repeated-gate fit.
    Simulate(SimulateArgs),
    /// Run a JSON job file.
    Job { config: PathBuf },
}

/// A job file: `{"command": "<name>", ...arguments}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum JobConfig {
    Modes(ModesArgs),
    Design(DesignArgs),
    Arobust(ArobustArgs),
    Diagnose(DiagnoseArgs),
    Scan(ScanArgs),
    Ff(FfArgs),
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PairArgs {
    /// Mode file (JSON).
    #[arg(long)]
    pub modes: PathBuf,
    /// Addressed ions, e.g. `0,1`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0usize, 1])]
    #[serde(default = "default_pair")]
    pub pair: Vec<usize>,
}

fn default_pair() -> Vec<usize> {
    vec![0, 1]
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModesArgs {
    /// Number of ions; 2 uses the analytic COM/tilt formulas when `--tilt-hz` is given.
    #[arg(long)]
    pub ions: usize,
    /// Radial COM frequency for the two-ion form.
    #[arg(long)]
    #[serde(default)]
    pub com_hz: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub tilt_hz: Option<f64>,
    /// Axial trap frequency for the chain model.
    #[arg(long)]
    #[serde(default)]
    pub axial_hz: Option<f64>,
    /// Radial trap frequency for the chain model.
    #[arg(long)]
    #[serde(default)]
    pub radial_hz: Option<f64>,
    #[arg(long)]
    pub eta: f64,
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub drift_ratios: Option<Vec<f64>>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DesignArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub target: PairArgs,
    /// Optimizer configuration (JSON); defaults apply to missing fields.
    #[arg(long)]
    #[serde(default)]
    pub config: Option<PathBuf>,
    /// Inline configuration, used by job files.
    #[arg(skip)]
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_pulse: PathBuf,
    #[arg(long)]
    pub out_report: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ArobustArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub target: PairArgs,
    /// Robust π/8 half for the two-ion mirror construction.
    #[arg(long, conflicts_with = "seeds")]
    #[serde(default)]
    pub half: Option<PathBuf>,
    /// `n + 1` robust seeds for amplitude weighting.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub seeds: Option<Vec<PathBuf>>,
    /// Drift ratios; defaults to those in the mode file.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub out_pulse: PathBuf,
    #[arg(long)]
    pub out_solution: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub target: PairArgs,
    #[arg(long)]
    pub pulse: PathBuf,
    #[arg(long, default_value_t = 1)]
    #[serde(default = "one")]
    pub max_order: u32,
    /// Uniform offset applied first, Hz.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    #[serde(default)]
    pub offset_hz: f64,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub out_csv: Option<PathBuf>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScanArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub target: PairArgs,
    #[arg(long)]
    pub pulse: PathBuf,
    /// `start:step:stop` in Hz.
    #[arg(long, allow_hyphen_values = true)]
    pub offsets: String,
    #[arg(long, default_value_t = 1)]
    #[serde(default = "one_usize")]
    pub repeats: usize,
    #[arg(long)]
    #[serde(default)]
    pub noise: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub n_max: Option<usize>,
    #[arg(short, long)]
    pub out: PathBuf,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FfArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub target: PairArgs,
    #[arg(long)]
    pub pulse: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    #[serde(default = "f_lo")]
    pub f_min_hz: f64,
    #[arg(long, default_value_t = 1.0e6)]
    #[serde(default = "f_hi")]
    pub f_max_hz: f64,
    #[arg(long, default_value_t = 200)]
    #[serde(default = "n_pts")]
    pub points: usize,
    /// Noise spectrum (JSON) for spectral errors.
    #[arg(long)]
    #[serde(default)]
    pub spectrum: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub out_errors: Option<PathBuf>,
}

fn f_lo() -> f64 {
    10.0
}
fn f_hi() -> f64 {
    1.0e6
}
fn n_pts() -> usize {
    200
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub target: PairArgs,
    #[arg(long)]
    pub pulse: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub noise: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub n_max: Option<usize>,
    /// Gate counts for the repeated-gate fit.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub counts: Option<Vec<usize>>,
    #[arg(short, long)]
    pub out: PathBuf,
}

/// Exit status class of an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation { .. } | Error::Range { .. } | Error::Io { .. } | Error::Parse { .. } => 2,
        Error::Infeasible(_) | Error::Calibration(_) | Error::Structural(_) => 3,
        Error::Convergence { .. } | Error::Singular(_) | Error::Truncation { .. } | Error::StepSize { .. } => 4,
    }
}

fn kind(code: i32) -> &'static str {
    match code {
        2 => "config",
        3 => "infeasible",
        _ => "numerical",
    }
}

/// Parse arguments, run, and report; returns the process exit status.
pub fn main_with_args<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let job = match cli.command {
        Command::Job { config } => match read_json::<JobConfig>(&config) {
            Ok(j) => j,
            Err(e) => return report(&e),
        },
        Command::Modes(a) => JobConfig::Modes(a),
        Command::Design(a) => JobConfig::Design(a),
        Command::Arobust(a) => JobConfig::Arobust(a),
        Command::Diagnose(a) => JobConfig::Diagnose(a),
        Command::Scan(a) => JobConfig::Scan(a),
        Command::Ff(a) => JobConfig::Ff(a),
        Command::Simulate(a) => JobConfig::Simulate(a),
    };
    match run(&job) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    let code = exit_code(e);
    let msg = e.to_string().replace('\n', " ");
    eprintln!("{TOOL}: error[{}]: {msg}", kind(code));
    code
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// SHA-256 of the canonical JSON of the job.
pub fn config_hash(job: &JobConfig) -> String {
    let text = serde_json::to_string(job).expect("job serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn meta(hash: &str, units: &str) -> Value {
    json!({ "tool": TOOL, "version": VERSION, "config_hash": hash, "units": units })
}

fn with_meta<T: Serialize>(body: &T, hash: &str, units: &str) -> String {
    let mut v = serde_json::to_value(body).expect("output serializes");
    if let Value::Object(map) = &mut v {
        map.insert("meta".into(), meta(hash, units));
    }
    serde_json::to_string_pretty(&v).expect("output serializes") + "\n"
}

fn csv_header(hash: &str, units: &str) -> String {
    format!("# tool={TOOL} version={VERSION}\n# config_hash={hash}\n# units={units}\n")
}

/// Pending output files, written only after all computation succeeds.
struct Outputs(Vec<(PathBuf, String)>);

impl Outputs {
    fn push(&mut self, path: &Path, text: String) {
        self.0.push((path.to_path_buf(), text));
    }

    fn write(self) -> Result<()> {
        for (path, text) in self.0 {
            std::fs::write(&path, text).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }
}

fn check_out_dir(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = parent {
        if !dir.is_dir() {
            return Err(Error::validation("output", format!("directory {} does not exist", dir.display())));
        }
    }
    Ok(())
}

fn load_target(t: &PairArgs) -> Result<(ModeSpec, IonPair)> {
    let modes = load_mode_spec(&t.modes)?;
    if t.pair.len() != 2 {
        return Err(Error::validation("pair", "give exactly two ion indices"));
    }
    let pair = IonPair::new(t.pair[0], t.pair[1], &modes)?;
    Ok((modes, pair))
}

/// Parse `start:step:stop` (Hz) into rad/s offsets.
pub fn parse_offsets(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::validation("offsets", format!("expected start:step:stop in Hz, got '{spec}'"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (start, step, stop) = match parts.as_slice() {
        [single] => (*single, 1.0, *single),
        [a, s, b] => (*a, *s, *b),
        _ => return Err(bad()),
    };
    if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err(Error::validation("offsets", "more than 100000 points"));
    }
    Ok((0..=n).map(|i| TWO_PI * (start + step * i as f64)).collect())
}

/// Execute one job.
pub fn run(job: &JobConfig) -> Result<()> {
    let hash = config_hash(job);
    let mut out = Outputs(Vec::new());
    match job {
        JobConfig::Modes(a) => {
            check_out_dir(&a.out)?;
            let spec = match (a.com_hz, a.tilt_hz, a.axial_hz, a.radial_hz) {
                (Some(c), Some(t), None, None) => {
                    if a.ions != 2 {
                        return Err(Error::validation("ions", "COM/tilt form is for two ions"));
                    }
                    two_ion_modes(TWO_PI * c, TWO_PI * t, a.eta)?
                }
                (None, None, Some(ax), Some(r)) => chain_modes(a.ions, TWO_PI * ax, TWO_PI * r, a.eta)?,
                _ => {
                    return Err(Error::validation(
                        "modes",
                        "give either --com-hz and --tilt-hz, or --axial-hz and --radial-hz",
                    ))
                }
            };
            let spec = match &a.drift_ratios {
                Some(r) => spec.with_drift_ratios(r.clone())?,
                None => spec,
            };
            out.push(&a.out, with_meta(&ModeFile::from(&spec), &hash, "frequencies in Hz"));
        }
        JobConfig::Design(a) => {
            let (modes, pair) = load_target(&a.target)?;
            let mut cfg = match (&a.config, &a.optimizer) {
                (Some(path), _) => read_json::<OptimizerConfig>(path)?,
                (None, Some(c)) => c.clone(),
                (None, None) => OptimizerConfig::default(),
            };
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            cfg.validate(&modes)?;
            check_out_dir(&a.out_pulse)?;
            check_out_dir(&a.out_report)?;
            let report = optimize_fm(&cfg, &modes, pair)?;
            out.push(&a.out_pulse, with_meta(&PulseFile::from(&report.pulse), &hash, "seconds, Hz"));
            out.push(
                &a.out_report,
                with_meta(&report.to_record(), &hash, "pulse in seconds/Hz; derivatives in s"),
            );
        }
        JobConfig::Arobust(a) => {
            let (modes, pair) = load_target(&a.target)?;
            check_out_dir(&a.out_pulse)?;
            check_out_dir(&a.out_solution)?;
            let sol: AmSolution = match (&a.half, &a.seeds) {
                (Some(h), None) => {
                    let half = load_pulse(h)?;
                    two_ion_arobust(&half, &modes, pair)?
                }
                (None, Some(paths)) => {
                    if paths.len() < 2 {
                        return Err(Error::validation("seeds", "need at least two seed pulses"));
                    }
                    let seeds: Vec<PulseProgram> = paths.iter().map(load_pulse).collect::<Result<_>>()?;
                    let ratios = a.ratios.clone().unwrap_or_else(|| modes.drift_ratios().to_vec());
                    nth_order_arobust(&seeds, &modes, pair, &ratios, (seeds.len() - 1) as u32)?
                }
                _ => return Err(Error::validation("arobust", "give exactly one of --half or --seeds")),
            };
            out.push(&a.out_pulse, with_meta(&PulseFile::from(&sol.composite), &hash, "seconds, Hz"));
            out.push(&a.out_solution, with_meta(&sol.to_record(), &hash, "betas dimensionless; residuals rad"));
        }
        JobConfig::Diagnose(a) => {
            let (modes, pair) = load_target(&a.target)?;
            let pulse = load_pulse(&a.pulse)?;
            if a.max_order < 1 {
                return Err(Error::validation("max_order", "must be ≥ 1"));
            }
            check_out_dir(&a.out)?;
            if let Some(p) = &a.out_csv {
                check_out_dir(p)?;
            }
            let pulse = crate::pulse::apply_offset(&pulse, crate::DetuningOffset { epsilon: TWO_PI * a.offset_hz });
            let d = diagnostics(&pulse, &modes, pair, a.max_order)?;
            out.push(&a.out, with_meta(&d.to_record(), &hash, "alpha dimensionless; derivatives in s^j"));
            if let Some(p) = &a.out_csv {
                out.push(p, csv_header(&hash, "derivatives in s^j") + &d.to_csv());
            }
        }
        JobConfig::Scan(a) => {
            let (modes, pair) = load_target(&a.target)?;
            let pulse = load_pulse(&a.pulse)?;
            let offsets = parse_offsets(&a.offsets)?;
            let noise = a.noise.as_ref().map(|p| read_json::<NoiseModel>(p)).transpose()?;
            if let Some(n) = &noise {
                n.validate(&modes)?;
            }
            check_out_dir(&a.out)?;
            let scan = detuning_scan(
                &pulse,
                &modes,
                pair,
                &offsets,
                a.repeats,
                noise.as_ref(),
                a.n_max.unwrap_or(NOISY_N_MAX),
            )?;
            let header = csv_header(&hash, "offset in Hz; populations dimensionless");
            out.push(&a.out, header + &format!("# repeats={}\n", a.repeats) + &scan.to_csv());
        }
        JobConfig::Ff(a) => {
            let (modes, pair) = load_target(&a.target)?;
            let pulse = load_pulse(&a.pulse)?;
            if !(a.f_min_hz > 0.0 && a.f_max_hz > a.f_min_hz && a.points >= 3) {
                return Err(Error::validation("grid", "need 0 < f_min < f_max and ≥ 3 points"));
            }
            let spectrum = a.spectrum.as_ref().map(|p| read_json::<NoiseSpectrum>(p)).transpose()?;
            if let Some(s) = &spectrum {
                s.validate()?;
            }
            check_out_dir(&a.out)?;
            if let Some(p) = &a.out_errors {
                check_out_dir(p)?;
            }
            let curve = FilterFunctionCurve::compute(&pulse, &modes, pair, &log_grid(a.f_min_hz, a.f_max_hz, a.points))?;
            out.push(&a.out, csv_header(&hash, "freq in Hz; filter functions dimensionless") + &curve.to_csv());
            if let (Some(s), Some(p)) = (&spectrum, &a.out_errors) {
                let e = spectral_error(&curve, s)?;
                out.push(p, with_meta(&e, &hash, "errors dimensionless"));
            }
        }
        JobConfig::Simulate(a) => {
            let (modes, pair) = load_target(&a.target)?;
            let pulse = load_pulse(&a.pulse)?;
            let noise = match &a.noise {
                Some(p) => read_json::<NoiseModel>(p)?,
                None => NoiseModel::noiseless(modes.num_modes()),
            };
            noise.validate(&modes)?;
            let counts = a.counts.clone().unwrap_or_else(|| DEFAULT_SCHEDULE.to_vec());
            check_out_dir(&a.out)?;
            let n_max = a.n_max.unwrap_or(NOISY_N_MAX);
            let single = lindblad_sim(&pulse, &modes, pair, &noise, &vec![n_max; modes.num_modes()])?;
            let fids = repeated_gate_fidelities(&pulse, &modes, pair, &counts, Some(&noise), n_max)?;
            let fit = repeated_gate_fit(&counts, &fids)?;
            let rho: Vec<Vec<[f64; 2]>> = single
                .spin_density
                .iter()
                .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                .collect();
            let body = json!({
                "observables": single.observables,
                "spin_density": rho,
                "mode_nbar": single.mode_nbar,
                "top_population": single.top_population,
                "trace_error": single.trace_error,
                "counts": counts,
                "fidelities": fids,
                "fit": fit,
            });
            out.push(&a.out, with_meta(&body, &hash, "populations dimensionless"));
        }
    }
    out.write()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_parse_in_hz() {
        let o = parse_offsets("-1000:100:1000").unwrap();
        assert_eq!(o.len(), 21);
        assert!((o[0] + TWO_PI * 1000.0).abs() < 1e-9);
        assert!((o[20] - TWO_PI * 1000.0).abs() < 1e-9);
        assert!(parse_offsets("1:0:2").is_err());
        assert!(parse_offsets("a:b").is_err());
    }

    #[test]
    fn exit_codes_by_class() {
        assert_eq!(exit_code(&Error::validation("x", "y")), 2);
        assert_eq!(exit_code(&Error::Infeasible("x".into())), 3);
        assert_eq!(exit_code(&Error::Singular("x".into())), 4);
    }
}
