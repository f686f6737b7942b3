//! Command-line workbench: scenario files in, result tables and designs out.
//!
//! Exit status is 0 on success, 1 when the scenario is invalid or its rate
//! target cannot be met (a diagnostic JSON is written), and 2 on usage, I/O or
//! solver failures.

pub mod config;
pub mod dto;
pub mod export;

use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use isac_beamkit::bench::{
    default_angle_grid, power_pattern, sweep, SchemeId, SweepSpec, SweepVar,
};
use isac_beamkit::cvxkit::fully_digital_capacity;
use isac_beamkit::isac_opt::ao_p1_with;
use isac_beamkit::ofdm_opt::ao_p2_with;
use isac_beamkit::pcrb::{assemble_pfim, pcrb_theta};
use isac_beamkit::sensing_opt::{ao_p0_with, AoOptions, AoReport};
use isac_beamkit::{Error, HybridDesign, Scenario};
use serde::Serialize;
use serde_json::json;
use thiserror::Error as ThisError;

use crate::dto::{DesignDto, PfimDto};
use crate::export::Format;

pub const THREADS_ENV: &str = "ISAC_BEAMKIT_THREADS";

#[derive(Debug, Clone, PartialEq, ThisError)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("rate target {target:.6} nats/s/Hz is infeasible (best achievable {max_rate:.6}, fully-digital capacity {capacity:.6})")]
    Infeasible { target: f64, max_rate: f64, capacity: f64 },
    #[error("i/o: {0}")]
    Io(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Infeasible { .. } => 1,
            CliError::Usage(_) | CliError::Io(_) | CliError::Solver(_) => 2,
        }
    }

    /// Machine-readable description of the failure.
    pub fn diagnostic(&self) -> serde_json::Value {
        match self {
            CliError::Infeasible {
                target,
                max_rate,
                capacity,
            } => json!({
                "status": "infeasible",
                "message": self.to_string(),
                "rate_target_nats": target,
                "rate_target_bits": target / LN_2,
                "max_rate_nats": max_rate,
                "max_rate_bits": max_rate / LN_2,
                "capacity_nats": capacity,
                "capacity_bits": capacity / LN_2,
            }),
            CliError::Config(_) => json!({ "status": "invalid", "message": self.to_string() }),
            _ => json!({ "status": "error", "message": self.to_string() }),
        }
    }
}

fn lib_err(scenario: Option<&Scenario>, e: Error) -> CliError {
    match e {
        Error::Infeasible { target, max_rate } => CliError::Infeasible {
            target,
            max_rate,
            capacity: scenario.map_or(f64::NAN, |s| {
                fully_digital_capacity(s.channels(), s.power, s.noise_comm)
            }),
        },
        Error::Domain { .. } | Error::Dimension(_) | Error::Invalid(_) => CliError::Config(e.to_string()),
        _ => CliError::Solver(e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// PCRB and PFIM blocks of a stored (or the all-ones) design.
    Pcrb,
    /// Sensing-only alternating optimization (rate target ignored).
    OptimizeSensing,
    /// Narrowband rate-constrained optimization.
    OptimizeIsac,
    /// Wideband rate-constrained optimization.
    OptimizeOfdm,
    /// Table over power, rate target or RF split for several schemes.
    Sweep,
    /// Received power pattern of a stored or freshly optimized design.
    Pattern,
    /// Every benchmark scheme on the scenario as given.
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SweepVarArg {
    PowerDbm,
    RateBits,
    NRfTx,
}

/// Parsed command line.
#[derive(Debug, Clone, Parser)]
#[command(name = "isac-beamkit", version, about = "PCRB-driven hybrid beamforming for sensing and ISAC")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Scenario override `key=value` (repeatable; dotted keys for nested fields).
    #[arg(long = "set")]
    pub overrides: Vec<String>,
    /// Replaces the scenario seed (and with it the channel draw).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Stored design for `pcrb` and `pattern`.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Swept quantity for `sweep`.
    #[arg(long, value_enum)]
    pub var: Option<SweepVarArg>,
    /// Comma-separated ascending values for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Comma-separated scheme names; `sweep` defaults to `proposed`, `benchmark` to all.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Vec<String>,
    /// RF chain budget n_rf_tx + n_rf_rx for an n_rf_tx sweep (default: the scenario's).
    #[arg(long)]
    pub total_rf: Option<usize>,
    /// Record wall-clock time per table cell (makes tables run-dependent).
    #[arg(long)]
    pub timing: bool,
}

fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} = `{v}` is not a thread count"))),
        Err(_) => Ok(0),
    }
}

fn load(cfg: &RunConfig) -> Result<Scenario, CliError> {
    let mut overrides = cfg.overrides.clone();
    if let Some(seed) = cfg.seed {
        overrides.push(format!("seed={seed}"));
    }
    config::load_scenario(&cfg.scenario, &overrides)
}

fn read_design(path: &Path, scenario: &Scenario) -> Result<HybridDesign, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    // optimizer records carry the design under "design"
    if let Some(inner) = doc.get_mut("design") {
        doc = inner.take();
    }
    let dto: DesignDto = serde_path_to_error::deserialize(doc)
        .map_err(|e| CliError::Config(format!("{}: {}: {}", path.display(), e.path(), e.inner())))?;
    let design = dto.to_design()?;
    design
        .validate(&scenario.arrays, scenario.power)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if design.r_bb.len() != scenario.subcarriers {
        return Err(CliError::Config(format!(
            "{}: {} digital covariances for {} subcarriers",
            path.display(),
            design.r_bb.len(),
            scenario.subcarriers
        )));
    }
    Ok(design)
}

fn parse_schemes(names: &[String], fallback: Vec<SchemeId>) -> Result<Vec<SchemeId>, CliError> {
    if names.is_empty() {
        return Ok(fallback);
    }
    names
        .iter()
        .map(|n| n.trim().parse::<SchemeId>().map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

pub fn all_schemes() -> Vec<SchemeId> {
    vec![
        SchemeId::FullyDigitalOptimal,
        SchemeId::FDReceive,
        SchemeId::FDTransmit,
        SchemeId::RandomPhase(isac_beamkit::bench::DEFAULT_RANDOM_DRAWS),
        SchemeId::DirectionAlignment,
        SchemeId::PartialPriorCrb,
        SchemeId::ProposedAO,
    ]
}

#[derive(Serialize)]
struct OptimizeRecord<'a> {
    command: &'a str,
    pcrb_theta: f64,
    rate_nats: f64,
    rate_bits: f64,
    rate_target_nats: f64,
    iterations: usize,
    converged: bool,
    trace: &'a [f64],
    design: DesignDto,
}

/// Rejects reports whose design breaks the power budget, the hardware
/// structure or the rate target.
fn check_report(scenario: &Scenario, rep: &AoReport) -> Result<(), CliError> {
    rep.design
        .validate(&scenario.arrays, scenario.power)
        .map_err(|e| CliError::Solver(format!("optimizer returned an invalid design: {e}")))?;
    let slack = 1e-6 * scenario.rate_target.max(1.0);
    if rep.rate < scenario.rate_target - slack {
        return Err(CliError::Solver(format!(
            "optimizer returned rate {} below the target {}",
            rep.rate, scenario.rate_target
        )));
    }
    if !(rep.pcrb.is_finite() && rep.pcrb > 0.0) {
        return Err(CliError::Solver(format!("optimizer returned PCRB {}", rep.pcrb)));
    }
    Ok(())
}

fn json_bytes(v: &impl Serialize) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn optimize(command: Command, scenario: &Scenario) -> Result<AoReport, CliError> {
    let opts = AoOptions {
        seed: scenario.seed,
        ..AoOptions::default()
    };
    let res = match command {
        Command::OptimizeSensing => {
            let mut s = scenario.clone();
            s.rate_target = 0.0;
            ao_p0_with(&s, &opts)
        }
        Command::OptimizeIsac => ao_p1_with(scenario, &opts),
        _ => ao_p2_with(scenario, &opts),
    };
    let rep = res.map_err(|e| lib_err(Some(scenario), e))?;
    let mut s = scenario.clone();
    if command == Command::OptimizeSensing {
        s.rate_target = 0.0;
    }
    check_report(&s, &rep)?;
    Ok(rep)
}

/// Runs one command and returns the artifact bytes.
pub fn run(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    if cfg.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let tabular = matches!(cfg.command, Command::Sweep | Command::Pattern | Command::Benchmark);
    if cfg.format == Format::Csv && !tabular {
        return Err(CliError::Usage("CSV output is available for sweep, pattern and benchmark".into()));
    }
    let threads = threads_from_env()?;
    let scenario = load(cfg)?;
    match cfg.command {
        Command::Pcrb => {
            let design = match &cfg.design {
                Some(p) => read_design(p, &scenario)?,
                None => HybridDesign::all_ones(&scenario.arrays, scenario.subcarriers, scenario.power),
            };
            let pfim = assemble_pfim(&scenario, &design).map_err(|e| lib_err(None, e))?;
            let pcrb = pcrb_theta(&pfim).map_err(|e| lib_err(None, e))?;
            json_bytes(&json!({ "pcrb_theta": pcrb, "pfim": PfimDto::from_pfim(&pfim) }))
        }
        Command::OptimizeSensing | Command::OptimizeIsac | Command::OptimizeOfdm => {
            let rep = optimize(cfg.command, &scenario)?;
            let name = cfg.command.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
            json_bytes(&OptimizeRecord {
                command: &name,
                pcrb_theta: rep.pcrb,
                rate_nats: rep.rate,
                rate_bits: rep.rate / LN_2,
                rate_target_nats: if cfg.command == Command::OptimizeSensing { 0.0 } else { scenario.rate_target },
                iterations: rep.iterations(),
                converged: rep.converged,
                trace: &rep.trace,
                design: DesignDto::from_design(&rep.design),
            })
        }
        Command::Pattern => {
            let design = match &cfg.design {
                Some(p) => read_design(p, &scenario)?,
                None => optimize(Command::OptimizeOfdm, &scenario)?.design,
            };
            export::pattern_bytes(&power_pattern(&scenario, &design, &default_angle_grid()), cfg.format)
        }
        Command::Sweep | Command::Benchmark => {
            let (var, values, schemes) = if cfg.command == Command::Sweep {
                let var = match cfg.var {
                    Some(SweepVarArg::PowerDbm) => SweepVar::PowerDbm,
                    Some(SweepVarArg::RateBits) => SweepVar::RateBits,
                    Some(SweepVarArg::NRfTx) => SweepVar::NRfTx {
                        total: cfg
                            .total_rf
                            .unwrap_or(scenario.arrays.n_rf_tx + scenario.arrays.n_rf_rx),
                    },
                    None => return Err(CliError::Usage("sweep needs --var".into())),
                };
                if cfg.values.is_empty() {
                    return Err(CliError::Usage("sweep needs --values".into()));
                }
                (var, cfg.values.clone(), parse_schemes(&cfg.schemes, vec![SchemeId::ProposedAO])?)
            } else {
                (
                    SweepVar::RateBits,
                    vec![scenario.rate_target / LN_2],
                    parse_schemes(&cfg.schemes, all_schemes())?,
                )
            };
            let mut spec = SweepSpec::new(scenario.clone(), var, values, schemes);
            spec.trials = cfg.trials;
            spec.threads = threads;
            spec.timing = cfg.timing;
            spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let rows = sweep(&spec).map_err(|e| lib_err(Some(&scenario), e))?;
            match cfg.format {
                Format::Csv => export::rows_to_csv(&rows),
                Format::Json => export::rows_to_json(&rows),
            }
        }
    }
}

/// Runs a command, writes its artifact (or diagnostic) and returns the exit status.
pub fn execute(cfg: &RunConfig) -> i32 {
    let written = run(cfg).and_then(|bytes| match &cfg.out {
        Some(p) => export::write_bytes(p, &bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes).map_err(|e| CliError::Io(e.to_string()))
        }
    });
    match written {
        Ok(()) => 0,
        Err(e) => {
            let diag = e.diagnostic();
            if let (CliError::Infeasible { .. }, Some(p)) = (&e, &cfg.out) {
                let _ = json_bytes(&diag).and_then(|b| export::write_bytes(p, &b));
            }
            eprintln!("{diag}");
            e.exit_code()
        }
    }
}
