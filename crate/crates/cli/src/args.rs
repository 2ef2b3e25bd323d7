//! Command-line grammar and its translation into a [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use cvmdi::channel::db_to_transmissivity;

use crate::config::{
    AttackArg, Command, Format, Geometry, Mode, ModscanConfig, OptimizeConfig, Range, RateConfig, RunConfig, Scenario,
    Security, Setting, SimulateConfig, SweepConfig,
};
use crate::error::{CliError, CliResult};

/// Key rates, sweeps and estimator checks for CV-MDI-QKD.
#[derive(Debug, Parser)]
#[command(
    name = "cvmdi",
    version,
    args_conflicts_with_subcommands = true,
    arg_required_else_help = true
)]
pub struct Cli {
    /// Re-run the configuration embedded in a previous output file.
    #[arg(long, value_name = "FILE")]
    pub from_metadata: Option<PathBuf>,

    /// Output file (written atomically); standard output if absent.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Sub>,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Key rate at one point with every intermediate quantity.
    Rate(RateArgs),
    /// Optimised rates against attenuation (asymptotic, N = 1e9, N = 1e6).
    Sweep(SweepArgs),
    /// Rate against the modulation variance.
    Modscan(ModscanArgs),
    /// Monte Carlo check of the estimator statistics.
    Simulate(SimulateArgs),
    /// Grid-plus-refinement optimisation with the full trace.
    Optimize(OptimizeArgs),
}

/// Accepts plain integers and integral scientific notation such as `1e9`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("'{s}' is not a count"))?;
    if x >= 0.0 && x.fract() == 0.0 && x < 1.8e19 {
        Ok(x as u64)
    } else {
        Err(format!("'{s}' is not a non-negative integer"))
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    parse_count(s).and_then(|n| usize::try_from(n).map_err(|e| e.to_string()))
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    /// Transmissivity of Alice's link.
    #[arg(long)]
    pub tau_a: Option<f64>,
    /// Eve's thermal variance on Alice's link (SNU).
    #[arg(long)]
    pub omega_a: Option<f64>,
    /// Eve's thermal variance on Bob's link (SNU).
    #[arg(long)]
    pub omega_b: Option<f64>,
    /// Thermal excess noise ε; sets ω_A = ω_B = 1 + ε.
    #[arg(long, conflicts_with_all = ["omega_a", "omega_b"])]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub attack: Option<AttackArg>,
}

#[derive(Debug, Clone, Args)]
pub struct BobLinkArgs {
    /// Transmissivity of Bob's link.
    #[arg(long, conflicts_with = "bob_db")]
    pub tau_b: Option<f64>,
    /// Attenuation of Bob's link in dB.
    #[arg(long)]
    pub bob_db: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SecurityArgs {
    #[arg(long)]
    pub eps_pa: Option<f64>,
    #[arg(long)]
    pub eps_pe: Option<f64>,
    /// Confidence multiplier of the worst-case parameters.
    #[arg(long)]
    pub z: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub attack: AttackArgs,
    #[command(flatten)]
    pub bob: BobLinkArgs,
    #[command(flatten)]
    pub security: SecurityArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Block size N; default 1e9.
    #[arg(long, value_parser = parse_count, conflicts_with = "asymptotic")]
    pub n_bar: Option<u64>,
    /// Report only the asymptotic rate.
    #[arg(long)]
    pub asymptotic: bool,
    /// Modulation variance (SNU); optimised if absent.
    #[arg(long, conflicts_with = "optimize_vm")]
    pub v_m: Option<f64>,
    #[arg(long)]
    pub optimize_vm: bool,
    /// Key fraction r = n/N; optimised if absent.
    #[arg(long, conflicts_with = "optimize_ratio")]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub optimize_ratio: bool,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_parser = parse_count)]
    pub seed: Option<u64>,
    /// Estimate the channel from a CSV dataset (columns a_q,a_p,b_q,b_p,r_q,r_p).
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub attack: AttackArgs,
    #[command(flatten)]
    pub security: SecurityArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Bob's attenuation grid `start:stop:points` (dB); Alice keeps --tau-a.
    #[arg(long, conflicts_with = "common_db", value_parser = Range::parse)]
    pub bob_db: Option<Range>,
    /// Attenuation of both links `start:stop:points` (dB).
    #[arg(long, value_parser = Range::parse)]
    pub common_db: Option<Range>,
}

#[derive(Debug, Clone, Args)]
pub struct ModscanArgs {
    #[command(flatten)]
    pub attack: AttackArgs,
    #[command(flatten)]
    pub bob: BobLinkArgs,
    #[command(flatten)]
    pub security: SecurityArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Block size N; default 1e6.
    #[arg(long, value_parser = parse_count, conflicts_with = "asymptotic")]
    pub n_bar: Option<u64>,
    #[arg(long)]
    pub asymptotic: bool,
    /// Log-spaced modulation grid `start:stop:points`.
    #[arg(long, value_parser = Range::parse)]
    pub v_m: Option<Range>,
    /// Key fraction; optimised at every point if absent.
    #[arg(long, conflicts_with = "optimize_ratio")]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub optimize_ratio: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub attack: AttackArgs,
    #[command(flatten)]
    pub bob: BobLinkArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    pub v_m: Option<f64>,
    /// Signals per trial.
    #[arg(long, value_parser = parse_usize)]
    pub m: Option<usize>,
    #[arg(long, value_parser = parse_usize)]
    pub trials: Option<usize>,
    #[arg(long, value_parser = parse_count)]
    pub seed: Option<u64>,
    /// Also write the data of trial 0 as CSV.
    #[arg(long, value_name = "FILE")]
    pub dump_dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub attack: AttackArgs,
    #[command(flatten)]
    pub bob: BobLinkArgs,
    #[command(flatten)]
    pub security: SecurityArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Block size N; default 1e9.
    #[arg(long, value_parser = parse_count, conflicts_with = "asymptotic")]
    pub n_bar: Option<u64>,
    #[arg(long)]
    pub asymptotic: bool,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_parser = parse_count)]
    pub seed: Option<u64>,
    /// Coarse log-spaced modulation grid `start:stop:points`.
    #[arg(long, value_parser = Range::parse)]
    pub v_m: Option<Range>,
    /// Coarse key-fraction grid `start:stop:points`.
    #[arg(long, value_parser = Range::parse)]
    pub ratio: Option<Range>,
    #[arg(long)]
    pub refinement_rounds: Option<usize>,
}

/// Figure defaults: Alice close to the relay, ε = 0.01, optimal attack.
pub const DEFAULT_TAU_A: f64 = 0.98;
pub const DEFAULT_OMEGA: f64 = 1.01;
pub const DEFAULT_XI: f64 = 0.98;
pub const DEFAULT_BOB_DB: f64 = 2.0;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SWEEP_DB: Range = Range {
    start: 0.0,
    stop: 10.0,
    points: 21,
};
pub const DEFAULT_V_M_RANGE: Range = Range {
    start: 1.0,
    stop: 1000.0,
    points: 25,
};
pub const DEFAULT_R_RANGE: Range = Range {
    start: 0.1,
    stop: 0.9,
    points: 9,
};

impl AttackArgs {
    fn scenario(&self, tau_b: f64, default_attack: AttackArg) -> Scenario {
        let (omega_a, omega_b) = match self.epsilon {
            Some(e) => (1.0 + e, 1.0 + e),
            None => (
                self.omega_a.unwrap_or(DEFAULT_OMEGA),
                self.omega_b.unwrap_or(DEFAULT_OMEGA),
            ),
        };
        let attack = self.attack.unwrap_or(default_attack);
        let (omega_a, omega_b) = if attack == AttackArg::PureLoss {
            (1.0, 1.0)
        } else {
            (omega_a, omega_b)
        };
        Scenario {
            tau_a: self.tau_a.unwrap_or(DEFAULT_TAU_A),
            tau_b,
            omega_a,
            omega_b,
            attack,
        }
    }
}

impl BobLinkArgs {
    fn tau_b(&self, default: f64) -> CliResult<f64> {
        match (self.tau_b, self.bob_db) {
            (Some(t), _) => Ok(t),
            (None, Some(db)) => Ok(db_to_transmissivity(db)?),
            (None, None) => Ok(default),
        }
    }
}

impl SecurityArgs {
    fn resolve(&self) -> Security {
        let d = Security::default();
        Security {
            eps_pe: self.eps_pe.unwrap_or(d.eps_pe),
            eps_pa: self.eps_pa.unwrap_or(d.eps_pa),
            z: self.z.unwrap_or(d.z),
        }
    }
}

fn setting(value: Option<f64>) -> Setting {
    value.map_or(Setting::Optimize, Setting::Fixed)
}

fn block(n_bar: Option<u64>, asymptotic: bool, default: u64) -> Option<u64> {
    if asymptotic {
        None
    } else {
        Some(n_bar.unwrap_or(default))
    }
}

impl Sub {
    /// Resolves every default and returns the configuration to run.
    pub fn into_config(self) -> CliResult<RunConfig> {
        let default_bob = db_to_transmissivity(DEFAULT_BOB_DB)?;
        let (command, format) = match self {
            Sub::Rate(a) => (
                Command::Rate(RateConfig {
                    scenario: a.attack.scenario(a.bob.tau_b(default_bob)?, AttackArg::TwoModeOptimal),
                    xi: a.xi.unwrap_or(DEFAULT_XI),
                    v_m: setting(a.v_m),
                    ratio: setting(a.ratio),
                    n_bar: block(a.n_bar, a.asymptotic, 1_000_000_000),
                    security: a.security.resolve(),
                    mode: a.mode.unwrap_or(Mode::Analysis),
                    seed: a.seed.unwrap_or(DEFAULT_SEED),
                    dataset: a.dataset,
                }),
                a.output.format.unwrap_or(Format::Json),
            ),
            Sub::Sweep(a) => {
                let (geometry, range) = match (a.bob_db, a.common_db) {
                    (_, Some(r)) => (Geometry::Symmetric, r),
                    (Some(r), None) => (Geometry::Asymmetric, r),
                    (None, None) => (Geometry::Asymmetric, DEFAULT_SWEEP_DB),
                };
                let scenario = a.attack.scenario(1.0, AttackArg::TwoModeOptimal);
                (
                    Command::Sweep(SweepConfig {
                        scenario,
                        geometry,
                        attenuation_db: range,
                        xi: a.xi.unwrap_or(DEFAULT_XI),
                        security: a.security.resolve(),
                    }),
                    a.output.format.unwrap_or(Format::Csv),
                )
            }
            Sub::Modscan(a) => (
                Command::Modscan(ModscanConfig {
                    scenario: a.attack.scenario(a.bob.tau_b(0.7)?, AttackArg::PureLoss),
                    xi: a.xi.unwrap_or(DEFAULT_XI),
                    v_m: a.v_m.unwrap_or(DEFAULT_V_M_RANGE),
                    ratio: setting(a.ratio),
                    n_bar: block(a.n_bar, a.asymptotic, 1_000_000),
                    security: a.security.resolve(),
                }),
                a.output.format.unwrap_or(Format::Csv),
            ),
            Sub::Simulate(a) => (
                Command::Simulate(SimulateConfig {
                    scenario: a.attack.scenario(a.bob.tau_b(0.5)?, AttackArg::PureLoss),
                    v_m: a.v_m.unwrap_or(10.0),
                    m: a.m.unwrap_or(100_000),
                    trials: a.trials.unwrap_or(10_000),
                    seed: a.seed.unwrap_or(DEFAULT_SEED),
                }),
                a.output.format.unwrap_or(Format::Json),
            ),
            Sub::Optimize(a) => (
                Command::Optimize(OptimizeConfig {
                    scenario: a.attack.scenario(a.bob.tau_b(default_bob)?, AttackArg::TwoModeOptimal),
                    xi: a.xi.unwrap_or(DEFAULT_XI),
                    n_bar: block(a.n_bar, a.asymptotic, 1_000_000_000),
                    security: a.security.resolve(),
                    mode: a.mode.unwrap_or(Mode::Analysis),
                    seed: a.seed.unwrap_or(DEFAULT_SEED),
                    v_m: a.v_m.unwrap_or(DEFAULT_V_M_RANGE),
                    ratio: a.ratio.unwrap_or(DEFAULT_R_RANGE),
                    refinement_rounds: a.refinement_rounds.unwrap_or(2),
                }),
                a.output.format.unwrap_or(Format::Json),
            ),
        };
        Ok(RunConfig::new(command, format))
    }

    /// Side output requested on the command line but not part of the
    /// reproducible configuration.
    pub fn dataset_dump(&self) -> Option<&PathBuf> {
        match self {
            Sub::Simulate(a) => a.dump_dataset.as_ref(),
            _ => None,
        }
    }
}

impl Cli {
    /// The configuration to run: from the metadata file or from the flags.
    pub fn resolve(self) -> CliResult<(RunConfig, Option<PathBuf>)> {
        match (self.from_metadata, self.command) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                Ok((crate::output::read_metadata(&text)?, None))
            }
            (None, Some(sub)) => {
                let dump = sub.dataset_dump().cloned();
                Ok((sub.into_config()?, dump))
            }
            (None, None) => Err(CliError::config("a subcommand or --from-metadata is required")),
        }
    }
}
