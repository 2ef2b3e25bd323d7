//! Fully resolved run configurations. Every output file embeds one, and
//! re-running it reproduces the file.

use serde::{Deserialize, Serialize};

use cvmdi::channel::{db_to_transmissivity, Attack, ChannelParams};
use cvmdi::estimation::DEFAULT_Z;
use cvmdi::finite_size::{DEFAULT_EPS_PA, DEFAULT_EPS_PE};
use cvmdi::optimizer::{Axis, BlockConfig, Spacing};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

/// Where the estimator spreads come from in finite-size rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Analytic variances at the true channel.
    Analysis,
    /// Estimates and plug-in variances from one simulated block.
    Protocol,
}

/// Attack family as accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AttackArg {
    PureLoss,
    Collective,
    TwoModeOptimal,
}

impl From<AttackArg> for Attack {
    fn from(a: AttackArg) -> Self {
        match a {
            AttackArg::PureLoss => Attack::PureLoss,
            AttackArg::Collective => Attack::Collective,
            AttackArg::TwoModeOptimal => Attack::TwoModeOptimal,
        }
    }
}

/// Links and attack. `omega_*` are Eve's thermal variances, `1 + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub tau_a: f64,
    pub tau_b: f64,
    pub omega_a: f64,
    pub omega_b: f64,
    pub attack: AttackArg,
}

impl Scenario {
    pub fn channel(&self) -> CliResult<ChannelParams> {
        Ok(ChannelParams::with_attack(
            self.tau_a,
            self.tau_b,
            self.omega_a,
            self.omega_b,
            self.attack.into(),
        )?)
    }
}

/// How an attenuation axis maps onto the two links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    /// Alice keeps `tau_a`; Bob's link carries the attenuation.
    Asymmetric,
    /// Both links carry the attenuation.
    Symmetric,
}

impl Geometry {
    pub fn links(&self, tau_a: f64, attenuation_db: f64) -> CliResult<(f64, f64)> {
        let t = db_to_transmissivity(attenuation_db)?;
        Ok(match self {
            Geometry::Asymmetric => (tau_a, t),
            Geometry::Symmetric => (t, t),
        })
    }
}

/// Failure probabilities and confidence multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Security {
    pub eps_pe: f64,
    pub eps_pa: f64,
    pub z: f64,
}

impl Default for Security {
    fn default() -> Self {
        Self {
            eps_pe: DEFAULT_EPS_PE,
            eps_pa: DEFAULT_EPS_PA,
            z: DEFAULT_Z,
        }
    }
}

impl Security {
    pub fn block(&self, n_bar: u64) -> BlockConfig {
        BlockConfig {
            eps_pe: self.eps_pe,
            eps_pa: self.eps_pa,
            z: self.z,
            ..BlockConfig::new(n_bar)
        }
    }
}

/// A parameter that is either pinned or optimised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Fixed(f64),
    Optimize,
}

/// `start:stop:points` with evenly spaced values, or a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Range {
    pub fn parse(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"));
        let range = match parts.as_slice() {
            [x] => {
                let x = num(x)?;
                Range {
                    start: x,
                    stop: x,
                    points: 1,
                }
            }
            [a, b, n] => Range {
                start: num(a)?,
                stop: num(b)?,
                points: n.trim().parse().map_err(|e| format!("'{n}': {e}"))?,
            },
            _ => return Err(format!("expected start:stop:points or a single value, got '{s}'")),
        };
        Ok(range)
    }

    pub fn validate(&self, what: &str) -> CliResult<()> {
        if self.points == 0 {
            return Err(CliError::config(format!("{what}: zero-length grid")));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(CliError::config(format!("{what}: bounds must be finite")));
        }
        if self.points == 1 && self.start != self.stop {
            return Err(CliError::config(format!(
                "{what}: a one-point grid needs start == stop"
            )));
        }
        Ok(())
    }

    pub fn axis(&self, spacing: Spacing) -> Axis {
        let (lo, hi) = if self.start <= self.stop {
            (self.start, self.stop)
        } else {
            (self.stop, self.start)
        };
        Axis {
            lo,
            hi,
            points: self.points,
            spacing,
        }
    }

    /// Linearly spaced values from `start` to `stop` inclusive.
    pub fn linear_values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| match i {
                0 => self.start,
                i if i == self.points - 1 => self.stop,
                i => self.start + (self.stop - self.start) * i as f64 / last,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub scenario: Scenario,
    pub xi: f64,
    pub v_m: Setting,
    pub ratio: Setting,
    /// `None` for the asymptotic rate only.
    pub n_bar: Option<u64>,
    pub security: Security,
    pub mode: Mode,
    pub seed: u64,
    /// Estimate the channel from this dataset instead of the model.
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub geometry: Geometry,
    pub attenuation_db: Range,
    pub xi: f64,
    pub security: Security,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModscanConfig {
    pub scenario: Scenario,
    pub xi: f64,
    /// Log-spaced modulation variances.
    pub v_m: Range,
    pub ratio: Setting,
    pub n_bar: Option<u64>,
    pub security: Security,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub scenario: Scenario,
    pub v_m: f64,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub scenario: Scenario,
    pub xi: f64,
    pub n_bar: Option<u64>,
    pub security: Security,
    pub mode: Mode,
    pub seed: u64,
    pub v_m: Range,
    pub ratio: Range,
    pub refinement_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    Rate(RateConfig),
    Sweep(SweepConfig),
    Modscan(ModscanConfig),
    Simulate(SimulateConfig),
    Optimize(OptimizeConfig),
}

/// A command together with its output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub generator: String,
    pub format: Format,
    #[serde(flatten)]
    pub command: Command,
}

impl RunConfig {
    pub fn new(command: Command, format: Format) -> Self {
        Self {
            generator: concat!("cvmdi ", env!("CARGO_PKG_VERSION")).to_string(),
            format,
            command,
        }
    }
}
