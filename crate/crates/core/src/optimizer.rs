//! Maximisation of the key rate over the modulation variance and the
//! key/estimation split.
//!
//! A coarse grid over `(V_M, r)` is followed by rounds of local grid
//! refinement around the incumbent: each round shrinks the span of both
//! axes by `shrink` and keeps the point count, staying inside the
//! declared bounds.

use alloc::vec::Vec;

use crate::channel::{noise_from_attack, ChannelParams, NoiseVars};
use crate::error::{Error, Result};
use crate::estimation::{analysis_report, estimate_channel, ChannelTruth, EstimationReport, VarianceMode, DEFAULT_Z};
use crate::finite_size::{
    finite_size_breakdown, finite_size_key_rate, FiniteSizeBreakdown, FiniteSizeParams, DEFAULT_EPS_PA, DEFAULT_EPS_PE,
};
use crate::keyrate::{asymptotic_breakdown, asymptotic_key_rate, ProtocolParams, RateBreakdown};
use crate::simulator::{sample_dataset, SimulationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Spacing {
    Linear,
    Log,
}

/// Evenly spaced candidates on `[lo, hi]`, in linear or log space.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl Axis {
    pub const fn linear(lo: f64, hi: f64, points: usize) -> Self {
        Self {
            lo,
            hi,
            points,
            spacing: Spacing::Linear,
        }
    }

    pub const fn log(lo: f64, hi: f64, points: usize) -> Self {
        Self {
            lo,
            hi,
            points,
            spacing: Spacing::Log,
        }
    }

    pub fn single(value: f64) -> Self {
        Self::linear(value, value, 1)
    }

    pub fn validate(&self, what: &'static str) -> Result<()> {
        if self.points == 0 {
            return Err(Error::Config("grid must have at least one point"));
        }
        if !(self.lo <= self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::domain(what, self.lo, "lo <= hi, both finite"));
        }
        if self.spacing == Spacing::Log && !(self.lo > 0.0) {
            return Err(Error::domain(what, self.lo, "> 0 on a log axis"));
        }
        Ok(())
    }

    fn warp(&self, x: f64) -> f64 {
        match self.spacing {
            Spacing::Linear => x,
            Spacing::Log => libm::log(x),
        }
    }

    fn unwarp(&self, u: f64) -> f64 {
        match self.spacing {
            Spacing::Linear => u,
            Spacing::Log => libm::exp(u),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return alloc::vec![self.lo];
        }
        let (a, b) = (self.warp(self.lo), self.warp(self.hi));
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| match i {
                0 => self.lo,
                i if i == self.points - 1 => self.hi,
                i => self.unwarp(a + (b - a) * i as f64 / last),
            })
            .collect()
    }

    /// The axis for the next refinement round: span divided by `shrink`,
    /// centred on `center`, clipped to `bounds`.
    fn refined(&self, center: f64, shrink: f64, bounds: (f64, f64)) -> Self {
        let half = 0.5 * (self.warp(self.hi) - self.warp(self.lo)) / shrink;
        let c = self.warp(center);
        let (blo, bhi) = (self.warp(bounds.0), self.warp(bounds.1));
        // clipped ends are taken verbatim so that a bound stays a grid point
        let end = |u: f64, bound_u: f64, bound: f64, clip: fn(f64, f64) -> bool| {
            if clip(u, bound_u) {
                bound
            } else {
                self.unwarp(u)
            }
        };
        Self {
            lo: end(c - half, blo, bounds.0, |u, b| u <= b),
            hi: end(c + half, bhi, bounds.1, |u, b| u >= b),
            points: self.points,
            spacing: self.spacing,
        }
    }
}

/// Block-size settings shared by the finite-size rate models.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockConfig {
    pub n_bar: u64,
    pub eps_pe: f64,
    pub eps_pa: f64,
    pub z: f64,
    pub delta_prefactor: f64,
}

impl BlockConfig {
    pub fn new(n_bar: u64) -> Self {
        Self {
            n_bar,
            eps_pe: DEFAULT_EPS_PE,
            eps_pa: DEFAULT_EPS_PA,
            z: DEFAULT_Z,
            delta_prefactor: 1.0,
        }
    }

    pub fn split(&self, r: f64) -> Result<FiniteSizeParams> {
        FiniteSizeParams::from_ratio(self.n_bar, r)?
            .with_eps_pe(self.eps_pe)?
            .with_eps_pa(self.eps_pa)?
            .with_z(self.z)?
            .with_delta_prefactor(self.delta_prefactor)
    }
}

/// Which key rate is being maximised.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum RateModel {
    /// `K∞` at the true parameters; `r` is fixed to 1.
    Asymptotic,
    /// Finite-size rate with confidence intervals from the analytic
    /// variances at the true parameters.
    Analysis(BlockConfig),
    /// Finite-size rate from estimates on a simulated block of `m`
    /// signals, with plug-in variances.
    Protocol { block: BlockConfig, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimizationSpec {
    pub channel: ChannelParams,
    pub xi: f64,
    pub model: RateModel,
    pub v_m_grid: Axis,
    pub r_grid: Axis,
    /// Refinement never leaves these ranges.
    pub v_m_bounds: (f64, f64),
    pub r_bounds: (f64, f64),
    pub refinement_rounds: usize,
    pub shrink: f64,
}

/// Modulation grid `10^0 .. 10^3`, 25 points, log-spaced.
pub const DEFAULT_V_M_GRID: Axis = Axis::log(1.0, 1e3, 25);
/// Split grid `0.1 .. 0.9`, 9 points.
pub const DEFAULT_R_GRID: Axis = Axis::linear(0.1, 0.9, 9);
/// Refinement may move `r` anywhere in this range.
pub const DEFAULT_R_BOUNDS: (f64, f64) = (1e-3, 1.0 - 1e-3);

impl OptimizationSpec {
    pub fn new(channel: ChannelParams, xi: f64, model: RateModel) -> Self {
        Self {
            channel,
            xi,
            model,
            v_m_grid: DEFAULT_V_M_GRID,
            r_grid: DEFAULT_R_GRID,
            v_m_bounds: (DEFAULT_V_M_GRID.lo, DEFAULT_V_M_GRID.hi),
            r_bounds: DEFAULT_R_BOUNDS,
            refinement_rounds: 2,
            shrink: 4.0,
        }
    }

    /// Uses `grid` for `V_M` and confines refinement to its range.
    pub fn with_v_m_grid(mut self, grid: Axis) -> Self {
        self.v_m_grid = grid;
        self.v_m_bounds = (grid.lo, grid.hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        ProtocolParams::new(self.v_m_grid.lo, self.xi)?;
        self.v_m_grid.validate("v_m grid")?;
        if !(self.shrink > 1.0) {
            return Err(Error::domain("shrink", self.shrink, "> 1"));
        }
        let (vlo, vhi) = self.v_m_bounds;
        if !(vlo > 0.0 && vlo <= self.v_m_grid.lo && vhi >= self.v_m_grid.hi) {
            return Err(Error::Config("v_m bounds must contain the v_m grid"));
        }
        if !matches!(self.model, RateModel::Asymptotic) {
            self.r_grid.validate("r grid")?;
            let (rlo, rhi) = self.r_bounds;
            if !(rlo > 0.0 && rhi < 1.0 && rlo <= self.r_grid.lo && rhi >= self.r_grid.hi) {
                return Err(Error::Config("r bounds must lie in (0, 1) and contain the r grid"));
            }
        }
        Ok(())
    }

    fn r_axis(&self) -> Axis {
        match self.model {
            RateModel::Asymptotic => Axis::single(1.0),
            _ => self.r_grid,
        }
    }
}

/// Key rate of one `(V_M, r)` point under the spec's rate model.
pub fn evaluate_rate(spec: &OptimizationSpec, v_m: f64, r: f64) -> Result<f64> {
    let p = ProtocolParams::new(v_m, spec.xi)?;
    let ch = &spec.channel;
    let noise = noise_from_attack(ch)?;
    match spec.model {
        RateModel::Asymptotic => asymptotic_key_rate(&p, ch.tau_a, ch.tau_b, &noise),
        RateModel::Analysis(block) => {
            let fs = block.split(r)?;
            let truth = ChannelTruth {
                tau_a: ch.tau_a,
                tau_b: ch.tau_b,
                noise,
            };
            let report = analysis_report(&truth, v_m, fs.m, fs.z);
            finite_size_key_rate(&p, &report, &fs)
        }
        RateModel::Protocol { block, seed } => {
            let fs = block.split(r)?;
            let report = protocol_estimate(ch, v_m, &fs, seed)?;
            finite_size_key_rate(&p, &report, &fs)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FiniteEvaluation {
    pub block: FiniteSizeParams,
    pub estimation: EstimationReport,
    pub breakdown: FiniteSizeBreakdown,
}

/// Every intermediate quantity behind [`evaluate_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointEvaluation {
    pub v_m: f64,
    pub r: f64,
    pub noise: NoiseVars,
    /// `K∞` and its terms at the true parameters.
    pub asymptotic: RateBreakdown,
    /// `None` for the asymptotic model.
    pub finite: Option<FiniteEvaluation>,
    /// The rate the model optimises; equal to [`evaluate_rate`].
    pub rate: f64,
}

/// Like [`evaluate_rate`] but keeps the intermediate quantities.
pub fn evaluate_point(spec: &OptimizationSpec, v_m: f64, r: f64) -> Result<PointEvaluation> {
    let p = ProtocolParams::new(v_m, spec.xi)?;
    let ch = &spec.channel;
    let noise = noise_from_attack(ch)?;
    let asymptotic = asymptotic_breakdown(&p, ch.tau_a, ch.tau_b, &noise)?;
    let finite = match spec.model {
        RateModel::Asymptotic => None,
        RateModel::Analysis(block) => {
            let fs = block.split(r)?;
            let truth = ChannelTruth {
                tau_a: ch.tau_a,
                tau_b: ch.tau_b,
                noise,
            };
            let estimation = analysis_report(&truth, v_m, fs.m, fs.z);
            Some(FiniteEvaluation {
                block: fs,
                estimation,
                breakdown: finite_size_breakdown(&p, &estimation, &fs)?,
            })
        }
        RateModel::Protocol { block, seed } => {
            let fs = block.split(r)?;
            let estimation = protocol_estimate(ch, v_m, &fs, seed)?;
            Some(FiniteEvaluation {
                block: fs,
                estimation,
                breakdown: finite_size_breakdown(&p, &estimation, &fs)?,
            })
        }
    };
    let rate = finite.map_or(asymptotic.key_rate, |f| f.breakdown.key_rate);
    Ok(PointEvaluation {
        v_m,
        r,
        noise,
        asymptotic,
        finite,
        rate,
    })
}

/// Estimates from one simulated block of `fs.m` signals (trial 0 of `seed`).
fn protocol_estimate(ch: &ChannelParams, v_m: f64, fs: &FiniteSizeParams, seed: u64) -> Result<EstimationReport> {
    let sim = SimulationSpec {
        channel: *ch,
        v_m,
        m: usize::try_from(fs.m).map_err(|_| Error::Config("estimation block too large"))?,
        trials: 1,
        seed,
    };
    let data = sample_dataset(&sim, 0)?;
    Ok(estimate_channel(&data, v_m, VarianceMode::Protocol, fs.z)?.report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Evaluation {
    pub v_m: f64,
    pub r: f64,
    pub rate: f64,
}

impl Evaluation {
    /// Higher rate wins; ties go to smaller `V_M`, then larger `r`.
    pub fn beats(&self, other: &Evaluation) -> bool {
        if self.rate != other.rate {
            return self.rate > other.rate;
        }
        if self.v_m != other.v_m {
            return self.v_m < other.v_m;
        }
        self.r > other.r
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimizationResult {
    pub v_m_star: f64,
    pub r_star: f64,
    pub k_star: f64,
    /// False when no evaluated point has a positive rate.
    pub positive_rate: bool,
    /// Every evaluated point, in evaluation order.
    pub trace: Vec<Evaluation>,
}

fn scan<F>(v_axis: &Axis, r_axis: &Axis, eval: &mut F, trace: &mut Vec<Evaluation>) -> Result<Evaluation>
where
    F: FnMut(&[(f64, f64)]) -> Vec<Result<f64>>,
{
    let points: Vec<(f64, f64)> = v_axis
        .values()
        .into_iter()
        .flat_map(|v_m| r_axis.values().into_iter().map(move |r| (v_m, r)))
        .collect();
    let rates = eval(&points);
    if rates.len() != points.len() {
        return Err(Error::Config("evaluator returned the wrong number of rates"));
    }
    let mut best: Option<Evaluation> = None;
    for (&(v_m, r), rate) in points.iter().zip(rates) {
        let rate = rate?;
        if rate.is_nan() {
            return Err(Error::NonFinite { what: "key rate" });
        }
        let e = Evaluation { v_m, r, rate };
        trace.push(e);
        if best.as_ref().map_or(true, |b| e.beats(b)) {
            best = Some(e);
        }
    }
    Ok(best.expect("axes are non-empty"))
}

/// Coarse grid search followed by `refinement_rounds` local refinements.
pub fn optimize_key_rate(spec: &OptimizationSpec) -> Result<OptimizationResult> {
    optimize_key_rate_with(spec, |points| {
        points.iter().map(|&(v_m, r)| evaluate_rate(spec, v_m, r)).collect()
    })
}

/// Same search, with the grid evaluation delegated to `eval`. It receives
/// each grid as a slice of `(V_M, r)` points and must return one rate per
/// point, in order; it may evaluate them concurrently. The reduction runs
/// in grid order, so the result does not depend on how `eval` schedules.
pub fn optimize_key_rate_with<F>(spec: &OptimizationSpec, mut eval: F) -> Result<OptimizationResult>
where
    F: FnMut(&[(f64, f64)]) -> Vec<Result<f64>>,
{
    spec.validate()?;
    let mut trace = Vec::new();
    let mut v_axis = spec.v_m_grid;
    let mut r_axis = spec.r_axis();
    let mut best = scan(&v_axis, &r_axis, &mut eval, &mut trace)?;

    for _ in 0..spec.refinement_rounds {
        v_axis = v_axis.refined(best.v_m, spec.shrink, spec.v_m_bounds);
        if !matches!(spec.model, RateModel::Asymptotic) {
            r_axis = r_axis.refined(best.r, spec.shrink, spec.r_bounds);
        }
        let candidate = scan(&v_axis, &r_axis, &mut eval, &mut trace)?;
        if candidate.beats(&best) {
            best = candidate;
        }
    }

    Ok(OptimizationResult {
        v_m_star: best.v_m,
        r_star: best.r,
        k_star: best.rate,
        positive_rate: best.rate > 0.0,
        trace,
    })
}
