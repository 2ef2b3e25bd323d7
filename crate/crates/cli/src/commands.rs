//! The five subcommands. Each validates its configuration, runs the
//! library (grid points and trials in parallel, reduced in index order)
//! and returns an [`Output`].

use rayon::prelude::*;
use serde::Serialize;

use cvmdi::channel::{ChannelParams, NoiseVars};
use cvmdi::estimation::{estimate_channel, VarianceMode};
use cvmdi::finite_size::{finite_size_breakdown, FiniteSizeParams};
use cvmdi::keyrate::{asymptotic_breakdown, ProtocolParams, RateBreakdown};
use cvmdi::optimizer::{
    evaluate_point, evaluate_rate, optimize_key_rate_with, Axis, Evaluation, FiniteEvaluation, OptimizationResult,
    OptimizationSpec, PointEvaluation, RateModel, Spacing, DEFAULT_R_BOUNDS,
};
use cvmdi::simulator::{aggregate, trial_record, Comparison, SimulationSpec, Tolerance, TrialStatistics};

use crate::config::{
    Command, Mode, ModscanConfig, OptimizeConfig, RateConfig, RunConfig, Security, Setting, SimulateConfig, SweepConfig,
};
use crate::dataset::load_dataset;
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Output, Table};

/// Block sizes of the two finite-size sweep curves.
pub const SWEEP_BLOCKS: [u64; 2] = [1_000_000_000, 1_000_000];

pub fn run(config: &RunConfig) -> CliResult<Output> {
    match &config.command {
        Command::Rate(c) => cmd_rate(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Modscan(c) => cmd_modscan(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Optimize(c) => cmd_optimize(c),
    }
}

fn check_xi(xi: f64) -> CliResult<()> {
    ProtocolParams::new(1.0, xi)?;
    Ok(())
}

fn check_security(s: &Security) -> CliResult<()> {
    s.block(2).split(0.5)?;
    Ok(())
}

fn model(n_bar: Option<u64>, security: &Security, mode: Mode, seed: u64) -> RateModel {
    match (n_bar, mode) {
        (None, _) => RateModel::Asymptotic,
        (Some(n), Mode::Analysis) => RateModel::Analysis(security.block(n)),
        (Some(n), Mode::Protocol) => RateModel::Protocol {
            block: security.block(n),
            seed,
        },
    }
}

/// Evaluates a batch of grid points in parallel, keeping their order.
fn parallel<'a>(spec: &'a OptimizationSpec) -> impl FnMut(&[(f64, f64)]) -> Vec<cvmdi::Result<f64>> + 'a {
    move |points| points.par_iter().map(|&(v_m, r)| evaluate_rate(spec, v_m, r)).collect()
}

fn optimize(spec: &OptimizationSpec) -> CliResult<OptimizationResult> {
    Ok(optimize_key_rate_with(spec, parallel(spec))?)
}

/// Pins `V_M` and/or `r` where the setting is fixed.
fn constrain(mut spec: OptimizationSpec, v_m: Setting, ratio: Setting) -> CliResult<OptimizationSpec> {
    if let Setting::Fixed(v) = v_m {
        spec = spec.with_v_m_grid(Axis::single(v));
    }
    if let Setting::Fixed(r) = ratio {
        if !(r > 0.0 && r < 1.0) {
            return Err(CliError::config(format!("--ratio {r} must lie in (0, 1)")));
        }
        spec.r_grid = Axis::single(r);
        spec.r_bounds = (r, r);
    }
    Ok(spec)
}

#[derive(Debug, Serialize)]
struct Optimum {
    v_m_star: f64,
    r_star: f64,
    k_star: f64,
    evaluations: usize,
}

#[derive(Debug, Serialize)]
struct RateReport {
    /// `None` when the channel was estimated from a dataset.
    channel: Option<ChannelParams>,
    noise: NoiseVars,
    v_m: f64,
    /// Key fraction; absent for the asymptotic rate.
    r: Option<f64>,
    asymptotic: RateBreakdown,
    finite: Option<FiniteEvaluation>,
    key_rate: f64,
    positive_rate: bool,
    optimization: Option<Optimum>,
}

pub fn cmd_rate(c: &RateConfig) -> CliResult<Output> {
    check_xi(c.xi)?;
    check_security(&c.security)?;
    let report = match &c.dataset {
        Some(path) => rate_from_dataset(c, path)?,
        None => rate_from_model(c)?,
    };
    let mut table = Table::new(vec![
        "v_m",
        "r",
        "n_bar",
        "mutual_information",
        "holevo_bound",
        "k_asymptotic",
        "delta",
        "k_finite",
        "key_rate",
        "positive_rate",
    ]);
    let f = report.finite.as_ref();
    table.push(vec![
        report.v_m.into(),
        report.r.into(),
        f.map_or(Cell::Text(String::new()), |f| f.block.n_bar.into()),
        report.asymptotic.mutual_information.into(),
        report.asymptotic.holevo_bound.into(),
        report.asymptotic.key_rate.into(),
        f.map(|f| f.breakdown.delta).into(),
        f.map(|f| f.breakdown.key_rate).into(),
        report.key_rate.into(),
        report.positive_rate.into(),
    ]);
    let positive = report.positive_rate;
    Ok(Output::new(report, table)?.note("positive_rate", positive))
}

fn rate_from_model(c: &RateConfig) -> CliResult<RateReport> {
    let channel = c.scenario.channel()?;
    let spec = constrain(
        OptimizationSpec::new(channel, c.xi, model(c.n_bar, &c.security, c.mode, c.seed)),
        c.v_m,
        c.ratio,
    )?;
    spec.validate()?;
    let fixed = |s: Setting| matches!(s, Setting::Fixed(_));
    let (point, optimization) = if fixed(c.v_m) && (fixed(c.ratio) || c.n_bar.is_none()) {
        let r = match c.ratio {
            Setting::Fixed(r) => r,
            Setting::Optimize => 1.0,
        };
        (evaluate_point(&spec, spec.v_m_grid.lo, r)?, None)
    } else {
        let res = optimize(&spec)?;
        let optimum = Optimum {
            v_m_star: res.v_m_star,
            r_star: res.r_star,
            k_star: res.k_star,
            evaluations: res.trace.len(),
        };
        (evaluate_point(&spec, res.v_m_star, res.r_star)?, Some(optimum))
    };
    Ok(report_from_point(Some(channel), &point, optimization))
}

fn report_from_point(channel: Option<ChannelParams>, p: &PointEvaluation, optimization: Option<Optimum>) -> RateReport {
    RateReport {
        channel,
        noise: p.noise,
        v_m: p.v_m,
        r: p.finite.map(|f| f.block.r),
        asymptotic: p.asymptotic,
        finite: p.finite,
        key_rate: p.rate,
        positive_rate: p.rate > 0.0,
        optimization,
    }
}

/// Finite-size rate with the channel estimated from measured data. The
/// asymptotic terms are evaluated at the point estimates.
fn rate_from_dataset(c: &RateConfig, path: &str) -> CliResult<RateReport> {
    let Setting::Fixed(v_m) = c.v_m else {
        return Err(CliError::config(
            "--dataset needs the modulation variance given with --v-m",
        ));
    };
    let Some(n_bar) = c.n_bar else {
        return Err(CliError::config("--dataset needs the block size given with --n-bar"));
    };
    if matches!(c.ratio, Setting::Fixed(_)) {
        return Err(CliError::config(
            "--dataset fixes the split: r = 1 - m/n_bar; drop --ratio",
        ));
    }
    let data = load_dataset(std::path::Path::new(path))?;
    let p = ProtocolParams::new(v_m, c.xi)?;
    let block = FiniteSizeParams::from_split(n_bar, data.len() as u64)?
        .with_eps_pe(c.security.eps_pe)?
        .with_eps_pa(c.security.eps_pa)?
        .with_z(c.security.z)?;
    let estimation = estimate_channel(&data, v_m, VarianceMode::Protocol, block.z)?.report;
    let noise = NoiseVars::new(estimation.v_q_eps_hat, estimation.v_p_eps_hat)?;
    let clamp = |t: f64| t.clamp(0.0, 1.0);
    let asymptotic = asymptotic_breakdown(&p, clamp(estimation.tau_a_hat), clamp(estimation.tau_b_hat), &noise)?;
    let breakdown = finite_size_breakdown(&p, &estimation, &block)?;
    let point = PointEvaluation {
        v_m,
        r: block.r,
        noise,
        asymptotic,
        finite: Some(FiniteEvaluation {
            block,
            estimation,
            breakdown,
        }),
        rate: breakdown.key_rate,
    };
    Ok(report_from_point(None, &point, None))
}

#[derive(Debug, Clone, Copy, Serialize)]
struct SweepRow {
    attenuation_db: f64,
    tau_a: f64,
    tau_b: f64,
    k_asymptotic: f64,
    k_n1e9: f64,
    k_n1e6: f64,
    v_m_star: f64,
    r_star: f64,
    v_m_star_asymptotic: f64,
    v_m_star_n1e6: f64,
    r_star_n1e6: f64,
}

fn best_of(spec: &OptimizationSpec, found: Evaluation, candidates: &[(f64, f64)]) -> CliResult<Evaluation> {
    let mut best = found;
    for &(v_m, r) in candidates {
        let e = Evaluation {
            v_m,
            r,
            rate: evaluate_rate(spec, v_m, r)?,
        };
        if e.beats(&best) {
            best = e;
        }
    }
    Ok(best)
}

fn incumbent(res: &OptimizationResult) -> Evaluation {
    Evaluation {
        v_m: res.v_m_star,
        r: res.r_star,
        rate: res.k_star,
    }
}

fn sweep_point(c: &SweepConfig, db: f64) -> CliResult<SweepRow> {
    let (tau_a, tau_b) = c.geometry.links(c.scenario.tau_a, db)?;
    let channel = ChannelParams::with_attack(
        tau_a,
        tau_b,
        c.scenario.omega_a,
        c.scenario.omega_b,
        c.scenario.attack.into(),
    )?;
    let spec = |model| OptimizationSpec::new(channel, c.xi, model);
    let s_inf = spec(RateModel::Asymptotic);
    let s_large = spec(RateModel::Analysis(c.security.block(SWEEP_BLOCKS[0])));
    let s_small = spec(RateModel::Analysis(c.security.block(SWEEP_BLOCKS[1])));

    let small = incumbent(&optimize(&s_small)?);
    // a larger block never does worse at the same point, nor the
    // asymptotic rate at the same modulation, so each curve also tries
    // the optima of the curves below it
    let large = best_of(&s_large, incumbent(&optimize(&s_large)?), &[(small.v_m, small.r)])?;
    let inf = best_of(
        &s_inf,
        incumbent(&optimize(&s_inf)?),
        &[(large.v_m, 1.0), (small.v_m, 1.0)],
    )?;
    Ok(SweepRow {
        attenuation_db: db,
        tau_a,
        tau_b,
        k_asymptotic: inf.rate,
        k_n1e9: large.rate,
        k_n1e6: small.rate,
        v_m_star: large.v_m,
        r_star: large.r,
        v_m_star_asymptotic: inf.v_m,
        v_m_star_n1e6: small.v_m,
        r_star_n1e6: small.r,
    })
}

pub fn cmd_sweep(c: &SweepConfig) -> CliResult<Output> {
    c.attenuation_db.validate("attenuation grid")?;
    check_xi(c.xi)?;
    check_security(&c.security)?;
    c.scenario.channel()?;
    let rows = c
        .attenuation_db
        .linear_values()
        .par_iter()
        .map(|&db| sweep_point(c, db))
        .collect::<CliResult<Vec<_>>>()?;
    let mut table = Table::new(vec![
        "attenuation_db",
        "k_asymptotic",
        "k_N1e9",
        "k_N1e6",
        "v_m_star",
        "r_star",
        "k_asymptotic_clipped",
        "k_N1e9_clipped",
        "k_N1e6_clipped",
        "tau_a",
        "tau_b",
        "v_m_star_asymptotic",
        "v_m_star_N1e6",
        "r_star_N1e6",
    ]);
    for r in &rows {
        table.push(vec![
            r.attenuation_db.into(),
            r.k_asymptotic.into(),
            r.k_n1e9.into(),
            r.k_n1e6.into(),
            r.v_m_star.into(),
            r.r_star.into(),
            r.k_asymptotic.max(0.0).into(),
            r.k_n1e9.max(0.0).into(),
            r.k_n1e6.max(0.0).into(),
            r.tau_a.into(),
            r.tau_b.into(),
            r.v_m_star_asymptotic.into(),
            r.v_m_star_n1e6.into(),
            r.r_star_n1e6.into(),
        ]);
    }
    Output::new(&rows, table)
}

#[derive(Debug, Clone, Copy, Serialize)]
struct ModscanRow {
    v_m: f64,
    rate: f64,
    r_star: f64,
}

pub fn cmd_modscan(c: &ModscanConfig) -> CliResult<Output> {
    c.v_m.validate("V_M grid")?;
    check_xi(c.xi)?;
    check_security(&c.security)?;
    let axis = c.v_m.axis(Spacing::Log);
    axis.validate("V_M grid")?;
    let channel = c.scenario.channel()?;
    let base = OptimizationSpec::new(channel, c.xi, model(c.n_bar, &c.security, Mode::Analysis, 0));
    let rows = axis
        .values()
        .par_iter()
        .map(|&v_m| {
            let spec = constrain(base, Setting::Fixed(v_m), c.ratio)?;
            let e = match (c.n_bar, c.ratio) {
                (None, _) => Evaluation {
                    v_m,
                    r: 1.0,
                    rate: evaluate_rate(&spec, v_m, 1.0)?,
                },
                (Some(_), Setting::Fixed(r)) => Evaluation {
                    v_m,
                    r,
                    rate: evaluate_rate(&spec, v_m, r)?,
                },
                (Some(_), Setting::Optimize) => incumbent(&cvmdi::optimize_key_rate(&spec)?),
            };
            Ok(ModscanRow {
                v_m,
                rate: e.rate,
                r_star: e.r,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut table = Table::new(vec!["v_m", "rate", "rate_clipped", "r_star"]);
    for r in &rows {
        table.push(vec![
            r.v_m.into(),
            r.rate.into(),
            r.rate.max(0.0).into(),
            r.r_star.into(),
        ]);
    }
    Output::new(&rows, table)
}

#[derive(Debug, Serialize)]
struct Check {
    quantity: String,
    statistic: cvmdi::simulator::Statistic,
    analytic: f64,
    empirical: Option<f64>,
    standard_error: Option<f64>,
    relative_deviation: Option<f64>,
    tolerance: Tolerance,
    status: &'static str,
}

impl From<&Comparison> for Check {
    fn from(c: &Comparison) -> Self {
        Self {
            quantity: c.quantity.clone(),
            statistic: c.statistic,
            analytic: c.analytic,
            empirical: c.empirical,
            standard_error: c.standard_error,
            relative_deviation: c.relative_deviation,
            tolerance: c.tolerance,
            status: status(c.passed),
        }
    }
}

fn status(passed: Option<bool>) -> &'static str {
    match passed {
        Some(true) => "pass",
        Some(false) => "fail",
        None => "insufficient-data",
    }
}

#[derive(Debug, Serialize)]
struct SimulationReport {
    checks: Vec<Check>,
    all_passed: bool,
    insufficient_data: bool,
    statistics: TrialStatistics,
}

pub fn simulation_spec(c: &SimulateConfig) -> CliResult<SimulationSpec> {
    let spec = SimulationSpec {
        channel: c.scenario.channel()?,
        v_m: c.v_m,
        m: c.m,
        trials: c.trials,
        seed: c.seed,
    };
    spec.validate()?;
    if !(c.v_m > 0.0) {
        return Err(CliError::config("--v-m must be positive to estimate transmissivities"));
    }
    Ok(spec)
}

/// All trials in parallel, aggregated in trial order.
pub fn run_trials(spec: &SimulationSpec) -> CliResult<TrialStatistics> {
    let records = (0..spec.trials as u64)
        .into_par_iter()
        .map(|i| trial_record(spec, i))
        .collect::<cvmdi::Result<Vec<_>>>()?;
    Ok(aggregate(spec, &records)?)
}

pub fn cmd_simulate(c: &SimulateConfig) -> CliResult<Output> {
    let spec = simulation_spec(c)?;
    let statistics = run_trials(&spec)?;
    let checks: Vec<Check> = statistics.comparisons.iter().map(Check::from).collect();
    let mut table = Table::new(vec![
        "quantity",
        "statistic",
        "analytic",
        "empirical",
        "standard_error",
        "relative_deviation",
        "tolerance_kind",
        "tolerance",
        "status",
    ]);
    for k in &checks {
        let (kind, tol) = match k.tolerance {
            Tolerance::Relative(t) => ("relative", t),
            Tolerance::StandardErrors(t) => ("standard-errors", t),
        };
        let statistic = match k.statistic {
            cvmdi::simulator::Statistic::Mean => "mean",
            cvmdi::simulator::Statistic::Variance => "variance",
        };
        table.push(vec![
            k.quantity.as_str().into(),
            statistic.into(),
            k.analytic.into(),
            k.empirical.into(),
            k.standard_error.into(),
            k.relative_deviation.into(),
            kind.into(),
            tol.into(),
            k.status.into(),
        ]);
    }
    let report = SimulationReport {
        all_passed: statistics.all_passed(),
        insufficient_data: checks.iter().any(|k| k.status == "insufficient-data"),
        checks,
        statistics,
    };
    let (all, insufficient) = (report.all_passed, report.insufficient_data);
    Ok(Output::new(report, table)?
        .note("all_passed", all)
        .note("insufficient_data", insufficient))
}

#[derive(Debug, Serialize)]
struct OptimizeReport {
    v_m_star: f64,
    r_star: f64,
    k_star: f64,
    positive_rate: bool,
    point: PointEvaluation,
    trace: Vec<Evaluation>,
}

pub fn optimization_spec(c: &OptimizeConfig) -> CliResult<OptimizationSpec> {
    check_security(&c.security)?;
    c.v_m.validate("V_M grid")?;
    c.ratio.validate("r grid")?;
    let mut spec = OptimizationSpec::new(c.scenario.channel()?, c.xi, model(c.n_bar, &c.security, c.mode, c.seed))
        .with_v_m_grid(c.v_m.axis(Spacing::Log));
    spec.r_grid = c.ratio.axis(Spacing::Linear);
    spec.r_bounds = (
        DEFAULT_R_BOUNDS.0.min(spec.r_grid.lo),
        DEFAULT_R_BOUNDS.1.max(spec.r_grid.hi),
    );
    spec.refinement_rounds = c.refinement_rounds;
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_optimize(c: &OptimizeConfig) -> CliResult<Output> {
    let spec = optimization_spec(c)?;
    let res = optimize(&spec)?;
    let point = evaluate_point(&spec, res.v_m_star, res.r_star)?;
    let mut table = Table::new(vec!["v_m", "r", "rate"]);
    for e in &res.trace {
        table.push(vec![e.v_m.into(), e.r.into(), e.rate.into()]);
    }
    let report = OptimizeReport {
        v_m_star: res.v_m_star,
        r_star: res.r_star,
        k_star: res.k_star,
        positive_rate: res.positive_rate,
        point,
        trace: res.trace,
    };
    Ok(Output::new(&report, table)?
        .note("v_m_star", crate::output::format_float(report.v_m_star))
        .note("r_star", crate::output::format_float(report.r_star))
        .note("k_star", crate::output::format_float(report.k_star))
        .note("positive_rate", report.positive_rate))
}
