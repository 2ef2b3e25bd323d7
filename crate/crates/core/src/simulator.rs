//! Monte Carlo generation of relay data and empirical validation of the
//! estimator statistics.
//!
//! Modulation variables are drawn at variance `V_M` and all shot noise is
//! lumped into the relay noise terms, so that
//! `Var(R_q) = (τA + τB) V_M / 2 + 1 + V_q,ε`.
//! Eve's correlated ancillas enter only through `(V_q,ε, V_p,ε)`.
//!
//! Each trial owns a Xoshiro256++ generator whose state is expanded by
//! SplitMix64 from a key derived from `(seed, trial_index)`; Gaussian
//! variates come from the ziggurat sampler of `rand_distr`. Streams are
//! bit-reproducible within this crate only.

use alloc::string::String;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

use crate::channel::{noise_from_attack, ChannelParams, NoiseVars};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_channel, estimator_bias, excess_noise_variance, residual_p, residual_q, transmissivity_variance,
    ChannelTruth, EstimatorBias, QuadratureDataset, TransmissivityVariances, VarianceMode, DEFAULT_Z,
};

/// Relative tolerance on analytic vs. empirical estimator variances.
pub const VARIANCE_REL_TOL: f64 = 0.10;
/// Empirical means must lie within this many standard errors of the truth.
pub const MEAN_STANDARD_ERRORS: f64 = 3.0;
/// Relative tolerance on the chi-squared moments of the residual statistic.
pub const CHI_SQUARED_REL_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationSpec {
    pub channel: ChannelParams,
    pub v_m: f64,
    /// Samples per trial.
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if !(self.v_m >= 0.0) || !self.v_m.is_finite() {
            return Err(Error::domain("v_m", self.v_m, ">= 0"));
        }
        if self.m < 2 {
            return Err(Error::domain("m", self.m as f64, ">= 2"));
        }
        if self.trials < 1 {
            return Err(Error::domain("trials", 0.0, ">= 1"));
        }
        Ok(())
    }

    pub fn noise(&self) -> Result<NoiseVars> {
        noise_from_attack(&self.channel)
    }

    pub fn truth(&self) -> Result<ChannelTruth> {
        Ok(ChannelTruth {
            tau_a: self.channel.tau_a,
            tau_b: self.channel.tau_b,
            noise: self.noise()?,
        })
    }

    /// The generator for one trial.
    pub fn rng(&self, trial_index: u64) -> Xoshiro256PlusPlus {
        trial_rng(self.seed, trial_index)
    }
}

/// Generator for trial `trial_index` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial_index: u64) -> Xoshiro256PlusPlus {
    let key = SplitMix64::seed_from_u64(seed).next_u64();
    Xoshiro256PlusPlus::seed_from_u64(key ^ trial_index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Draws one block of `m` signals through the relay input-output relations.
pub fn sample_dataset(spec: &SimulationSpec, trial_index: u64) -> Result<QuadratureDataset> {
    spec.validate()?;
    let noise = spec.noise()?;
    let mut rng = spec.rng(trial_index);
    let sigma_m = libm::sqrt(spec.v_m);
    let sigma_q = libm::sqrt(noise.v_q_n());
    let sigma_p = libm::sqrt(noise.v_p_n());
    let sa = libm::sqrt(spec.channel.tau_a);
    let sb = libm::sqrt(spec.channel.tau_b);
    let k = core::f64::consts::FRAC_1_SQRT_2;

    let mut d = QuadratureDataset::with_capacity(spec.m);
    for _ in 0..spec.m {
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let a_q = sigma_m * draw();
        let a_p = sigma_m * draw();
        let b_q = sigma_m * draw();
        let b_p = sigma_m * draw();
        let q_n = sigma_q * draw();
        let p_n = sigma_p * draw();
        let r_q = (sb * b_q - sa * a_q) * k + q_n;
        let r_p = (sb * b_p + sa * a_p) * k + p_n;
        d.push([a_q, a_p, b_q, b_p, r_q, r_p]);
    }
    Ok(d)
}

/// Everything one trial contributes to the aggregate statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialRecord {
    pub c_ar_q: f64,
    pub c_ar_p: f64,
    pub tau_a_q: f64,
    pub tau_a_p: f64,
    pub tau_b_q: f64,
    pub tau_b_p: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    pub v_q_eps: f64,
    pub v_p_eps: f64,
    /// Residual sum of squares with the true transmissivities, in units of
    /// `V_q,N`; chi-squared with `m` degrees of freedom.
    pub chi_q: f64,
    pub chi_p: f64,
}

/// Samples trial `trial_index` and runs the estimation pipeline on it,
/// weighting the quadratures with the true-parameter variances.
pub fn trial_record(spec: &SimulationSpec, trial_index: u64) -> Result<TrialRecord> {
    let d = sample_dataset(spec, trial_index)?;
    let truth = spec.truth()?;
    let est = estimate_channel(&d, spec.v_m, VarianceMode::Analysis(truth), DEFAULT_Z)?;

    let sa = libm::sqrt(truth.tau_a);
    let sb = libm::sqrt(truth.tau_b);
    let (mut chi_q, mut chi_p) = (0.0, 0.0);
    for i in 0..d.len() {
        let rq = residual_q(d.r_q[i], d.a_q[i], d.b_q[i], sa, sb);
        let rp = residual_p(d.r_p[i], d.a_p[i], d.b_p[i], sa, sb);
        chi_q += rq * rq;
        chi_p += rp * rp;
    }

    Ok(TrialRecord {
        c_ar_q: est.covariances.c_ar_q,
        c_ar_p: est.covariances.c_ar_p,
        tau_a_q: est.per_quadrature.tau_a_q,
        tau_a_p: est.per_quadrature.tau_a_p,
        tau_b_q: est.per_quadrature.tau_b_q,
        tau_b_p: est.per_quadrature.tau_b_p,
        tau_a: est.report.tau_a_hat,
        tau_b: est.report.tau_b_hat,
        v_q_eps: est.report.v_q_eps_hat,
        v_p_eps: est.report.v_p_eps_hat,
        chi_q: chi_q / truth.noise.v_q_n(),
        chi_p: chi_p / truth.noise.v_p_n(),
    })
}

/// Sample mean, unbiased variance and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// `None` with fewer than two samples.
    pub variance: Option<f64>,
    pub standard_error: Option<f64>,
}

impl Moments {
    pub fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let (count, sum) = values.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
        let mean = if count > 0 { sum / count as f64 } else { f64::NAN };
        let variance = (count > 1).then(|| values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1) as f64);
        Self {
            count,
            mean,
            variance,
            standard_error: variance.map(|v| libm::sqrt(v / count as f64)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Statistic {
    Mean,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Tolerance {
    /// `|empirical - analytic| <= tol · |analytic|`.
    Relative(f64),
    /// `|empirical - analytic| <= k · standard error`.
    StandardErrors(f64),
}

/// One analytic-vs-empirical check.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Comparison {
    pub quantity: String,
    pub statistic: Statistic,
    pub analytic: f64,
    /// `None` when there are too few trials to form the statistic.
    pub empirical: Option<f64>,
    pub standard_error: Option<f64>,
    pub relative_deviation: Option<f64>,
    pub tolerance: Tolerance,
    /// `None` means insufficient data.
    pub passed: Option<bool>,
}

impl Comparison {
    fn variance(quantity: &str, analytic: f64, moments: &Moments, rel_tol: f64) -> Self {
        let empirical = moments.variance;
        let relative_deviation = empirical.map(|e| (e - analytic) / analytic);
        Self {
            quantity: quantity.into(),
            statistic: Statistic::Variance,
            analytic,
            empirical,
            standard_error: None,
            relative_deviation,
            tolerance: Tolerance::Relative(rel_tol),
            passed: relative_deviation.map(|r| r.abs() <= rel_tol),
        }
    }

    fn mean_within_errors(quantity: &str, analytic: f64, moments: &Moments, k: f64) -> Self {
        let relative_deviation = (analytic != 0.0).then(|| (moments.mean - analytic) / analytic);
        Self {
            quantity: quantity.into(),
            statistic: Statistic::Mean,
            analytic,
            empirical: Some(moments.mean),
            standard_error: moments.standard_error,
            relative_deviation,
            tolerance: Tolerance::StandardErrors(k),
            passed: moments
                .standard_error
                .map(|se| (moments.mean - analytic).abs() <= k * se),
        }
    }

    fn mean_relative(quantity: &str, analytic: f64, moments: &Moments, rel_tol: f64) -> Self {
        let rel = (moments.mean - analytic) / analytic;
        Self {
            quantity: quantity.into(),
            statistic: Statistic::Mean,
            analytic,
            empirical: Some(moments.mean),
            standard_error: moments.standard_error,
            relative_deviation: Some(rel),
            tolerance: Tolerance::Relative(rel_tol),
            passed: Some(rel.abs() <= rel_tol),
        }
    }
}

/// Aggregated trial statistics for one [`SimulationSpec`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialStatistics {
    pub trials: usize,
    pub m: usize,
    pub truth: ChannelTruth,
    pub analytic_tau_variances: TransmissivityVariances,
    /// Means are compared with the truth shifted by these biases.
    pub analytic_bias: EstimatorBias,
    pub tau_a_q: Moments,
    pub tau_a_p: Moments,
    pub tau_b_q: Moments,
    pub tau_b_p: Moments,
    pub tau_a: Moments,
    pub tau_b: Moments,
    pub v_q_eps: Moments,
    pub v_p_eps: Moments,
    pub chi_q: Moments,
    pub chi_p: Moments,
    /// Bias of the combined `τ̂_A`, estimated with the control variate
    /// described in [`bias_samples_tau_a`].
    pub bias_tau_a: Moments,
    /// Analytic bias of the combined `τ̂_A`.
    pub bias_tau_a_analytic: f64,
    pub comparisons: Vec<Comparison>,
}

impl TrialStatistics {
    pub fn all_passed(&self) -> bool {
        self.comparisons.iter().all(|c| c.passed == Some(true))
    }
}

/// Per-trial bias samples of the combined `τ̂_A`.
///
/// `τ̂_Aq - τ_A = (4 C/V_M²)(Ĉ - C) + (2/V_M²)(Ĉ - C)²`. The first term
/// has exactly zero mean and carries almost all of the trial-to-trial
/// spread, so subtracting it leaves an unbiased sample of the bias whose
/// standard deviation is of the order of the bias itself.
pub fn bias_samples_tau_a<'a>(
    records: &'a [TrialRecord],
    truth: &ChannelTruth,
    v_m: f64,
    weights: &TransmissivityVariances,
) -> impl Iterator<Item = f64> + Clone + 'a {
    let c_q = -libm::sqrt(truth.tau_a / 2.0) * v_m;
    let c_p = libm::sqrt(truth.tau_a / 2.0) * v_m;
    let scale = 4.0 / (v_m * v_m);
    let w = weights.a;
    let tau_a = truth.tau_a;
    records.iter().map(move |r| {
        let control_q = scale * c_q * (r.c_ar_q - c_q);
        let control_p = scale * c_p * (r.c_ar_p - c_p);
        r.tau_a - tau_a - w.combine(control_q, control_p)
    })
}

/// Aggregates trial records (in the given order) into statistics and
/// analytic comparisons.
pub fn aggregate(spec: &SimulationSpec, records: &[TrialRecord]) -> Result<TrialStatistics> {
    spec.validate()?;
    let truth = spec.truth()?;
    let m = spec.m as u64;
    let vars = transmissivity_variance(truth.tau_a, truth.tau_b, spec.v_m, &truth.noise, m);
    let (s_q2, s_p2) = excess_noise_variance(&truth.noise, m);

    let moments = |f: fn(&TrialRecord) -> f64| Moments::of(records.iter().map(f));
    let tau_a_q = moments(|r| r.tau_a_q);
    let tau_a_p = moments(|r| r.tau_a_p);
    let tau_b_q = moments(|r| r.tau_b_q);
    let tau_b_p = moments(|r| r.tau_b_p);
    let tau_a = moments(|r| r.tau_a);
    let tau_b = moments(|r| r.tau_b);
    let v_q_eps = moments(|r| r.v_q_eps);
    let v_p_eps = moments(|r| r.v_p_eps);
    let chi_q = moments(|r| r.chi_q);
    let chi_p = moments(|r| r.chi_p);
    let bias_tau_a = Moments::of(bias_samples_tau_a(records, &truth, spec.v_m, &vars));

    let mf = spec.m as f64;
    let bias = estimator_bias(&truth, spec.v_m, m);
    let bias_tau_a_analytic = bias.tau_a;

    let vt = VARIANCE_REL_TOL;
    let k = MEAN_STANDARD_ERRORS;
    let comparisons = alloc::vec![
        Comparison::variance("tau_a_q", vars.a.q, &tau_a_q, vt),
        Comparison::variance("tau_a_p", vars.a.p, &tau_a_p, vt),
        Comparison::variance("tau_b_q", vars.b.q, &tau_b_q, vt),
        Comparison::variance("tau_b_p", vars.b.p, &tau_b_p, vt),
        Comparison::variance("tau_a", vars.a.combined, &tau_a, vt),
        Comparison::variance("tau_b", vars.b.combined, &tau_b, vt),
        Comparison::variance("v_q_eps", s_q2, &v_q_eps, vt),
        Comparison::variance("v_p_eps", s_p2, &v_p_eps, vt),
        Comparison::mean_within_errors("tau_a_q", truth.tau_a + bias.tau_a_q, &tau_a_q, k),
        Comparison::mean_within_errors("tau_a_p", truth.tau_a + bias.tau_a_p, &tau_a_p, k),
        Comparison::mean_within_errors("tau_b_q", truth.tau_b + bias.tau_b_q, &tau_b_q, k),
        Comparison::mean_within_errors("tau_b_p", truth.tau_b + bias.tau_b_p, &tau_b_p, k),
        Comparison::mean_within_errors("tau_a", truth.tau_a + bias.tau_a, &tau_a, k),
        Comparison::mean_within_errors("tau_b", truth.tau_b + bias.tau_b, &tau_b, k),
        Comparison::mean_within_errors("v_q_eps", truth.noise.v_q_eps + bias.v_q_eps, &v_q_eps, k),
        Comparison::mean_within_errors("v_p_eps", truth.noise.v_p_eps + bias.v_p_eps, &v_p_eps, k),
        Comparison::mean_within_errors("bias_tau_a", bias_tau_a_analytic, &bias_tau_a, k),
        Comparison::mean_relative("chi_q", mf, &chi_q, CHI_SQUARED_REL_TOL),
        Comparison::variance("chi_q", 2.0 * mf, &chi_q, CHI_SQUARED_REL_TOL),
        Comparison::mean_relative("chi_p", mf, &chi_p, CHI_SQUARED_REL_TOL),
        Comparison::variance("chi_p", 2.0 * mf, &chi_p, CHI_SQUARED_REL_TOL),
    ];

    Ok(TrialStatistics {
        trials: records.len(),
        m: spec.m,
        truth,
        analytic_tau_variances: vars,
        analytic_bias: bias,
        tau_a_q,
        tau_a_p,
        tau_b_q,
        tau_b_p,
        tau_a,
        tau_b,
        v_q_eps,
        v_p_eps,
        chi_q,
        chi_p,
        bias_tau_a,
        bias_tau_a_analytic,
        comparisons,
    })
}

/// Runs every trial sequentially and aggregates. Callers with threads can
/// map [`trial_record`] over `0..trials` themselves and pass the ordered
/// records to [`aggregate`]; the result is identical.
pub fn run_estimator_trials(spec: &SimulationSpec) -> Result<TrialStatistics> {
    spec.validate()?;
    let records = (0..spec.trials as u64)
        .map(|i| trial_record(spec, i))
        .collect::<Result<Vec<_>>>()?;
    aggregate(spec, &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(channel: ChannelParams, v_m: f64, m: usize) -> SimulationSpec {
        SimulationSpec {
            channel,
            v_m,
            m,
            trials: 1,
            seed: 7,
        }
    }

    #[test]
    fn deterministic_per_trial() {
        let s = spec(ChannelParams::pure_loss(0.9, 0.4).unwrap(), 5.0, 100);
        assert_eq!(sample_dataset(&s, 3).unwrap(), sample_dataset(&s, 3).unwrap());
        assert_ne!(sample_dataset(&s, 3).unwrap(), sample_dataset(&s, 4).unwrap());
    }

    #[test]
    fn shot_noise_only_without_modulation() {
        let s = spec(ChannelParams::pure_loss(1.0, 1.0).unwrap(), 0.0, 200_000);
        let d = sample_dataset(&s, 0).unwrap();
        let var = d.r_q.iter().map(|x| x * x).sum::<f64>() / d.len() as f64;
        // sd of the sample variance is sqrt(2/m) ≈ 0.0032
        assert!((var - 1.0).abs() < 0.016, "var = {var}");
        assert!(d.a_q.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn insufficient_trials_flagged() {
        let mut s = spec(ChannelParams::pure_loss(0.9, 0.5).unwrap(), 10.0, 50);
        s.trials = 1;
        let stats = run_estimator_trials(&s).unwrap();
        assert!(stats.tau_a_q.variance.is_none());
        assert!(stats.comparisons.iter().any(|c| c.passed.is_none()));
        assert!(!stats.all_passed());
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(ChannelParams::pure_loss(0.9, 0.5).unwrap(), 10.0, 1);
        assert!(sample_dataset(&s, 0).is_err());
        s.m = 10;
        s.trials = 0;
        assert!(run_estimator_trials(&s).is_err());
    }

    #[test]
    fn moments_of_known_values() {
        let m = Moments::of([1.0, 2.0, 3.0, 4.0].into_iter());
        assert_eq!(m.mean, 2.5);
        assert!((m.variance.unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!(Moments::of([1.0].into_iter()).variance.is_none());
    }
}
