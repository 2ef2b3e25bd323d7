//! Maximum-likelihood estimation of the link transmissivities and relay
//! excess noise from a block of shared data, with the confidence bounds
//! used for the pessimistic key rate.

use alloc::vec::Vec;

use crate::channel::NoiseVars;
use crate::error::{Error, Result};

/// Default confidence multiplier. A 6.5σ Gaussian tail corresponds to an
/// estimation failure probability of about `1e-10`.
pub const DEFAULT_Z: f64 = 6.5;

/// Modulation values of Alice and Bob and the matching relay outcomes,
/// one entry per estimation signal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadratureDataset {
    pub a_q: Vec<f64>,
    pub a_p: Vec<f64>,
    pub b_q: Vec<f64>,
    pub b_p: Vec<f64>,
    pub r_q: Vec<f64>,
    pub r_p: Vec<f64>,
}

impl QuadratureDataset {
    pub fn new(
        a_q: Vec<f64>,
        a_p: Vec<f64>,
        b_q: Vec<f64>,
        b_p: Vec<f64>,
        r_q: Vec<f64>,
        r_p: Vec<f64>,
    ) -> Result<Self> {
        let d = Self {
            a_q,
            a_p,
            b_q,
            b_p,
            r_q,
            r_p,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_capacity(m: usize) -> Self {
        Self {
            a_q: Vec::with_capacity(m),
            a_p: Vec::with_capacity(m),
            b_q: Vec::with_capacity(m),
            b_p: Vec::with_capacity(m),
            r_q: Vec::with_capacity(m),
            r_p: Vec::with_capacity(m),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.a_q.len();
        let lengths = [
            self.a_p.len(),
            self.b_q.len(),
            self.b_p.len(),
            self.r_q.len(),
            self.r_p.len(),
        ];
        if lengths.iter().any(|&l| l != m) {
            return Err(Error::DatasetShape {
                detail: "all six columns must have the same length",
            });
        }
        if m < 2 {
            return Err(Error::DatasetShape {
                detail: "at least two samples are required",
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.a_q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_q.is_empty()
    }

    pub fn push(&mut self, row: [f64; 6]) {
        self.a_q.push(row[0]);
        self.a_p.push(row[1]);
        self.b_q.push(row[2]);
        self.b_p.push(row[3]);
        self.r_q.push(row[4]);
        self.r_p.push(row[5]);
    }

    /// Row `i` in column order `a_q, a_p, b_q, b_p, r_q, r_p`.
    pub fn row(&self, i: usize) -> [f64; 6] {
        [
            self.a_q[i],
            self.a_p[i],
            self.b_q[i],
            self.b_p[i],
            self.r_q[i],
            self.r_p[i],
        ]
    }
}

fn mean_product(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64
}

/// Empirical covariances between modulation and relay outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Covariances {
    pub c_ar_q: f64,
    pub c_ar_p: f64,
    pub c_br_q: f64,
    pub c_br_p: f64,
}

/// `Ĉ = (1/m) Σ X_i R_i` for each of the four (party, quadrature) pairs.
pub fn estimate_covariances(d: &QuadratureDataset) -> Result<Covariances> {
    d.validate()?;
    Ok(Covariances {
        c_ar_q: mean_product(&d.a_q, &d.r_q),
        c_ar_p: mean_product(&d.a_p, &d.r_p),
        c_br_q: mean_product(&d.b_q, &d.r_q),
        c_br_p: mean_product(&d.b_p, &d.r_p),
    })
}

/// Per-quadrature transmissivity estimates `τ̂ = 2 Ĉ² / V_M²`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadratureEstimates {
    pub tau_a_q: f64,
    pub tau_a_p: f64,
    pub tau_b_q: f64,
    pub tau_b_p: f64,
}

impl QuadratureEstimates {
    pub fn from_covariances(c: &Covariances, v_m: f64) -> Result<Self> {
        if !(v_m > 0.0) || !v_m.is_finite() {
            return Err(Error::domain("v_m", v_m, "> 0 for estimation"));
        }
        let scale = 2.0 / (v_m * v_m);
        Ok(Self {
            tau_a_q: scale * c.c_ar_q * c.c_ar_q,
            tau_a_p: scale * c.c_ar_p * c.c_ar_p,
            tau_b_q: scale * c.c_br_q * c.c_br_q,
            tau_b_p: scale * c.c_br_p * c.c_br_p,
        })
    }

    /// Inverse-variance combination of the q and p estimates of each link.
    pub fn combine(&self, vars: &TransmissivityVariances) -> (f64, f64) {
        (
            vars.a.combine(self.tau_a_q, self.tau_a_p),
            vars.b.combine(self.tau_b_q, self.tau_b_p),
        )
    }

    /// Unweighted average, used before any noise estimate exists.
    pub fn average(&self) -> (f64, f64) {
        (0.5 * (self.tau_a_q + self.tau_a_p), 0.5 * (self.tau_b_q + self.tau_b_p))
    }
}

/// Per-quadrature transmissivity estimates from a dataset with known `V_M`.
pub fn estimate_transmissivities(d: &QuadratureDataset, v_m: f64) -> Result<QuadratureEstimates> {
    QuadratureEstimates::from_covariances(&estimate_covariances(d)?, v_m)
}

/// Variances of the q, p and combined transmissivity estimators of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinkVariance {
    pub q: f64,
    pub p: f64,
    pub combined: f64,
}

impl LinkVariance {
    fn from_pair(q: f64, p: f64) -> Self {
        let sum = q + p;
        let combined = if sum > 0.0 { q * p / sum } else { 0.0 };
        Self { q, p, combined }
    }

    /// Weighted mean with weights `1/var`; equal weights if both vanish.
    pub fn combine(&self, est_q: f64, est_p: f64) -> f64 {
        let sum = self.q + self.p;
        if sum > 0.0 {
            (self.p * est_q + self.q * est_p) / sum
        } else {
            0.5 * (est_q + est_p)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransmissivityVariances {
    pub a: LinkVariance,
    pub b: LinkVariance,
}

/// One quadrature of the transmissivity variance for the link with
/// transmissivity `tau` when the other link has `tau_other`:
/// `(8τ/m)(τ + τ'/2)[1 + V_N / ((τ + τ'/2) V_M)]`.
fn single_variance(tau: f64, tau_other: f64, v_m: f64, v_n: f64, m: f64) -> f64 {
    let spread = tau + 0.5 * tau_other;
    if tau == 0.0 {
        return 0.0;
    }
    8.0 * tau / m * spread * (1.0 + v_n / (spread * v_m))
}

/// Analytic estimator variances for both links. `B` is obtained from the
/// `A` formulas by exchanging the roles of the two links.
pub fn transmissivity_variance(tau_a: f64, tau_b: f64, v_m: f64, noise: &NoiseVars, m: u64) -> TransmissivityVariances {
    let m = m as f64;
    let (vq, vp) = (noise.v_q_n(), noise.v_p_n());
    TransmissivityVariances {
        a: LinkVariance::from_pair(
            single_variance(tau_a, tau_b, v_m, vq, m),
            single_variance(tau_a, tau_b, v_m, vp, m),
        ),
        b: LinkVariance::from_pair(
            single_variance(tau_b, tau_a, v_m, vq, m),
            single_variance(tau_b, tau_a, v_m, vp, m),
        ),
    }
}

/// `Var(Ĉ)` of one modulation-relay covariance estimator when the link
/// has transmissivity `tau` and the other link `tau_other`:
/// `(τ V_M² + τ' V_M²/2 + V_M V_N) / m`.
pub fn covariance_variance(tau: f64, tau_other: f64, v_m: f64, v_n: f64, m: u64) -> f64 {
    (tau * v_m * v_m + 0.5 * tau_other * v_m * v_m + v_m * v_n) / m as f64
}

/// Expected deviation of each estimator from the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimatorBias {
    pub tau_a_q: f64,
    pub tau_a_p: f64,
    pub tau_b_q: f64,
    pub tau_b_p: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    pub v_q_eps: f64,
    pub v_p_eps: f64,
}

/// Biases of the estimators for `m` signals, with the combination weights
/// evaluated at the truth.
///
/// For `τ̂ = 2Ĉ²/V_M²` the bias `2 Var(Ĉ)/V_M²` is exact. For the noise
/// estimator the leading `O(1/m)` term is kept: the fitted slopes add
/// `(V_M/2)(E δ_A² + E δ_B²)` to the mean squared residual and their
/// correlation with the noise removes `2 (w_A + w_B) V_N / m`, where
/// `δ = sqrt τ - sqrt τ̂` and `w` is the weight of that quadrature.
pub fn estimator_bias(truth: &ChannelTruth, v_m: f64, m: u64) -> EstimatorBias {
    let (ta, tb) = (truth.tau_a, truth.tau_b);
    let (vq, vp) = (truth.noise.v_q_n(), truth.noise.v_p_n());
    let cov = [
        covariance_variance(ta, tb, v_m, vq, m),
        covariance_variance(ta, tb, v_m, vp, m),
        covariance_variance(tb, ta, v_m, vq, m),
        covariance_variance(tb, ta, v_m, vp, m),
    ];
    let scale = 2.0 / (v_m * v_m);
    let vars = transmissivity_variance(ta, tb, v_m, &truth.noise, m);
    let weights = |l: &LinkVariance| {
        let sum = l.q + l.p;
        if sum > 0.0 {
            (l.p / sum, l.q / sum)
        } else {
            (0.5, 0.5)
        }
    };
    let (wa_q, wa_p) = weights(&vars.a);
    let (wb_q, wb_p) = weights(&vars.b);

    let slope_a = scale * (wa_q * wa_q * cov[0] + wa_p * wa_p * cov[1]);
    let slope_b = scale * (wb_q * wb_q * cov[2] + wb_p * wb_p * cov[3]);
    let fit = 0.5 * v_m * (slope_a + slope_b);
    let mf = m as f64;
    EstimatorBias {
        tau_a_q: scale * cov[0],
        tau_a_p: scale * cov[1],
        tau_b_q: scale * cov[2],
        tau_b_p: scale * cov[3],
        tau_a: scale * (wa_q * cov[0] + wa_p * cov[1]),
        tau_b: scale * (wb_q * cov[2] + wb_p * cov[3]),
        v_q_eps: fit - 2.0 * (wa_q + wb_q) * vq / mf,
        v_p_eps: fit - 2.0 * (wa_p + wb_p) * vp / mf,
    }
}

/// Relay noise residual for one sample of `q_-`, given the transmissivities.
#[inline]
pub fn residual_q(r_q: f64, a_q: f64, b_q: f64, sqrt_tau_a: f64, sqrt_tau_b: f64) -> f64 {
    r_q - (sqrt_tau_b * b_q - sqrt_tau_a * a_q) * core::f64::consts::FRAC_1_SQRT_2
}

/// Relay noise residual for one sample of `p_+`.
#[inline]
pub fn residual_p(r_p: f64, a_p: f64, b_p: f64, sqrt_tau_a: f64, sqrt_tau_b: f64) -> f64 {
    r_p - (sqrt_tau_b * b_p + sqrt_tau_a * a_p) * core::f64::consts::FRAC_1_SQRT_2
}

/// `V̂_ε = (1/m) Σ residual² - 1` on both quadratures. Transmissivities
/// are clamped to `[0, 1]` before taking square roots.
pub fn estimate_excess_noise(d: &QuadratureDataset, tau_a_hat: f64, tau_b_hat: f64) -> Result<(f64, f64)> {
    d.validate()?;
    let sa = libm::sqrt(tau_a_hat.clamp(0.0, 1.0));
    let sb = libm::sqrt(tau_b_hat.clamp(0.0, 1.0));
    let m = d.len() as f64;
    let mut sum_q = 0.0;
    let mut sum_p = 0.0;
    for i in 0..d.len() {
        let rq = residual_q(d.r_q[i], d.a_q[i], d.b_q[i], sa, sb);
        let rp = residual_p(d.r_p[i], d.a_p[i], d.b_p[i], sa, sb);
        sum_q += rq * rq;
        sum_p += rp * rp;
    }
    Ok((sum_q / m - 1.0, sum_p / m - 1.0))
}

/// `s² = 2 V_N² / m` for each quadrature.
pub fn excess_noise_variance(noise: &NoiseVars, m: u64) -> (f64, f64) {
    let m = m as f64;
    let (vq, vp) = (noise.v_q_n(), noise.v_p_n());
    (2.0 * vq * vq / m, 2.0 * vp * vp / m)
}

/// Point estimates and their standard deviations, before the confidence
/// bounds are applied.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointEstimates {
    pub tau_a: f64,
    pub tau_b: f64,
    pub v_q_eps: f64,
    pub v_p_eps: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub s_q: f64,
    pub s_p: f64,
}

/// Estimates together with their pessimistic bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimationReport {
    pub tau_a_hat: f64,
    pub tau_b_hat: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub v_q_eps_hat: f64,
    pub v_p_eps_hat: f64,
    pub s_q: f64,
    pub s_p: f64,
    pub tau_a_low: f64,
    pub tau_b_low: f64,
    pub v_q_eps_up: f64,
    pub v_p_eps_up: f64,
    pub z: f64,
}

impl EstimationReport {
    /// Excess noise at the upper confidence bound.
    pub fn worst_noise(&self) -> Result<NoiseVars> {
        NoiseVars::new(self.v_q_eps_up, self.v_p_eps_up)
    }
}

/// `τ_low = clamp(τ̂ - zσ, 0, 1)` and `V_up = V̂ + z s`.
pub fn worst_case(est: &PointEstimates, z: f64) -> EstimationReport {
    let low = |tau: f64, sigma: f64| (tau - z * sigma).clamp(0.0, 1.0).min(tau.max(0.0));
    let report = EstimationReport {
        tau_a_hat: est.tau_a,
        tau_b_hat: est.tau_b,
        sigma_a: est.sigma_a,
        sigma_b: est.sigma_b,
        v_q_eps_hat: est.v_q_eps,
        v_p_eps_hat: est.v_p_eps,
        s_q: est.s_q,
        s_p: est.s_p,
        tau_a_low: low(est.tau_a, est.sigma_a),
        tau_b_low: low(est.tau_b, est.sigma_b),
        v_q_eps_up: est.v_q_eps + z * est.s_q,
        v_p_eps_up: est.v_p_eps + z * est.s_p,
        z,
    };
    debug_assert!(report.tau_a_low <= report.tau_a_hat.max(0.0));
    debug_assert!(report.tau_b_low <= report.tau_b_hat.max(0.0));
    debug_assert!(report.v_q_eps_up >= report.v_q_eps_hat);
    debug_assert!(report.v_p_eps_up >= report.v_p_eps_hat);
    report
}

/// True channel values, used when variances are evaluated at the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelTruth {
    pub tau_a: f64,
    pub tau_b: f64,
    pub noise: NoiseVars,
}

/// Where the analytic variances are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum VarianceMode {
    /// At the true parameters (figure-style analysis).
    Analysis(ChannelTruth),
    /// At the estimates themselves (what a real protocol can do).
    Protocol,
}

/// Full output of [`estimate_channel`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelEstimate {
    pub covariances: Covariances,
    pub per_quadrature: QuadratureEstimates,
    pub variances: TransmissivityVariances,
    pub report: EstimationReport,
}

/// Runs the whole estimation pipeline on one block of data.
///
/// In protocol mode the combination weights need a noise estimate, which
/// in turn needs transmissivities: a first pass uses equal weights, the
/// resulting noise sets the weights, and the noise is re-estimated with
/// the weighted transmissivities.
pub fn estimate_channel(d: &QuadratureDataset, v_m: f64, mode: VarianceMode, z: f64) -> Result<ChannelEstimate> {
    let covariances = estimate_covariances(d)?;
    let per_quadrature = QuadratureEstimates::from_covariances(&covariances, v_m)?;
    let m = d.len() as u64;

    let (variances, tau_a, tau_b, (v_q_eps, v_p_eps), noise_for_s) = match mode {
        VarianceMode::Analysis(truth) => {
            let variances = transmissivity_variance(truth.tau_a, truth.tau_b, v_m, &truth.noise, m);
            let (tau_a, tau_b) = per_quadrature.combine(&variances);
            let eps = estimate_excess_noise(d, tau_a, tau_b)?;
            (variances, tau_a, tau_b, eps, truth.noise)
        }
        VarianceMode::Protocol => {
            let (ta0, tb0) = per_quadrature.average();
            let (q0, p0) = estimate_excess_noise(d, ta0, tb0)?;
            let prelim = NoiseVars {
                v_q_eps: q0,
                v_p_eps: p0,
            };
            let weights = transmissivity_variance(ta0, tb0, v_m, &prelim, m);
            let (tau_a, tau_b) = per_quadrature.combine(&weights);
            let eps = estimate_excess_noise(d, tau_a, tau_b)?;
            let plug_in = NoiseVars {
                v_q_eps: eps.0,
                v_p_eps: eps.1,
            };
            let variances = transmissivity_variance(tau_a.clamp(0.0, 1.0), tau_b.clamp(0.0, 1.0), v_m, &plug_in, m);
            (variances, tau_a, tau_b, eps, plug_in)
        }
    };

    let (s_q2, s_p2) = excess_noise_variance(&noise_for_s, m);
    let est = PointEstimates {
        tau_a,
        tau_b,
        v_q_eps,
        v_p_eps,
        sigma_a: libm::sqrt(variances.a.combined),
        sigma_b: libm::sqrt(variances.b.combined),
        s_q: libm::sqrt(s_q2),
        s_p: libm::sqrt(s_p2),
    };
    Ok(ChannelEstimate {
        covariances,
        per_quadrature,
        variances,
        report: worst_case(&est, z),
    })
}

/// Report for an exactly known channel: estimates equal the truth and the
/// spreads are the analytic ones for `m` estimation signals.
pub fn analysis_report(truth: &ChannelTruth, v_m: f64, m: u64, z: f64) -> EstimationReport {
    let vars = transmissivity_variance(truth.tau_a, truth.tau_b, v_m, &truth.noise, m);
    let (s_q2, s_p2) = excess_noise_variance(&truth.noise, m);
    worst_case(
        &PointEstimates {
            tau_a: truth.tau_a,
            tau_b: truth.tau_b,
            v_q_eps: truth.noise.v_q_eps,
            v_p_eps: truth.noise.v_p_eps,
            sigma_a: libm::sqrt(vars.a.combined),
            sigma_b: libm::sqrt(vars.b.combined),
            s_q: libm::sqrt(s_q2),
            s_p: libm::sqrt(s_p2),
        },
        z,
    )
}
