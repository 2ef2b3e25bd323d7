//! Asymptotic key rate from the relay-conditioned states of Alice and Bob.

use crate::channel::NoiseVars;
use crate::error::{Error, Result};
use crate::gaussian::{entropy_of_spectrum, CovMatrix, PHYSICAL_TOL};

/// Modulation and reconciliation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProtocolParams {
    /// Gaussian modulation variance `V_M` (SNU).
    pub v_m: f64,
    /// Reconciliation efficiency `ξ`.
    pub xi: f64,
}

impl ProtocolParams {
    pub fn new(v_m: f64, xi: f64) -> Result<Self> {
        if !(v_m >= 0.0) || !v_m.is_finite() {
            return Err(Error::domain("v_m", v_m, ">= 0"));
        }
        if !(xi > 0.0 && xi <= 1.0) {
            return Err(Error::domain("xi", xi, "in (0, 1]"));
        }
        Ok(Self { v_m, xi })
    }

    /// `μ = V_M + 1`.
    pub fn mu(&self) -> f64 {
        self.v_m + 1.0
    }
}

/// Alice–Bob states after the relay broadcast (`ab|γ`) and after Alice's
/// heterodyne on top of it (`b|γα`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalState {
    pub cm_ab_given_gamma: CovMatrix,
    pub cm_b_given_gamma_alpha: CovMatrix,
    pub phi: f64,
    pub phi_prime: f64,
    pub nu_bar: f64,
}

fn check_tau(what: &'static str, tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::domain(what, tau, "in [0, 1]"))
    }
}

/// Builds `V_ab|γ` and `V_b|γα` for the given links and relay noise.
pub fn conditional_cms(p: &ProtocolParams, tau_a: f64, tau_b: f64, noise: &NoiseVars) -> Result<ConditionalState> {
    check_tau("tau_a", tau_a)?;
    check_tau("tau_b", tau_b)?;
    let noise = NoiseVars::new(noise.v_q_eps, noise.v_p_eps)?;
    let v_m = p.v_m;
    let mu = p.mu();
    let phi = (tau_a + tau_b) * v_m + 2.0 + 2.0 * noise.v_q_eps;
    let phi_prime = (tau_a + tau_b) * v_m + 2.0 + 2.0 * noise.v_p_eps;
    if !(phi > 0.0 && phi_prime > 0.0) {
        return Err(Error::DegenerateConditioning { phi, phi_prime });
    }

    let weight = v_m * (v_m + 2.0);
    let cross = libm::sqrt(tau_a * tau_b);
    let a_q = mu - weight * tau_a / phi;
    let a_p = mu - weight * tau_a / phi_prime;
    let b_q = mu - weight * tau_b / phi;
    let b_p = mu - weight * tau_b / phi_prime;
    let c_q = weight * cross / phi;
    let c_p = -weight * cross / phi_prime;
    #[rustfmt::skip]
    let ab = [
        a_q, 0.0, c_q, 0.0,
        0.0, a_p, 0.0, c_p,
        c_q, 0.0, b_q, 0.0,
        0.0, c_p, 0.0, b_p,
    ];
    let cm_ab_given_gamma = CovMatrix::from_row_slice(4, &ab)?.ensure_physical()?;

    let hq = 2.0 * (1.0 + noise.v_q_eps);
    let hp = 2.0 * (1.0 + noise.v_p_eps);
    let bq = (mu * hq - tau_b * v_m) / (hq + tau_b * v_m);
    let bp = (mu * hp - tau_b * v_m) / (hp + tau_b * v_m);
    let cm_b_given_gamma_alpha = CovMatrix::from_row_slice(2, &[bq, 0.0, 0.0, bp])?;
    let det = bq * bp;
    let nu_bar = libm::sqrt(det.max(0.0));
    if !(det >= 0.0) || nu_bar < 1.0 - PHYSICAL_TOL {
        return Err(Error::Unphysical { eigenvalue: nu_bar });
    }

    Ok(ConditionalState {
        cm_ab_given_gamma,
        cm_b_given_gamma_alpha,
        phi,
        phi_prime,
        nu_bar,
    })
}

/// Alice–Bob mutual information (bits), heterodyne form with `+1` terms.
pub fn mutual_information(state: &ConditionalState) -> f64 {
    let ab = &state.cm_ab_given_gamma;
    let b = &state.cm_b_given_gamma_alpha;
    let q = libm::log2((ab.get(2, 2) + 1.0) / (b.get(0, 0) + 1.0));
    let p = libm::log2((ab.get(3, 3) + 1.0) / (b.get(1, 1) + 1.0));
    0.5 * (q + p)
}

/// Holevo bound `S(ab|γ) - S(b|γα)` in bits.
pub fn holevo_bound(state: &ConditionalState) -> Result<f64> {
    let total = entropy_of_spectrum(&state.cm_ab_given_gamma.symplectic_eigenvalues()?)?;
    let conditional = entropy_of_spectrum(&[state.nu_bar])?;
    Ok(total - conditional)
}

/// Every term entering the asymptotic rate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateBreakdown {
    pub mutual_information: f64,
    pub holevo_bound: f64,
    pub key_rate: f64,
}

/// `ξ I_AB - I_H` together with its two terms. Negative rates are returned
/// unchanged.
pub fn asymptotic_breakdown(p: &ProtocolParams, tau_a: f64, tau_b: f64, noise: &NoiseVars) -> Result<RateBreakdown> {
    let state = conditional_cms(p, tau_a, tau_b, noise)?;
    let mutual_information = mutual_information(&state);
    let holevo_bound = holevo_bound(&state)?;
    Ok(RateBreakdown {
        mutual_information,
        holevo_bound,
        key_rate: p.xi * mutual_information - holevo_bound,
    })
}

/// Asymptotic key rate `K∞ = ξ I_AB - I_H` (bits per use).
pub fn asymptotic_key_rate(p: &ProtocolParams, tau_a: f64, tau_b: f64, noise: &NoiseVars) -> Result<f64> {
    asymptotic_breakdown(p, tau_a, tau_b, noise).map(|b| b.key_rate)
}
