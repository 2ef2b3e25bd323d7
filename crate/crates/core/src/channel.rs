//! Two-mode Gaussian attack and the excess noise it leaves on the relay
//! outputs.

use crate::error::{Error, Result};
use crate::gaussian::{CovMatrix, PHYSICAL_TOL};

/// Physical scenario: link transmissivities and Eve's ancilla state.
///
/// `omega_*` are Eve's thermal variances (SNU); `g`, `g_prime` are the
/// diagonal entries of the correlation block `G = diag(g, g')`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelParams {
    pub tau_a: f64,
    pub tau_b: f64,
    pub omega_a: f64,
    pub omega_b: f64,
    pub g: f64,
    pub g_prime: f64,
}

/// Named families of the two-mode attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Attack {
    /// `ω = 1`, no correlations.
    PureLoss,
    /// Independent entangling cloners, `g = g' = 0`.
    Collective,
    /// `g = -g'` at the largest admissible correlation.
    TwoModeOptimal,
}

impl ChannelParams {
    /// Pure-loss channel with the given transmissivities.
    pub fn pure_loss(tau_a: f64, tau_b: f64) -> Result<Self> {
        Self::new(tau_a, tau_b, 1.0, 1.0, 0.0, 0.0)
    }

    /// Validates ranges and the physicality of Eve's ancillas.
    pub fn new(tau_a: f64, tau_b: f64, omega_a: f64, omega_b: f64, g: f64, g_prime: f64) -> Result<Self> {
        let params = Self {
            tau_a,
            tau_b,
            omega_a,
            omega_b,
            g,
            g_prime,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds the scenario for a named attack family. `omega_*` are ignored
    /// for [`Attack::PureLoss`].
    pub fn with_attack(tau_a: f64, tau_b: f64, omega_a: f64, omega_b: f64, attack: Attack) -> Result<Self> {
        match attack {
            Attack::PureLoss => Self::pure_loss(tau_a, tau_b),
            Attack::Collective => Self::new(tau_a, tau_b, omega_a, omega_b, 0.0, 0.0),
            Attack::TwoModeOptimal => {
                let (g, g_prime) = optimal_two_mode_attack(omega_a, omega_b)?;
                Self::new(tau_a, tau_b, omega_a, omega_b, g, g_prime)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_transmissivity("tau_a", self.tau_a)?;
        check_transmissivity("tau_b", self.tau_b)?;
        check_omega("omega_a", self.omega_a)?;
        check_omega("omega_b", self.omega_b)?;
        if !self.g.is_finite() {
            return Err(Error::domain("g", self.g, "finite"));
        }
        if !self.g_prime.is_finite() {
            return Err(Error::domain("g_prime", self.g_prime, "finite"));
        }
        eve_cm(self).map(|_| ())
    }

    /// Same attack, different links.
    pub fn with_transmissivities(&self, tau_a: f64, tau_b: f64) -> Result<Self> {
        Self::new(tau_a, tau_b, self.omega_a, self.omega_b, self.g, self.g_prime)
    }
}

fn check_transmissivity(what: &'static str, tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::domain(what, tau, "in [0, 1]"))
    }
}

fn check_omega(what: &'static str, omega: f64) -> Result<()> {
    if omega >= 1.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(what, omega, ">= 1"))
    }
}

/// Excess noise on the two relay quadratures (SNU).
///
/// Negative values are legitimate under entangled attacks; only the total
/// noise `1 + v_eps` has to stay positive.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseVars {
    pub v_q_eps: f64,
    pub v_p_eps: f64,
}

impl NoiseVars {
    pub fn new(v_q_eps: f64, v_p_eps: f64) -> Result<Self> {
        let noise = Self { v_q_eps, v_p_eps };
        let (v_q_n, v_p_n) = (noise.v_q_n(), noise.v_p_n());
        if v_q_n > 0.0 && v_p_n > 0.0 {
            Ok(noise)
        } else {
            Err(Error::NonPositiveNoise { v_q_n, v_p_n })
        }
    }

    pub const fn zero() -> Self {
        Self {
            v_q_eps: 0.0,
            v_p_eps: 0.0,
        }
    }

    /// Total noise variance on `q_-`.
    pub fn v_q_n(&self) -> f64 {
        1.0 + self.v_q_eps
    }

    /// Total noise variance on `p_+`.
    pub fn v_p_n(&self) -> f64 {
        1.0 + self.v_p_eps
    }
}

/// Covariance matrix of Eve's ancillas `E1 E2`.
pub fn eve_cm(params: &ChannelParams) -> Result<CovMatrix> {
    let ChannelParams {
        omega_a: wa,
        omega_b: wb,
        g,
        g_prime: gp,
        ..
    } = *params;
    #[rustfmt::skip]
    let values = [
        wa,  0.0, g,   0.0,
        0.0, wa,  0.0, gp,
        g,   0.0, wb,  0.0,
        0.0, gp,  0.0, wb,
    ];
    let v = CovMatrix::from_row_slice(4, &values)?;
    let spectrum = v.symplectic_eigenvalues().map_err(|e| match e {
        Error::Unphysical { eigenvalue } => Error::UnphysicalAttack { eigenvalue },
        other => other,
    })?;
    let least = spectrum[1];
    if least < 1.0 - PHYSICAL_TOL {
        return Err(Error::UnphysicalAttack { eigenvalue: least });
    }
    Ok(v)
}

/// Correlations of the optimal two-mode attack: `g = -g'` with
/// `g = min[sqrt((ωA-1)(ωB+1)), sqrt((ωB-1)(ωA+1))]`.
pub fn optimal_two_mode_attack(omega_a: f64, omega_b: f64) -> Result<(f64, f64)> {
    check_omega("omega_a", omega_a)?;
    check_omega("omega_b", omega_b)?;
    let first = libm::sqrt((omega_a - 1.0) * (omega_b + 1.0));
    let second = libm::sqrt((omega_b - 1.0) * (omega_a + 1.0));
    let g = first.min(second);
    Ok((g, -g))
}

/// Maps the attack onto relay excess noise:
/// `V_q,ε = k - g u`, `V_p,ε = k + g' u` with
/// `k = [(1-τB)(ωB-1) + (1-τA)(ωA-1)]/2` and `u = sqrt((1-τB)(1-τA))`.
pub fn noise_from_attack(params: &ChannelParams) -> Result<NoiseVars> {
    let loss_a = 1.0 - params.tau_a;
    let loss_b = 1.0 - params.tau_b;
    let k = 0.5 * (loss_b * (params.omega_b - 1.0) + loss_a * (params.omega_a - 1.0));
    let u = libm::sqrt(loss_b * loss_a);
    NoiseVars::new(k - params.g * u, k + params.g_prime * u)
}

/// `τ = 10^(-dB/10)`.
pub fn db_to_transmissivity(attenuation_db: f64) -> Result<f64> {
    if !(attenuation_db >= 0.0) || !attenuation_db.is_finite() {
        return Err(Error::domain("attenuation (dB)", attenuation_db, ">= 0"));
    }
    Ok(libm::pow(10.0, -attenuation_db / 10.0))
}
