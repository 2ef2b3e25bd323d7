//! Finite-block key rate.

use crate::error::{Error, Result};
use crate::estimation::{EstimationReport, DEFAULT_Z};
use crate::keyrate::{asymptotic_breakdown, ProtocolParams, RateBreakdown};

/// Default failure probabilities for estimation and privacy amplification.
pub const DEFAULT_EPS_PE: f64 = 1e-10;
pub const DEFAULT_EPS_PA: f64 = 1e-10;

/// How a block of `n_bar` signals is split between key and estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FiniteSizeParams {
    /// Total signals exchanged.
    pub n_bar: u64,
    /// Signals sacrificed for parameter estimation.
    pub m: u64,
    /// Signals kept for the key, `n_bar - m`.
    pub n: u64,
    /// `n / n_bar`.
    pub r: f64,
    pub eps_pe: f64,
    pub eps_pa: f64,
    pub z: f64,
    /// Multiplies the `Δ(n)` penalty; 1 unless configured otherwise.
    pub delta_prefactor: f64,
}

impl FiniteSizeParams {
    /// Splits `n_bar` with `n = round(r · n_bar)` and default tolerances.
    pub fn from_ratio(n_bar: u64, r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::domain("r", r, "in (0, 1)"));
        }
        let n = libm::round(r * n_bar as f64) as u64;
        Self::from_split(n_bar, n_bar.saturating_sub(n))
    }

    /// Uses exactly `m` estimation signals out of `n_bar`.
    pub fn from_split(n_bar: u64, m: u64) -> Result<Self> {
        if n_bar < 2 {
            return Err(Error::domain("n_bar", n_bar as f64, ">= 2"));
        }
        if m == 0 || m >= n_bar {
            return Err(Error::domain("m", m as f64, "in (0, n_bar)"));
        }
        let n = n_bar - m;
        Ok(Self {
            n_bar,
            m,
            n,
            r: n as f64 / n_bar as f64,
            eps_pe: DEFAULT_EPS_PE,
            eps_pa: DEFAULT_EPS_PA,
            z: DEFAULT_Z,
            delta_prefactor: 1.0,
        })
    }

    pub fn with_eps_pa(mut self, eps_pa: f64) -> Result<Self> {
        check_eps("eps_pa", eps_pa)?;
        self.eps_pa = eps_pa;
        Ok(self)
    }

    pub fn with_eps_pe(mut self, eps_pe: f64) -> Result<Self> {
        check_eps("eps_pe", eps_pe)?;
        self.eps_pe = eps_pe;
        Ok(self)
    }

    pub fn with_z(mut self, z: f64) -> Result<Self> {
        if !(z >= 0.0) || !z.is_finite() {
            return Err(Error::domain("z", z, ">= 0"));
        }
        self.z = z;
        Ok(self)
    }

    pub fn with_delta_prefactor(mut self, prefactor: f64) -> Result<Self> {
        if !(prefactor >= 0.0) || !prefactor.is_finite() {
            return Err(Error::domain("delta prefactor", prefactor, ">= 0"));
        }
        self.delta_prefactor = prefactor;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m >= self.n_bar || self.n != self.n_bar - self.m {
            return Err(Error::Config(
                "block split must satisfy 0 < m < n_bar and n = n_bar - m",
            ));
        }
        check_eps("eps_pa", self.eps_pa)?;
        check_eps("eps_pe", self.eps_pe)
    }

    /// `Δ(n)` for this block, including the prefactor.
    pub fn delta(&self) -> Result<f64> {
        Ok(self.delta_prefactor * delta_n(self.n, self.eps_pa)?)
    }
}

fn check_eps(what: &'static str, eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(what, eps, "in (0, 1)"))
    }
}

/// Penalty `Δ(n) = sqrt(log2(2/ε_PA) / n)` for using the Holevo bound on a
/// finite number of key signals.
pub fn delta_n(n: u64, eps_pa: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n", 0.0, ">= 1"));
    }
    check_eps("eps_pa", eps_pa)?;
    Ok(libm::sqrt(libm::log2(2.0 / eps_pa) / n as f64))
}

/// Every term of the finite-size rate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FiniteSizeBreakdown {
    /// Asymptotic terms at the pessimistic parameters.
    pub worst_case: RateBreakdown,
    pub delta: f64,
    pub key_rate: f64,
}

/// `K = (n/N̄) (K∞(worst-case parameters) - Δ(n))`.
pub fn finite_size_breakdown(
    p: &ProtocolParams,
    report: &EstimationReport,
    fs: &FiniteSizeParams,
) -> Result<FiniteSizeBreakdown> {
    fs.validate()?;
    let noise = report.worst_noise()?;
    let worst_case = asymptotic_breakdown(p, report.tau_a_low, report.tau_b_low, &noise)?;
    let delta = fs.delta()?;
    Ok(FiniteSizeBreakdown {
        worst_case,
        delta,
        key_rate: fs.r * (worst_case.key_rate - delta),
    })
}

pub fn finite_size_key_rate(p: &ProtocolParams, report: &EstimationReport, fs: &FiniteSizeParams) -> Result<f64> {
    finite_size_breakdown(p, report, fs).map(|b| b.key_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::NoiseVars;
    use crate::estimation::{analysis_report, ChannelTruth};

    #[test]
    fn delta_values() {
        let d = delta_n(1_000_000, 1e-10).unwrap();
        let expected = ((1.0 + 10.0 * 10f64.log2()) / 1e6).sqrt();
        assert!((d - expected).abs() < 1e-15);
        assert!((d - 5.850e-3).abs() < 1e-6);
        let d4 = delta_n(4_000_000, 1e-10).unwrap();
        assert!((d4 - d / 2.0).abs() < 1e-15);
        assert!(delta_n(10, 2.0).is_err());
        assert!(delta_n(0, 1e-10).is_err());
    }

    #[test]
    fn split_bookkeeping() {
        let fs = FiniteSizeParams::from_ratio(1_000_000, 0.7).unwrap();
        assert_eq!((fs.n, fs.m), (700_000, 300_000));
        assert!(FiniteSizeParams::from_ratio(10, 1.0).is_err());
        assert!(FiniteSizeParams::from_split(10, 10).is_err());
        assert!(FiniteSizeParams::from_split(10, 0).is_err());
        assert!(fs.with_eps_pa(0.0).is_err());
    }

    #[test]
    fn exact_parameters_approach_asymptotic_rate() {
        let p = ProtocolParams::new(20.0, 0.98).unwrap();
        let truth = ChannelTruth {
            tau_a: 0.98,
            tau_b: 0.6,
            noise: NoiseVars::new(0.003, 0.003).unwrap(),
        };
        let k_inf = crate::keyrate::asymptotic_key_rate(&p, truth.tau_a, truth.tau_b, &truth.noise).unwrap();
        // a single estimation signal with σ = s = 0 and ε_PA close to 1
        let fs = FiniteSizeParams::from_split(1_000_000_000_000, 1)
            .unwrap()
            .with_eps_pa(1.0 - 1e-12)
            .unwrap();
        let report = analysis_report(&truth, p.v_m, fs.m, 0.0);
        let k = finite_size_key_rate(&p, &report, &fs).unwrap();
        assert!((k - k_inf).abs() < 1e-5 * k_inf.abs());
    }

    #[test]
    fn finite_rate_bounded_by_prefactor_times_worst_case() {
        let p = ProtocolParams::new(20.0, 0.98).unwrap();
        let truth = ChannelTruth {
            tau_a: 0.98,
            tau_b: 0.6,
            noise: NoiseVars::new(0.003, 0.003).unwrap(),
        };
        for n_bar in [1_000_000u64, 1_000_000_000] {
            let fs = FiniteSizeParams::from_ratio(n_bar, 0.5).unwrap();
            let report = analysis_report(&truth, p.v_m, fs.m, fs.z);
            let b = finite_size_breakdown(&p, &report, &fs).unwrap();
            assert!(b.key_rate < fs.r * b.worst_case.key_rate);
        }
    }
}
