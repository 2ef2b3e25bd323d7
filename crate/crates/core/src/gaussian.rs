//! Gaussian-state linear algebra in shot-noise units.
//!
//! Vacuum quadrature variance is 1 and quadratures are interleaved as
//! `(q1, p1, q2, p2, ...)` everywhere in this crate.

use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix2};

use crate::error::{Error, Result};

/// Symmetry tolerance, relative to the largest entry (absolute below 1).
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Symplectic eigenvalues in `[1 - PHYSICAL_TOL, 1)` are clamped to 1;
/// anything lower is an unphysical state.
pub const PHYSICAL_TOL: f64 = 1e-9;

/// Relative tolerance on the two-mode discriminant `Δ² - 4 det V`.
const DISCRIMINANT_TOL: f64 = 1e-9;

/// Covariance matrix of a zero-mean Gaussian state of `n` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    entries: DMatrix<f64>,
}

impl CovMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let dim = entries.nrows();
        if dim != entries.ncols() || dim % 2 != 0 || dim == 0 {
            return Err(Error::OddDimension { dim });
        }
        let scale = entries.amax().max(1.0);
        let asymmetry = (&entries - entries.transpose()).amax();
        if !(asymmetry <= SYMMETRY_TOL * scale) {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self { entries })
    }

    pub fn from_row_slice(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(Error::Config("row slice length does not match dimension"));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, values))
    }

    /// The `modes`-mode vacuum.
    pub fn vacuum(modes: usize) -> Self {
        Self {
            entries: DMatrix::identity(2 * modes, 2 * modes),
        }
    }

    /// Single-mode thermal state `variance * I`.
    pub fn thermal(variance: f64) -> Result<Self> {
        if !(variance >= 1.0) {
            return Err(Error::domain("thermal variance", variance, ">= 1"));
        }
        Ok(Self {
            entries: DMatrix::identity(2, 2) * variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn modes(&self) -> usize {
        self.dim() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    /// The 2×2 block coupling mode `i` to mode `j`.
    pub fn block(&self, i: usize, j: usize) -> Matrix2<f64> {
        self.entries.fixed_view::<2, 2>(2 * i, 2 * j).into_owned()
    }

    /// `S V Sᵀ` for a transformation `S` of matching dimension.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self> {
        if s.nrows() != self.dim() || s.ncols() != self.dim() {
            return Err(Error::Config("transformation dimension mismatch"));
        }
        let mut out = s * &self.entries * s.transpose();
        // re-symmetrise the rounding
        let t = out.transpose();
        out = (out + t) * 0.5;
        Self::new(out)
    }

    /// Symplectic spectrum, descending. See [`symplectic_eigenvalues`].
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        symplectic_eigenvalues(self)
    }

    /// Returns `self` if every symplectic eigenvalue is at least `1 - PHYSICAL_TOL`.
    pub fn ensure_physical(self) -> Result<Self> {
        let spectrum = self.symplectic_eigenvalues()?;
        match spectrum.last() {
            Some(&least) if least < 1.0 - PHYSICAL_TOL => Err(Error::Unphysical { eigenvalue: least }),
            _ => Ok(self),
        }
    }

    pub fn is_physical(&self) -> bool {
        self.clone().ensure_physical().is_ok()
    }
}

/// The binary entropy contribution `h(x)` of one symplectic eigenvalue.
///
/// Evaluated as `log2 a + b log2(1 + 1/b)` with `a = (x+1)/2`, `b = (x-1)/2`,
/// which is algebraically `a log2 a - b log2 b` but avoids cancelling two
/// large terms; `b = 0` gives exactly 0.
pub fn entropy_term(x: f64) -> Result<f64> {
    if !(x >= 1.0) || !x.is_finite() {
        return Err(Error::domain("symplectic eigenvalue", x, ">= 1"));
    }
    let a = 0.5 * (x + 1.0);
    let b = 0.5 * (x - 1.0);
    let tail = if b == 0.0 {
        0.0
    } else {
        b * libm::log1p(1.0 / b) / core::f64::consts::LN_2
    };
    Ok(libm::log2(a) + tail)
}

/// Large-`x` asymptote `log2(e x / 2)` of [`entropy_term`].
pub fn entropy_term_asymptotic(x: f64) -> f64 {
    libm::log2(core::f64::consts::E * x / 2.0)
}

/// Symplectic eigenvalues of `v`, sorted descending.
///
/// One mode uses `sqrt(det V)`, two modes use the invariant
/// `Δ = det A + det B + 2 det C`, and larger states fall back to the
/// moduli of the eigenvalues of `iΩV`.
pub fn symplectic_eigenvalues(v: &CovMatrix) -> Result<Vec<f64>> {
    match v.modes() {
        1 => {
            let det = v.block(0, 0).determinant();
            if det < 0.0 {
                return Err(Error::Unphysical {
                    eigenvalue: -libm::sqrt(-det),
                });
            }
            Ok(alloc::vec![libm::sqrt(det)])
        }
        2 => {
            let (plus, minus) = two_mode_spectrum(v)?;
            Ok(alloc::vec![plus, minus])
        }
        _ => Ok(symplectic_eigenvalues_general(v)),
    }
}

fn two_mode_spectrum(v: &CovMatrix) -> Result<(f64, f64)> {
    let (delta, det, mut disc) = match decoupled_blocks(v) {
        Some((vq, vp)) => {
            // With q and p decoupled, Δ = tr(Vq Vp) and det V = det(Vq Vp),
            // so the discriminant is (M11 - M22)² + 4 M12 M21 of M = Vq Vp,
            // which stays exact for pure states with large entries.
            let m = vq * vp;
            let diff = m[(0, 0)] - m[(1, 1)];
            (
                m.trace(),
                vq.determinant() * vp.determinant(),
                diff * diff + 4.0 * m[(0, 1)] * m[(1, 0)],
            )
        }
        None => {
            let a = v.block(0, 0).determinant();
            let b = v.block(1, 1).determinant();
            let c = v.block(0, 1).determinant();
            let det = v.matrix().determinant();
            let delta = a + b + 2.0 * c;
            (delta, det, delta * delta - 4.0 * det)
        }
    };
    if disc < 0.0 {
        if disc < -DISCRIMINANT_TOL * (delta * delta).max(1.0) {
            return Err(Error::NumericalDegeneracy { discriminant: disc });
        }
        disc = 0.0;
    }
    let plus_sq = 0.5 * (delta + libm::sqrt(disc));
    if !(plus_sq > 0.0) {
        return Err(Error::NumericalDegeneracy { discriminant: disc });
    }
    // det V = ν₊² ν₋²; dividing avoids the cancellation in Δ - sqrt(disc).
    let minus_sq = det / plus_sq;
    if minus_sq < 0.0 {
        return Err(Error::Unphysical {
            eigenvalue: -libm::sqrt(-minus_sq),
        });
    }
    Ok((libm::sqrt(plus_sq), libm::sqrt(minus_sq)))
}

/// The q-q and p-p blocks of a two-mode matrix without q-p correlations.
fn decoupled_blocks(v: &CovMatrix) -> Option<(Matrix2<f64>, Matrix2<f64>)> {
    let m = v.matrix();
    let qp_free = (0..4).all(|i| (0..4).all(|j| (i + j) % 2 == 0 || m[(i, j)] == 0.0));
    qp_free.then(|| {
        (
            Matrix2::new(m[(0, 0)], m[(0, 2)], m[(2, 0)], m[(2, 2)]),
            Matrix2::new(m[(1, 1)], m[(1, 3)], m[(3, 1)], m[(3, 3)]),
        )
    })
}

/// The symplectic form `Ω = ⊕ [[0, 1], [-1, 0]]` on `modes` modes.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Symplectic spectrum from the moduli of the eigenvalues of `iΩV`,
/// valid for any number of modes. Eigenvalues come in `±ν` pairs; one of
/// each pair is kept.
pub fn symplectic_eigenvalues_general(v: &CovMatrix) -> Vec<f64> {
    let omega_v = symplectic_form(v.modes()) * v.matrix();
    let mut moduli: Vec<f64> = omega_v
        .complex_eigenvalues()
        .iter()
        .map(|z| libm::hypot(z.re, z.im))
        .collect();
    moduli.sort_by(|x, y| y.total_cmp(x));
    moduli.into_iter().step_by(2).collect()
}

/// Von Neumann entropy in bits, `Σ h(ν)` over the symplectic spectrum.
pub fn von_neumann_entropy(v: &CovMatrix) -> Result<f64> {
    entropy_of_spectrum(&symplectic_eigenvalues(v)?)
}

/// `Σ h(ν)` with eigenvalues within `PHYSICAL_TOL` below 1 clamped to 1.
pub fn entropy_of_spectrum(spectrum: &[f64]) -> Result<f64> {
    spectrum.iter().try_fold(0.0, |acc, &nu| {
        if nu < 1.0 - PHYSICAL_TOL {
            return Err(Error::Unphysical { eigenvalue: nu });
        }
        Ok(acc + entropy_term(nu.max(1.0))?)
    })
}

/// Two-mode squeezed vacuum with local variance `mu = V_M + 1`.
pub fn tmsv_cm(mu: f64) -> Result<CovMatrix> {
    if !(mu >= 1.0) || !mu.is_finite() {
        return Err(Error::domain("mu", mu, ">= 1"));
    }
    let c = libm::sqrt(mu * mu - 1.0);
    #[rustfmt::skip]
    let values = [
        mu,  0.0, c,   0.0,
        0.0, mu,  0.0, -c,
        c,   0.0, mu,  0.0,
        0.0, -c,  0.0, mu,
    ];
    CovMatrix::from_row_slice(4, &values)
}
