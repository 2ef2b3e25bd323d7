use cvmdi::channel::{noise_from_attack, Attack, ChannelParams, NoiseVars};
use cvmdi::db_to_transmissivity;
use cvmdi::gaussian::{entropy_term, symplectic_eigenvalues, symplectic_eigenvalues_general, CovMatrix};
use cvmdi::keyrate::{asymptotic_breakdown, asymptotic_key_rate, conditional_cms, holevo_bound, ProtocolParams};
use cvmdi::nalgebra::{Matrix2, Matrix4};
use proptest::prelude::*;

/// Relay noise written out term by term in the conditional-state form.
fn noise_literal(tau_a: f64, tau_b: f64, wa: f64, wb: f64, g: f64, gp: f64) -> (f64, f64) {
    let (ta, tb) = (1.0 - tau_a, 1.0 - tau_b);
    let v_g = 0.5 * (tb * (wb - 1.0) + ta * (wa - 1.0) - 2.0 * g * (tb * ta).sqrt());
    let v_gp = 0.5 * (tb * (wb - 1.0) + ta * (wa - 1.0) + 2.0 * gp * (tb * ta).sqrt());
    (v_g, v_gp)
}

/// Heterodyne conditioning of mode `b` on mode `a`: `B - C (A + I)⁻¹ Cᵀ`.
fn heterodyne_on_a(v: &CovMatrix) -> Matrix2<f64> {
    let a = v.block(0, 0);
    let b = v.block(1, 1);
    let c = v.block(0, 1);
    b - c.transpose() * (a + Matrix2::identity()).try_inverse().unwrap() * c
}

fn holevo_general(v_ab: &CovMatrix, v_b: &Matrix2<f64>) -> f64 {
    let total: f64 = symplectic_eigenvalues_general(v_ab)
        .iter()
        .map(|&nu| entropy_term(nu.max(1.0)).unwrap())
        .sum();
    total - entropy_term(v_b.determinant().sqrt().max(1.0)).unwrap()
}

fn fig2_channel(tau_b: f64, omega: f64, attack: Attack) -> ChannelParams {
    ChannelParams::with_attack(0.98, tau_b, omega, omega, attack).unwrap()
}

fn rate(ch: &ChannelParams, v_m: f64, xi: f64) -> f64 {
    let noise = noise_from_attack(ch).unwrap();
    asymptotic_key_rate(&ProtocolParams::new(v_m, xi).unwrap(), ch.tau_a, ch.tau_b, &noise).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn noise_parameterisations_agree_exactly(
        tau_a in 0.0f64..=1.0, tau_b in 0.0f64..=1.0,
        wa in 1.0f64..2.0, wb in 1.0f64..2.0,
        g in -1.0f64..1.0, gp in -1.0f64..1.0,
    ) {
        let ch = ChannelParams { tau_a, tau_b, omega_a: wa, omega_b: wb, g, g_prime: gp };
        let (v_g, v_gp) = noise_literal(tau_a, tau_b, wa, wb, g, gp);
        match noise_from_attack(&ch) {
            Ok(n) => {
                prop_assert_eq!(n.v_q_eps.to_bits(), v_g.to_bits());
                prop_assert_eq!(n.v_p_eps.to_bits(), v_gp.to_bits());
            }
            Err(_) => prop_assert!(v_g <= -1.0 || v_gp <= -1.0),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn holevo_bound_dual_route(
        tau_a in 0.05f64..=1.0, tau_b in 0.05f64..=1.0, v_m in 0.5f64..200.0,
        eq in -0.2f64..0.5, ep in -0.2f64..0.5,
    ) {
        let p = ProtocolParams::new(v_m, 1.0).unwrap();
        let noise = NoiseVars::new(eq, ep).unwrap();
        let state = match conditional_cms(&p, tau_a, tau_b, &noise) {
            Ok(s) => s,
            // negative excess noise can make the conditional state unphysical
            Err(_) => return Ok(()),
        };
        let schur = heterodyne_on_a(&state.cm_ab_given_gamma);
        let printed = &state.cm_b_given_gamma_alpha;
        for (i, j) in [(0, 0), (1, 1)] {
            prop_assert!((schur[(i, j)] - printed.get(i, j)).abs() < 1e-9 * printed.get(i, j).abs().max(1.0));
        }
        prop_assert!(schur[(0, 1)].abs() < 1e-12 && schur[(1, 0)].abs() < 1e-12);
        let fast = holevo_bound(&state).unwrap();
        let general = holevo_general(&state.cm_ab_given_gamma, &schur);
        prop_assert!((fast - general).abs() < 1e-6, "{fast} vs {general}");
    }

    #[test]
    fn link_exchange_preserves_conditioning(
        tau_a in 0.0f64..=1.0, tau_b in 0.0f64..=1.0, v_m in 0.0f64..100.0,
        eq in 0.0f64..0.3, ep in 0.0f64..0.3,
    ) {
        let p = ProtocolParams::new(v_m, 1.0).unwrap();
        let noise = NoiseVars::new(eq, ep).unwrap();
        let ab = conditional_cms(&p, tau_a, tau_b, &noise).unwrap();
        let ba = conditional_cms(&p, tau_b, tau_a, &noise).unwrap();
        prop_assert_eq!(ab.phi, ba.phi);
        prop_assert_eq!(ab.phi_prime, ba.phi_prime);
        let s1 = symplectic_eigenvalues(&ab.cm_ab_given_gamma).unwrap();
        let s2 = symplectic_eigenvalues(&ba.cm_ab_given_gamma).unwrap();
        for k in 0..2 {
            prop_assert!((s1[k] - s2[k]).abs() < 1e-9 * s1[k]);
        }
    }

    #[test]
    fn noise_grows_with_thermal_variance(
        tau_a in 0.0f64..1.0, tau_b in 0.0f64..1.0,
        wa in 1.0f64..3.0, wb in 1.0f64..3.0, dw in 1e-3f64..1.0,
        g in -0.3f64..0.3, gp in -0.3f64..0.3,
    ) {
        let ch = ChannelParams { tau_a, tau_b, omega_a: wa, omega_b: wb, g, g_prime: gp };
        let bumped_a = ChannelParams { omega_a: wa + dw, ..ch };
        let bumped_b = ChannelParams { omega_b: wb + dw, ..ch };
        let (Ok(n), Ok(na), Ok(nb)) = (noise_from_attack(&ch), noise_from_attack(&bumped_a), noise_from_attack(&bumped_b)) else {
            return Ok(());
        };
        prop_assert!(na.v_q_eps >= n.v_q_eps && na.v_p_eps >= n.v_p_eps);
        prop_assert!(nb.v_q_eps >= n.v_q_eps && nb.v_p_eps >= n.v_p_eps);
    }
}

#[test]
fn identity_channel_leaks_nothing() {
    for v_m in [0.5, 4.0, 50.0] {
        for xi in [0.9, 1.0] {
            let p = ProtocolParams::new(v_m, xi).unwrap();
            let b = asymptotic_breakdown(&p, 1.0, 1.0, &NoiseVars::zero()).unwrap();
            assert!(b.holevo_bound.abs() < 1e-8, "I_H = {}", b.holevo_bound);
            assert!((b.key_rate - xi * b.mutual_information).abs() < 1e-8);
            assert!(b.mutual_information > 0.0);
        }
    }
}

#[test]
fn optimal_attack_noise_is_quadrature_symmetric() {
    for tau_b in [0.1, 0.5, 0.9] {
        let n = noise_from_attack(&fig2_channel(tau_b, 1.05, Attack::TwoModeOptimal)).unwrap();
        assert_eq!(n.v_q_eps, n.v_p_eps);
        let c = noise_from_attack(&fig2_channel(tau_b, 1.05, Attack::Collective)).unwrap();
        assert_eq!(c.v_q_eps, c.v_p_eps);
    }
}

const MONOTONE_TOL: f64 = 1e-10;

/// At fixed correlations `(g, g')` more thermal noise never helps. The
/// optimal family is excluded: its `g` grows with `ω` and lowers the relay
/// noise.
#[test]
fn rate_decreases_with_thermal_noise() {
    let families: [(&[f64; 5], f64, f64); 3] = [
        (&[1.0, 1.005, 1.01, 1.02, 1.05], 0.0, 0.0),
        (&[1.01, 1.02, 1.03, 1.05, 1.1], 0.1, -0.1),
        (&[1.01, 1.02, 1.03, 1.05, 1.1], -0.1, 0.1),
    ];
    for (omegas, g, gp) in families {
        for db in [0.5, 1.0, 2.0, 4.0, 6.0] {
            let tau_b = db_to_transmissivity(db).unwrap();
            let rates: Vec<f64> = omegas
                .iter()
                .map(|&w| rate(&ChannelParams::new(0.98, tau_b, w, w, g, gp).unwrap(), 20.0, 0.98))
                .collect();
            for w in rates.windows(2) {
                assert!(w[1] <= w[0] + MONOTONE_TOL, "g = {g} at {db} dB: {rates:?}");
            }
        }
    }
}

#[test]
fn optimal_correlations_lower_the_noise() {
    let tau_b = db_to_transmissivity(2.0).unwrap();
    let collective = rate(&fig2_channel(tau_b, 1.01, Attack::Collective), 20.0, 0.98);
    let optimal = rate(&fig2_channel(tau_b, 1.01, Attack::TwoModeOptimal), 20.0, 0.98);
    assert!(optimal > collective);
}

#[test]
fn rate_decreases_with_attenuation() {
    let dbs = [0.0, 1.0, 2.0, 4.0, 8.0];
    for w in [1.0, 1.005, 1.01, 1.02, 1.05] {
        let bob: Vec<f64> = dbs
            .iter()
            .map(|&db| {
                rate(
                    &fig2_channel(db_to_transmissivity(db).unwrap(), w, Attack::TwoModeOptimal),
                    20.0,
                    0.98,
                )
            })
            .collect();
        let common: Vec<f64> = dbs
            .iter()
            .map(|&db| {
                let t = db_to_transmissivity(db).unwrap();
                rate(
                    &ChannelParams::with_attack(t, t, w, w, Attack::TwoModeOptimal).unwrap(),
                    20.0,
                    0.98,
                )
            })
            .collect();
        for curve in [&bob, &common] {
            for pair in curve.windows(2) {
                assert!(pair[1] <= pair[0] + MONOTONE_TOL, "omega = {w}: {curve:?}");
            }
        }
    }
}

#[test]
fn perfect_reconciliation_prefers_strong_modulation() {
    let ch = ChannelParams::pure_loss(0.98, 0.7).unwrap();
    let mut last = f64::NEG_INFINITY;
    for k in 0..=40 {
        let v_m = 10f64.powf(k as f64 / 10.0);
        let k_inf = rate(&ch, v_m, 1.0);
        assert!(k_inf >= last - MONOTONE_TOL, "V_M = {v_m}");
        last = k_inf;
    }
}

#[test]
fn imperfect_reconciliation_has_interior_optimum() {
    let ch = ChannelParams::pure_loss(0.98, 0.7).unwrap();
    let grid: Vec<f64> = (0..=40).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
    let rates: Vec<f64> = grid.iter().map(|&v| rate(&ch, v, 0.95)).collect();
    let (best, _) = rates.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    assert!(best > 0 && best < grid.len() - 1, "maximum at V_M = {}", grid[best]);
}

#[test]
fn attack_matrix_is_checked() {
    let strong = ChannelParams::new(0.9, 0.9, 1.01, 1.01, 0.5, 0.0);
    assert!(strong.is_err());
    let m = Matrix4::<f64>::identity();
    assert!(CovMatrix::new(cvmdi::nalgebra::DMatrix::from_iterator(4, 4, m.iter().copied())).is_ok());
}
