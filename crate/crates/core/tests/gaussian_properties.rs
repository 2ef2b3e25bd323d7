use cvmdi::gaussian::{
    entropy_of_spectrum, entropy_term, entropy_term_asymptotic, symplectic_eigenvalues, symplectic_eigenvalues_general,
    symplectic_form, tmsv_cm, von_neumann_entropy, CovMatrix,
};
use cvmdi::nalgebra::DMatrix;
use proptest::prelude::*;

/// Single-mode squeezer on mode `k` of an `n`-mode system.
fn squeezer(n: usize, k: usize, r: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * n, 2 * n);
    s[(2 * k, 2 * k)] = r.exp();
    s[(2 * k + 1, 2 * k + 1)] = (-r).exp();
    s
}

fn rotation(n: usize, k: usize, theta: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * n, 2 * n);
    let (sin, cos) = theta.sin_cos();
    s[(2 * k, 2 * k)] = cos;
    s[(2 * k, 2 * k + 1)] = sin;
    s[(2 * k + 1, 2 * k)] = -sin;
    s[(2 * k + 1, 2 * k + 1)] = cos;
    s
}

/// Beam splitter of transmissivity `cos²θ` between modes `i` and `j`.
fn beam_splitter(n: usize, i: usize, j: usize, theta: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * n, 2 * n);
    let (sin, cos) = theta.sin_cos();
    for x in 0..2 {
        s[(2 * i + x, 2 * i + x)] = cos;
        s[(2 * i + x, 2 * j + x)] = sin;
        s[(2 * j + x, 2 * i + x)] = -sin;
        s[(2 * j + x, 2 * j + x)] = cos;
    }
    s
}

fn two_mode_symplectic(p: &[f64; 7]) -> DMatrix<f64> {
    rotation(2, 0, p[0])
        * squeezer(2, 0, p[1])
        * beam_splitter(2, 0, 1, p[2])
        * squeezer(2, 1, p[3])
        * rotation(2, 1, p[4])
        * beam_splitter(2, 0, 1, p[5])
        * squeezer(2, 0, p[6])
}

fn williamson(nu: &[f64], s: &DMatrix<f64>) -> CovMatrix {
    let mut d = DMatrix::zeros(2 * nu.len(), 2 * nu.len());
    for (k, &x) in nu.iter().enumerate() {
        d[(2 * k, 2 * k)] = x;
        d[(2 * k + 1, 2 * k + 1)] = x;
    }
    CovMatrix::new(s * d * s.transpose()).unwrap()
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn angles() -> impl Strategy<Value = [f64; 7]> {
    let a = -3.2f64..3.2;
    let r = -1.0f64..1.0;
    (a.clone(), r.clone(), a.clone(), r.clone(), a.clone(), a, r)
        .prop_map(|(a, b, c, d, e, f, g)| [a, b, c, d, e, f, g])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn delta_formula_matches_general_route(p in angles(), nu1 in 1.0f64..20.0, nu2 in 1.0f64..20.0) {
        let v = williamson(&[nu1, nu2], &two_mode_symplectic(&p));
        let fast = sorted_desc(symplectic_eigenvalues(&v).unwrap());
        let general = symplectic_eigenvalues_general(&v);
        let expected = sorted_desc(vec![nu1, nu2]);
        let scale = v.matrix().amax();
        for k in 0..2 {
            prop_assert!((fast[k] - general[k]).abs() <= 1e-9 * scale, "{fast:?} vs {general:?}");
            prop_assert!((fast[k] - expected[k]).abs() <= 1e-9 * scale, "{fast:?} vs {expected:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn entropy_invariant_under_symplectic_maps(p in angles(), q in angles(), nu1 in 1.0f64..10.0, nu2 in 1.0f64..10.0) {
        let v = williamson(&[nu1, nu2], &two_mode_symplectic(&p));
        let w = v.transform(&two_mode_symplectic(&q)).unwrap();
        let s_v = von_neumann_entropy(&v).unwrap();
        let s_w = von_neumann_entropy(&w).unwrap();
        prop_assert!((s_v - s_w).abs() < 1e-7, "{s_v} vs {s_w}");
        let s_true = entropy_term(nu1).unwrap() + entropy_term(nu2).unwrap();
        prop_assert!((s_v - s_true).abs() < 1e-7);
    }

    #[test]
    fn random_maps_are_symplectic(p in angles()) {
        let s = two_mode_symplectic(&p);
        let omega = symplectic_form(2);
        let residual = (&s * &omega * s.transpose() - &omega).amax();
        prop_assert!(residual < 1e-10);
    }

    #[test]
    fn entropy_is_monotone(x in 1.0f64..1e6, dx in 1e-6f64..10.0) {
        prop_assert!(entropy_term(x + dx).unwrap() > entropy_term(x).unwrap());
    }

    #[test]
    fn three_modes_use_general_route(nu in proptest::array::uniform3(1.0f64..5.0), t in -1.5f64..1.5, r in -0.8f64..0.8) {
        let s = beam_splitter(3, 0, 2, t) * squeezer(3, 1, r) * beam_splitter(3, 1, 2, 0.3 * t);
        let v = williamson(&nu, &s);
        let got = symplectic_eigenvalues(&v).unwrap();
        let expected = sorted_desc(nu.to_vec());
        for k in 0..3 {
            prop_assert!((got[k] - expected[k]).abs() < 1e-8);
        }
    }
}

#[test]
fn pure_states_have_unit_spectrum() {
    for mu in [1.0, 2.0, 10.0, 100.0, 1e4] {
        // sqrt(mu² - 1) is only representable to about mu² ulp
        let tol = 1e-9f64.max(4.0 * f64::EPSILON * mu * mu);
        let spectrum = symplectic_eigenvalues(&tmsv_cm(mu).unwrap()).unwrap();
        assert!(
            spectrum.iter().all(|nu| (nu - 1.0).abs() < tol),
            "mu = {mu}: {spectrum:?}"
        );
        assert!(von_neumann_entropy(&tmsv_cm(mu).unwrap()).unwrap().abs() < 1e-6);
    }
}

#[test]
fn entropy_reference_values() {
    assert_eq!(entropy_term(1.0).unwrap(), 0.0);
    assert_eq!(entropy_term(3.0).unwrap(), 2.0);
    let x = 1e6;
    let exact = entropy_term(x).unwrap();
    assert!((exact - entropy_term_asymptotic(x)).abs() < 1e-6 * exact);
    assert!(entropy_term(0.5).is_err());
    assert!(entropy_of_spectrum(&[1.0 - 1e-12]).is_ok());
    assert!(entropy_of_spectrum(&[0.99]).is_err());
}

#[test]
fn thermal_state_entropy() {
    let v = CovMatrix::thermal(5.0).unwrap();
    assert_eq!(von_neumann_entropy(&v).unwrap(), entropy_term(5.0).unwrap());
}
