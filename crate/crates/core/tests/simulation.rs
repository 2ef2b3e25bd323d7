use cvmdi::channel::{Attack, ChannelParams};
use cvmdi::simulator::{aggregate, run_estimator_trials, sample_dataset, trial_record, SimulationSpec};

fn spec(channel: ChannelParams, m: usize, trials: usize) -> SimulationSpec {
    SimulationSpec {
        channel,
        v_m: 10.0,
        m,
        trials,
        seed: 2024,
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() - 1) as f64
}

#[test]
fn relay_output_signs_and_variance() {
    let s = spec(ChannelParams::pure_loss(0.98, 0.5).unwrap(), 200_000, 1);
    let d = sample_dataset(&s, 0).unwrap();
    // q_- = (q_B - q_A)/sqrt 2 and p_+ = (p_B + p_A)/sqrt 2
    let c_aq = cov(&d.a_q, &d.r_q);
    let c_ap = cov(&d.a_p, &d.r_p);
    let c_bq = cov(&d.b_q, &d.r_q);
    let expected = (0.98f64 / 2.0).sqrt() * 10.0;
    assert!((c_aq + expected).abs() < 0.05 * expected, "{c_aq}");
    assert!((c_ap - expected).abs() < 0.05 * expected, "{c_ap}");
    assert!(c_bq > 0.0);
    let var_rq = cov(&d.r_q, &d.r_q);
    assert!((var_rq - 8.4).abs() < 0.1, "{var_rq}");
}

#[test]
fn estimator_statistics_match_analytics() {
    for (name, channel) in [
        ("pure loss", ChannelParams::pure_loss(0.98, 0.5).unwrap()),
        (
            "collective",
            ChannelParams::with_attack(0.98, 0.5, 1.05, 1.05, Attack::Collective).unwrap(),
        ),
        (
            "two-mode",
            ChannelParams::with_attack(0.98, 0.5, 1.01, 1.01, Attack::TwoModeOptimal).unwrap(),
        ),
    ] {
        let stats = run_estimator_trials(&spec(channel, 1_000, 3_000)).unwrap();
        for c in &stats.comparisons {
            assert_eq!(c.passed, Some(true), "{name}: {c:?}");
        }
    }
}

#[test]
fn optimal_attack_noise_is_balanced() {
    let ch = ChannelParams::with_attack(0.98, 0.5, 1.01, 1.01, Attack::TwoModeOptimal).unwrap();
    let stats = run_estimator_trials(&spec(ch, 2_000, 500)).unwrap();
    let diff = stats.v_q_eps.mean - stats.v_p_eps.mean;
    let se = (stats.v_q_eps.standard_error.unwrap().powi(2) + stats.v_p_eps.standard_error.unwrap().powi(2)).sqrt();
    assert!(diff.abs() < 3.0 * se);
}

#[test]
fn parallel_order_does_not_matter() {
    let s = spec(ChannelParams::pure_loss(0.9, 0.4).unwrap(), 500, 20);
    let forward: Vec<_> = (0..20).map(|i| trial_record(&s, i).unwrap()).collect();
    let mut backward: Vec<_> = (0..20).rev().map(|i| (i, trial_record(&s, i).unwrap())).collect();
    backward.sort_by_key(|(i, _)| *i);
    let backward: Vec<_> = backward.into_iter().map(|(_, r)| r).collect();
    assert_eq!(forward, backward);
    assert_eq!(aggregate(&s, &forward).unwrap(), run_estimator_trials(&s).unwrap());
}

#[test]
fn seeds_select_different_streams() {
    let a = spec(ChannelParams::pure_loss(0.9, 0.4).unwrap(), 100, 1);
    let b = SimulationSpec { seed: a.seed + 1, ..a };
    assert_ne!(sample_dataset(&a, 0).unwrap(), sample_dataset(&b, 0).unwrap());
    assert_ne!(sample_dataset(&a, 1).unwrap(), sample_dataset(&b, 0).unwrap());
}

#[test]
fn small_block_noise_bias_is_predicted() {
    // unequal quadrature noise, so the combination weights differ; the
    // links are far from 1 so that clamping never acts
    let ch = ChannelParams::new(0.5, 0.3, 1.2, 1.2, 0.15, 0.15).unwrap();
    let stats = run_estimator_trials(&spec(ch, 2_000, 20_000)).unwrap();
    let b = stats.analytic_bias;
    assert!(stats.analytic_tau_variances.a.q != stats.analytic_tau_variances.a.p);
    for (m, truth, bias) in [
        (stats.v_q_eps, stats.truth.noise.v_q_eps, b.v_q_eps),
        (stats.v_p_eps, stats.truth.noise.v_p_eps, b.v_p_eps),
        (stats.tau_a, stats.truth.tau_a, b.tau_a),
        (stats.tau_b_p, stats.truth.tau_b, b.tau_b_p),
    ] {
        let se = m.standard_error.unwrap();
        assert!(
            (m.mean - truth - bias).abs() < 3.0 * se,
            "{} vs {truth} + {bias} (se {se})",
            m.mean
        );
    }
    assert!((stats.v_q_eps.mean - stats.truth.noise.v_q_eps).abs() > 10.0 * stats.v_q_eps.standard_error.unwrap());
}
